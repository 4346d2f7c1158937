//! Run configuration shared by all subcommands.
//!
//! The configuration file is flat TOML: one `key = value` per line, no tables.
//! Precedence is command-line flag, then file value, then the default listed
//! here.
//!
//! | key                | default          |
//! |--------------------|------------------|
//! | `lowercase`        | `true`           |
//! | `split_punctuation`| `false`          |
//! | `unicode_nfc`      | `true`           |
//! | `min_words`        | `0` (off)        |
//! | `delta`            | `0.01`           |
//! | `step`             | `10000`          |
//! | `max_subword_len`  | `20`             |
//! | `min_count`        | `1`              |
//! | `final_rule`       | `"current_step"` |
//! | `max_size`         | `200000`         |
//! | `normalization`    | `"mean_per_sentence"` |
//! | `exclude_specials` | `false`          |
//! | `max_chars`        | `100`            |
//! | `sample_size`      | `550000`         |
//! | `seed`             | `42`             |
//! | `rate`             | `0.15`           |
//! | `mask_mode`        | `"pure_mask"`    |
//! | `threads`          | all cores        |
//! | `corpus`, `base_vocab`, `vocab`, `out`, `trace` | unset |

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::NormalizationConfig;
use crate::error::{Error, Result};
use crate::expansion::{ExpansionConfig, FinalRule};
use crate::metric::Normalization;
use crate::mlm::MaskMode;
use crate::tokenizer::DEFAULT_MAX_CHARS;

pub const DEFAULT_SAMPLE_SIZE: usize = 550_000;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_MASK_RATE: f64 = 0.15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub lowercase: bool,
    pub split_punctuation: bool,
    pub unicode_nfc: bool,
    pub min_words: usize,

    pub delta: f64,
    pub step: usize,
    pub max_subword_len: usize,
    pub min_count: u64,
    pub final_rule: FinalRule,
    pub max_size: usize,
    pub normalization: Normalization,
    pub exclude_specials: bool,
    pub max_chars: usize,

    pub sample_size: usize,
    pub seed: u64,
    pub rate: f64,
    pub mask_mode: MaskMode,
    pub threads: Option<usize>,

    pub corpus: Option<PathBuf>,
    pub base_vocab: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub trace: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let norm = NormalizationConfig::default();
        let exp = ExpansionConfig::default();
        Self {
            lowercase: norm.lowercase,
            split_punctuation: norm.split_punctuation,
            unicode_nfc: norm.unicode_nfc,
            min_words: norm.min_words,
            delta: exp.delta,
            step: exp.step,
            max_subword_len: exp.max_subword_len,
            min_count: exp.min_count,
            final_rule: exp.final_rule,
            max_size: exp.max_size,
            normalization: exp.normalization,
            exclude_specials: exp.exclude_specials,
            max_chars: DEFAULT_MAX_CHARS,
            sample_size: DEFAULT_SAMPLE_SIZE,
            seed: DEFAULT_SEED,
            rate: DEFAULT_MASK_RATE,
            mask_mode: MaskMode::PureMask,
            threads: None,
            corpus: None,
            base_vocab: None,
            vocab: None,
            out: None,
            trace: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Relative paths in the file are resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Open {
            path: path.to_owned(),
            source,
        })?;
        let mut config =
            Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut config.corpus,
            &mut config.base_vocab,
            &mut config.vocab,
            &mut config.out,
            &mut config.trace,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn normalization_config(&self) -> NormalizationConfig {
        NormalizationConfig {
            lowercase: self.lowercase,
            split_punctuation: self.split_punctuation,
            unicode_nfc: self.unicode_nfc,
            min_words: self.min_words,
        }
    }

    pub fn expansion_config(&self) -> ExpansionConfig {
        ExpansionConfig {
            delta: self.delta,
            step: self.step,
            max_subword_len: self.max_subword_len,
            min_count: self.min_count,
            final_rule: self.final_rule,
            max_size: self.max_size,
            normalization: self.normalization,
            exclude_specials: self.exclude_specials,
            max_chars: self.max_chars,
        }
    }
}
