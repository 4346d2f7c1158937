//! Domain subword mining and P(D)-driven sizing of the incremental vocabulary.
//!
//! Candidates are every substring (up to a length cap) of every corpus word,
//! weighted by the word's frequency, in word-initial or `##` continuation
//! form. The vocabulary grows by a fixed step of top-ranked candidates until
//! the relative rise of P(D) between consecutive sizes falls to the threshold.

use std::collections::HashMap;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusSample, TokenCounts};
use crate::error::{Error, Result};
use crate::metric::{score_word_table, Normalization, ScoreOptions, VocabScore, WordTable};
use crate::tokenizer::{Vocabulary, CONTINUATION_PREFIX, DEFAULT_MAX_CHARS};

/// Weighted candidate subwords not present in the raw vocabulary.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CandidateTable {
    pub counts: HashMap<String, u64>,
    pub max_subword_len: usize,
}

impl CandidateTable {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// All candidates in selection order: count descending, surface length
    /// (without the continuation prefix) descending, then lexicographic.
    pub fn ranked(&self) -> Vec<(&str, u64)> {
        let mut entries: Vec<(&str, u64, usize)> = self
            .counts
            .iter()
            .map(|(s, &c)| (s.as_str(), c, surface_len(s)))
            .collect();
        entries.sort_unstable_by(|a, b| {
            b.1.cmp(&a.1)
                .then_with(|| b.2.cmp(&a.2))
                .then_with(|| a.0.cmp(b.0))
        });
        entries.into_iter().map(|(s, c, _)| (s, c)).collect()
    }
}

fn surface_len(candidate: &str) -> usize {
    candidate
        .strip_prefix(CONTINUATION_PREFIX)
        .unwrap_or(candidate)
        .chars()
        .count()
}

fn add_substrings(word: &str, count: u64, max_len: usize, into: &mut HashMap<String, u64>) {
    let chars: Vec<char> = word.chars().collect();
    let mut key = String::new();
    for start in 0..chars.len() {
        let end = (start + max_len).min(chars.len());
        key.clear();
        if start > 0 {
            key.push_str(CONTINUATION_PREFIX);
        }
        for &c in &chars[start..end] {
            key.push(c);
            match into.get_mut(key.as_str()) {
                Some(v) => *v += count,
                None => {
                    into.insert(key.clone(), count);
                }
            }
        }
    }
}

/// Enumerate weighted substring candidates of the corpus words.
pub fn mine_candidates(
    token_counts: &TokenCounts,
    raw_vocab: &Vocabulary,
    max_subword_len: usize,
    min_count: u64,
) -> Result<CandidateTable> {
    if token_counts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let words: Vec<(&String, &u64)> = token_counts.counts.iter().collect();
    let mut counts = words
        .par_iter()
        .fold(HashMap::new, |mut acc, (word, &count)| {
            add_substrings(word, count, max_subword_len, &mut acc);
            acc
        })
        .reduce(HashMap::new, |a, b| {
            let (mut big, small) = if a.len() >= b.len() { (a, b) } else { (b, a) };
            for (k, v) in small {
                *big.entry(k).or_insert(0) += v;
            }
            big
        });
    counts.retain(|s, c| *c > 0 && *c >= min_count && !raw_vocab.contains(s));
    Ok(CandidateTable {
        counts,
        max_subword_len,
    })
}

/// The top `k` candidates in ranking order.
pub fn select_increment(candidates: &CandidateTable, k: usize) -> Vec<String> {
    candidates
        .ranked()
        .into_iter()
        .take(k)
        .map(|(s, _)| s.to_owned())
        .collect()
}

/// Which vocabulary to return once the threshold is crossed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalRule {
    /// The vocabulary at the step whose rise fell to the threshold.
    #[default]
    #[serde(alias = "current")]
    CurrentStep,
    /// The vocabulary one step earlier.
    #[serde(alias = "previous")]
    PreviousStep,
}

impl fmt::Display for FinalRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FinalRule::CurrentStep => "current_step",
            FinalRule::PreviousStep => "previous_step",
        })
    }
}

impl FromStr for FinalRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "current" | "current_step" => Ok(FinalRule::CurrentStep),
            "previous" | "previous_step" => Ok(FinalRule::PreviousStep),
            other => Err(Error::invalid(format!("unknown final rule {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpansionConfig {
    /// Relative-rise threshold.
    pub delta: f64,
    /// Vocabulary size increment per iteration.
    pub step: usize,
    pub max_subword_len: usize,
    pub min_count: u64,
    pub final_rule: FinalRule,
    /// Upper bound on the expanded vocabulary size.
    pub max_size: usize,
    pub normalization: Normalization,
    pub exclude_specials: bool,
    pub max_chars: usize,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        Self {
            delta: 0.01,
            step: 10_000,
            max_subword_len: 20,
            min_count: 1,
            final_rule: FinalRule::CurrentStep,
            max_size: 200_000,
            normalization: Normalization::MeanPerSentence,
            exclude_specials: false,
            max_chars: DEFAULT_MAX_CHARS,
        }
    }
}

impl ExpansionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::invalid(format!(
                "delta must be positive, got {}",
                self.delta
            )));
        }
        if self.step == 0 {
            return Err(Error::invalid("step must be positive"));
        }
        if self.max_subword_len == 0 {
            return Err(Error::invalid("max_subword_len must be positive"));
        }
        Ok(())
    }

    pub fn score_options(&self) -> ScoreOptions {
        ScoreOptions {
            normalization: self.normalization,
            exclude_specials: self.exclude_specials,
            max_chars: self.max_chars,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Threshold,
    Cap,
    CandidatesExhausted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    #[serde(rename = "i")]
    pub index: usize,
    pub size: usize,
    pub score: f64,
    /// `None` for the raw-vocabulary step.
    pub relative_rise: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionTrace {
    /// Step 0 is the raw vocabulary.
    pub steps: Vec<TraceStep>,
    pub final_size: usize,
    pub stop_reason: StopReason,
}

#[derive(Serialize)]
struct TraceSummary<'a> {
    final_size: usize,
    stop_reason: StopReason,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(flatten)]
    config: Option<&'a ExpansionConfig>,
}

impl ExpansionTrace {
    /// One JSON record per step followed by a summary record.
    pub fn write_jsonl<W: Write>(
        &self,
        mut out: W,
        seed: Option<u64>,
        config: Option<&ExpansionConfig>,
    ) -> io::Result<()> {
        for step in &self.steps {
            serde_json::to_writer(&mut out, step)?;
            out.write_all(b"\n")?;
        }
        let summary = TraceSummary {
            final_size: self.final_size,
            stop_reason: self.stop_reason,
            seed,
            config,
        };
        serde_json::to_writer(&mut out, &summary)?;
        out.write_all(b"\n")?;
        out.flush()
    }
}

/// |current − previous| / |previous|.
pub fn relative_rise(previous: f64, current: f64) -> f64 {
    let diff = (current - previous).abs();
    if previous == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        diff / previous.abs()
    }
}

/// Replay the stopping rule over precomputed `(size, score)` pairs, the first
/// being the raw vocabulary. When no rise falls to `delta` the last size is
/// returned with [`StopReason::Cap`].
pub fn stopping_decision(
    scores: &[(usize, f64)],
    delta: f64,
    final_rule: FinalRule,
) -> Result<(usize, ExpansionTrace)> {
    if scores.len() < 2 {
        return Err(Error::invalid("stopping decision needs at least two scores"));
    }
    if delta.is_nan() || delta <= 0.0 {
        return Err(Error::invalid(format!("delta must be positive, got {delta}")));
    }
    if scores.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::invalid("sizes must be strictly increasing"));
    }

    let mut steps = vec![TraceStep {
        index: 0,
        size: scores[0].0,
        score: scores[0].1,
        relative_rise: None,
    }];
    for (i, w) in scores.windows(2).enumerate() {
        let rise = relative_rise(w[0].1, w[1].1);
        steps.push(TraceStep {
            index: i + 1,
            size: w[1].0,
            score: w[1].1,
            relative_rise: Some(rise),
        });
        if rise <= delta {
            let final_size = match final_rule {
                FinalRule::CurrentStep => w[1].0,
                FinalRule::PreviousStep => w[0].0,
            };
            let trace = ExpansionTrace {
                steps,
                final_size,
                stop_reason: StopReason::Threshold,
            };
            return Ok((final_size, trace));
        }
    }
    let final_size = scores[scores.len() - 1].0;
    Ok((
        final_size,
        ExpansionTrace {
            steps,
            final_size,
            stop_reason: StopReason::Cap,
        },
    ))
}

/// Everything produced by one expansion run.
#[derive(Clone, Debug)]
pub struct Expansion {
    pub vocab: Vocabulary,
    pub trace: ExpansionTrace,
    pub candidates: usize,
}

/// Score the raw vocabulary over `table`, mapping an all-`[UNK]` corpus to
/// [`Error::DegenerateCorpus`].
pub(crate) fn score_base(
    table: &WordTable,
    raw_vocab: &Vocabulary,
    options: &ScoreOptions,
) -> Result<VocabScore> {
    match score_word_table(table, raw_vocab, options) {
        Err(Error::EmptyCorpus) if !table.is_empty() => Err(Error::DegenerateCorpus),
        Ok(s) if s.unknown_words == table.total_tokens => Err(Error::DegenerateCorpus),
        other => other,
    }
}

/// Grow `raw_vocab` by `config.step` candidates at a time until the relative
/// rise of P(D) on the sample falls to `config.delta`, candidates run out, or
/// `config.max_size` is reached.
pub fn expand_vocabulary(
    corpus_sample: &CorpusSample,
    raw_vocab: &Vocabulary,
    config: &ExpansionConfig,
) -> Result<Expansion> {
    config.validate()?;
    if corpus_sample.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let counts = corpus_sample.token_counts();
    if counts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let table = WordTable::from_counts(&counts);
    let options = config.score_options();

    let base = score_base(&table, raw_vocab, &options)?;
    let candidates = mine_candidates(&counts, raw_vocab, config.max_subword_len, config.min_count)?;
    let ranked: Vec<&str> = candidates.ranked().into_iter().map(|(s, _)| s).collect();

    let v0 = raw_vocab.len();
    let limit = config.max_size.min(v0 + ranked.len());
    let mut steps = vec![TraceStep {
        index: 0,
        size: v0,
        score: base.score.value,
        relative_rise: None,
    }];

    if limit <= v0 {
        let stop_reason = if ranked.is_empty() {
            StopReason::CandidatesExhausted
        } else {
            StopReason::Cap
        };
        return Ok(Expansion {
            vocab: raw_vocab.clone(),
            trace: ExpansionTrace {
                steps,
                final_size: v0,
                stop_reason,
            },
            candidates: ranked.len(),
        });
    }

    let mut previous_vocab = raw_vocab.clone();
    let mut previous_score = base.score.value;
    let mut size = v0;
    loop {
        size = (size + config.step).min(limit);
        let vocab = raw_vocab.extend(ranked[..size - v0].iter().copied())?;
        let score = score_word_table(&table, &vocab, &options)?.score.value;
        let rise = relative_rise(previous_score, score);
        steps.push(TraceStep {
            index: steps.len(),
            size,
            score,
            relative_rise: Some(rise),
        });

        let stop = if rise <= config.delta {
            Some(StopReason::Threshold)
        } else if size == v0 + ranked.len() {
            Some(StopReason::CandidatesExhausted)
        } else if size >= config.max_size {
            Some(StopReason::Cap)
        } else {
            None
        };

        if let Some(stop_reason) = stop {
            let vocab = match (stop_reason, config.final_rule) {
                (StopReason::Threshold, FinalRule::PreviousStep) => previous_vocab,
                _ => vocab,
            };
            return Ok(Expansion {
                trace: ExpansionTrace {
                    steps,
                    final_size: vocab.len(),
                    stop_reason,
                },
                vocab,
                candidates: ranked.len(),
            });
        }
        previous_vocab = vocab;
        previous_score = score;
    }
}
