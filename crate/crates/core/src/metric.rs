//! Frequency-derived unigram model and the corpus occurrence probability P(D).
//!
//! Each subword is assigned its relative frequency in the tokenized corpus.
//! A sentence scores the sum of its pieces' log-probabilities and the corpus
//! scores the sum (or per-sentence mean) of its sentence scores. Logarithms are
//! natural throughout.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::TokenCounts;
use crate::error::{Error, Result};
use crate::tokenizer::{SubwordCounts, Vocabulary, DEFAULT_MAX_CHARS};

#[derive(Clone, Debug, PartialEq)]
pub struct UnigramModel {
    pub probabilities: HashMap<String, f64>,
    pub log_probabilities: HashMap<String, f64>,
    pub total_count: u64,
}

impl UnigramModel {
    pub fn probability(&self, piece: &str) -> Option<f64> {
        self.probabilities.get(piece).copied()
    }

    pub fn log_probability(&self, piece: &str) -> Option<f64> {
        self.log_probabilities.get(piece).copied()
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }
}

/// p(t) = count(t) / total. Zero-count entries are left out of the model.
pub fn build_unigram_model(subword_counts: &HashMap<String, u64>, total: u64) -> Result<UnigramModel> {
    if total == 0 {
        return Err(Error::EmptyCorpus);
    }
    let sum: u64 = subword_counts.values().sum();
    if sum != total {
        return Err(Error::invalid(format!(
            "subword counts sum to {sum} but total is {total}"
        )));
    }
    let denom = total as f64;
    let mut probabilities = HashMap::with_capacity(subword_counts.len());
    let mut log_probabilities = HashMap::with_capacity(subword_counts.len());
    for (piece, &count) in subword_counts {
        if count == 0 {
            continue;
        }
        let p = count as f64 / denom;
        probabilities.insert(piece.clone(), p);
        log_probabilities.insert(piece.clone(), log_frequency(count, total));
    }
    Ok(UnigramModel {
        probabilities,
        log_probabilities,
        total_count: total,
    })
}

/// ln(count / total), exactly 0 when count == total.
fn log_frequency(count: u64, total: u64) -> f64 {
    if count == total {
        0.0
    } else {
        (count as f64 / total as f64).ln()
    }
}

/// Σ ln p(piece) over the sentence. Empty sentences score 0.
pub fn sentence_log_probability<S: AsRef<str>>(pieces: &[S], model: &UnigramModel) -> Result<f64> {
    pieces.iter().try_fold(0.0, |acc, piece| {
        let piece = piece.as_ref();
        model
            .log_probability(piece)
            .map(|lp| acc + lp)
            .ok_or_else(|| Error::UnknownPiece(piece.to_owned()))
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Sum of sentence scores divided by the number of sentences.
    #[default]
    #[serde(alias = "mean")]
    MeanPerSentence,
    /// Plain sum of sentence scores.
    #[serde(alias = "raw")]
    RawSum,
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalization::MeanPerSentence => "mean_per_sentence",
            Normalization::RawSum => "raw_sum",
        })
    }
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" | "mean_per_sentence" => Ok(Normalization::MeanPerSentence),
            "raw" | "raw_sum" => Ok(Normalization::RawSum),
            other => Err(Error::invalid(format!("unknown normalization {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusScore {
    pub value: f64,
    pub sentence_count: u64,
    pub normalization: Normalization,
}

impl CorpusScore {
    fn from_sum(sum: f64, sentence_count: u64, normalization: Normalization) -> Result<Self> {
        let value = match normalization {
            Normalization::RawSum => sum,
            Normalization::MeanPerSentence => {
                if sentence_count == 0 {
                    return Err(Error::EmptyCorpus);
                }
                sum / sentence_count as f64
            }
        };
        Ok(CorpusScore {
            value,
            sentence_count,
            normalization,
        })
    }
}

/// P(D) over an already tokenized corpus. Every supplied sequence counts as
/// one sentence; sentence scores are accumulated in input order.
pub fn corpus_occurrence_probability<I, P, S>(
    tokenized_corpus: I,
    model: &UnigramModel,
    normalization: Normalization,
) -> Result<CorpusScore>
where
    I: IntoIterator<Item = P>,
    P: AsRef<[S]>,
    S: AsRef<str>,
{
    let mut sum = 0.0;
    let mut sentences = 0u64;
    for pieces in tokenized_corpus {
        sum += sentence_log_probability(pieces.as_ref(), model)?;
        sentences += 1;
    }
    CorpusScore::from_sum(sum, sentences, normalization)
}

/// A corpus reduced to distinct words with multiplicities.
///
/// Under unigram scoring a sentence contributes the sum of its words'
/// scores, so P(D) can be computed from word counts alone. This keeps each
/// vocabulary evaluation proportional to the number of distinct words rather
/// than the corpus length.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WordTable {
    /// Distinct words sorted ascending, each with its count.
    pub words: Vec<(String, u64)>,
    pub sentence_count: u64,
    pub total_tokens: u64,
}

impl WordTable {
    pub fn from_counts(counts: &TokenCounts) -> Self {
        let mut words: Vec<(String, u64)> = counts.counts.iter().map(|(w, &c)| (w.clone(), c)).collect();
        words.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        Self {
            words,
            sentence_count: counts.total_sentences,
            total_tokens: counts.total_tokens,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreOptions {
    pub normalization: Normalization,
    /// Drop special tokens (including `[UNK]`) from counts and scores.
    pub exclude_specials: bool,
    pub max_chars: usize,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        Self {
            normalization: Normalization::MeanPerSentence,
            exclude_specials: false,
            max_chars: DEFAULT_MAX_CHARS,
        }
    }
}

/// Outcome of scoring a word table under one vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct VocabScore {
    pub score: CorpusScore,
    pub vocab_size: usize,
    pub subword_counts: SubwordCounts,
    /// Number of words (with multiplicity) that segmented to `[UNK]`.
    pub unknown_words: u64,
}

impl VocabScore {
    pub fn total_subwords(&self) -> u64 {
        self.subword_counts.total()
    }

    pub fn record(&self) -> ScoreRecord {
        ScoreRecord {
            vocab_size: self.vocab_size,
            value: self.score.value,
            normalization: self.score.normalization,
            sentence_count: self.score.sentence_count,
        }
    }
}

/// One line of a P(D) report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub vocab_size: usize,
    pub value: f64,
    pub normalization: Normalization,
    pub sentence_count: u64,
}

/// Tokenize the word table under `vocab`, fit the unigram model to the result
/// and score the same corpus with it.
///
/// Words are segmented in parallel; all sums run sequentially over the sorted
/// word list, so the value is independent of the thread count.
pub fn score_word_table(table: &WordTable, vocab: &Vocabulary, options: &ScoreOptions) -> Result<VocabScore> {
    let segmented: Vec<(Vec<u32>, bool)> = table
        .words
        .par_iter()
        .map(|(word, _)| {
            let mut ids = Vec::new();
            let ok = vocab.segment_into(word, false, options.max_chars, &mut ids);
            if options.exclude_specials {
                ids.retain(|&id| !vocab.is_special_id(id));
            }
            (ids, ok)
        })
        .collect();

    let mut counts = SubwordCounts::new(vocab.len());
    let mut unknown_words = 0;
    for ((_, count), (ids, ok)) in table.words.iter().zip(&segmented) {
        for &id in ids {
            counts.add(id, *count);
        }
        if !ok {
            unknown_words += count;
        }
    }
    let total = counts.total();
    if total == 0 {
        return Err(Error::EmptyCorpus);
    }

    let log_p: Vec<f64> = (0..vocab.len() as u32)
        .map(|id| match counts.get(id) {
            0 => 0.0,
            c => log_frequency(c, total),
        })
        .collect();

    let mut sum = 0.0;
    for ((_, count), (ids, _)) in table.words.iter().zip(&segmented) {
        let word_score: f64 = ids.iter().map(|&id| log_p[id as usize]).sum();
        sum += *count as f64 * word_score;
    }

    Ok(VocabScore {
        score: CorpusScore::from_sum(sum, table.sentence_count, options.normalization)?,
        vocab_size: vocab.len(),
        subword_counts: counts,
        unknown_words,
    })
}
