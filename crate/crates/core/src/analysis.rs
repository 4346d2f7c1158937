//! P(D)-versus-size curves and sequence-length comparisons between
//! vocabularies.

use std::io::{self, BufRead, Write};

use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{for_each_batch, sentence_tokens, CorpusSample, NormalizationConfig};
use crate::error::{Error, Result};
use crate::expansion::{mine_candidates, score_base, ExpansionConfig};
use crate::metric::{score_word_table, ScoreRecord, WordTable};
use crate::tokenizer::{Vocabulary, DEFAULT_MAX_CHARS};

/// Score the sample under the raw vocabulary extended to each requested size.
///
/// A size equal to the raw vocabulary size scores the raw vocabulary itself.
/// A size beyond the number of available candidates is scored with all of
/// them, and the record carries the actual vocabulary size.
pub fn pd_curve(
    corpus_sample: &CorpusSample,
    raw_vocab: &Vocabulary,
    sizes: &[usize],
    config: &ExpansionConfig,
) -> Result<Vec<ScoreRecord>> {
    config.validate()?;
    let v0 = raw_vocab.len();
    if sizes.is_empty() {
        return Err(Error::invalid("no vocabulary sizes requested"));
    }
    if let Some(&s) = sizes.iter().find(|&&s| s < v0) {
        return Err(Error::invalid(format!(
            "size {s} is smaller than the raw vocabulary ({v0})"
        )));
    }
    if sizes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("sizes must be strictly increasing"));
    }
    let counts = corpus_sample.token_counts();
    if counts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let table = WordTable::from_counts(&counts);
    let options = config.score_options();
    let base = score_base(&table, raw_vocab, &options)?;

    let candidates = if sizes.iter().any(|&s| s > v0) {
        mine_candidates(&counts, raw_vocab, config.max_subword_len, config.min_count)?
    } else {
        Default::default()
    };
    let ranked: Vec<&str> = candidates.ranked().into_iter().map(|(s, _)| s).collect();

    let mut records = Vec::with_capacity(sizes.len());
    for &size in sizes {
        if size == v0 {
            records.push(base.record());
            continue;
        }
        let k = (size - v0).min(ranked.len());
        let vocab = raw_vocab.extend(ranked[..k].iter().copied())?;
        records.push(score_word_table(&table, &vocab, &options)?.record());
    }
    Ok(records)
}

pub fn write_score_records<W: Write>(records: &[ScoreRecord], mut out: W) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn write_score_table<W: Write>(records: &[ScoreRecord], mut out: W) -> io::Result<()> {
    writeln!(out, "{:>12}  {:>14}  {:>10}", "vocab_size", "P(D)", "sentences")?;
    for r in records {
        writeln!(
            out,
            "{:>12}  {:>14.4}  {:>10}",
            r.vocab_size, r.value, r.sentence_count
        )?;
    }
    out.flush()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LengthRecord {
    pub name: String,
    pub sentences: u64,
    pub avg_len_vocab_a: f64,
    pub avg_len_vocab_b: f64,
    /// `100 * (a - b) / a`.
    pub reduction_pct: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LengthReport {
    pub records: Vec<LengthRecord>,
}

#[derive(Serialize)]
struct LengthHeader {
    report: &'static str,
    unit: &'static str,
}

impl LengthReport {
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        let header = LengthHeader {
            report: "sequence_length",
            unit: "mean subword pieces per non-empty sentence, no special tokens added",
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn write_table<W: Write>(&self, mut out: W) -> io::Result<()> {
        let width = self
            .records
            .iter()
            .map(|r| r.name.chars().count())
            .max()
            .unwrap_or(0)
            .max(7);
        writeln!(out, "# mean subword pieces per sentence (no special tokens)")?;
        writeln!(
            out,
            "{:<width$}  {:>10}  {:>10}  {:>10}  {:>10}",
            "dataset", "sentences", "vocab_a", "vocab_b", "reduction"
        )?;
        for r in &self.records {
            writeln!(
                out,
                "{:<width$}  {:>10}  {:>10.2}  {:>10.2}  {:>9.1}%",
                r.name, r.sentences, r.avg_len_vocab_a, r.avg_len_vocab_b, r.reduction_pct
            )?;
        }
        out.flush()
    }
}

/// Mean subword sequence length per sentence under two vocabularies.
pub fn sequence_length_report<R: BufRead>(
    name: &str,
    corpus: R,
    vocab_a: &Vocabulary,
    vocab_b: &Vocabulary,
    config: &NormalizationConfig,
) -> Result<LengthRecord> {
    let mut sentences = 0u64;
    let mut total_a = 0u64;
    let mut total_b = 0u64;
    for_each_batch(corpus, |batch| {
        let lengths: Vec<Option<(u64, u64)>> = batch
            .par_iter()
            .map_init(Vec::new, |ids, line| {
                let words = sentence_tokens(line, config)?;
                let mut lens = [0u64; 2];
                for (len, vocab) in lens.iter_mut().zip([vocab_a, vocab_b]) {
                    ids.clear();
                    for w in &words {
                        vocab.segment_into(w, false, DEFAULT_MAX_CHARS, ids);
                    }
                    *len = ids.len() as u64;
                }
                Some((lens[0], lens[1]))
            })
            .collect();
        for (a, b) in lengths.into_iter().flatten() {
            sentences += 1;
            total_a += a;
            total_b += b;
        }
    })?;
    if sentences == 0 {
        return Err(Error::EmptyCorpus);
    }
    let avg_a = total_a as f64 / sentences as f64;
    let avg_b = total_b as f64 / sentences as f64;
    Ok(LengthRecord {
        name: name.to_owned(),
        sentences,
        avg_len_vocab_a: avg_a,
        avg_len_vocab_b: avg_b,
        reduction_pct: 100.0 * (avg_a - avg_b) / avg_a,
    })
}
