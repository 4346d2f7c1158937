//! Brute-force reference implementations shared by the property and
//! acceptance tests. They favour obviousness over speed.

#![allow(dead_code)]

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;

pub const ALPHABET: &[char] = &['a', 'b', 'c', 'd', 'é'];

/// Greedy longest-match-first segmentation by direct substring lookup.
/// Returns `None` when the word would become `[UNK]`.
pub fn greedy_reference(word: &str, vocab: &HashSet<String>, max_chars: usize) -> Option<Vec<String>> {
    greedy_reference_from(word, vocab, max_chars, false)
}

/// As [`greedy_reference`]; with `continuation` the first piece is also
/// looked up with the `##` prefix.
pub fn greedy_reference_from(
    word: &str,
    vocab: &HashSet<String>,
    max_chars: usize,
    continuation: bool,
) -> Option<Vec<String>> {
    let chars: Vec<char> = word.chars().collect();
    if chars.len() > max_chars {
        return None;
    }
    let mut pieces = Vec::new();
    let mut start = 0;
    while start < chars.len() {
        let mut found = None;
        for end in (start + 1..=chars.len()).rev() {
            let body: String = chars[start..end].iter().collect();
            let candidate = if start == 0 && !continuation {
                body
            } else {
                format!("##{body}")
            };
            if vocab.contains(&candidate) {
                found = Some((candidate, end));
                break;
            }
        }
        let (piece, end) = found?;
        pieces.push(piece);
        start = end;
    }
    Some(pieces)
}

/// Every (token occurrence × substring) pair, keyed the way candidates are.
pub fn mining_reference(tokens: &[String], raw: &HashSet<String>, max_len: usize) -> HashMap<String, u64> {
    let mut counts = HashMap::new();
    for token in tokens {
        let chars: Vec<char> = token.chars().collect();
        for i in 0..chars.len() {
            for j in i + 1..=chars.len().min(i + max_len) {
                let body: String = chars[i..j].iter().collect();
                let key = if i == 0 { body } else { format!("##{body}") };
                *counts.entry(key).or_insert(0u64) += 1;
            }
        }
    }
    counts.retain(|k, _| !raw.contains(k));
    counts
}

/// P(D) recomputed from scratch: count every piece in the corpus, take
/// ln(count / total) per occurrence, and average over sentences.
pub fn metric_reference(corpus: &[Vec<String>]) -> f64 {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    let mut total = 0u64;
    for sentence in corpus {
        for piece in sentence {
            *counts.entry(piece).or_default() += 1;
            total += 1;
        }
    }
    let mut sum = 0.0;
    for sentence in corpus {
        let mut s = 0.0;
        for piece in sentence {
            s += (counts[piece.as_str()] as f64 / total as f64).ln();
        }
        sum += s;
    }
    sum / corpus.len() as f64
}

pub fn random_word(rng: &mut impl Rng, max_len: usize) -> String {
    let len = rng.gen_range(1..=max_len);
    (0..len).map(|_| *ALPHABET.choose(rng).unwrap()).collect()
}

/// A small random vocabulary: `[UNK]` plus up to `max_entries - 1` distinct
/// initial and continuation pieces.
pub fn random_vocab(rng: &mut impl Rng, max_entries: usize) -> Vec<String> {
    let mut seen = HashSet::from(["[UNK]".to_owned()]);
    let mut entries = vec!["[UNK]".to_owned()];
    let target = rng.gen_range(1..=max_entries);
    let mut attempts = 0;
    while entries.len() < target && attempts < 1000 {
        attempts += 1;
        let body = random_word(rng, 4);
        let entry = if rng.gen_bool(0.5) {
            format!("##{body}")
        } else {
            body
        };
        if seen.insert(entry.clone()) {
            entries.push(entry);
        }
    }
    entries
}

/// Add every single-character initial and continuation piece, so that every
/// word over [`ALPHABET`] can be segmented.
pub fn with_alphabet(mut entries: Vec<String>) -> Vec<String> {
    for c in ALPHABET {
        for piece in [c.to_string(), format!("##{c}")] {
            if !entries.contains(&piece) {
                entries.push(piece);
            }
        }
    }
    entries
}

/// Strip continuation prefixes and concatenate.
pub fn join_pieces(pieces: &[String]) -> String {
    pieces
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if i > 0 {
                p.strip_prefix("##").unwrap_or(p)
            } else {
                p.as_str()
            }
        })
        .collect()
}
