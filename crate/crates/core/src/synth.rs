//! Synthetic domain corpus and matching general-domain vocabulary.
//!
//! The corpus mixes common function words with domain terms assembled from
//! biomedical-looking morphemes. The general vocabulary covers single
//! characters, the function words and a handful of common English pieces, so
//! domain terms shatter into many small pieces under it. Output is fully
//! determined by the seed.

use std::io::{self, Write};

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seed used for the corpus exercised by the end-to-end tests.
pub const SYNTH_SEED: u64 = 20_211;
/// Target size of that corpus in bytes.
pub const SYNTH_BYTES: usize = 5_000_000;

const FUNCTION_WORDS: &[&str] = &[
    "the",
    "of",
    "and",
    "in",
    "to",
    "a",
    "with",
    "was",
    "were",
    "for",
    "is",
    "by",
    "that",
    "on",
    "as",
    "from",
    "are",
    "at",
    "patients",
    "or",
    "we",
    "this",
    "be",
    "an",
    "these",
    "which",
    "not",
    "study",
    "after",
    "between",
    "than",
    "using",
    "cells",
    "increased",
    "both",
    "two",
    "has",
    "have",
    "been",
    "it",
    "its",
    "also",
    "may",
    "no",
    "all",
    "more",
    "during",
    "high",
    "results",
    "treatment",
    "expression",
    "group",
    "effect",
    "levels",
    "associated",
    "compared",
    "significantly",
    "analysis",
    "showed",
    "observed",
    "found",
    "other",
    "into",
    "each",
    "use",
    "data",
    "response",
    "role",
    "model",
    "human",
    "cell",
    "activity",
    "risk",
    "factor",
    "method",
    "but",
    "can",
    "used",
    "clinical",
    "reduced",
    "whereas",
    "however",
    "three",
    "control",
    "type",
    "induced",
    "disease",
    "tissue",
    "total",
    "here",
    "our",
    "new",
    "most",
    "time",
    "years",
];

const GENERAL_PIECES: &[&str] = &[
    "##s", "##ed", "##ing", "##er", "##ly", "##al", "##ic", "##es", "##ion", "##tion", "##ent", "##ive",
    "##ous", "##ity", "##ment", "##an", "##in", "##on", "##or", "##ar", "re", "un", "in", "de", "con", "pro",
    "pre", "dis", "com", "ex", "##o", "##a", "##i", "##y",
];

const PREFIXES: &[&str] = &[
    "lymph",
    "cyt",
    "hemat",
    "neur",
    "cardi",
    "hepat",
    "nephr",
    "onc",
    "immun",
    "gastr",
    "derm",
    "oste",
    "myel",
    "angi",
    "fibr",
    "glyc",
    "lip",
    "prot",
    "leuk",
    "erythr",
    "thromb",
    "endocrin",
    "pancreat",
    "pulmon",
    "thyr",
    "adren",
    "chondr",
    "my",
    "encephal",
    "col",
    "mening",
    "retin",
    "ferr",
    "chrom",
    "phosph",
    "kerat",
    "mitochondr",
    "ribos",
    "cortic",
    "pept",
];

const LINKS: &[&str] = &["o", "a", "i", ""];

const ROOTS: &[&str] = &[
    "", "", "", "cyt", "gen", "path", "troph", "plas", "lys", "phag", "blast", "som", "kin", "tox", "sclér",
    "mur", "spor", "zym",
];

const SUFFIXES: &[&str] = &[
    "ase", "osis", "itis", "oma", "emia", "ology", "ocyte", "genic", "ectomy", "ide", "in", "ine", "al",
    "ic", "opathy", "ogram", "otomy", "ase", "oid", "ium",
];

/// The general-domain vocabulary the synthetic corpus is adapted from.
pub fn general_vocabulary() -> Vec<String> {
    let mut tokens: Vec<String> = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let singles = ('a'..='z').chain('0'..='9').chain("éè.,;:()-%".chars());
    for c in singles.clone() {
        tokens.push(c.to_string());
    }
    for c in singles {
        tokens.push(format!("##{c}"));
    }
    for w in FUNCTION_WORDS.iter().chain(GENERAL_PIECES) {
        if !tokens.iter().any(|t| t == w) {
            tokens.push((*w).to_owned());
        }
    }
    tokens
}

fn zipf(n: usize, exponent: f64) -> WeightedIndex<f64> {
    WeightedIndex::new((1..=n).map(|r| 1.0 / (r as f64).powf(exponent))).unwrap()
}

/// A seeded lexicon of distinct domain terms.
pub fn domain_terms(rng: &mut impl Rng, count: usize) -> Vec<String> {
    let mut terms = Vec::with_capacity(count);
    let mut seen = std::collections::HashSet::new();
    let mut attempts = 0;
    while terms.len() < count && attempts < count * 50 {
        attempts += 1;
        let mut t = String::new();
        t.push_str(PREFIXES[rng.gen_range(0..PREFIXES.len())]);
        t.push_str(LINKS[rng.gen_range(0..LINKS.len())]);
        t.push_str(ROOTS[rng.gen_range(0..ROOTS.len())]);
        t.push_str(SUFFIXES[rng.gen_range(0..SUFFIXES.len())]);
        if rng.gen_bool(0.15) {
            t.push('s');
        }
        if seen.insert(t.clone()) {
            terms.push(t);
        }
    }
    terms
}

/// Write sentences until at least `target_bytes` have been written.
pub fn write_domain_corpus<W: Write>(mut out: W, seed: u64, target_bytes: usize) -> io::Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terms = domain_terms(&mut rng, 4000);
    let term_dist = zipf(terms.len(), 1.05);
    let word_dist = zipf(FUNCTION_WORDS.len(), 0.9);

    let mut written = 0;
    let mut line = String::new();
    while written < target_bytes {
        line.clear();
        let len = rng.gen_range(6..=28);
        for i in 0..len {
            if i > 0 {
                line.push(' ');
            }
            let r: f64 = rng.gen();
            if r < 0.35 {
                line.push_str(&terms[term_dist.sample(&mut rng)]);
            } else if r < 0.37 {
                line.push_str(&rng.gen_range(1..500u32).to_string());
            } else {
                let w = FUNCTION_WORDS[word_dist.sample(&mut rng)];
                if i == 0 && rng.gen_bool(0.5) {
                    let mut cs = w.chars();
                    if let Some(first) = cs.next() {
                        line.extend(first.to_uppercase());
                        line.push_str(cs.as_str());
                    }
                } else {
                    line.push_str(w);
                }
            }
        }
        line.push_str(" .\n");
        out.write_all(line.as_bytes())?;
        written += line.len();
    }
    out.flush()?;
    Ok(written)
}

/// The corpus as a string.
pub fn domain_corpus(seed: u64, target_bytes: usize) -> String {
    let mut buf = Vec::with_capacity(target_bytes + 256);
    write_domain_corpus(&mut buf, seed, target_bytes).expect("writing to memory");
    String::from_utf8(buf).expect("generator emits UTF-8")
}
