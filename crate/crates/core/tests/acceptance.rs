//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.
//!
//! ```text
//! cargo test -p vocadapt --test acceptance
//! ```

mod common;

use std::collections::{HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vocadapt::analysis::sequence_length_report;
use vocadapt::corpus::{NormalizationConfig, TokenCounts};
use vocadapt::embedding::{
    embedding_drift, expand_embeddings, read_embeddings, row_sources, write_embeddings, EmbeddingFormat,
    EmbeddingMatrix, RowSource,
};
use vocadapt::expansion::{mine_candidates, stopping_decision, FinalRule};
use vocadapt::metric::{build_unigram_model, corpus_occurrence_probability, Normalization};
use vocadapt::mlm::{mask_sequences, MaskMode};
use vocadapt::synth::{domain_terms, general_vocabulary, write_domain_corpus, SYNTH_BYTES, SYNTH_SEED};
use vocadapt::tokenizer::{load_vocabulary, Vocabulary, DEFAULT_MAX_CHARS};

use common::*;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if let false = $cond {
            return Err(format!($($msg)+));
        }
    };
}

const SIZES: [usize; 8] = [30522, 40000, 50000, 60000, 70000, 80000, 90000, 100000];
const CS_SCORES: [f64; 8] = [
    -211.14, -194.08, -192.56, -191.87, -191.45, -191.09, -190.76, -190.53,
];
const BIO_SCORES: [f64; 8] = [
    -255.92, -220.06, -214.40, -211.88, -210.44, -209.57, -208.86, -208.42,
];

fn pairs(scores: &[f64]) -> Vec<(usize, f64)> {
    SIZES.iter().copied().zip(scores.iter().copied()).collect()
}

fn stopping_rule_replay() -> Outcome {
    let cs = pairs(&CS_SCORES);
    let bio = pairs(&BIO_SCORES);
    let start = Instant::now();
    let (cs_current, _) = stopping_decision(&cs, 0.01, FinalRule::CurrentStep).map_err(|e| e.to_string())?;
    let (bio_current, _) =
        stopping_decision(&bio, 0.01, FinalRule::CurrentStep).map_err(|e| e.to_string())?;
    let (bio_previous, _) =
        stopping_decision(&bio, 0.01, FinalRule::PreviousStep).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure!(
        cs_current == 50_000,
        "computer science: got {cs_current}, want 50000"
    );
    ensure!(
        bio_current == 70_000,
        "biomedical current_step: got {bio_current}, want 70000"
    );
    ensure!(
        bio_previous == 60_000,
        "biomedical previous_step: got {bio_previous}, want 60000"
    );
    ensure!(elapsed < Duration::from_millis(1), "took {elapsed:?}");
    Ok(format!(
        "cs {cs_current}, bio {bio_current} current / {bio_previous} previous in {elapsed:?}"
    ))
}

fn tokenizer_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut round_trips = 0;
    for case in 0..10_000 {
        let entries = if rng.gen_bool(0.5) {
            with_alphabet(random_vocab(&mut rng, 20))
        } else {
            random_vocab(&mut rng, 30)
        };
        let set: HashSet<String> = entries.iter().cloned().collect();
        let vocab = Vocabulary::new(entries, None).map_err(|e| e.to_string())?;
        let word = random_word(&mut rng, 12);
        let got = vocab.tokenize_word(&word);
        match greedy_reference(&word, &set, DEFAULT_MAX_CHARS) {
            Some(pieces) => {
                ensure!(
                    !got.is_unk && got.pieces == pieces,
                    "case {case}: {word:?} gave {:?}, reference {pieces:?}",
                    got.pieces
                );
                ensure!(
                    join_pieces(&got.pieces) == word,
                    "case {case}: round trip of {word:?} failed"
                );
                round_trips += 1;
            }
            None => ensure!(
                got.is_unk && got.pieces == ["[UNK]"],
                "case {case}: {word:?} gave {:?}, reference [UNK]",
                got.pieces
            ),
        }
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!(
        "10000/10000 agree, {round_trips} round trips, {elapsed:?}"
    ))
}

fn metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pieces = ["a", "b", "##c", "de", "##f", "g", "##hi"];
    let mut worst = 0.0f64;
    for case in 0..100 {
        let corpus: Vec<Vec<String>> = (0..rng.gen_range(1..=8))
            .map(|_| {
                (0..rng.gen_range(1..=10))
                    .map(|_| pieces[rng.gen_range(0..pieces.len())].to_owned())
                    .collect()
            })
            .collect();
        let mut counts: HashMap<String, u64> = HashMap::new();
        for p in corpus.iter().flatten() {
            *counts.entry(p.clone()).or_default() += 1;
        }
        let total = counts.values().sum();
        let model = build_unigram_model(&counts, total).map_err(|e| e.to_string())?;
        let got = corpus_occurrence_probability(&corpus, &model, Normalization::MeanPerSentence)
            .map_err(|e| e.to_string())?
            .value;
        let want = metric_reference(&corpus);
        ensure!(
            (got - want).abs() <= 1e-12,
            "case {case}: {got} vs reference {want}"
        );
        ensure!(got <= 0.0, "case {case}: P(D) = {got} > 0");
        worst = worst.max((got - want).abs());
    }
    let model = build_unigram_model(&HashMap::from([("a".into(), 2), ("b".into(), 1)]), 3)
        .map_err(|e| e.to_string())?;
    let example = corpus_occurrence_probability([["a", "a", "b"]], &model, Normalization::MeanPerSentence)
        .map_err(|e| e.to_string())?
        .value;
    ensure!((example - -1.909543).abs() <= 1e-6, "\"a a b\" gave {example}");
    Ok(format!(
        "100 corpora, max |diff| {worst:.1e}; \"a a b\" = {example:.6}"
    ))
}

fn mining_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut total_candidates = 0;
    for case in 0..100 {
        let n_tokens = rng.gen_range(1..=100);
        let tokens: Vec<String> = (0..n_tokens).map(|_| random_word(&mut rng, 8)).collect();
        let mut counts = TokenCounts::new();
        for chunk in tokens.chunks(rng.gen_range(1..=10)) {
            counts.add_sentence(chunk.iter().map(String::as_str));
        }
        let raw_entries = random_vocab(&mut rng, 30);
        let raw_set: HashSet<String> = raw_entries.iter().cloned().collect();
        let raw = Vocabulary::new(raw_entries, None).map_err(|e| e.to_string())?;
        let max_len = rng.gen_range(1..=10);
        let got = mine_candidates(&counts, &raw, max_len, 1).map_err(|e| e.to_string())?;
        let want = mining_reference(&tokens, &raw_set, max_len);
        ensure!(
            got.counts == want,
            "case {case}: {} candidates vs reference {}",
            got.len(),
            want.len()
        );
        total_candidates += want.len();
    }
    Ok(format!("100 corpora, {total_candidates} candidates, exact"))
}

fn run_cli(args: &[&str], cwd: &Path) -> Result<Duration, String> {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_vocadapt"))
        .args(args)
        .current_dir(cwd)
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure!(
        out.status.success(),
        "vocadapt {} failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    Ok(elapsed)
}

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    let bytes = write_domain_corpus(
        BufWriter::new(File::create(root.join("corpus.txt")).map_err(|e| e.to_string())?),
        SYNTH_SEED,
        SYNTH_BYTES,
    )
    .map_err(|e| e.to_string())?;
    fs::write(root.join("vocab.txt"), general_vocabulary().join("\n") + "\n").map_err(|e| e.to_string())?;

    let expand = |threads: &str, tag: &str| {
        run_cli(
            &[
                "--threads",
                threads,
                "expand-vocab",
                "--corpus",
                "corpus.txt",
                "--base-vocab",
                "vocab.txt",
                "--out",
                &format!("vocab_{tag}.txt"),
                "--trace",
                &format!("trace_{tag}.jsonl"),
            ],
            root,
        )
    };
    let single = expand("1", "a")?;
    expand("1", "b")?;
    expand("8", "c")?;
    ensure!(
        single < Duration::from_secs(60),
        "single-threaded run took {single:?}"
    );

    let read = |name: &str| fs::read(root.join(name)).map_err(|e| e.to_string());
    for tag in ["b", "c"] {
        ensure!(
            read("vocab_a.txt")? == read(&format!("vocab_{tag}.txt"))?,
            "vocabulary differs in run {tag}"
        );
        ensure!(
            read("trace_a.jsonl")? == read(&format!("trace_{tag}.jsonl"))?,
            "trace differs in run {tag}"
        );
    }

    let trace = String::from_utf8(read("trace_a.jsonl")?).map_err(|e| e.to_string())?;
    let scores: Vec<f64> = trace
        .lines()
        .filter_map(|l| serde_json::from_str::<serde_json::Value>(l).ok())
        .filter(|v| v.get("i").is_some())
        .map(|v| v["score"].as_f64().unwrap_or(f64::NAN))
        .collect();
    ensure!(scores.len() >= 2, "trace has {} steps", scores.len());
    for (i, w) in scores.windows(2).enumerate() {
        ensure!(w[1] >= w[0], "P(D) fell at step {}: {} -> {}", i + 1, w[0], w[1]);
    }

    let base = load_vocabulary(&root.join("vocab.txt"), None).map_err(|e| e.to_string())?;
    let expanded = load_vocabulary(&root.join("vocab_a.txt"), None).map_err(|e| e.to_string())?;
    let corpus = BufReader::new(File::open(root.join("corpus.txt")).map_err(|e| e.to_string())?);
    let lengths = sequence_length_report(
        "synthetic",
        corpus,
        &base,
        &expanded,
        &NormalizationConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    ensure!(
        lengths.avg_len_vocab_b <= lengths.avg_len_vocab_a,
        "average length rose from {:.2} to {:.2}",
        lengths.avg_len_vocab_a,
        lengths.avg_len_vocab_b
    );
    Ok(format!(
        "{bytes} bytes, {} steps, P(D) {:.2} -> {:.2}, {} -> {} tokens, length {:.2} -> {:.2}, identical x3, {single:.2?} single-threaded",
        scores.len(),
        scores[0],
        scores[scores.len() - 1],
        base.len(),
        expanded.len(),
        lengths.avg_len_vocab_a,
        lengths.avg_len_vocab_b
    ))
}

fn embedding_expansion() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let base_vocab = Vocabulary::new(general_vocabulary(), None).map_err(|e| e.to_string())?;
    let base_set: HashSet<String> = base_vocab.entries().iter().cloned().collect();
    let mut new_tokens: Vec<String> = Vec::new();
    for term in domain_terms(&mut rng, 300) {
        let tail: String = term.chars().skip(2).collect();
        new_tokens.push(term);
        if !tail.is_empty() {
            new_tokens.push(format!("##{tail}"));
        }
    }
    new_tokens.extend(["ßeta".to_owned(), "##ß".to_owned()]);
    let mut seen = base_set.clone();
    new_tokens.retain(|t| seen.insert(t.clone()));
    let expanded_vocab = base_vocab
        .extend(new_tokens.iter().map(String::as_str))
        .map_err(|e| e.to_string())?;

    let dim = 24;
    let data: Vec<f32> = (0..base_vocab.len() * dim)
        .map(|_| rng.gen_range(-1.0f32..1.0))
        .collect();
    let base = EmbeddingMatrix::new(base_vocab.len(), dim, data).map_err(|e| e.to_string())?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let base_path = dir.path().join("base.bin");
    let out_path = dir.path().join("expanded.bin");
    write_embeddings(&base, &base_path, EmbeddingFormat::Binary).map_err(|e| e.to_string())?;
    let reloaded = read_embeddings(&base_path).map_err(|e| e.to_string())?;
    let expanded = expand_embeddings(&reloaded, &base_vocab, &expanded_vocab).map_err(|e| e.to_string())?;
    write_embeddings(&expanded, &out_path, EmbeddingFormat::Binary).map_err(|e| e.to_string())?;
    let expanded = read_embeddings(&out_path).map_err(|e| e.to_string())?;

    let bits = |xs: &[f32]| xs.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    for id in 0..base_vocab.len() {
        ensure!(
            bits(expanded.row(id)) == bits(base.row(id)),
            "base row {id} changed"
        );
    }

    let unk = base_vocab.unk_id() as usize;
    let mut pooled = 0;
    let mut fallback = 0;
    let mut worst = 0.0f64;
    for id in base_vocab.len()..expanded_vocab.len() {
        let token = expanded_vocab.token(id as u32).unwrap_or_default();
        let (text, continuation) = match token.strip_prefix("##") {
            Some(t) => (t, true),
            None => (token, false),
        };
        let row = expanded.row(id);
        match greedy_reference_from(text, &base_set, DEFAULT_MAX_CHARS, continuation) {
            Some(pieces) => {
                pooled += 1;
                for (j, &got) in row.iter().enumerate() {
                    let mut sum = 0.0f64;
                    for p in pieces.iter().rev() {
                        sum += base.row(base_vocab.id(p).unwrap() as usize)[j] as f64;
                    }
                    let want = sum / pieces.len() as f64;
                    let rel = (got as f64 - want).abs() / want.abs();
                    ensure!(rel <= 1e-6, "token {token:?} column {j}: {got} vs {want}");
                    worst = worst.max(rel);
                }
            }
            None => {
                fallback += 1;
                ensure!(
                    bits(row) == bits(base.row(unk)),
                    "token {token:?} should copy the [UNK] row"
                );
            }
        }
    }
    let sources = row_sources(&base_vocab, &expanded_vocab).map_err(|e| e.to_string())?;
    let fallback_sources = sources
        .iter()
        .filter(|s| matches!(s, RowSource::UnknownFallback))
        .count();
    ensure!(
        fallback > 0 && fallback == fallback_sources,
        "fallback rows {fallback}, sources {fallback_sources}"
    );
    Ok(format!(
        "{} base rows bit-identical, {pooled} pooled rows (max rel err {worst:.1e}), {fallback} [UNK] fallbacks",
        base_vocab.len()
    ))
}

fn random_scores(rng: &mut impl Rng) -> Vec<(usize, f64)> {
    let n = rng.gen_range(2..=15);
    let mut size = rng.gen_range(100..50_000);
    let mut score: f64 = -rng.gen_range(10.0..400.0);
    let mut out = vec![(size, score)];
    for _ in 1..n {
        size += rng.gen_range(1..20_000);
        let change = match rng.gen_range(0..4) {
            0 => 0.0,
            1 => rng.gen_range(0.0..0.02),
            2 => rng.gen_range(0.0..0.2),
            _ => rng.gen_range(-0.05..0.05),
        };
        score += change * score.abs();
        out.push((size, score));
    }
    out
}

fn scale_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut thresholds = 0;
    for case in 0..1000 {
        let scores = random_scores(&mut rng);
        for rule in [FinalRule::CurrentStep, FinalRule::PreviousStep] {
            let (base, trace) = stopping_decision(&scores, 0.01, rule).map_err(|e| e.to_string())?;
            if rule == FinalRule::CurrentStep
                && trace.stop_reason == vocadapt::expansion::StopReason::Threshold
            {
                thresholds += 1;
            }
            for c in [0.5, 2.0, 10.0] {
                let scaled: Vec<(usize, f64)> = scores.iter().map(|&(s, v)| (s, c * v)).collect();
                let (got, _) = stopping_decision(&scaled, 0.01, rule).map_err(|e| e.to_string())?;
                ensure!(got == base, "case {case} ({rule}) x{c}: {got} vs {base}");
            }
        }
    }
    Ok(format!(
        "1000 sequences x {{0.5, 2, 10}} x 2 rules unchanged ({thresholds} threshold stops)"
    ))
}

fn masking() -> Outcome {
    let mut tokens: Vec<String> = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
        .map(String::from)
        .to_vec();
    tokens.extend((0..2000).map(|i| format!("w{i}")));
    let vocab = Vocabulary::new(tokens, None).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let sequences: Vec<Vec<u32>> = (0..10_000)
        .map(|_| {
            let n = rng.gen_range(8..=128);
            let mut s = vec![2];
            s.extend((0..n).map(|_| rng.gen_range(5..vocab.len() as u32)));
            s.push(3);
            s
        })
        .collect();
    let maskable: usize = sequences.iter().map(|s| s.len() - 2).sum();

    let mut report = Vec::new();
    for mode in [MaskMode::PureMask, MaskMode::Bert801010] {
        let a = mask_sequences(&sequences, &vocab, 0.15, 99, mode).map_err(|e| e.to_string())?;
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| e.to_string())?;
        let b = single
            .install(|| mask_sequences(&sequences, &vocab, 0.15, 99, mode))
            .map_err(|e| e.to_string())?;
        ensure!(a == b, "{mode}: not deterministic");
        let masked: usize = a.iter().map(|m| m.mask_positions.len()).sum();
        let fraction = masked as f64 / maskable as f64;
        ensure!(
            (fraction - 0.15).abs() <= 0.005,
            "{mode}: mask fraction {fraction}"
        );
        for (i, (m, s)) in a.iter().zip(&sequences).enumerate() {
            ensure!(&m.reconstruct() == s, "{mode}: sequence {i} does not reconstruct");
        }
        report.push(format!("{mode} {fraction:.4}"));
    }
    Ok(format!(
        "10000 sequences, fractions {}, all reconstruct, deterministic",
        report.join(", ")
    ))
}

fn drift() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let vocab = Vocabulary::new(general_vocabulary(), None).map_err(|e| e.to_string())?;
    let data: Vec<f32> = (0..vocab.len() * 8)
        .map(|_| rng.gen_range(-3.0f32..3.0))
        .collect();
    let m = EmbeddingMatrix::new(vocab.len(), 8, data).map_err(|e| e.to_string())?;
    let same = embedding_drift(&m, &m.clone(), &vocab, 0.0).map_err(|e| e.to_string())?;
    ensure!(
        same.distances.iter().all(|d| d.distance == 0.0),
        "identical matrices drifted"
    );
    ensure!(
        same.summary.max == 0.0 && same.summary.fraction_above == 0.0,
        "summary {:?}",
        same.summary
    );

    let one = Vocabulary::from_tokens(["[UNK]"]).map_err(|e| e.to_string())?;
    let before = EmbeddingMatrix::new(1, 2, vec![0.0, 0.0]).map_err(|e| e.to_string())?;
    let after = EmbeddingMatrix::new(1, 2, vec![3.0, 4.0]).map_err(|e| e.to_string())?;
    let r = embedding_drift(&before, &after, &one, 1.0).map_err(|e| e.to_string())?;
    ensure!(
        r.distances[0].distance == 5.0,
        "3-4-5 gave {}",
        r.distances[0].distance
    );
    Ok(format!(
        "{} identical rows at 0, 3-4-5 row at {}",
        vocab.len(),
        r.distances[0].distance
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("stopping-rule replay", stopping_rule_replay),
        ("tokenizer oracle", tokenizer_oracle),
        ("metric oracle", metric_oracle),
        ("candidate-mining oracle", mining_oracle),
        ("end-to-end expansion", end_to_end),
        ("embedding expansion", embedding_expansion),
        ("scale invariance", scale_invariance),
        ("masking", masking),
        ("drift report", drift),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", n + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({why})", n + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
