use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vocadapt::analysis::{
    pd_curve, sequence_length_report, write_score_records, write_score_table, LengthReport,
};
use vocadapt::config::RunConfig;
use vocadapt::corpus::{count_tokens, open_corpus, sample_sentences, CorpusSample, NormalizationConfig};
use vocadapt::embedding::{
    embedding_drift, expand_embeddings, read_embeddings, write_embeddings, EmbeddingFormat,
};
use vocadapt::expansion::{expand_vocabulary, FinalRule};
use vocadapt::metric::Normalization;
use vocadapt::mlm::{mask_sequences, write_instances, MaskMode};
use vocadapt::tokenizer::{load_vocabulary, tokenize_corpus};
use vocadapt::{Error, Result};

const THREADS_ENV: &str = "VOCADAPT_THREADS";

#[derive(Parser)]
#[command(
    name = "vocadapt",
    version,
    about = "Domain vocabulary expansion for WordPiece models"
)]
struct Cli {
    /// Worker threads (default: $VOCADAPT_THREADS, else all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Flat TOML file with default values for any option.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct NormArgs {
    /// Lowercase input text.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    lowercase: Option<bool>,
    /// Split punctuation into separate tokens.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    split_punctuation: Option<bool>,
    /// Apply Unicode NFC normalization.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    nfc: Option<bool>,
    /// Drop lines with fewer words than this.
    #[arg(long)]
    min_words: Option<usize>,
}

#[derive(Args, Default)]
struct ScoringArgs {
    #[arg(long)]
    max_subword_len: Option<usize>,
    #[arg(long)]
    min_count: Option<u64>,
    /// mean | raw
    #[arg(long)]
    normalization: Option<Normalization>,
    /// Leave special tokens, including [UNK], out of P(D).
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    exclude_specials: Option<bool>,
}

#[derive(Args)]
struct SampleArgs {
    /// Sentences to sample from the corpus.
    #[arg(long, visible_alias = "n")]
    sample_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Count whitespace-level word tokens.
    Count {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        norm: NormArgs,
    },
    /// Reservoir-sample normalized sentences.
    Sample {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        sample: SampleArgs,
        #[command(flatten)]
        norm: NormArgs,
    },
    /// WordPiece-tokenize a corpus, one output line per input line.
    Tokenize {
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long, visible_alias = "input")]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print token ids instead of pieces.
        #[arg(long)]
        ids: bool,
        #[command(flatten)]
        norm: NormArgs,
    },
    /// Grow a vocabulary with domain subwords until P(D) levels off.
    ExpandVocab {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        base_vocab: Option<PathBuf>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        step: Option<usize>,
        /// current | previous
        #[arg(long)]
        final_rule: Option<FinalRule>,
        #[arg(long)]
        max_size: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        sample: SampleArgs,
        #[command(flatten)]
        scoring: ScoringArgs,
        #[command(flatten)]
        norm: NormArgs,
    },
    /// P(D) of the corpus sample at each requested vocabulary size.
    PdCurve {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        base_vocab: Option<PathBuf>,
        /// Comma-separated sizes, each at least the base vocabulary size.
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also print an aligned table to stderr.
        #[arg(long)]
        table: bool,
        #[command(flatten)]
        sample: SampleArgs,
        #[command(flatten)]
        scoring: ScoringArgs,
        #[command(flatten)]
        norm: NormArgs,
    },
    /// Initialize embeddings for an expanded vocabulary.
    ExpandEmbeddings {
        #[arg(long)]
        base_vocab: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// text | binary
        #[arg(long, default_value = "text")]
        format: EmbeddingFormat,
    },
    /// Per-token L2 distance between two embedding matrices.
    Drift {
        #[arg(long)]
        before: PathBuf,
        #[arg(long)]
        after: PathBuf,
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Vocabulary the expansion started from; splits the summary into
        /// original and expanded rows.
        #[arg(long)]
        base_vocab: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        threshold: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Corpus statistics.
    #[command(subcommand)]
    Stats(StatsCommand),
    /// Build masked-LM instances from a text corpus.
    Mask {
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long, visible_alias = "corpus")]
        input: Option<PathBuf>,
        #[arg(long)]
        rate: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// pure | bert
        #[arg(long)]
        mode: Option<MaskMode>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        norm: NormArgs,
    },
}

#[derive(Subcommand)]
enum StatsCommand {
    /// Mean subword sequence length under two vocabularies.
    SeqLength {
        #[arg(long)]
        vocab_a: PathBuf,
        #[arg(long)]
        vocab_b: PathBuf,
        /// One or more corpora; each becomes a report row.
        #[arg(long, required = true)]
        corpus: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print an aligned table instead of JSON lines.
        #[arg(long)]
        table: bool,
        #[command(flatten)]
        norm: NormArgs,
    },
}

impl NormArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.lowercase, self.lowercase);
        set(&mut cfg.split_punctuation, self.split_punctuation);
        set(&mut cfg.unicode_nfc, self.nfc);
        set(&mut cfg.min_words, self.min_words);
    }
}

impl ScoringArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.max_subword_len, self.max_subword_len);
        set(&mut cfg.min_count, self.min_count);
        set(&mut cfg.normalization, self.normalization);
        set(&mut cfg.exclude_specials, self.exclude_specials);
    }
}

impl SampleArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.sample_size, self.sample_size);
        set(&mut cfg.seed, self.seed);
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_path(slot: &mut Option<PathBuf>, value: &Option<PathBuf>) {
    if value.is_some() {
        slot.clone_from(value);
    }
}

fn require<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| Error::InvalidArgument(format!("missing required option --{flag}")))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| Error::Open {
            path: path.to_owned(),
            source,
        })
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_err(source: io::Error) -> Error {
    Error::Io { line: 0, source }
}

fn load_sample(corpus: &Path, cfg: &RunConfig, norm: &NormalizationConfig) -> Result<CorpusSample> {
    let sample = sample_sentences(open_corpus(corpus)?, cfg.sample_size, cfg.seed, norm)?;
    eprintln!(
        "sampled {} of {} sentences (seed {})",
        sample.len(),
        sample.source_size,
        sample.seed
    );
    Ok(sample)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    set(&mut cfg.threads, cli.threads.map(Some));
    let threads = match cfg.threads {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(v.parse().map_err(|_| {
                Error::InvalidArgument(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::InvalidArgument("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }

    match cli.command {
        Command::Count { corpus, out, norm } => {
            norm.apply(&mut cfg);
            set_path(&mut cfg.corpus, &corpus);
            set_path(&mut cfg.out, &out);
            let counts = count_tokens(
                open_corpus(require(&cfg.corpus, "corpus")?)?,
                &cfg.normalization_config(),
            )?;
            eprintln!(
                "{} sentences, {} tokens, {} types",
                counts.total_sentences,
                counts.total_tokens,
                counts.counts.len()
            );
            counts.write_tsv(output(cfg.out.as_deref())?).map_err(write_err)
        }
        Command::Sample {
            corpus,
            out,
            sample,
            norm,
        } => {
            norm.apply(&mut cfg);
            sample.apply(&mut cfg);
            set_path(&mut cfg.corpus, &corpus);
            set_path(&mut cfg.out, &out);
            let s = load_sample(require(&cfg.corpus, "corpus")?, &cfg, &cfg.normalization_config())?;
            s.write(output(cfg.out.as_deref())?).map_err(write_err)
        }
        Command::Tokenize {
            vocab,
            corpus,
            out,
            ids,
            norm,
        } => {
            norm.apply(&mut cfg);
            set_path(&mut cfg.vocab, &vocab);
            set_path(&mut cfg.corpus, &corpus);
            set_path(&mut cfg.out, &out);
            let vocab = load_vocabulary(require(&cfg.vocab, "vocab")?, None)?;
            let mut out = output(cfg.out.as_deref())?;
            let mut failure = None;
            let mut line = String::new();
            tokenize_corpus(
                open_corpus(require(&cfg.corpus, "corpus")?)?,
                &vocab,
                &cfg.normalization_config(),
                |pieces| {
                    if failure.is_some() {
                        return;
                    }
                    line.clear();
                    for (i, &id) in pieces.iter().enumerate() {
                        if i > 0 {
                            line.push(' ');
                        }
                        if ids {
                            line.push_str(&id.to_string());
                        } else {
                            line.push_str(vocab.token(id).unwrap_or_default());
                        }
                    }
                    line.push('\n');
                    if let Err(e) = out.write_all(line.as_bytes()) {
                        failure = Some(e);
                    }
                },
            )?;
            if let Some(e) = failure {
                return Err(write_err(e));
            }
            out.flush().map_err(write_err)
        }
        Command::ExpandVocab {
            corpus,
            base_vocab,
            delta,
            step,
            final_rule,
            max_size,
            out,
            trace,
            sample,
            scoring,
            norm,
        } => {
            norm.apply(&mut cfg);
            sample.apply(&mut cfg);
            scoring.apply(&mut cfg);
            set(&mut cfg.delta, delta);
            set(&mut cfg.step, step);
            set(&mut cfg.final_rule, final_rule);
            set(&mut cfg.max_size, max_size);
            set_path(&mut cfg.corpus, &corpus);
            set_path(&mut cfg.base_vocab, &base_vocab);
            set_path(&mut cfg.out, &out);
            set_path(&mut cfg.trace, &trace);
            let out_path = require(&cfg.out, "out")?;

            let raw = load_vocabulary(require(&cfg.base_vocab, "base-vocab")?, None)?;
            let sample = load_sample(require(&cfg.corpus, "corpus")?, &cfg, &cfg.normalization_config())?;
            let exp_cfg = cfg.expansion_config();
            let expansion = expand_vocabulary(&sample, &raw, &exp_cfg)?;
            for s in &expansion.trace.steps {
                match s.relative_rise {
                    Some(r) => eprintln!(
                        "step {}: size {} P(D) {:.6} rise {:.4}%",
                        s.index,
                        s.size,
                        s.score,
                        100.0 * r
                    ),
                    None => eprintln!("step {}: size {} P(D) {:.6}", s.index, s.size, s.score),
                }
            }
            eprintln!(
                "final size {} ({:?}), {} candidates",
                expansion.trace.final_size, expansion.trace.stop_reason, expansion.candidates
            );
            expansion.vocab.write(create(out_path)?).map_err(write_err)?;
            if let Some(trace_path) = &cfg.trace {
                expansion
                    .trace
                    .write_jsonl(create(trace_path)?, Some(cfg.seed), Some(&exp_cfg))
                    .map_err(write_err)?;
            }
            Ok(())
        }
        Command::PdCurve {
            corpus,
            base_vocab,
            sizes,
            out,
            table,
            sample,
            scoring,
            norm,
        } => {
            norm.apply(&mut cfg);
            sample.apply(&mut cfg);
            scoring.apply(&mut cfg);
            set_path(&mut cfg.corpus, &corpus);
            set_path(&mut cfg.base_vocab, &base_vocab);
            set_path(&mut cfg.out, &out);
            let raw = load_vocabulary(require(&cfg.base_vocab, "base-vocab")?, None)?;
            let sample = load_sample(require(&cfg.corpus, "corpus")?, &cfg, &cfg.normalization_config())?;
            let records = pd_curve(&sample, &raw, &sizes, &cfg.expansion_config())?;
            if table {
                write_score_table(&records, io::stderr().lock()).map_err(write_err)?;
            }
            write_score_records(&records, output(cfg.out.as_deref())?).map_err(write_err)
        }
        Command::ExpandEmbeddings {
            base_vocab,
            vocab,
            input,
            out,
            format,
        } => {
            set_path(&mut cfg.base_vocab, &base_vocab);
            set_path(&mut cfg.vocab, &vocab);
            set_path(&mut cfg.out, &out);
            let base_vocab = load_vocabulary(require(&cfg.base_vocab, "base-vocab")?, None)?;
            let vocab = load_vocabulary(require(&cfg.vocab, "vocab")?, Some(base_vocab.len()))?;
            let base = read_embeddings(&input)?;
            let expanded = expand_embeddings(&base, &base_vocab, &vocab)?;
            eprintln!(
                "expanded {}x{} to {}x{}",
                base.vocab_size(),
                base.dim(),
                expanded.vocab_size(),
                expanded.dim()
            );
            write_embeddings(&expanded, require(&cfg.out, "out")?, format)
        }
        Command::Drift {
            before,
            after,
            vocab,
            base_vocab,
            threshold,
            out,
        } => {
            set_path(&mut cfg.vocab, &vocab);
            set_path(&mut cfg.out, &out);
            let base_size = match &base_vocab {
                Some(path) => Some(load_vocabulary(path, None)?.len()),
                None => None,
            };
            let vocab = load_vocabulary(require(&cfg.vocab, "vocab")?, base_size)?;
            let before = read_embeddings(&before)?;
            let after = read_embeddings(&after)?;
            let report = embedding_drift(&before, &after, &vocab, threshold)?;
            eprintln!(
                "mean L2 {:.6}, max {:.6}, {:.2}% above {threshold}",
                report.summary.mean,
                report.summary.max,
                100.0 * report.summary.fraction_above
            );
            report.write_jsonl(output(cfg.out.as_deref())?).map_err(write_err)
        }
        Command::Stats(StatsCommand::SeqLength {
            vocab_a,
            vocab_b,
            corpus,
            out,
            table,
            norm,
        }) => {
            norm.apply(&mut cfg);
            set_path(&mut cfg.out, &out);
            let a = load_vocabulary(&vocab_a, None)?;
            let b = load_vocabulary(&vocab_b, None)?;
            let norm = cfg.normalization_config();
            let mut report = LengthReport::default();
            for path in &corpus {
                let name = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| path.display().to_string());
                report
                    .records
                    .push(sequence_length_report(&name, open_corpus(path)?, &a, &b, &norm)?);
            }
            let out = output(cfg.out.as_deref())?;
            if table {
                report.write_table(out)
            } else {
                report.write_jsonl(out)
            }
            .map_err(write_err)
        }
        Command::Mask {
            vocab,
            input,
            rate,
            seed,
            mode,
            out,
            norm,
        } => {
            norm.apply(&mut cfg);
            set(&mut cfg.rate, rate);
            set(&mut cfg.seed, seed);
            set(&mut cfg.mask_mode, mode);
            set_path(&mut cfg.vocab, &vocab);
            set_path(&mut cfg.corpus, &input);
            set_path(&mut cfg.out, &out);
            let vocab = load_vocabulary(require(&cfg.vocab, "vocab")?, None)?;
            let norm = cfg.normalization_config();
            let mut sequences = Vec::new();
            tokenize_corpus(
                open_corpus(require(&cfg.corpus, "input")?)?,
                &vocab,
                &norm,
                |ids| {
                    if !ids.is_empty() {
                        sequences.push(ids.to_vec());
                    }
                },
            )?;
            let instances = mask_sequences(&sequences, &vocab, cfg.rate, cfg.seed, cfg.mask_mode)?;
            let masked: usize = instances.iter().map(|m| m.mask_positions.len()).sum();
            eprintln!(
                "{} sequences, {masked} masked positions (seed {}, mode {})",
                instances.len(),
                cfg.seed,
                cfg.mask_mode
            );
            write_instances(&instances, cfg.seed, output(cfg.out.as_deref())?).map_err(write_err)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 1 } else { 2 })
        }
    }
}
