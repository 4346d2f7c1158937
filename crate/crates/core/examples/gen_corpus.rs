//! Write the synthetic domain corpus and its general vocabulary.
//!
//! ```text
//! cargo run --example gen_corpus -- OUT_DIR [SEED] [BYTES]
//! ```

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use vocadapt::synth::{general_vocabulary, write_domain_corpus, SYNTH_BYTES, SYNTH_SEED};

fn main() -> std::io::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| ".".into()));
    let seed = args
        .next()
        .map_or(SYNTH_SEED, |s| s.parse().expect("seed must be an integer"));
    let bytes = args
        .next()
        .map_or(SYNTH_BYTES, |s| s.parse().expect("bytes must be an integer"));

    std::fs::create_dir_all(&dir)?;
    let written = write_domain_corpus(BufWriter::new(File::create(dir.join("corpus.txt"))?), seed, bytes)?;
    let mut vocab = BufWriter::new(File::create(dir.join("vocab.txt"))?);
    for token in general_vocabulary() {
        writeln!(vocab, "{token}")?;
    }
    vocab.flush()?;
    eprintln!(
        "wrote {written} bytes of corpus (seed {seed}) to {}",
        dir.display()
    );
    Ok(())
}
