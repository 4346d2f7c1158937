//! Corpus streaming, normalization, word counting and reproducible sampling.
//!
//! A corpus is UTF-8 text with one sentence (or abstract) per line. Lines are
//! normalized and split on whitespace into word tokens; a line that yields no
//! tokens (or fewer than [`NormalizationConfig::min_words`]) is not a sentence
//! and is skipped everywhere.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// Lines are handed to worker threads in batches of this many.
const BATCH_LINES: usize = 8192;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalizationConfig {
    pub lowercase: bool,
    /// Emit each punctuation character as a separate token.
    pub split_punctuation: bool,
    pub unicode_nfc: bool,
    /// Lines with fewer words than this are dropped. `0` disables the filter.
    pub min_words: usize,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        Self {
            lowercase: true,
            split_punctuation: false,
            unicode_nfc: true,
            min_words: 0,
        }
    }
}

impl NormalizationConfig {
    /// Whitespace split only. Used for text that has already been normalized.
    pub fn verbatim() -> Self {
        Self {
            lowercase: false,
            split_punctuation: false,
            unicode_nfc: false,
            min_words: 0,
        }
    }
}

pub fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{00A1}' | '\u{00A7}' | '\u{00AB}' | '\u{00B6}' | '\u{00B7}' | '\u{00BB}' | '\u{00BF}'
                | '\u{2010}'..='\u{2027}'
                | '\u{2030}'..='\u{205E}'
                | '\u{3001}'..='\u{3003}'
                | '\u{3008}'..='\u{3011}'
        )
}

/// Normalize `line` and return its maximal runs of non-whitespace characters.
pub fn normalize_and_split(line: &str, config: &NormalizationConfig) -> Vec<String> {
    let mut text: String = if config.unicode_nfc {
        line.nfc().collect()
    } else {
        line.to_owned()
    };
    if config.lowercase {
        text = text.to_lowercase();
    }

    if !config.split_punctuation {
        return text.split_whitespace().map(str::to_owned).collect();
    }

    let mut tokens = Vec::new();
    for word in text.split_whitespace() {
        let mut current = String::new();
        for c in word.chars() {
            if is_punctuation(c) {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
                tokens.push(c.to_string());
            } else {
                current.push(c);
            }
        }
        if !current.is_empty() {
            tokens.push(current);
        }
    }
    tokens
}

/// Byte-level entry point: validates UTF-8 before normalizing.
pub fn normalize_and_split_bytes(line: &[u8], config: &NormalizationConfig) -> Result<Vec<String>> {
    match std::str::from_utf8(line) {
        Ok(text) => Ok(normalize_and_split(text, config)),
        Err(e) => Err(Error::Decode {
            line: 1,
            offset: e.valid_up_to() as u64,
        }),
    }
}

/// Tokens of `line` if it counts as a sentence under `config`.
pub fn sentence_tokens(line: &str, config: &NormalizationConfig) -> Option<Vec<String>> {
    let tokens = normalize_and_split(line, config);
    if tokens.is_empty() || tokens.len() < config.min_words {
        None
    } else {
        Some(tokens)
    }
}

/// Open a corpus file, transparently decompressing `.gz` files.
pub fn open_corpus(path: &Path) -> Result<Box<dyn BufRead + Send>> {
    let file = File::open(path).map_err(|source| Error::Open {
        path: path.to_owned(),
        source,
    })?;
    let gz = path
        .extension()
        .map(|ext| ext.eq_ignore_ascii_case("gz"))
        .unwrap_or(false);
    if gz {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(file))))
    } else {
        Ok(Box::new(BufReader::new(file)))
    }
}

/// Iterator over the lines of a reader with UTF-8 validation.
///
/// Trailing `\n` / `\r\n` are stripped. Decode errors report the 1-based line
/// number and the absolute byte offset of the first invalid byte.
pub struct Lines<R> {
    reader: R,
    buf: Vec<u8>,
    line: u64,
    offset: u64,
    done: bool,
}

impl<R: BufRead> Lines<R> {
    pub fn new(reader: R) -> Self {
        Self {
            reader,
            buf: Vec::new(),
            line: 0,
            offset: 0,
            done: false,
        }
    }

    pub fn line_number(&self) -> u64 {
        self.line
    }
}

impl<R: BufRead> Iterator for Lines<R> {
    type Item = Result<String>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        self.buf.clear();
        match self.reader.read_until(b'\n', &mut self.buf) {
            Ok(0) => {
                self.done = true;
                None
            }
            Ok(n) => {
                self.line += 1;
                let start = self.offset;
                self.offset += n as u64;
                let mut end = self.buf.len();
                if self.buf[end - 1] == b'\n' {
                    end -= 1;
                    if end > 0 && self.buf[end - 1] == b'\r' {
                        end -= 1;
                    }
                }
                self.buf.truncate(end);
                match String::from_utf8(std::mem::take(&mut self.buf)) {
                    Ok(s) => Some(Ok(s)),
                    Err(e) => {
                        self.done = true;
                        Some(Err(Error::Decode {
                            line: self.line,
                            offset: start + e.utf8_error().valid_up_to() as u64,
                        }))
                    }
                }
            }
            Err(source) => {
                self.done = true;
                Some(Err(Error::Io {
                    line: self.line,
                    source,
                }))
            }
        }
    }
}

/// Feed `reader` to `f` in batches of lines.
pub(crate) fn for_each_batch<R, F>(reader: R, mut f: F) -> Result<()>
where
    R: BufRead,
    F: FnMut(&[String]),
{
    let mut batch = Vec::with_capacity(BATCH_LINES);
    for line in Lines::new(reader) {
        batch.push(line?);
        if batch.len() == BATCH_LINES {
            f(&batch);
            batch.clear();
        }
    }
    if !batch.is_empty() {
        f(&batch);
    }
    Ok(())
}

/// Word-token multiset of a corpus.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TokenCounts {
    pub counts: HashMap<String, u64>,
    pub total_tokens: u64,
    pub total_sentences: u64,
}

impl TokenCounts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn add_sentence<I, S>(&mut self, tokens: I)
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut any = false;
        for token in tokens {
            *self.counts.entry(token.into()).or_insert(0) += 1;
            self.total_tokens += 1;
            any = true;
        }
        if any {
            self.total_sentences += 1;
        }
    }

    /// Key-wise addition. Associative and commutative, so shards can be merged
    /// in any grouping.
    pub fn merge(self, other: TokenCounts) -> TokenCounts {
        let (mut big, small) = if self.counts.len() >= other.counts.len() {
            (self, other)
        } else {
            (other, self)
        };
        for (token, count) in small.counts {
            *big.counts.entry(token).or_insert(0) += count;
        }
        big.total_tokens += small.total_tokens;
        big.total_sentences += small.total_sentences;
        big
    }

    /// Count the sentences of an in-memory batch.
    pub fn from_lines<S: AsRef<str> + Sync>(lines: &[S], config: &NormalizationConfig) -> Self {
        lines
            .par_iter()
            .fold(TokenCounts::new, |mut acc, line| {
                if let Some(tokens) = sentence_tokens(line.as_ref(), config) {
                    acc.add_sentence(tokens);
                }
                acc
            })
            .reduce(TokenCounts::new, TokenCounts::merge)
    }

    /// Entries sorted by count descending, then token ascending.
    pub fn sorted(&self) -> Vec<(&str, u64)> {
        let mut entries: Vec<(&str, u64)> = self.counts.iter().map(|(t, &c)| (t.as_str(), c)).collect();
        entries.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        entries
    }

    /// `token<TAB>count` lines in [`TokenCounts::sorted`] order.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (token, count) in self.sorted() {
            writeln!(out, "{token}\t{count}")?;
        }
        out.flush()
    }
}

/// Count word tokens over a line stream. Batches are counted in parallel; the
/// result does not depend on the number of worker threads.
pub fn count_tokens<R: BufRead>(corpus: R, config: &NormalizationConfig) -> Result<TokenCounts> {
    let mut total = TokenCounts::new();
    for_each_batch(corpus, |batch| {
        let part = TokenCounts::from_lines(batch, config);
        total = std::mem::take(&mut total).merge(part);
    })?;
    Ok(total)
}

/// Seeded uniform sample of normalized sentences.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorpusSample {
    /// Normalized sentences, tokens joined by a single space.
    pub sentences: Vec<String>,
    pub seed: u64,
    /// Number of sentences seen in the source corpus.
    pub source_size: u64,
}

impl CorpusSample {
    /// Wrap already-normalized sentences without sampling.
    pub fn from_sentences<I, S>(sentences: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let sentences: Vec<String> = sentences.into_iter().map(Into::into).collect();
        let source_size = sentences.len() as u64;
        Self {
            sentences,
            seed: 0,
            source_size,
        }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn token_counts(&self) -> TokenCounts {
        TokenCounts::from_lines(&self.sentences, &NormalizationConfig::verbatim())
    }

    pub fn write<W: Write>(&self, mut out: W) -> io::Result<()> {
        for sentence in &self.sentences {
            writeln!(out, "{sentence}")?;
        }
        out.flush()
    }
}

/// Reservoir sample (Algorithm R) of `n` sentences driven by a ChaCha8 stream
/// seeded with `seed`.
pub fn sample_sentences<R: BufRead>(
    corpus: R,
    n: usize,
    seed: u64,
    config: &NormalizationConfig,
) -> Result<CorpusSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reservoir: Vec<String> = Vec::with_capacity(n.min(1 << 20));
    let mut seen: u64 = 0;

    for line in Lines::new(corpus) {
        let line = line?;
        let Some(tokens) = sentence_tokens(&line, config) else {
            continue;
        };
        if n > 0 {
            if (seen as usize) < n {
                reservoir.push(tokens.join(" "));
            } else {
                let j = rng.gen_range(0..=seen);
                if (j as usize) < n {
                    reservoir[j as usize] = tokens.join(" ");
                }
            }
        }
        seen += 1;
    }

    Ok(CorpusSample {
        sentences: reservoir,
        seed,
        source_size: seen,
    })
}
