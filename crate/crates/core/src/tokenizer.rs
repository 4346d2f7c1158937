//! WordPiece vocabularies and greedy longest-match-first tokenization.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::corpus::{for_each_batch, normalize_and_split, NormalizationConfig};
use crate::error::{Error, Result};

pub const CONTINUATION_PREFIX: &str = "##";
pub const UNK_TOKEN: &str = "[UNK]";
pub const MASK_TOKEN: &str = "[MASK]";
pub const DEFAULT_MAX_CHARS: usize = 100;

const SPECIAL_TOKENS: [&str; 5] = ["[PAD]", UNK_TOKEN, "[CLS]", "[SEP]", MASK_TOKEN];

fn is_special(token: &str) -> bool {
    SPECIAL_TOKENS.contains(&token) || (token.starts_with("[unused") && token.ends_with(']'))
}

/// Character tries over the vocabulary: one for word-initial pieces and one
/// for continuation pieces (prefix stripped).
///
/// A lookup from any position walks at most `longest entry` edges, so a word
/// of `n` characters costs `O(n * longest entry)`.
#[derive(Clone, Debug)]
struct Matcher {
    edges: HashMap<(u32, char), u32>,
    terminal: Vec<Option<u32>>,
}

const INITIAL_ROOT: u32 = 0;
const CONTINUATION_ROOT: u32 = 1;

impl Matcher {
    fn build(entries: &[String]) -> Self {
        let mut matcher = Matcher {
            edges: HashMap::with_capacity(entries.len() * 4),
            terminal: vec![None, None],
        };
        for (id, entry) in entries.iter().enumerate() {
            matcher.insert(INITIAL_ROOT, entry, id as u32);
            if let Some(rest) = entry.strip_prefix(CONTINUATION_PREFIX) {
                if !rest.is_empty() {
                    matcher.insert(CONTINUATION_ROOT, rest, id as u32);
                }
            }
        }
        matcher
    }

    fn insert(&mut self, root: u32, text: &str, id: u32) {
        let mut node = root;
        for c in text.chars() {
            let next = self.terminal.len() as u32;
            node = *self.edges.entry((node, c)).or_insert_with(|| next);
            if node == next {
                self.terminal.push(None);
            }
        }
        self.terminal[node as usize] = Some(id);
    }

    /// Longest entry matching `chars[start..]`: (id, length in chars).
    fn longest(&self, root: u32, chars: &[char]) -> Option<(u32, usize)> {
        let mut node = root;
        let mut best = None;
        for (i, &c) in chars.iter().enumerate() {
            match self.edges.get(&(node, c)) {
                Some(&next) => node = next,
                None => break,
            }
            if let Some(id) = self.terminal[node as usize] {
                best = Some((id, i + 1));
            }
        }
        best
    }
}

/// An ordered WordPiece vocabulary. The index of an entry is its token id.
#[derive(Clone, Debug)]
pub struct Vocabulary {
    entries: Vec<String>,
    index: HashMap<String, u32>,
    specials: Vec<u32>,
    base_size: usize,
    unk_id: u32,
    matcher: Matcher,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries && self.base_size == other.base_size
    }
}

impl Vocabulary {
    /// Build a vocabulary from entries in id order. `base_size` defaults to the
    /// number of entries.
    pub fn new(entries: Vec<String>, base_size: Option<usize>) -> Result<Self> {
        let mut index = HashMap::with_capacity(entries.len());
        for (i, entry) in entries.iter().enumerate() {
            if entry.is_empty() {
                return Err(Error::EmptyToken(i + 1));
            }
            if let Some(first) = index.insert(entry.clone(), i as u32) {
                return Err(Error::DuplicateToken {
                    token: entry.clone(),
                    first_line: first as usize + 1,
                    second_line: i + 1,
                });
            }
        }
        let unk_id = *index
            .get(UNK_TOKEN)
            .ok_or_else(|| Error::MissingSpecial(UNK_TOKEN.to_owned()))?;
        let base_size = base_size.unwrap_or(entries.len());
        if base_size > entries.len() {
            return Err(Error::BaseSize {
                base_size,
                len: entries.len(),
            });
        }
        let specials = entries
            .iter()
            .enumerate()
            .filter(|(_, e)| is_special(e))
            .map(|(i, _)| i as u32)
            .collect();
        let matcher = Matcher::build(&entries);
        Ok(Self {
            entries,
            index,
            specials,
            base_size,
            unk_id,
            matcher,
        })
    }

    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(tokens.into_iter().map(Into::into).collect(), None)
    }

    /// Read a `vocab.txt` style file: one token per line, line index = id.
    pub fn from_reader<R: BufRead>(reader: R, base_size: Option<usize>) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|source| Error::Io {
                line: i as u64 + 1,
                source,
            })?;
            let token = line.strip_suffix('\r').unwrap_or(&line);
            entries.push(token.to_owned());
        }
        Self::new(entries, base_size)
    }

    pub fn write<W: Write>(&self, mut out: W) -> io::Result<()> {
        for entry in &self.entries {
            writeln!(out, "{entry}")?;
        }
        out.flush()
    }

    /// Append `increment` after the current entries. The current vocabulary
    /// becomes the base prefix of the result.
    pub fn extend<I, S>(&self, increment: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut entries = self.entries.clone();
        entries.extend(increment.into_iter().map(Into::into));
        Self::new(entries, Some(self.entries.len()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    /// Number of entries inherited from the original vocabulary.
    pub fn base_size(&self) -> usize {
        self.base_size
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.entries.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn unk_id(&self) -> u32 {
        self.unk_id
    }

    pub fn mask_id(&self) -> Option<u32> {
        self.id(MASK_TOKEN)
    }

    /// Ids of special tokens (`[PAD]`, `[UNK]`, `[CLS]`, `[SEP]`, `[MASK]`,
    /// `[unused*]`), ascending.
    pub fn special_ids(&self) -> &[u32] {
        &self.specials
    }

    pub fn is_special_id(&self, id: u32) -> bool {
        self.specials.binary_search(&id).is_ok()
    }

    /// Greedy longest-match ids for `word`, appended to `out`. Returns `false`
    /// (and appends only `[UNK]`) when the word cannot be segmented.
    ///
    /// With `continuation` set the first piece is also looked up in
    /// continuation form, as when segmenting the tail of a longer word.
    pub fn segment_into(&self, word: &str, continuation: bool, max_chars: usize, out: &mut Vec<u32>) -> bool {
        let chars: Vec<char> = word.chars().collect();
        if chars.is_empty() || chars.len() > max_chars {
            out.push(self.unk_id);
            return false;
        }
        let mark = out.len();
        let mut start = 0;
        while start < chars.len() {
            let root = if start == 0 && !continuation {
                INITIAL_ROOT
            } else {
                CONTINUATION_ROOT
            };
            match self.matcher.longest(root, &chars[start..]) {
                Some((id, len)) => {
                    out.push(id);
                    start += len;
                }
                None => {
                    out.truncate(mark);
                    out.push(self.unk_id);
                    return false;
                }
            }
        }
        true
    }

    pub fn tokenize_word(&self, word: &str) -> Tokenization {
        self.tokenize_word_with(word, DEFAULT_MAX_CHARS)
    }

    pub fn tokenize_word_with(&self, word: &str, max_chars: usize) -> Tokenization {
        let mut ids = Vec::new();
        let ok = self.segment_into(word, false, max_chars, &mut ids);
        self.tokenization(ids, !ok)
    }

    fn tokenization(&self, ids: Vec<u32>, is_unk: bool) -> Tokenization {
        let pieces = ids.iter().map(|&id| self.entries[id as usize].clone()).collect();
        Tokenization { pieces, ids, is_unk }
    }

    /// Ids of every word of a normalized sentence, flattened.
    pub fn encode_sentence(&self, sentence: &str, config: &NormalizationConfig) -> Vec<u32> {
        let mut ids = Vec::new();
        for word in normalize_and_split(sentence, config) {
            self.segment_into(&word, false, DEFAULT_MAX_CHARS, &mut ids);
        }
        ids
    }
}

/// Load a vocabulary file.
pub fn load_vocabulary(path: &Path, base_size: Option<usize>) -> Result<Vocabulary> {
    let file = File::open(path).map_err(|source| Error::Open {
        path: path.to_owned(),
        source,
    })?;
    Vocabulary::from_reader(BufReader::new(file), base_size)
}

/// Segmentation of a single word.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tokenization {
    pub pieces: Vec<String>,
    pub ids: Vec<u32>,
    pub is_unk: bool,
}

impl Tokenization {
    /// Concatenate the pieces with continuation prefixes stripped.
    pub fn surface(&self) -> String {
        let mut out = String::new();
        for (i, piece) in self.pieces.iter().enumerate() {
            let piece = if i > 0 {
                piece.strip_prefix(CONTINUATION_PREFIX).unwrap_or(piece)
            } else {
                piece
            };
            out.push_str(piece);
        }
        out
    }
}

/// Greedy longest-match-first WordPiece segmentation of one word.
///
/// Words longer than `max_chars` characters, or with any position where no
/// entry matches, become a single `[UNK]`.
pub fn wordpiece_tokenize(word: &str, vocab: &Vocabulary, max_chars: usize) -> Result<Tokenization> {
    if word.is_empty() {
        return Err(Error::invalid("cannot tokenize an empty word"));
    }
    if word.chars().any(char::is_whitespace) {
        return Err(Error::invalid(format!("word {word:?} contains whitespace")));
    }
    Ok(vocab.tokenize_word_with(word, max_chars))
}

pub fn tokenize_sentence(
    sentence: &str,
    vocab: &Vocabulary,
    config: &NormalizationConfig,
) -> Vec<Tokenization> {
    normalize_and_split(sentence, config)
        .iter()
        .map(|word| vocab.tokenize_word(word))
        .collect()
}

/// Subword occurrence counts indexed by token id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubwordCounts {
    by_id: Vec<u64>,
    total: u64,
}

impl SubwordCounts {
    pub fn new(vocab_size: usize) -> Self {
        Self {
            by_id: vec![0; vocab_size],
            total: 0,
        }
    }

    pub fn add(&mut self, id: u32, count: u64) {
        self.by_id[id as usize] += count;
        self.total += count;
    }

    pub fn add_all(&mut self, ids: &[u32]) {
        for &id in ids {
            self.add(id, 1);
        }
    }

    pub fn merge(mut self, other: &SubwordCounts) -> Self {
        for (a, b) in self.by_id.iter_mut().zip(&other.by_id) {
            *a += b;
        }
        self.total += other.total;
        self
    }

    pub fn get(&self, id: u32) -> u64 {
        self.by_id.get(id as usize).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// `(id, count)` for every id with a positive count, ascending by id.
    pub fn nonzero(&self) -> impl Iterator<Item = (u32, u64)> + '_ {
        self.by_id
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (i as u32, c))
    }

    pub fn to_token_map(&self, vocab: &Vocabulary) -> HashMap<String, u64> {
        self.nonzero()
            .map(|(id, c)| (vocab.entries[id as usize].clone(), c))
            .collect()
    }
}

/// Tokenize every line of a corpus.
///
/// `on_line` receives the flattened ids of each input line in order, including
/// an empty slice for blank lines so output stays line-aligned. Lines are
/// tokenized in parallel batches; counts and callback order do not depend on
/// the thread count.
pub fn tokenize_corpus<R, F>(
    corpus: R,
    vocab: &Vocabulary,
    config: &NormalizationConfig,
    mut on_line: F,
) -> Result<SubwordCounts>
where
    R: BufRead,
    F: FnMut(&[u32]),
{
    let mut counts = SubwordCounts::new(vocab.len());
    for_each_batch(corpus, |batch| {
        let encoded: Vec<Vec<u32>> = batch
            .par_iter()
            .map(|line| {
                let words = normalize_and_split(line, config);
                if words.len() < config.min_words {
                    return Vec::new();
                }
                let mut ids = Vec::new();
                for w in &words {
                    vocab.segment_into(w, false, DEFAULT_MAX_CHARS, &mut ids);
                }
                ids
            })
            .collect();
        for ids in &encoded {
            counts.add_all(ids);
            on_line(ids);
        }
    })?;
    Ok(counts)
}
