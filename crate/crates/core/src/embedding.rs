//! Token-embedding tables: file formats, expansion by average pooling and the
//! per-token L2 drift report.
//!
//! Text format: a `V d` header line, then `V` lines of `d` space-separated
//! decimals. Binary format: `ADLM`, version byte `1`, `V` and `d` as u32 LE,
//! then `V * d` f32 LE values in row-major order.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::tokenizer::{Vocabulary, CONTINUATION_PREFIX, DEFAULT_MAX_CHARS};

pub const MAGIC: &[u8; 4] = b"ADLM";
pub const FORMAT_VERSION: u8 = 1;
const BINARY_HEADER_LEN: usize = 4 + 1 + 4 + 4;

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    data: Vec<f32>,
    vocab_size: usize,
    dim: usize,
}

impl EmbeddingMatrix {
    pub fn new(vocab_size: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != vocab_size * dim {
            return Err(Error::Shape(format!(
                "{} values for a {vocab_size}x{dim} matrix",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::format(
                format!("row {}, column {}", pos / dim.max(1), pos % dim.max(1)),
                "non-finite value",
            ));
        }
        Ok(Self {
            data,
            vocab_size,
            dim,
        })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::Shape(format!(
                "row {i} has {} values, expected {dim}",
                rows[i].len()
            )));
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, id: usize) -> &[f32] {
        &self.data[id * self.dim..(id + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EmbeddingFormat {
    #[default]
    Text,
    Binary,
}

impl FromStr for EmbeddingFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(EmbeddingFormat::Text),
            "binary" => Ok(EmbeddingFormat::Binary),
            other => Err(Error::invalid(format!("unknown embedding format {other:?}"))),
        }
    }
}

/// Read a matrix in either format; binary files are recognized by their magic.
pub fn read_embeddings(path: &Path) -> Result<EmbeddingMatrix> {
    let file = File::open(path).map_err(|source| Error::Open {
        path: path.to_owned(),
        source,
    })?;
    let mut reader = BufReader::new(file);
    let is_binary = reader
        .fill_buf()
        .map_err(|source| Error::Io { line: 0, source })?
        .starts_with(MAGIC);
    if is_binary {
        read_binary(reader)
    } else {
        read_text(reader)
    }
}

pub fn write_embeddings(matrix: &EmbeddingMatrix, path: &Path, format: EmbeddingFormat) -> Result<()> {
    let file = File::create(path).map_err(|source| Error::Open {
        path: path.to_owned(),
        source,
    })?;
    let out = BufWriter::new(file);
    match format {
        EmbeddingFormat::Text => write_text(matrix, out),
        EmbeddingFormat::Binary => write_binary(matrix, out),
    }
    .map_err(|source| Error::Io { line: 0, source })
}

fn parse_header_field(field: Option<&str>, name: &str) -> Result<usize> {
    field
        .ok_or_else(|| Error::format("line 1", format!("missing {name} in header")))?
        .parse()
        .map_err(|_| Error::format("line 1", format!("invalid {name} in header")))
}

pub fn read_text<R: BufRead>(reader: R) -> Result<EmbeddingMatrix> {
    let mut lines = reader.lines();
    let io_err = |line: usize| {
        move |source| Error::Io {
            line: line as u64,
            source,
        }
    };

    let header = lines
        .next()
        .ok_or_else(|| Error::format("line 1", "missing header"))?
        .map_err(io_err(1))?;
    let mut fields = header.split_whitespace();
    let vocab_size = parse_header_field(fields.next(), "vocabulary size")?;
    let dim = parse_header_field(fields.next(), "dimension")?;
    if fields.next().is_some() {
        return Err(Error::format("line 1", "header must be \"V d\""));
    }

    let mut data = Vec::with_capacity(vocab_size.saturating_mul(dim).min(1 << 28));
    for row in 0..vocab_size {
        let line_no = row + 2;
        let line = match lines.next() {
            Some(line) => line.map_err(io_err(line_no))?,
            None => {
                return Err(Error::format(
                    format!("line {line_no}"),
                    format!("expected {vocab_size} rows, found {row}"),
                ))
            }
        };
        let before = data.len();
        for (col, field) in line.split_whitespace().enumerate() {
            if col >= dim {
                return Err(Error::format(
                    format!("row {row}, column {col}"),
                    format!("more than {dim} values"),
                ));
            }
            let value: f32 = field.parse().map_err(|_| {
                Error::format(
                    format!("row {row}, column {col}"),
                    format!("not a number: {field:?}"),
                )
            })?;
            if !value.is_finite() {
                return Err(Error::format(
                    format!("row {row}, column {col}"),
                    "non-finite value",
                ));
            }
            data.push(value);
        }
        if data.len() - before != dim {
            return Err(Error::format(
                format!("row {row}"),
                format!("expected {dim} values, found {}", data.len() - before),
            ));
        }
    }
    for (extra, line) in lines.enumerate() {
        let line = line.map_err(io_err(vocab_size + 2 + extra))?;
        if !line.trim().is_empty() {
            return Err(Error::format(
                format!("line {}", vocab_size + 2 + extra),
                format!("more than {vocab_size} rows"),
            ));
        }
    }
    EmbeddingMatrix::new(vocab_size, dim, data)
}

pub fn read_binary<R: Read>(mut reader: R) -> Result<EmbeddingMatrix> {
    let mut header = [0u8; BINARY_HEADER_LEN];
    read_exact_at(&mut reader, &mut header, 0)?;
    if &header[..4] != MAGIC {
        return Err(Error::format("byte 0", "bad magic"));
    }
    if header[4] != FORMAT_VERSION {
        return Err(Error::format(
            "byte 4",
            format!("unsupported version {}", header[4]),
        ));
    }
    let vocab_size = u32::from_le_bytes(header[5..9].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(header[9..13].try_into().unwrap()) as usize;

    let mut data = Vec::with_capacity(vocab_size.saturating_mul(dim).min(1 << 28));
    let mut row_bytes = vec![0u8; dim * 4];
    for row in 0..vocab_size {
        let offset = BINARY_HEADER_LEN + row * dim * 4;
        read_exact_at(&mut reader, &mut row_bytes, offset)?;
        data.extend(
            row_bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap())),
        );
    }
    let mut probe = [0u8; 1];
    let end = BINARY_HEADER_LEN + vocab_size * dim * 4;
    match reader.read(&mut probe) {
        Ok(0) => {}
        Ok(_) => return Err(Error::format(format!("byte {end}"), "trailing data after matrix")),
        Err(source) => return Err(Error::Io { line: 0, source }),
    }
    EmbeddingMatrix::new(vocab_size, dim, data)
}

fn read_exact_at<R: Read>(reader: &mut R, buf: &mut [u8], offset: usize) -> Result<()> {
    reader.read_exact(buf).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            Error::format(format!("byte {offset}"), "unexpected end of file")
        } else {
            Error::Io { line: 0, source: e }
        }
    })
}

pub fn write_text<W: Write>(matrix: &EmbeddingMatrix, mut out: W) -> io::Result<()> {
    writeln!(out, "{} {}", matrix.vocab_size, matrix.dim)?;
    for id in 0..matrix.vocab_size {
        let mut first = true;
        for v in matrix.row(id) {
            if !first {
                out.write_all(b" ")?;
            }
            // `{}` on f32 prints the shortest string that parses back exactly.
            write!(out, "{v}")?;
            first = false;
        }
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn write_binary<W: Write>(matrix: &EmbeddingMatrix, mut out: W) -> io::Result<()> {
    let too_big = |what| io::Error::new(io::ErrorKind::InvalidInput, format!("{what} exceeds u32"));
    let v = u32::try_from(matrix.vocab_size).map_err(|_| too_big("vocabulary size"))?;
    let d = u32::try_from(matrix.dim).map_err(|_| too_big("dimension"))?;
    out.write_all(MAGIC)?;
    out.write_all(&[FORMAT_VERSION])?;
    out.write_all(&v.to_le_bytes())?;
    out.write_all(&d.to_le_bytes())?;
    for value in &matrix.data {
        out.write_all(&value.to_le_bytes())?;
    }
    out.flush()
}

/// How a row of the expanded matrix is initialized.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RowSource {
    /// Copied from the same id of the base matrix.
    Base,
    /// Mean of these base rows.
    Pooled(Vec<u32>),
    /// The token could not be segmented by the base vocabulary; copy `[UNK]`.
    UnknownFallback,
}

fn check_prefix(base_vocab: &Vocabulary, expanded_vocab: &Vocabulary) -> Result<()> {
    let expanded = expanded_vocab.entries();
    for (id, token) in base_vocab.entries().iter().enumerate() {
        match expanded.get(id) {
            Some(found) if found == token => {}
            found => {
                return Err(Error::Alignment {
                    id,
                    expected: token.clone(),
                    found: found.cloned().unwrap_or_else(|| "<end of vocabulary>".into()),
                })
            }
        }
    }
    Ok(())
}

/// Initialization plan for every row of the expanded vocabulary.
///
/// New tokens are segmented with the base vocabulary; a `##` token is
/// segmented as a word continuation so its first piece is also a `##` piece.
pub fn row_sources(base_vocab: &Vocabulary, expanded_vocab: &Vocabulary) -> Result<Vec<RowSource>> {
    check_prefix(base_vocab, expanded_vocab)?;
    let v0 = base_vocab.len();
    let mut sources = vec![RowSource::Base; v0];
    sources.par_extend(expanded_vocab.entries()[v0..].par_iter().map(|token| {
        let (text, continuation) = match token.strip_prefix(CONTINUATION_PREFIX) {
            Some(rest) if !rest.is_empty() => (rest, true),
            _ => (token.as_str(), false),
        };
        let mut ids = Vec::new();
        if base_vocab.segment_into(text, continuation, DEFAULT_MAX_CHARS, &mut ids) {
            RowSource::Pooled(ids)
        } else {
            RowSource::UnknownFallback
        }
    }));
    Ok(sources)
}

/// Extend `base` to cover `expanded_vocab`. Base rows are copied bit for bit;
/// each new row is the mean of the base rows of its base-vocabulary
/// segmentation, accumulated in f64.
pub fn expand_embeddings(
    base: &EmbeddingMatrix,
    base_vocab: &Vocabulary,
    expanded_vocab: &Vocabulary,
) -> Result<EmbeddingMatrix> {
    if base.vocab_size != base_vocab.len() {
        return Err(Error::Shape(format!(
            "matrix has {} rows but base vocabulary has {} entries",
            base.vocab_size,
            base_vocab.len()
        )));
    }
    let sources = row_sources(base_vocab, expanded_vocab)?;
    let dim = base.dim;
    let v0 = base_vocab.len();
    let unk = base_vocab.unk_id() as usize;

    let mut data = vec![0f32; expanded_vocab.len() * dim];
    data[..v0 * dim].copy_from_slice(&base.data);
    if dim > 0 {
        data[v0 * dim..]
            .par_chunks_mut(dim)
            .zip(&sources[v0..])
            .for_each(|(row, source)| match source {
                RowSource::Pooled(ids) => mean_of_rows(base, ids, row),
                RowSource::UnknownFallback | RowSource::Base => row.copy_from_slice(base.row(unk)),
            });
    }
    EmbeddingMatrix::new(expanded_vocab.len(), dim, data)
}

/// Mean of the given rows of `base`, accumulated in f64.
pub fn mean_of_rows(base: &EmbeddingMatrix, ids: &[u32], out: &mut [f32]) {
    let mut acc = vec![0f64; base.dim];
    for &id in ids {
        for (a, &v) in acc.iter_mut().zip(base.row(id as usize)) {
            *a += v as f64;
        }
    }
    let n = ids.len() as f64;
    for (o, a) in out.iter_mut().zip(acc) {
        *o = (a / n) as f32;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TokenDistance {
    pub id: u32,
    pub token: String,
    pub distance: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DriftSummary {
    pub count: usize,
    pub mean: f64,
    pub max: f64,
    /// Fraction of rows whose distance is strictly above the threshold.
    pub fraction_above: f64,
}

impl DriftSummary {
    fn of<'a>(distances: impl Iterator<Item = &'a TokenDistance>, threshold: f64) -> Self {
        let mut s = DriftSummary::default();
        let mut sum = 0.0;
        let mut above = 0usize;
        for d in distances {
            s.count += 1;
            sum += d.distance;
            s.max = s.max.max(d.distance);
            if d.distance > threshold {
                above += 1;
            }
        }
        if s.count > 0 {
            s.mean = sum / s.count as f64;
            s.fraction_above = above as f64 / s.count as f64;
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DriftReport {
    pub distances: Vec<TokenDistance>,
    pub threshold: f64,
    pub summary: DriftSummary,
    /// Rows with id below the vocabulary's base size.
    pub original: DriftSummary,
    /// Rows added by expansion.
    pub expanded: DriftSummary,
}

#[derive(Serialize)]
struct GroupRecord<'a> {
    group: &'a str,
    threshold: f64,
    #[serde(flatten)]
    summary: &'a DriftSummary,
}

impl DriftReport {
    /// One record per token, then one summary record per group
    /// (`all`, `original`, `expanded`).
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for d in &self.distances {
            serde_json::to_writer(&mut out, d)?;
            out.write_all(b"\n")?;
        }
        for (group, summary) in [
            ("all", &self.summary),
            ("original", &self.original),
            ("expanded", &self.expanded),
        ] {
            let record = GroupRecord {
                group,
                threshold: self.threshold,
                summary,
            };
            serde_json::to_writer(&mut out, &record)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }
}

/// Per-token Euclidean distance between two matrices of equal shape.
pub fn embedding_drift(
    before: &EmbeddingMatrix,
    after: &EmbeddingMatrix,
    vocab: &Vocabulary,
    threshold: f64,
) -> Result<DriftReport> {
    if before.vocab_size != after.vocab_size || before.dim != after.dim {
        return Err(Error::Shape(format!(
            "{}x{} vs {}x{}",
            before.vocab_size, before.dim, after.vocab_size, after.dim
        )));
    }
    if vocab.len() != before.vocab_size {
        return Err(Error::Shape(format!(
            "matrices have {} rows but vocabulary has {} entries",
            before.vocab_size,
            vocab.len()
        )));
    }
    let distances: Vec<TokenDistance> = (0..before.vocab_size)
        .into_par_iter()
        .map(|id| {
            let sq: f64 = before
                .row(id)
                .iter()
                .zip(after.row(id))
                .map(|(&a, &b)| {
                    let d = a as f64 - b as f64;
                    d * d
                })
                .sum();
            TokenDistance {
                id: id as u32,
                token: vocab.entries()[id].clone(),
                distance: sq.sqrt(),
            }
        })
        .collect();
    let base = vocab.base_size();
    Ok(DriftReport {
        summary: DriftSummary::of(distances.iter(), threshold),
        original: DriftSummary::of(distances[..base].iter(), threshold),
        expanded: DriftSummary::of(distances[base..].iter(), threshold),
        threshold,
        distances,
    })
}
