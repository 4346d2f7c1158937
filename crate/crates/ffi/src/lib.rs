//! C ABI for vocadapt.
//!
//! Every fallible function returns a [`VocadaptStatus`]. On failure a
//! human-readable message is available from [`vocadapt_last_error`] on the
//! same thread. Objects are exposed as opaque handles that must be released
//! with their `_free` function. Panics never cross the boundary; they are
//! reported as `VOCADAPT_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::slice;

use vocadapt::embedding::{self, EmbeddingFormat, EmbeddingMatrix};
use vocadapt::expansion::{self, FinalRule};
use vocadapt::mlm::{self, MaskMode};
use vocadapt::tokenizer::{self, Vocabulary};
use vocadapt::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VocadaptStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Data = 4,
    InvalidArgument = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VocadaptMaskMode {
    Pure = 0,
    Bert = 1,
}

/// A WordPiece vocabulary.
pub struct VocadaptVocab(Vocabulary);

/// A dense row-major `f32` embedding matrix.
pub struct VocadaptEmbeddings(EmbeddingMatrix);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

struct Failure(VocadaptStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Open { .. } | Error::Io { .. } => VocadaptStatus::Io,
            Error::Decode { .. } => VocadaptStatus::InvalidUtf8,
            Error::InvalidArgument(_) | Error::Config(_) => VocadaptStatus::InvalidArgument,
            _ => VocadaptStatus::Data,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: VocadaptStatus, message: impl Into<String>) -> Failure {
    Failure(status, message.into())
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> VocadaptStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => VocadaptStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_owned());
            set_last_error(format!("internal panic: {message}"));
            VocadaptStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| fail(VocadaptStatus::NullPointer, format!("{name} is null")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| fail(VocadaptStatus::NullPointer, format!("{name} is null")))
}

unsafe fn c_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(VocadaptStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(VocadaptStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn input_slice<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(VocadaptStatus::NullPointer, format!("{name} is null")));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output_slice<'a, T>(p: *mut T, len: usize, name: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(fail(VocadaptStatus::NullPointer, format!("{name} is null")));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

/// Message for the most recent failure on this thread, or NULL if none.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn vocadapt_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vocadapt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Load a vocabulary file, one token per line.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vocadapt_vocab_load(
    path: *const c_char,
    out: *mut *mut VocadaptVocab,
) -> VocadaptStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let path = PathBuf::from(c_str(path, "path")?);
        let vocab = tokenizer::load_vocabulary(&path, None)?;
        *out = Box::into_raw(Box::new(VocadaptVocab(vocab)));
        Ok(())
    })
}

/// Build a vocabulary from `count` NUL-terminated tokens.
///
/// # Safety
/// `tokens` must point to `count` valid strings and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vocadapt_vocab_from_tokens(
    tokens: *const *const c_char,
    count: usize,
    out: *mut *mut VocadaptVocab,
) -> VocadaptStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let entries = input_slice(tokens, count, "tokens")?
            .iter()
            .map(|&t| c_str(t, "token").map(str::to_owned))
            .collect::<Result<Vec<_>, _>>()?;
        let vocab = Vocabulary::new(entries, None)?;
        *out = Box::into_raw(Box::new(VocadaptVocab(vocab)));
        Ok(())
    })
}

/// # Safety
/// `vocab` must come from this library and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn vocadapt_vocab_free(vocab: *mut VocadaptVocab) {
    if !vocab.is_null() {
        drop(Box::from_raw(vocab));
    }
}

/// Number of entries, or 0 for NULL.
///
/// # Safety
/// `vocab` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vocadapt_vocab_size(vocab: *const VocadaptVocab) -> usize {
    vocab.as_ref().map_or(0, |v| v.0.len())
}

/// WordPiece-tokenize one word into `ids`. `out_len` receives the number of
/// pieces; if it exceeds `capacity`, `VOCADAPT_STATUS_BUFFER_TOO_SMALL` is
/// returned and nothing is written. A word that cannot be segmented yields
/// the single id of `[UNK]`.
///
/// # Safety
/// `ids` must have room for `capacity` values; the other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vocadapt_tokenize_word(
    vocab: *const VocadaptVocab,
    word: *const c_char,
    ids: *mut u32,
    capacity: usize,
    out_len: *mut usize,
) -> VocadaptStatus {
    guard(|| {
        let vocab = &borrow(vocab, "vocab")?.0;
        let word = c_str(word, "word")?;
        let out_len = out_ptr(out_len, "out_len")?;
        let t = tokenizer::wordpiece_tokenize(word, vocab, tokenizer::DEFAULT_MAX_CHARS)?;
        *out_len = t.ids.len();
        if t.ids.len() > capacity {
            return Err(fail(
                VocadaptStatus::BufferTooSmall,
                format!("need {} ids, buffer holds {capacity}", t.ids.len()),
            ));
        }
        output_slice(ids, t.ids.len(), "ids")?.copy_from_slice(&t.ids);
        Ok(())
    })
}

/// Apply the stopping rule to `count` precomputed `(sizes[i], scores[i])`
/// pairs, the first being the unexpanded vocabulary. `previous_step` selects
/// the vocabulary before the one whose rise fell to `delta`.
///
/// # Safety
/// `sizes` and `scores` must each hold `count` values; `out_size` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vocadapt_stopping_decision(
    sizes: *const usize,
    scores: *const f64,
    count: usize,
    delta: f64,
    previous_step: bool,
    out_size: *mut usize,
) -> VocadaptStatus {
    guard(|| {
        let out_size = out_ptr(out_size, "out_size")?;
        let sizes = input_slice(sizes, count, "sizes")?;
        let scores = input_slice(scores, count, "scores")?;
        let pairs: Vec<(usize, f64)> = sizes.iter().copied().zip(scores.iter().copied()).collect();
        let rule = if previous_step {
            FinalRule::PreviousStep
        } else {
            FinalRule::CurrentStep
        };
        let (size, _) = expansion::stopping_decision(&pairs, delta, rule)?;
        *out_size = size;
        Ok(())
    })
}

/// Read an embedding matrix in text or binary form.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vocadapt_embeddings_read(
    path: *const c_char,
    out: *mut *mut VocadaptEmbeddings,
) -> VocadaptStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let path = PathBuf::from(c_str(path, "path")?);
        let m = embedding::read_embeddings(&path)?;
        *out = Box::into_raw(Box::new(VocadaptEmbeddings(m)));
        Ok(())
    })
}

/// Wrap `rows * dim` row-major values in a new matrix.
///
/// # Safety
/// `data` must hold `rows * dim` floats and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vocadapt_embeddings_from_data(
    data: *const f32,
    rows: usize,
    dim: usize,
    out: *mut *mut VocadaptEmbeddings,
) -> VocadaptStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let len = rows
            .checked_mul(dim)
            .ok_or_else(|| fail(VocadaptStatus::InvalidArgument, "rows * dim overflows"))?;
        let values = input_slice(data, len, "data")?.to_vec();
        let m = EmbeddingMatrix::new(rows, dim, values)?;
        *out = Box::into_raw(Box::new(VocadaptEmbeddings(m)));
        Ok(())
    })
}

/// Initialize a matrix for `expanded_vocab` from `base`, which must be aligned
/// with `base_vocab`.
///
/// # Safety
/// All handles must be live and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vocadapt_embeddings_expand(
    base: *const VocadaptEmbeddings,
    base_vocab: *const VocadaptVocab,
    expanded_vocab: *const VocadaptVocab,
    out: *mut *mut VocadaptEmbeddings,
) -> VocadaptStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let m = embedding::expand_embeddings(
            &borrow(base, "base")?.0,
            &borrow(base_vocab, "base_vocab")?.0,
            &borrow(expanded_vocab, "expanded_vocab")?.0,
        )?;
        *out = Box::into_raw(Box::new(VocadaptEmbeddings(m)));
        Ok(())
    })
}

/// Write a matrix as text, or in the binary format when `binary` is true.
///
/// # Safety
/// `matrix` must be live and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vocadapt_embeddings_write(
    matrix: *const VocadaptEmbeddings,
    path: *const c_char,
    binary: bool,
) -> VocadaptStatus {
    guard(|| {
        let m = &borrow(matrix, "matrix")?.0;
        let path = PathBuf::from(c_str(path, "path")?);
        let format = if binary {
            EmbeddingFormat::Binary
        } else {
            EmbeddingFormat::Text
        };
        embedding::write_embeddings(m, &path, format)?;
        Ok(())
    })
}

/// Number of rows, or 0 for NULL.
///
/// # Safety
/// `matrix` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vocadapt_embeddings_rows(matrix: *const VocadaptEmbeddings) -> usize {
    matrix.as_ref().map_or(0, |m| m.0.vocab_size())
}

/// Row width, or 0 for NULL.
///
/// # Safety
/// `matrix` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vocadapt_embeddings_dim(matrix: *const VocadaptEmbeddings) -> usize {
    matrix.as_ref().map_or(0, |m| m.0.dim())
}

/// Borrow the `rows * dim` row-major values. Valid while the handle lives.
///
/// # Safety
/// `matrix` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vocadapt_embeddings_data(matrix: *const VocadaptEmbeddings) -> *const f32 {
    matrix.as_ref().map_or(ptr::null(), |m| m.0.as_slice().as_ptr())
}

/// # Safety
/// `matrix` must come from this library and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn vocadapt_embeddings_free(matrix: *mut VocadaptEmbeddings) {
    if !matrix.is_null() {
        drop(Box::from_raw(matrix));
    }
}

/// Mask `len` token ids. `input_ids` and `labels` must each have room for
/// `len` values; `labels` holds -100 at unmasked positions. `out_masked`
/// receives the number of masked positions. `mode` is a `VocadaptMaskMode`.
///
/// # Safety
/// Buffers must hold `len` values; `vocab` and `out_masked` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vocadapt_mask_tokens(
    vocab: *const VocadaptVocab,
    ids: *const u32,
    len: usize,
    rate: f64,
    seed: u64,
    mode: u32,
    input_ids: *mut u32,
    labels: *mut i64,
    out_masked: *mut usize,
) -> VocadaptStatus {
    guard(|| {
        let vocab = &borrow(vocab, "vocab")?.0;
        let ids = input_slice(ids, len, "ids")?;
        let out_masked = out_ptr(out_masked, "out_masked")?;
        let input_out = output_slice(input_ids, len, "input_ids")?;
        let labels_out = output_slice(labels, len, "labels")?;
        let mode = match mode {
            m if m == VocadaptMaskMode::Pure as u32 => MaskMode::PureMask,
            m if m == VocadaptMaskMode::Bert as u32 => MaskMode::Bert801010,
            other => {
                return Err(fail(
                    VocadaptStatus::InvalidArgument,
                    format!("unknown mask mode {other}"),
                ))
            }
        };
        let m = mlm::mask_tokens(ids, vocab, rate, seed, mode)?;
        input_out.copy_from_slice(&m.input_ids);
        labels_out.copy_from_slice(&m.labels);
        *out_masked = m.mask_positions.len();
        Ok(())
    })
}
