#ifndef VOCADAPT_H
#define VOCADAPT_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  VOCADAPT_STATUS_OK = 0,
  VOCADAPT_STATUS_NULL_POINTER = 1,
  VOCADAPT_STATUS_INVALID_UTF8 = 2,
  VOCADAPT_STATUS_IO = 3,
  VOCADAPT_STATUS_DATA = 4,
  VOCADAPT_STATUS_INVALID_ARGUMENT = 5,
  VOCADAPT_STATUS_BUFFER_TOO_SMALL = 6,
  VOCADAPT_STATUS_PANIC = 7,
} VocadaptStatus;

typedef enum {
  VOCADAPT_MASK_MODE_PURE = 0,
  VOCADAPT_MASK_MODE_BERT = 1,
} VocadaptMaskMode;

/**
 * A dense row-major `f32` embedding matrix.
 */
typedef struct VocadaptEmbeddings VocadaptEmbeddings;

/**
 * A WordPiece vocabulary.
 */
typedef struct VocadaptVocab VocadaptVocab;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or NULL if none.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *vocadapt_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *vocadapt_version(void);

/**
 * Load a vocabulary file, one token per line.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
VocadaptStatus vocadapt_vocab_load(const char *path, VocadaptVocab **out);

/**
 * Build a vocabulary from `count` NUL-terminated tokens.
 *
 * # Safety
 * `tokens` must point to `count` valid strings and `out` must be valid.
 */
VocadaptStatus vocadapt_vocab_from_tokens(const char *const *tokens,
                                          size_t count,
                                          VocadaptVocab **out);

/**
 * # Safety
 * `vocab` must come from this library and not be used afterwards. NULL is ignored.
 */
void vocadapt_vocab_free(VocadaptVocab *vocab);

/**
 * Number of entries, or 0 for NULL.
 *
 * # Safety
 * `vocab` must be NULL or a live handle.
 */
size_t vocadapt_vocab_size(const VocadaptVocab *vocab);

/**
 * WordPiece-tokenize one word into `ids`. `out_len` receives the number of
 * pieces; if it exceeds `capacity`, `VOCADAPT_STATUS_BUFFER_TOO_SMALL` is
 * returned and nothing is written. A word that cannot be segmented yields
 * the single id of `[UNK]`.
 *
 * # Safety
 * `ids` must have room for `capacity` values; the other pointers must be valid.
 */
VocadaptStatus vocadapt_tokenize_word(const VocadaptVocab *vocab,
                                      const char *word,
                                      uint32_t *ids,
                                      size_t capacity,
                                      size_t *out_len);

/**
 * Apply the stopping rule to `count` precomputed `(sizes[i], scores[i])`
 * pairs, the first being the unexpanded vocabulary. `previous_step` selects
 * the vocabulary before the one whose rise fell to `delta`.
 *
 * # Safety
 * `sizes` and `scores` must each hold `count` values; `out_size` must be valid.
 */
VocadaptStatus vocadapt_stopping_decision(const size_t *sizes,
                                          const double *scores,
                                          size_t count,
                                          double delta,
                                          bool previous_step,
                                          size_t *out_size);

/**
 * Read an embedding matrix in text or binary form.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
VocadaptStatus vocadapt_embeddings_read(const char *path, VocadaptEmbeddings **out);

/**
 * Wrap `rows * dim` row-major values in a new matrix.
 *
 * # Safety
 * `data` must hold `rows * dim` floats and `out` must be valid.
 */
VocadaptStatus vocadapt_embeddings_from_data(const float *data,
                                             size_t rows,
                                             size_t dim,
                                             VocadaptEmbeddings **out);

/**
 * Initialize a matrix for `expanded_vocab` from `base`, which must be aligned
 * with `base_vocab`.
 *
 * # Safety
 * All handles must be live and `out` must be valid.
 */
VocadaptStatus vocadapt_embeddings_expand(const VocadaptEmbeddings *base,
                                          const VocadaptVocab *base_vocab,
                                          const VocadaptVocab *expanded_vocab,
                                          VocadaptEmbeddings **out);

/**
 * Write a matrix as text, or in the binary format when `binary` is true.
 *
 * # Safety
 * `matrix` must be live and `path` a NUL-terminated string.
 */
VocadaptStatus vocadapt_embeddings_write(const VocadaptEmbeddings *matrix,
                                         const char *path,
                                         bool binary);

/**
 * Number of rows, or 0 for NULL.
 *
 * # Safety
 * `matrix` must be NULL or a live handle.
 */
size_t vocadapt_embeddings_rows(const VocadaptEmbeddings *matrix);

/**
 * Row width, or 0 for NULL.
 *
 * # Safety
 * `matrix` must be NULL or a live handle.
 */
size_t vocadapt_embeddings_dim(const VocadaptEmbeddings *matrix);

/**
 * Borrow the `rows * dim` row-major values. Valid while the handle lives.
 *
 * # Safety
 * `matrix` must be NULL or a live handle.
 */
const float *vocadapt_embeddings_data(const VocadaptEmbeddings *matrix);

/**
 * # Safety
 * `matrix` must come from this library and not be used afterwards. NULL is ignored.
 */
void vocadapt_embeddings_free(VocadaptEmbeddings *matrix);

/**
 * Mask `len` token ids. `input_ids` and `labels` must each have room for
 * `len` values; `labels` holds -100 at unmasked positions. `out_masked`
 * receives the number of masked positions. `mode` is a `VocadaptMaskMode`.
 *
 * # Safety
 * Buffers must hold `len` values; `vocab` and `out_masked` must be valid.
 */
VocadaptStatus vocadapt_mask_tokens(const VocadaptVocab *vocab,
                                    const uint32_t *ids,
                                    size_t len,
                                    double rate,
                                    uint64_t seed,
                                    uint32_t mode,
                                    uint32_t *input_ids,
                                    int64_t *labels,
                                    size_t *out_masked);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VOCADAPT_H */
