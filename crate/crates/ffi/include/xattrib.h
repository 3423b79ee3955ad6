/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef XATTRIB_H
#define XATTRIB_H

#include <stddef.h>
#include <stdint.h>

// Status codes returned by every fallible function.
typedef enum XattribStatus {
  XATTRIB_STATUS_OK = 0,
  XATTRIB_STATUS_NULL_POINTER = 1,
  XATTRIB_STATUS_INVALID_UTF8 = 2,
  // Bad k, lengths, token ids, method, or option values.
  XATTRIB_STATUS_INVALID_ARGUMENT = 3,
  XATTRIB_STATUS_UNKNOWN_MODEL = 4,
  // The model lacks a capability the method needs (e.g. gradients).
  XATTRIB_STATUS_UNSUPPORTED = 5,
  XATTRIB_STATUS_BUFFER_TOO_SMALL = 6,
  // A Rust panic was caught at the boundary.
  XATTRIB_STATUS_PANIC = 7,
  XATTRIB_STATUS_OTHER = 8,
} XattribStatus;

// Attribution methods accepted in [`XattribExplainOptions::method`].
typedef enum XattribMethod {
  XATTRIB_METHOD_XPROMPT = 0,
  XATTRIB_METHOD_RANDOM = 1,
  XATTRIB_METHOD_LOO = 2,
  XATTRIB_METHOD_IG = 3,
  // Exhaustive search; small prompts only.
  XATTRIB_METHOD_ORACLE = 4,
} XattribMethod;

// Opaque model handle.
typedef struct XattribModel XattribModel;

// Opaque explanation handle.
typedef struct XattribResult XattribResult;

// Options for [`xattrib_explain`]. Start from
// [`xattrib_explain_options_default`].
typedef struct XattribExplainOptions {
  // One of the [`XattribMethod`] values.
  int32_t method;
  size_t k;
  size_t iterations;
  uint64_t seed;
  double temperature;
  size_t ig_steps;
} XattribExplainOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *xattrib_version(void);

// Message for the most recent failure on this thread, or null. Valid until
// the next failing call on the same thread.
const char *xattrib_last_error(void);

// Builds a registered model (`"toy-controlled"`, `"toy-redundancy"`,
// `"toy-keyword"`).
//
// # Safety
// `name` must be a NUL-terminated string; `out` must be writable.
enum XattribStatus xattrib_model_new(const char *name, uint64_t seed, struct XattribModel **out);

// # Safety
// `model` must come from [`xattrib_model_new`] and not be used afterwards.
void xattrib_model_free(struct XattribModel *model);

// # Safety
// `model` must be a live handle or null (returns 0).
size_t xattrib_model_vocabulary_size(const struct XattribModel *model);

// # Safety
// `model` must be a live handle or null (returns 0).
size_t xattrib_model_max_prompt_length(const struct XattribModel *model);

// Tokenizes `text` with the model's tokenizer.
//
// # Safety
// `text` must be NUL-terminated; `out` must hold `capacity` ids.
enum XattribStatus xattrib_tokenize(const struct XattribModel *model,
                                    const char *text,
                                    uint32_t *out,
                                    size_t capacity,
                                    size_t *out_len);

// Greedy generation. `mask` may be null (keep everything); otherwise it has
// `prompt_len` bytes, nonzero meaning kept.
//
// # Safety
// Pointers must be valid for their stated lengths.
enum XattribStatus xattrib_generate(const struct XattribModel *model,
                                    const uint32_t *prompt,
                                    size_t prompt_len,
                                    const uint8_t *mask,
                                    size_t max_new_tokens,
                                    uint32_t *out,
                                    size_t capacity,
                                    size_t *out_len);

// `log p(target | mask ⊙ prompt)`; `mask` may be null.
//
// # Safety
// Pointers must be valid for their stated lengths.
enum XattribStatus xattrib_log_likelihood(const struct XattribModel *model,
                                          const uint32_t *prompt,
                                          size_t prompt_len,
                                          const uint8_t *mask,
                                          const uint32_t *target,
                                          size_t target_len,
                                          double *out);

// Probability ratio and mean per-position KL for a mask (`mask` required).
//
// # Safety
// Pointers must be valid for their stated lengths.
enum XattribStatus xattrib_mask_metrics(const struct XattribModel *model,
                                        const uint32_t *prompt,
                                        size_t prompt_len,
                                        const uint8_t *mask,
                                        const uint32_t *target,
                                        size_t target_len,
                                        double *out_probability_ratio,
                                        double *out_kl);

struct XattribExplainOptions xattrib_explain_options_default(void);

// Runs one attribution method for a fixed target.
//
// # Safety
// Pointers must be valid for their stated lengths; `options` and `out`
// must be valid.
enum XattribStatus xattrib_explain(const struct XattribModel *model,
                                   const uint32_t *prompt,
                                   size_t prompt_len,
                                   const uint32_t *target,
                                   size_t target_len,
                                   const struct XattribExplainOptions *options,
                                   struct XattribResult **out);

// # Safety
// `result` must come from [`xattrib_explain`] and not be used afterwards.
void xattrib_result_free(struct XattribResult *result);

// # Safety
// `result` must be a live handle or null (returns 0).
size_t xattrib_result_k(const struct XattribResult *result);

// Explanatory positions, ascending.
//
// # Safety
// `out` must hold `capacity` elements.
enum XattribStatus xattrib_result_indices(const struct XattribResult *result,
                                          size_t *out,
                                          size_t capacity,
                                          size_t *out_len);

// Masked log-likelihood after each search iteration (empty for
// non-search methods).
//
// # Safety
// `out` must hold `capacity` elements.
enum XattribStatus xattrib_result_trace(const struct XattribResult *result,
                                        double *out,
                                        size_t capacity,
                                        size_t *out_len);

// # Safety
// Output pointers must be writable.
enum XattribStatus xattrib_result_calls(const struct XattribResult *result,
                                        uint64_t *out_forward,
                                        uint64_t *out_gradient);

// JSON record of the result; free with [`xattrib_string_free`].
//
// # Safety
// `out` must be writable.
enum XattribStatus xattrib_result_to_json(const struct XattribResult *result, char **out);

// # Safety
// `s` must come from this library and not be used afterwards.
void xattrib_string_free(char *s);

// Sentence BLEU over token ids (no smoothing).
//
// # Safety
// Pointers must be valid for their stated lengths.
enum XattribStatus xattrib_bleu(const uint32_t *candidate,
                                size_t candidate_len,
                                const uint32_t *reference,
                                size_t reference_len,
                                size_t max_n,
                                double *out);

// ROUGE-L precision, recall and F1 over token ids.
//
// # Safety
// Pointers must be valid for their stated lengths.
enum XattribStatus xattrib_rouge_l(const uint32_t *candidate,
                                   size_t candidate_len,
                                   const uint32_t *reference,
                                   size_t reference_len,
                                   double *out_precision,
                                   double *out_recall,
                                   double *out_f1);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* XATTRIB_H */
