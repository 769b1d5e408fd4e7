#ifndef SPECPRED_H
#define SPECPRED_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

// Result of every fallible call.
typedef enum SpStatus {
  SP_STATUS_OK = 0,
  SP_STATUS_INVALID_ARGUMENT = 1,
  SP_STATUS_TRACE_TOO_SHORT = 2,
  SP_STATUS_PARSE = 3,
  SP_STATUS_DIMENSION_MISMATCH = 4,
  SP_STATUS_HORIZON_OUT_OF_RANGE = 5,
  SP_STATUS_DIVERGED = 6,
  SP_STATUS_FORMAT = 7,
  SP_STATUS_IO = 8,
  SP_STATUS_NULL_POINTER = 9,
  SP_STATUS_PANIC = 10,
} SpStatus;

// State-space construction.
typedef enum SpVariant {
  SP_VARIANT_FULL = 0,
  SP_VARIANT_SIMPLE = 1,
  SP_VARIANT_SMART = 2,
} SpVariant;

// Opaque Markov model handle.
typedef struct SpModel SpModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL. The pointer
// stays valid until the next specpred call on the same thread.
const char *sp_last_error_message(void);

// Estimate a Markov model from a binary trace of `len` bytes (each 0 or
// 1). `max_states` caps the smart table; 0 means no cap.
//
// # Safety
// `bits` must point to `len` readable bytes and `out` must be writable.
enum SpStatus sp_model_estimate(const uint8_t *bits,
                                size_t len,
                                enum SpVariant variant,
                                size_t order,
                                size_t max_states,
                                struct SpModel **out);

// Fine-tune `model` on a binary trace with the default optimizer (Adam,
// squared error, softmax parameterization). The tuned copy is written to
// `out`; `model` is left unchanged.
//
// # Safety
// `model` must be a live handle, `bits` must point to `len` readable bytes
// and `out` must be writable.
enum SpStatus sp_model_finetune(const struct SpModel *model,
                                const uint8_t *bits,
                                size_t len,
                                size_t t_train,
                                size_t epochs,
                                double learning_rate,
                                struct SpModel **out);

// Load a model written by `sp_model_save` or the command-line tool.
//
// # Safety
// `path` must be a NUL-terminated string and `out` must be writable.
enum SpStatus sp_model_load(const char *path, struct SpModel **out);

// # Safety
// `model` must be a live handle and `path` a NUL-terminated string.
enum SpStatus sp_model_save(const struct SpModel *model, const char *path);

// Number of composite states.
//
// # Safety
// `model` must be a live handle and `out` writable.
enum SpStatus sp_model_num_states(const struct SpModel *model, size_t *out);

// Probability that the channel is active `horizon` slots after the sensed
// window (most recent slot first), and the thresholded decision.
// Either output pointer may be NULL.
//
// # Safety
// `model` must be a live handle and `sensed` must point to `len` bytes.
enum SpStatus sp_model_predict(const struct SpModel *model,
                               const uint8_t *sensed,
                               size_t len,
                               size_t horizon,
                               double *prob,
                               uint8_t *hard);

// Active probabilities for horizons `1..=max_horizon` written to `out`.
//
// # Safety
// `model` must be a live handle, `sensed` must point to `len` bytes and
// `out` to `max_horizon` writable doubles.
enum SpStatus sp_model_active_curve(const struct SpModel *model,
                                    const uint8_t *sensed,
                                    size_t len,
                                    size_t max_horizon,
                                    double *out);

// Write `n_slots` synthetic block-periodic states (0 or 1) to `out`.
//
// # Safety
// `out` must point to `n_slots` writable bytes.
enum SpStatus sp_generate_synthetic(size_t block_size,
                                    size_t n_slots,
                                    uint8_t start_state,
                                    double outlier_rate,
                                    uint64_t seed,
                                    uint8_t *out);

// Release a handle. NULL is ignored.
//
// # Safety
// `model` must be NULL or a handle not yet freed.
void sp_model_free(struct SpModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPECPRED_H */
