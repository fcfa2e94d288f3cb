#ifndef CROWDSTREAM_H
#define CROWDSTREAM_H

/* Generated by cbindgen from crowdstream-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every C API call.
 */
typedef enum {
  CROWDSTREAM_STATUS_OK = 0,
  CROWDSTREAM_STATUS_NULL_POINTER = 1,
  CROWDSTREAM_STATUS_INVALID_ARGUMENT = 2,
  CROWDSTREAM_STATUS_LENGTH_MISMATCH = 3,
  CROWDSTREAM_STATUS_INVALID_LABEL = 4,
  CROWDSTREAM_STATUS_INTERNAL_ERROR = 5,
} CrowdstreamStatus;

/**
 * Opaque streaming session: agreement state, current weights and the
 * tie-breaking generator.
 */
typedef struct CrowdstreamSession CrowdstreamSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates a streaming session for `n > 2` labellers answering with
 * probability `alpha` in (0, 1]. `beta <= 0` selects the uniform average;
 * `0 < beta < 1` selects the exponentially weighted average for drifting
 * labellers. `seed` drives the tie-breaking draws. On success writes the
 * handle to `out_session`; free it with `crowdstream_session_free`.
 *
 * # Safety
 * `out_session` must be null or point to writable session-pointer storage.
 */
CrowdstreamStatus crowdstream_session_new(uintptr_t n,
                                          double alpha,
                                          double beta,
                                          uint64_t seed,
                                          CrowdstreamSession **out_session);

/**
 * Releases a session. Passing null is a no-op.
 *
 * # Safety
 * `session` must be null or a pointer returned by
 * `crowdstream_session_new` that has not been freed already.
 */
void crowdstream_session_free(CrowdstreamSession *session);

/**
 * Prequential step: writes the prediction for this task (made with the
 * weights learnt from earlier tasks) to `out_prediction`, then folds the
 * task into the state.
 *
 * # Safety
 * `session` must be a live session handle; `labels` must point to `len`
 * readable `int32_t`s; `out_prediction` must be writable.
 */
CrowdstreamStatus crowdstream_session_step(CrowdstreamSession *session,
                                           const int32_t *labels,
                                           uintptr_t len,
                                           int32_t *out_prediction);

/**
 * Decodes one task with the current weights without updating the state.
 *
 * # Safety
 * As for `crowdstream_session_step`.
 */
CrowdstreamStatus crowdstream_session_predict(CrowdstreamSession *session,
                                              const int32_t *labels,
                                              uintptr_t len,
                                              int32_t *out_prediction);

/**
 * Folds one task into the state without producing a prediction.
 *
 * # Safety
 * `session` must be a live handle; `labels` must point to `len` readable
 * `int32_t`s.
 */
CrowdstreamStatus crowdstream_session_update(CrowdstreamSession *session,
                                             const int32_t *labels,
                                             uintptr_t len);

/**
 * Copies the current error-probability estimate into `out_probs` (length
 * `len` = labeller count). `out_unique` (optional) receives 1 when the
 * estimate came from the fixed-point inversion and 0 when it is the
 * uninformative fallback.
 *
 * # Safety
 * `session` must be a live handle; `out_probs` must point to `len`
 * writable doubles; `out_unique` must be null or writable.
 */
CrowdstreamStatus crowdstream_session_error_probs(const CrowdstreamSession *session,
                                                  double *out_probs,
                                                  uintptr_t len,
                                                  int32_t *out_unique);

/**
 * Number of tasks folded into the session so far.
 *
 * # Safety
 * `session` must be a live handle.
 */
uint64_t crowdstream_session_task_count(const CrowdstreamSession *session);

/**
 * Length of the flat checkpoint record for this session
 * (`4 + labeller count`).
 *
 * # Safety
 * `session` must be a live handle.
 */
uintptr_t crowdstream_session_state_len(const CrowdstreamSession *session);

/**
 * Serializes the agreement state into `out_record` (length `len` from
 * `crowdstream_session_state_len`): task counter, averaging mode, beta,
 * alpha, then one accumulator entry per labeller.
 *
 * # Safety
 * `session` must be a live handle; `out_record` must point to `len`
 * writable doubles.
 */
CrowdstreamStatus crowdstream_session_save_state(const CrowdstreamSession *session,
                                                 double *out_record,
                                                 uintptr_t len);

/**
 * Rebuilds a session from a checkpoint record written by
 * `crowdstream_session_save_state`. The tie-breaking generator starts
 * fresh from `seed`; the learned weights are recomputed on the next update.
 *
 * # Safety
 * `record` must point to `len` readable doubles; `out_session` must be
 * writable.
 */
CrowdstreamStatus crowdstream_session_restore(const double *record,
                                              uintptr_t len,
                                              uint64_t seed,
                                              CrowdstreamSession **out_session);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CROWDSTREAM_H */
