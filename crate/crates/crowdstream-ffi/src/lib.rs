//! C ABI for the streaming label aggregator.
//!
//! A session wraps the prequential estimator-decoder behind an opaque
//! handle. Labels are passed as `int32_t` arrays with entries in
//! `{-1, 0, +1}` (0 = no answer); every call returns a status code and
//! writes results through out-pointers. The generated header lives at
//! `include/crowdstream.h`.

use std::panic::{AssertUnwindSafe, catch_unwind};

use crowdstream::{AveragingMode, ObservationVector, StreamingAggregator};
use rand_chacha::ChaCha12Rng;
use rand_chacha::rand_core::SeedableRng;

/// Result of every C API call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrowdstreamStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    LengthMismatch = 3,
    InvalidLabel = 4,
    InternalError = 5,
}

/// Opaque streaming session: agreement state, current weights and the
/// tie-breaking generator.
pub struct CrowdstreamSession {
    aggregator: StreamingAggregator,
    tie_rng: ChaCha12Rng,
}

fn labels_from_raw(
    session: &CrowdstreamSession,
    labels: *const i32,
    len: usize,
) -> Result<ObservationVector, CrowdstreamStatus> {
    if labels.is_null() {
        return Err(CrowdstreamStatus::NullPointer);
    }
    if len != session.aggregator.state().labeller_count() {
        return Err(CrowdstreamStatus::LengthMismatch);
    }
    let raw = unsafe { std::slice::from_raw_parts(labels, len) };
    let mut entries = Vec::with_capacity(len);
    for &v in raw {
        if !(-1..=1).contains(&v) {
            return Err(CrowdstreamStatus::InvalidLabel);
        }
        entries.push(v as i8);
    }
    ObservationVector::new(entries).map_err(|_| CrowdstreamStatus::InvalidArgument)
}

fn guarded<F: FnOnce() -> CrowdstreamStatus>(f: F) -> CrowdstreamStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or(CrowdstreamStatus::InternalError)
}

/// Creates a streaming session for `n > 2` labellers answering with
/// probability `alpha` in (0, 1]. `beta <= 0` selects the uniform average;
/// `0 < beta < 1` selects the exponentially weighted average for drifting
/// labellers. `seed` drives the tie-breaking draws. On success writes the
/// handle to `out_session`; free it with `crowdstream_session_free`.
///
/// # Safety
/// `out_session` must be null or point to writable session-pointer storage.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn crowdstream_session_new(
    n: usize,
    alpha: f64,
    beta: f64,
    seed: u64,
    out_session: *mut *mut CrowdstreamSession,
) -> CrowdstreamStatus {
    if out_session.is_null() {
        return CrowdstreamStatus::NullPointer;
    }
    guarded(|| {
        if beta >= 1.0 || beta.is_nan() {
            return CrowdstreamStatus::InvalidArgument;
        }
        let mode = if beta > 0.0 {
            AveragingMode::Ewma { beta }
        } else {
            AveragingMode::Uniform
        };
        match StreamingAggregator::new(n, alpha, mode) {
            Ok(aggregator) => {
                let session = Box::new(CrowdstreamSession {
                    aggregator,
                    tie_rng: ChaCha12Rng::seed_from_u64(seed),
                });
                unsafe { *out_session = Box::into_raw(session) };
                CrowdstreamStatus::Ok
            }
            Err(_) => CrowdstreamStatus::InvalidArgument,
        }
    })
}

/// Releases a session. Passing null is a no-op.
///
/// # Safety
/// `session` must be null or a pointer returned by
/// `crowdstream_session_new` that has not been freed already.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn crowdstream_session_free(session: *mut CrowdstreamSession) {
    if !session.is_null() {
        drop(unsafe { Box::from_raw(session) });
    }
}

/// Prequential step: writes the prediction for this task (made with the
/// weights learnt from earlier tasks) to `out_prediction`, then folds the
/// task into the state.
///
/// # Safety
/// `session` must be a live session handle; `labels` must point to `len`
/// readable `int32_t`s; `out_prediction` must be writable.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn crowdstream_session_step(
    session: *mut CrowdstreamSession,
    labels: *const i32,
    len: usize,
    out_prediction: *mut i32,
) -> CrowdstreamStatus {
    if session.is_null() || out_prediction.is_null() {
        return CrowdstreamStatus::NullPointer;
    }
    let session = unsafe { &mut *session };
    guarded(|| {
        let x = match labels_from_raw(session, labels, len) {
            Ok(x) => x,
            Err(status) => return status,
        };
        match session.aggregator.step(&x, &mut session.tie_rng) {
            Ok(prediction) => {
                unsafe { *out_prediction = prediction as i32 };
                CrowdstreamStatus::Ok
            }
            Err(_) => CrowdstreamStatus::InternalError,
        }
    })
}

/// Decodes one task with the current weights without updating the state.
///
/// # Safety
/// As for `crowdstream_session_step`.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn crowdstream_session_predict(
    session: *mut CrowdstreamSession,
    labels: *const i32,
    len: usize,
    out_prediction: *mut i32,
) -> CrowdstreamStatus {
    if session.is_null() || out_prediction.is_null() {
        return CrowdstreamStatus::NullPointer;
    }
    let session = unsafe { &mut *session };
    guarded(|| {
        let x = match labels_from_raw(session, labels, len) {
            Ok(x) => x,
            Err(status) => return status,
        };
        match session.aggregator.predict(&x, &mut session.tie_rng) {
            Ok(prediction) => {
                unsafe { *out_prediction = prediction as i32 };
                CrowdstreamStatus::Ok
            }
            Err(_) => CrowdstreamStatus::InternalError,
        }
    })
}

/// Folds one task into the state without producing a prediction.
///
/// # Safety
/// `session` must be a live handle; `labels` must point to `len` readable
/// `int32_t`s.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn crowdstream_session_update(
    session: *mut CrowdstreamSession,
    labels: *const i32,
    len: usize,
) -> CrowdstreamStatus {
    if session.is_null() {
        return CrowdstreamStatus::NullPointer;
    }
    let session = unsafe { &mut *session };
    guarded(|| {
        let x = match labels_from_raw(session, labels, len) {
            Ok(x) => x,
            Err(status) => return status,
        };
        match session.aggregator.update(&x) {
            Ok(()) => CrowdstreamStatus::Ok,
            Err(_) => CrowdstreamStatus::InternalError,
        }
    })
}

/// Copies the current error-probability estimate into `out_probs` (length
/// `len` = labeller count). `out_unique` (optional) receives 1 when the
/// estimate came from the fixed-point inversion and 0 when it is the
/// uninformative fallback.
///
/// # Safety
/// `session` must be a live handle; `out_probs` must point to `len`
/// writable doubles; `out_unique` must be null or writable.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn crowdstream_session_error_probs(
    session: *const CrowdstreamSession,
    out_probs: *mut f64,
    len: usize,
    out_unique: *mut i32,
) -> CrowdstreamStatus {
    if session.is_null() || out_probs.is_null() {
        return CrowdstreamStatus::NullPointer;
    }
    let session = unsafe { &*session };
    guarded(|| {
        let (p_hat, unique) = session.aggregator.estimate();
        if len != p_hat.len() {
            return CrowdstreamStatus::LengthMismatch;
        }
        unsafe {
            std::ptr::copy_nonoverlapping(p_hat.as_ptr(), out_probs, len);
            if !out_unique.is_null() {
                *out_unique = unique as i32;
            }
        }
        CrowdstreamStatus::Ok
    })
}

/// Number of tasks folded into the session so far.
///
/// # Safety
/// `session` must be a live handle.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn crowdstream_session_task_count(session: *const CrowdstreamSession) -> u64 {
    if session.is_null() {
        return 0;
    }
    unsafe { &*session }.aggregator.task_count()
}

/// Length of the flat checkpoint record for this session
/// (`4 + labeller count`).
///
/// # Safety
/// `session` must be a live handle.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn crowdstream_session_state_len(
    session: *const CrowdstreamSession,
) -> usize {
    if session.is_null() {
        return 0;
    }
    unsafe { &*session }.aggregator.state().labeller_count() + 4
}

/// Serializes the agreement state into `out_record` (length `len` from
/// `crowdstream_session_state_len`): task counter, averaging mode, beta,
/// alpha, then one accumulator entry per labeller.
///
/// # Safety
/// `session` must be a live handle; `out_record` must point to `len`
/// writable doubles.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn crowdstream_session_save_state(
    session: *const CrowdstreamSession,
    out_record: *mut f64,
    len: usize,
) -> CrowdstreamStatus {
    if session.is_null() || out_record.is_null() {
        return CrowdstreamStatus::NullPointer;
    }
    let session = unsafe { &*session };
    guarded(|| {
        let record = session.aggregator.state().to_record();
        if record.len() != len {
            return CrowdstreamStatus::LengthMismatch;
        }
        unsafe { std::ptr::copy_nonoverlapping(record.as_ptr(), out_record, len) };
        CrowdstreamStatus::Ok
    })
}

/// Rebuilds a session from a checkpoint record written by
/// `crowdstream_session_save_state`. The tie-breaking generator starts
/// fresh from `seed`; the learned weights are recomputed on the next update.
///
/// # Safety
/// `record` must point to `len` readable doubles; `out_session` must be
/// writable.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn crowdstream_session_restore(
    record: *const f64,
    len: usize,
    seed: u64,
    out_session: *mut *mut CrowdstreamSession,
) -> CrowdstreamStatus {
    if record.is_null() || out_session.is_null() {
        return CrowdstreamStatus::NullPointer;
    }
    let record = unsafe { std::slice::from_raw_parts(record, len) };
    guarded(|| match crowdstream::AgreementState::from_record(record) {
        Ok(state) => {
            let n = state.labeller_count();
            let alpha = state.alpha();
            let mode = state.mode();
            let mut aggregator = match StreamingAggregator::new(n, alpha, mode) {
                Ok(a) => a,
                Err(_) => return CrowdstreamStatus::InvalidArgument,
            };
            aggregator.restore_state(state);
            let session = Box::new(CrowdstreamSession {
                aggregator,
                tie_rng: ChaCha12Rng::seed_from_u64(seed),
            });
            unsafe { *out_session = Box::into_raw(session) };
            CrowdstreamStatus::Ok
        }
        Err(_) => CrowdstreamStatus::InvalidArgument,
    })
}
