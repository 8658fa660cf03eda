//! C ABI for `treeem`.
//!
//! Objects cross the boundary as opaque handles created by `*_new` (or by
//! an operation's out-parameter) and released by the matching `*_free`.
//! Every fallible call returns a [`TreeemStatus`]; on failure the message
//! is available from [`treeem_last_error_message`] on the same thread.
//! Matrices are passed row-major.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, c_int};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use treeem::nalgebra::DMatrix;
use treeem::{
    chow_liu, kl_cov, run_em, sample_observations, CovMatrix, EmConfig, EmTrace, Error,
    LinearModel, ObservationSet, StopReason, TreeApproxResult,
};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TreeemStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NotPositiveDefinite = 4,
    Numerical = 5,
    Io = 6,
    Panic = 7,
}

/// Symmetric positive definite covariance matrix.
pub struct TreeemCov(CovMatrix);

/// Chow-Liu fit: tree edges, tree covariance, KL divergence.
pub struct TreeemTreeFit(TreeApproxResult);

/// Linear observation model `Y = H X + W`.
pub struct TreeemModel(LinearModel);

/// Observation set, one sample per row.
pub struct TreeemObs(ObservationSet);

/// Per-iteration record of an EM run.
pub struct TreeemTrace(EmTrace);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_last_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> TreeemStatus {
    match err {
        Error::DimensionMismatch { .. } | Error::NotSquare { .. } => {
            TreeemStatus::DimensionMismatch
        }
        Error::NotPositiveDefinite { .. } | Error::InsufficientSamples { .. } => {
            TreeemStatus::NotPositiveDefinite
        }
        Error::Io { .. } => TreeemStatus::Io,
        Error::Config(_)
        | Error::Parse { .. }
        | Error::NotSymmetric { .. }
        | Error::NonFinite(_)
        | Error::VertexOutOfRange { .. }
        | Error::SameVertex(_)
        | Error::InvalidTree(_)
        | Error::TooFewVertices { .. }
        | Error::TooManyVertices { .. }
        | Error::RankDeficient { .. }
        | Error::EmptyObservations => TreeemStatus::InvalidArgument,
        _ => TreeemStatus::Numerical,
    }
}

enum Failure {
    Null(&'static str),
    Invalid(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TreeemStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error(String::new());
            TreeemStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_last_error(format!("null pointer: {what}"));
            TreeemStatus::NullPointer
        }
        Ok(Err(Failure::Invalid(msg))) => {
            set_last_error(msg);
            TreeemStatus::InvalidArgument
        }
        Ok(Err(Failure::Lib(err))) => {
            set_last_error(err.to_string());
            status_of(&err)
        }
        Err(_) => {
            set_last_error("panic inside treeem".into());
            TreeemStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn matrix_from(
    data: *const f64,
    rows: usize,
    cols: usize,
    what: &'static str,
) -> Result<DMatrix<f64>, Failure> {
    if data.is_null() {
        return Err(Failure::Null(what));
    }
    if rows == 0 || cols == 0 {
        return Err(Failure::Invalid(format!(
            "{what}: empty {rows}x{cols} matrix"
        )));
    }
    let slice = std::slice::from_raw_parts(data, rows * cols);
    Ok(DMatrix::from_row_slice(rows, cols, slice))
}

unsafe fn write_out<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

unsafe fn copy_matrix(m: &DMatrix<f64>, out: *mut f64, len: usize) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("out buffer"));
    }
    let (rows, cols) = m.shape();
    if len < rows * cols {
        return Err(Failure::Invalid(format!(
            "buffer holds {len} values, need {}",
            rows * cols
        )));
    }
    let dst = std::slice::from_raw_parts_mut(out, rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            dst[i * cols + j] = m[(i, j)];
        }
    }
    Ok(())
}

/// Copies the last error message of this thread into `buf` (NUL
/// terminated, truncated to `len - 1` bytes). Returns the full message
/// length in bytes, excluding the terminator.
#[no_mangle]
pub unsafe extern "C" fn treeem_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Validates a row-major `dim × dim` matrix and wraps it.
#[no_mangle]
pub unsafe extern "C" fn treeem_cov_new(
    data: *const f64,
    dim: usize,
    out: *mut *mut TreeemCov,
) -> TreeemStatus {
    guard(|| {
        let m = matrix_from(data, dim, dim, "data")?;
        write_out(out, TreeemCov(CovMatrix::new(m)?))
    })
}

#[no_mangle]
pub unsafe extern "C" fn treeem_cov_free(cov: *mut TreeemCov) {
    free(cov)
}

/// Dimension of `cov`, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn treeem_cov_dim(cov: *const TreeemCov) -> usize {
    cov.as_ref().map_or(0, |c| c.0.dim())
}

/// Copies the entries row-major into `out` (at least `dim * dim` values).
#[no_mangle]
pub unsafe extern "C" fn treeem_cov_copy(
    cov: *const TreeemCov,
    out: *mut f64,
    len: usize,
) -> TreeemStatus {
    guard(|| copy_matrix(deref(cov, "cov")?.0.as_matrix(), out, len))
}

/// `D(N(0, a) ‖ N(0, b))` in nats.
#[no_mangle]
pub unsafe extern "C" fn treeem_kl_gaussian(
    a: *const TreeemCov,
    b: *const TreeemCov,
    out: *mut f64,
) -> TreeemStatus {
    guard(|| {
        let kl = kl_cov(&deref(a, "a")?.0, &deref(b, "b")?.0)?;
        *out.as_mut().ok_or(Failure::Null("out"))? = kl;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn treeem_chow_liu(
    cov: *const TreeemCov,
    out: *mut *mut TreeemTreeFit,
) -> TreeemStatus {
    guard(|| {
        let fit = chow_liu(&deref(cov, "cov")?.0)?;
        write_out(out, TreeemTreeFit(fit))
    })
}

#[no_mangle]
pub unsafe extern "C" fn treeem_tree_fit_free(fit: *mut TreeemTreeFit) {
    free(fit)
}

/// KL divergence of the fit, or NaN for a null handle.
#[no_mangle]
pub unsafe extern "C" fn treeem_tree_fit_kl(fit: *const TreeemTreeFit) -> f64 {
    fit.as_ref().map_or(f64::NAN, |f| f.0.kl)
}

#[no_mangle]
pub unsafe extern "C" fn treeem_tree_fit_num_edges(fit: *const TreeemTreeFit) -> usize {
    fit.as_ref().map_or(0, |f| f.0.tree.edges().len())
}

/// Writes edges as `u0, v0, u1, v1, …` with `u < v`, sorted; `len` counts
/// `size_t` slots and must be at least `2 * num_edges`.
#[no_mangle]
pub unsafe extern "C" fn treeem_tree_fit_edges(
    fit: *const TreeemTreeFit,
    out: *mut usize,
    len: usize,
) -> TreeemStatus {
    guard(|| {
        let edges = deref(fit, "fit")?.0.tree.edges();
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        if len < 2 * edges.len() {
            return Err(Failure::Invalid(format!(
                "buffer holds {len} slots, need {}",
                2 * edges.len()
            )));
        }
        let dst = std::slice::from_raw_parts_mut(out, 2 * edges.len());
        for (k, &(u, v)) in edges.iter().enumerate() {
            dst[2 * k] = u;
            dst[2 * k + 1] = v;
        }
        Ok(())
    })
}

/// New handle holding a copy of the tree covariance.
#[no_mangle]
pub unsafe extern "C" fn treeem_tree_fit_cov(
    fit: *const TreeemTreeFit,
    out: *mut *mut TreeemCov,
) -> TreeemStatus {
    guard(|| {
        let cov = deref(fit, "fit")?.0.cov.clone();
        write_out(out, TreeemCov(cov))
    })
}

/// `h` is row-major `m × p`; `noise` has dimension `m`.
#[no_mangle]
pub unsafe extern "C" fn treeem_model_new(
    h: *const f64,
    m: usize,
    p: usize,
    noise: *const TreeemCov,
    out: *mut *mut TreeemModel,
) -> TreeemStatus {
    guard(|| {
        let h = matrix_from(h, m, p, "h")?;
        let d = deref(noise, "noise")?.0.clone();
        write_out(out, TreeemModel(LinearModel::new(h, d)?))
    })
}

#[no_mangle]
pub unsafe extern "C" fn treeem_model_free(model: *mut TreeemModel) {
    free(model)
}

/// `samples` is row-major `r × m`, one observation per row.
#[no_mangle]
pub unsafe extern "C" fn treeem_obs_new(
    samples: *const f64,
    r: usize,
    m: usize,
    out: *mut *mut TreeemObs,
) -> TreeemStatus {
    guard(|| {
        let s = matrix_from(samples, r, m, "samples")?;
        write_out(out, TreeemObs(ObservationSet::from_samples(s)?))
    })
}

/// Draws `r` seeded observations from `model` with latent covariance `sigma`.
#[no_mangle]
pub unsafe extern "C" fn treeem_obs_sample(
    model: *const TreeemModel,
    sigma: *const TreeemCov,
    r: usize,
    seed: u64,
    out: *mut *mut TreeemObs,
) -> TreeemStatus {
    guard(|| {
        let obs = sample_observations(
            &deref(model, "model")?.0,
            &deref(sigma, "sigma")?.0,
            r,
            seed,
        )?;
        write_out(out, TreeemObs(obs))
    })
}

#[no_mangle]
pub unsafe extern "C" fn treeem_obs_free(obs: *mut TreeemObs) {
    free(obs)
}

#[no_mangle]
pub unsafe extern "C" fn treeem_obs_len(obs: *const TreeemObs) -> usize {
    obs.as_ref().map_or(0, |o| o.0.len())
}

/// Runs EM from `chow_liu(sigma0)`. `truth` may be null; when given, the
/// trace records latent KL values.
#[no_mangle]
pub unsafe extern "C" fn treeem_run_em(
    sigma0: *const TreeemCov,
    epsilon: f64,
    l_max: usize,
    model: *const TreeemModel,
    obs: *const TreeemObs,
    truth: *const TreeemCov,
    out: *mut *mut TreeemTrace,
) -> TreeemStatus {
    guard(|| {
        let config = EmConfig::new(deref(sigma0, "sigma0")?.0.clone(), epsilon, l_max)?;
        let truth = truth.as_ref().map(|t| &t.0);
        let trace = run_em(
            &config,
            &deref(model, "model")?.0,
            &deref(obs, "obs")?.0,
            truth,
        )?;
        write_out(out, TreeemTrace(trace))
    })
}

#[no_mangle]
pub unsafe extern "C" fn treeem_trace_free(trace: *mut TreeemTrace) {
    free(trace)
}

/// Number of iterates in the trace.
#[no_mangle]
pub unsafe extern "C" fn treeem_trace_len(trace: *const TreeemTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.0.len())
}

/// 0 = epsilon reached, 1 = iteration cap reached, -1 = null handle.
#[no_mangle]
pub unsafe extern "C" fn treeem_trace_stop_reason(trace: *const TreeemTrace) -> c_int {
    match trace.as_ref().map(|t| t.0.stop_reason) {
        Some(StopReason::EpsilonReached) => 0,
        Some(StopReason::LmaxReached) => 1,
        None => -1,
    }
}

/// Observation-space KL of iterate `index` (0-based).
#[no_mangle]
pub unsafe extern "C" fn treeem_trace_obs_kl(
    trace: *const TreeemTrace,
    index: usize,
    out: *mut f64,
) -> TreeemStatus {
    guard(|| {
        let it = deref(trace, "trace")?
            .0
            .iterations
            .get(index)
            .ok_or_else(|| Failure::Invalid(format!("iterate {index} out of range")))?;
        *out.as_mut().ok_or(Failure::Null("out"))? = it.obs_kl;
        Ok(())
    })
}

/// Latent KL of iterate `index`; NaN when the run had no ground truth.
#[no_mangle]
pub unsafe extern "C" fn treeem_trace_latent_kl(
    trace: *const TreeemTrace,
    index: usize,
    out: *mut f64,
) -> TreeemStatus {
    guard(|| {
        let it = deref(trace, "trace")?
            .0
            .iterations
            .get(index)
            .ok_or_else(|| Failure::Invalid(format!("iterate {index} out of range")))?;
        *out.as_mut().ok_or(Failure::Null("out"))? = it.latent_kl.unwrap_or(f64::NAN);
        Ok(())
    })
}

/// New handle holding the final tree covariance.
#[no_mangle]
pub unsafe extern "C" fn treeem_trace_final_cov(
    trace: *const TreeemTrace,
    out: *mut *mut TreeemCov,
) -> TreeemStatus {
    guard(|| {
        let cov = deref(trace, "trace")?.0.final_iterate().sigma_tree.clone();
        write_out(out, TreeemCov(cov))
    })
}
