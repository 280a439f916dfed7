//! C ABI over the `rtpmatch` solvers.
//!
//! Matrices cross the boundary as row-major `double` buffers with rows
//! indexing predictions and columns ground truths. Cost matrices and plans
//! are opaque handles owned by the caller and released with the matching
//! `*_free` function. Every fallible entry point returns an [`RtpStatus`];
//! on failure, [`rtp_last_error_message`] describes the error for the
//! calling thread. Panics never unwind into C: they are caught and
//! reported as [`RtpStatus::Panic`].
//!
//! The header `include/rtpmatch.h` is generated from this file at build
//! time.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ndarray::Array2;
use rtpmatch::cost::{background_augmented_cost, CostMatrix};
use rtpmatch::solvers;
use rtpmatch::solvers::{
    adaptive_epsilon, hungarian, hungarian_augmented, sinkhorn_balanced, sinkhorn_log_domain,
    Kappa, Marginals, RtpParams, RtpVariant, SinkhornParams, TransportPlan,
};
use rtpmatch::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RtpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    InvalidMarginals = 4,
    KappaNotComplementary = 5,
    KernelUnderflow = 6,
    NotSquare = 7,
    Panic = 99,
}

/// Solver diagnostics of a plan.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RtpDiagnostics {
    pub iterations: usize,
    pub marginal_residual: f64,
    pub transport_cost: f64,
    pub entropy: f64,
    /// 1 when the solver met its tolerance, else 0.
    pub converged: c_int,
}

/// Variant selector for [`rtp_unbalanced`]: 0 = damped, 1 = literal.
pub const RTP_VARIANT_DAMPED: c_int = 0;
pub const RTP_VARIANT_LITERAL: c_int = 1;

/// Opaque cost matrix.
pub struct RtpCost {
    inner: CostMatrix,
}

/// Opaque transport plan.
pub struct RtpPlan {
    inner: TransportPlan,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> RtpStatus {
    match err {
        Error::DimensionMismatch(_) | Error::UnsupportedDirection { .. } => {
            RtpStatus::DimensionMismatch
        }
        Error::InvalidMarginals(_) => RtpStatus::InvalidMarginals,
        Error::KappaNotComplementary { .. } => RtpStatus::KappaNotComplementary,
        Error::KernelUnderflow(_) => RtpStatus::KernelUnderflow,
        Error::NotSquare { .. } => RtpStatus::NotSquare,
        _ => RtpStatus::InvalidArgument,
    }
}

/// Runs `body`, translating errors and panics into a status code.
fn guard(body: impl FnOnce() -> Result<(), (RtpStatus, String)>) -> RtpStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => RtpStatus::Ok,
        Ok(Err((status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| (*s).to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic in rtpmatch".into());
            set_last_error(&msg);
            RtpStatus::Panic
        }
    }
}

fn lib(err: Error) -> (RtpStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(what: &str) -> (RtpStatus, String) {
    (RtpStatus::NullPointer, format!("{what} is null"))
}

/// Reads `len` doubles, or `None` when `ptr` is null.
///
/// # Safety
/// A non-null `ptr` must point to `len` readable doubles.
unsafe fn read_slice<'a>(ptr: *const f64, len: usize) -> Option<&'a [f64]> {
    if ptr.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(ptr, len))
    }
}

/// Marginals from optional buffers; a null buffer means uniform weights.
///
/// # Safety
/// Non-null pointers must reference `n` (for `mu`) or `m` (for `nu`) doubles.
unsafe fn marginals(
    mu: *const f64,
    nu: *const f64,
    m: usize,
    n: usize,
) -> Result<Marginals, (RtpStatus, String)> {
    let mu = read_slice(mu, n).map_or_else(|| vec![1.0 / n as f64; n], <[f64]>::to_vec);
    let nu = read_slice(nu, m).map_or_else(|| vec![1.0 / m as f64; m], <[f64]>::to_vec);
    Marginals::new(mu, nu).map_err(lib)
}

/// Last error message on this thread, or null when the previous call
/// succeeded. The pointer stays valid until the next call into the
/// library from the same thread.
#[no_mangle]
pub extern "C" fn rtp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Copies a row-major `rows x cols` buffer into a new cost handle.
///
/// # Safety
/// `data` must point to `rows * cols` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rtp_cost_new(
    data: *const f64,
    rows: usize,
    cols: usize,
    out: *mut *mut RtpCost,
) -> RtpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let len = rows.checked_mul(cols).ok_or((
            RtpStatus::InvalidArgument,
            "rows * cols overflows".to_string(),
        ))?;
        let values = read_slice(data, len).ok_or_else(|| null("data"))?;
        let array = Array2::from_shape_vec((rows, cols), values.to_vec())
            .map_err(|e| (RtpStatus::InvalidArgument, e.to_string()))?;
        let inner = CostMatrix::from_array(array).map_err(lib)?;
        *out = Box::into_raw(Box::new(RtpCost { inner }));
        Ok(())
    })
}

/// Releases a cost handle; null is ignored.
///
/// # Safety
/// `cost` must come from [`rtp_cost_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rtp_cost_free(cost: *mut RtpCost) {
    if !cost.is_null() {
        drop(Box::from_raw(cost));
    }
}

/// Balanced entropic transport. `mu` (length cols) and `nu` (length rows)
/// may be null for uniform weights. `log_domain` nonzero selects the
/// stabilized solver.
///
/// # Safety
/// `cost` must be a live handle, marginal buffers must have the stated
/// lengths and `out` must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn rtp_sinkhorn(
    cost: *const RtpCost,
    mu: *const f64,
    nu: *const f64,
    eps: f64,
    tol: f64,
    max_iter: usize,
    log_domain: c_int,
    out: *mut *mut RtpPlan,
) -> RtpStatus {
    guard(|| {
        let cost = &cost.as_ref().ok_or_else(|| null("cost"))?.inner;
        if out.is_null() {
            return Err(null("out"));
        }
        let marg = marginals(mu, nu, cost.m(), cost.n())?;
        let params = SinkhornParams::new(eps)
            .with_tol(tol)
            .with_max_iter(max_iter);
        let plan = if log_domain != 0 {
            sinkhorn_log_domain(cost, &marg, &params)
        } else {
            sinkhorn_balanced(cost, &marg, &params)
        }
        .map_err(lib)?;
        *out = Box::into_raw(Box::new(RtpPlan { inner: plan }));
        Ok(())
    })
}

/// Regularized transport plan with `κ₁ = 1 − kappa2`. `variant` is
/// [`RTP_VARIANT_DAMPED`] or [`RTP_VARIANT_LITERAL`].
///
/// # Safety
/// Same contract as [`rtp_sinkhorn`].
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn rtp_unbalanced(
    cost: *const RtpCost,
    mu: *const f64,
    nu: *const f64,
    kappa2: f64,
    eps: f64,
    tol: f64,
    max_iter: usize,
    variant: c_int,
    out: *mut *mut RtpPlan,
) -> RtpStatus {
    guard(|| {
        let cost = &cost.as_ref().ok_or_else(|| null("cost"))?.inner;
        if out.is_null() {
            return Err(null("out"));
        }
        let variant = match variant {
            RTP_VARIANT_DAMPED => RtpVariant::Damped,
            RTP_VARIANT_LITERAL => RtpVariant::Literal,
            other => {
                return Err((
                    RtpStatus::InvalidArgument,
                    format!("unknown variant {other}"),
                ))
            }
        };
        let marg = marginals(mu, nu, cost.m(), cost.n())?;
        let kappa = Kappa::from_kappa2(kappa2).map_err(lib)?;
        let params = RtpParams::new(kappa, eps)
            .with_variant(variant)
            .with_tol(tol)
            .with_max_iter(max_iter);
        let plan = solvers::rtp_unbalanced(cost, &marg, &params).map_err(lib)?;
        *out = Box::into_raw(Box::new(RtpPlan { inner: plan }));
        Ok(())
    })
}

/// Minimum-cost perfect matching of a square cost matrix. Writes the
/// column of each row into `row_to_col` (length rows) and the total cost.
///
/// # Safety
/// `row_to_col` must hold `rows` entries; `total_cost` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rtp_hungarian(
    cost: *const RtpCost,
    row_to_col: *mut usize,
    total_cost: *mut f64,
) -> RtpStatus {
    guard(|| {
        let cost = &cost.as_ref().ok_or_else(|| null("cost"))?.inner;
        if row_to_col.is_null() || total_cost.is_null() {
            return Err(null("output buffer"));
        }
        let a = hungarian(cost.view()).map_err(lib)?;
        let out = std::slice::from_raw_parts_mut(row_to_col, cost.m());
        for &(j, i) in &a.pairs {
            out[j] = i;
        }
        *total_cost = a.total_cost;
        Ok(())
    })
}

/// Hungarian matching of `rows >= cols` predictions with a constant
/// background cost. `pred_to_gt[j]` receives the ground truth of
/// prediction `j`, or -1 for background.
///
/// # Safety
/// `pred_to_gt` must hold `rows` entries; `total_cost` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rtp_hungarian_background(
    cost: *const RtpCost,
    bg_cost: f64,
    pred_to_gt: *mut i64,
    total_cost: *mut f64,
) -> RtpStatus {
    guard(|| {
        let cost = &cost.as_ref().ok_or_else(|| null("cost"))?.inner;
        if pred_to_gt.is_null() || total_cost.is_null() {
            return Err(null("output buffer"));
        }
        let aug = background_augmented_cost(cost, bg_cost).map_err(lib)?;
        let a = hungarian_augmented(&aug).map_err(lib)?;
        let out = std::slice::from_raw_parts_mut(pred_to_gt, cost.m());
        out.fill(-1);
        for &(j, i) in &a.pairs {
            out[j] = i as i64;
        }
        *total_cost = a.total_cost;
        Ok(())
    })
}

/// Writes the plan's shape.
///
/// # Safety
/// `plan` must be a live handle; `rows` and `cols` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rtp_plan_dims(
    plan: *const RtpPlan,
    rows: *mut usize,
    cols: *mut usize,
) -> RtpStatus {
    guard(|| {
        let plan = &plan.as_ref().ok_or_else(|| null("plan"))?.inner;
        if rows.is_null() || cols.is_null() {
            return Err(null("output"));
        }
        let (m, n) = plan.gamma().dim();
        *rows = m;
        *cols = n;
        Ok(())
    })
}

/// Copies the plan row-major into `out`, which must hold exactly
/// `rows * cols` doubles as given by `len`.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn rtp_plan_copy(
    plan: *const RtpPlan,
    out: *mut f64,
    len: usize,
) -> RtpStatus {
    guard(|| {
        let plan = &plan.as_ref().ok_or_else(|| null("plan"))?.inner;
        if out.is_null() {
            return Err(null("out"));
        }
        let gamma = plan.gamma();
        if len != gamma.len() {
            return Err((
                RtpStatus::DimensionMismatch,
                format!("buffer holds {len} values, plan has {}", gamma.len()),
            ));
        }
        let dst = std::slice::from_raw_parts_mut(out, len);
        for (d, v) in dst.iter_mut().zip(gamma.iter()) {
            *d = *v;
        }
        Ok(())
    })
}

/// Writes the plan's solver diagnostics.
///
/// # Safety
/// `plan` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rtp_plan_diagnostics(
    plan: *const RtpPlan,
    out: *mut RtpDiagnostics,
) -> RtpStatus {
    guard(|| {
        let plan = &plan.as_ref().ok_or_else(|| null("plan"))?.inner;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let d = plan.diagnostics();
        *out = RtpDiagnostics {
            iterations: d.iterations,
            marginal_residual: d.marginal_residual,
            transport_cost: d.transport_cost,
            entropy: d.entropy,
            converged: c_int::from(d.converged),
        };
        Ok(())
    })
}

/// Releases a plan handle; null is ignored.
///
/// # Safety
/// `plan` must come from a solver call and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rtp_plan_free(plan: *mut RtpPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// `ε₀ / ln m`, or `ε₀` when `m < 3`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rtp_adaptive_epsilon(eps0: f64, m: usize, out: *mut f64) -> RtpStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = adaptive_epsilon(eps0, m).map_err(lib)?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CStr;

    fn last_error() -> Option<String> {
        let p = rtp_last_error_message();
        (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
    }

    #[test]
    fn status_mapping() {
        assert_eq!(
            status_of(&Error::KernelUnderflow("x".into())),
            RtpStatus::KernelUnderflow
        );
        assert_eq!(
            status_of(&Error::NotSquare { rows: 2, cols: 3 }),
            RtpStatus::NotSquare
        );
        assert_eq!(
            status_of(&Error::InvalidCost("x".into())),
            RtpStatus::InvalidArgument
        );
    }

    #[test]
    fn panics_become_status() {
        let s = guard(|| panic!("boom"));
        assert_eq!(s, RtpStatus::Panic);
        assert_eq!(last_error().as_deref(), Some("boom"));
        assert_eq!(guard(|| Ok(())), RtpStatus::Ok);
        assert_eq!(last_error(), None);
    }
}
