//! C ABI over `orbit-core`.
//!
//! Every fallible call returns an [`OrbitStatus`]; on failure the message is
//! kept per thread and read back with [`orbit_last_error_message`]. Handles
//! are opaque and must be released with their `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use orbit_core::algebra::{certify_ladder, TolPolicy};
use orbit_core::group::{o3_rule, so2_rule, so3_rule, QuadratureRule};
use orbit_core::harmonics::cg;
use orbit_core::models::{make_model, predicted_dims, ModelSpec};
use orbit_core::moments::{s_closed, s_oracle};
use orbit_core::OrbitError;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OrbitStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// outside the hypotheses of the dimension formulas
    Hypothesis = 3,
    NoGap = 4,
    SearchExhausted = 5,
    Numerical = 6,
    Panic = 7,
}

/// Opaque model handle.
pub struct OrbitModel {
    spec: ModelSpec,
}

/// Opaque quadrature-rule handle.
pub struct OrbitQuadrature {
    rule: QuadratureRule,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn status_of(e: &OrbitError) -> OrbitStatus {
    match e {
        OrbitError::Domain(_)
        | OrbitError::Size { .. }
        | OrbitError::InvalidModel(_)
        | OrbitError::RuleDegree { .. } => OrbitStatus::InvalidArgument,
        OrbitError::Hypothesis(_) => OrbitStatus::Hypothesis,
        OrbitError::NoGap(_) => OrbitStatus::NoGap,
        OrbitError::SearchExhausted(_) => OrbitStatus::SearchExhausted,
        _ => OrbitStatus::Numerical,
    }
}

// Runs `f`, records any error or panic, and maps it to a status.
fn guard<F>(f: F) -> OrbitStatus
where
    F: FnOnce() -> Result<(), (OrbitStatus, String)>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OrbitStatus::Ok,
        Ok(Err((st, msg))) => {
            set_error(msg);
            st
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            OrbitStatus::Panic
        }
    }
}

fn core<T>(r: orbit_core::Result<T>) -> Result<T, (OrbitStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (OrbitStatus, String) {
    (OrbitStatus::NullPointer, format!("{what} is null"))
}

unsafe fn slice<'a>(
    p: *const f64,
    n: usize,
    what: &str,
) -> Result<&'a [f64], (OrbitStatus, String)> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn orbit_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn orbit_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Build a model. `kind` is one of `mra`, `mra-projected`, `sphere`, `cryo`,
/// `cryo-projected`, `procrustes`. `radial` may be null when `n_radial` is 0.
///
/// # Safety
/// `kind` must be a valid C string, `radial` must hold `n_radial` entries and
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn orbit_model_new(
    kind: *const c_char,
    bandlimit: usize,
    radial: *const usize,
    n_radial: usize,
    atoms: usize,
    out: *mut *mut OrbitModel,
) -> OrbitStatus {
    guard(|| {
        if kind.is_null() {
            return Err(null("kind"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let kind = CStr::from_ptr(kind).to_str().map_err(|_| {
            (
                OrbitStatus::InvalidArgument,
                "kind is not UTF-8".to_string(),
            )
        })?;
        let radial: &[usize] = if n_radial == 0 {
            &[]
        } else if radial.is_null() {
            return Err(null("radial"));
        } else {
            std::slice::from_raw_parts(radial, n_radial)
        };
        let spec = core(make_model(kind, bandlimit, radial, atoms))?;
        *out = Box::into_raw(Box::new(OrbitModel { spec }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`orbit_model_new`] and not be freed twice. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn orbit_model_free(model: *mut OrbitModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Real dimension of the signal, 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn orbit_model_dim(model: *const OrbitModel) -> usize {
    model.as_ref().map_or(0, |m| m.spec.dim())
}

unsafe fn put_rule(
    out: *mut *mut OrbitQuadrature,
    r: orbit_core::Result<QuadratureRule>,
) -> OrbitStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let rule = core(r)?;
        *out = Box::into_raw(Box::new(OrbitQuadrature { rule }));
        Ok(())
    })
}

/// `n` equispaced SO(2) nodes.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn orbit_quadrature_so2(
    n: usize,
    out: *mut *mut OrbitQuadrature,
) -> OrbitStatus {
    put_rule(out, so2_rule(n))
}

/// Product rule on SO(3).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn orbit_quadrature_so3(
    n_alpha: usize,
    n_beta: usize,
    n_gamma: usize,
    out: *mut *mut OrbitQuadrature,
) -> OrbitStatus {
    put_rule(out, so3_rule(n_alpha, n_beta, n_gamma))
}

/// Product rule on O(3): the SO(3) rule and its reflection.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn orbit_quadrature_o3(
    n_alpha: usize,
    n_beta: usize,
    n_gamma: usize,
    out: *mut *mut OrbitQuadrature,
) -> OrbitStatus {
    put_rule(out, o3_rule(n_alpha, n_beta, n_gamma))
}

/// Number of nodes, 0 for a null handle.
///
/// # Safety
/// `rule` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn orbit_quadrature_len(rule: *const OrbitQuadrature) -> usize {
    rule.as_ref().map_or(0, |r| r.rule.len())
}

/// # Safety
/// `rule` must come from an `orbit_quadrature_*` constructor. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn orbit_quadrature_free(rule: *mut OrbitQuadrature) {
    if !rule.is_null() {
        drop(Box::from_raw(rule));
    }
}

/// Closed-form series term `s_k(theta)` against `theta_star`. Both vectors
/// have length `len`, which must equal the model dimension. `grad` may be
/// null; otherwise it receives `len` entries.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn orbit_s_closed(
    model: *const OrbitModel,
    theta: *const f64,
    theta_star: *const f64,
    len: usize,
    k: usize,
    value: *mut f64,
    grad: *mut f64,
) -> OrbitStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if value.is_null() {
            return Err(null("value"));
        }
        let t = slice(theta, len, "theta")?;
        let ts = slice(theta_star, len, "theta_star")?;
        let term = core(s_closed(&m.spec, t, ts, k))?;
        *value = term.value;
        if !grad.is_null() {
            if let Some(g) = term.gradient {
                std::slice::from_raw_parts_mut(grad, len).copy_from_slice(&g);
            }
        }
        Ok(())
    })
}

/// `s_k` by quadrature over `rule`.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn orbit_s_oracle(
    model: *const OrbitModel,
    rule: *const OrbitQuadrature,
    theta: *const f64,
    theta_star: *const f64,
    len: usize,
    k: usize,
    value: *mut f64,
) -> OrbitStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let r = rule.as_ref().ok_or_else(|| null("rule"))?;
        if value.is_null() {
            return Err(null("value"));
        }
        let t = slice(theta, len, "theta")?;
        let ts = slice(theta_star, len, "theta_star")?;
        *value = core(s_oracle(&m.spec, t, ts, k, &r.rule))?.value;
        Ok(())
    })
}

/// Certified cumulative ranks for moment orders 1..3 at a generic point drawn
/// from `seed`. `predicted` may be null; when given it receives the predicted
/// ladder, or zeros if the model has no closed-form prediction. Returns
/// `Hypothesis` when the model lies outside the prediction's hypotheses or
/// the prediction disagrees, and `NoGap` when no
/// clean singular-value gap was found.
///
/// # Safety
/// `ranks` must hold 3 entries; `predicted` null or 3 entries.
#[no_mangle]
pub unsafe extern "C" fn orbit_trdeg_ladder(
    model: *const OrbitModel,
    seed: u64,
    rel_tol: f64,
    min_gap: f64,
    ranks: *mut usize,
    predicted: *mut usize,
) -> OrbitStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if ranks.is_null() {
            return Err(null("ranks"));
        }
        if !(rel_tol > 0.0) || !(min_gap >= 1.0) {
            return Err((
                OrbitStatus::InvalidArgument,
                format!("need rel_tol > 0 and min_gap >= 1, got {rel_tol}, {min_gap}"),
            ));
        }
        let rep = core(certify_ladder(
            &m.spec,
            seed,
            TolPolicy { rel_tol, min_gap },
        ))?;
        std::slice::from_raw_parts_mut(ranks, 3).copy_from_slice(&rep.ranks);
        if !predicted.is_null() {
            std::slice::from_raw_parts_mut(predicted, 3)
                .copy_from_slice(&rep.predicted.unwrap_or([0; 3]));
        }
        if rep.predicted.is_none() {
            core(predicted_dims(&m.spec))?;
        }
        if !rep.gaps_ok() {
            return Err((OrbitStatus::NoGap, format!("gaps {:?}", rep.gaps)));
        }
        if rep.matches_prediction() == Some(false) {
            return Err((
                OrbitStatus::Hypothesis,
                format!("ranks {:?} differ from {:?}", rep.ranks, rep.predicted),
            ));
        }
        Ok(())
    })
}

/// Clebsch-Gordan coefficient `<l m; l' m' | l'' m''>`; 0 outside the domain.
#[no_mangle]
pub extern "C" fn orbit_clebsch_gordan(
    l: i64,
    lp: i64,
    lpp: i64,
    m: i64,
    mp: i64,
    mpp: i64,
) -> f64 {
    catch_unwind(|| cg(l, lp, lpp, m, mp, mpp)).unwrap_or(f64::NAN)
}
