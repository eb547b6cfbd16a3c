//! C ABI over `predkl`.
//!
//! Handles are opaque and owned by the caller: every `*_new` / prior
//! constructor pairs with a `*_free`. Functions return a [`PredklStatus`];
//! on failure [`predkl_last_error`] describes the most recent error on the
//! calling thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use predkl::admissibility::{check_gradient, check_growth, Verdict};
use predkl::estimators::{bayes_predictive_logdensity, posterior_mean};
use predkl::marginals::MarginalEvaluator;
use predkl::mc::McSettings;
use predkl::model::ModelConfig;
use predkl::priors::{make_blyth, make_gaussian_prior, make_harmonic, make_power, make_uniform, RadialPrior};
use predkl::risk::{kl_risk_diff, verify_bridge, BridgeBudget};
use predkl::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredklStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    Panic = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredklVerdict {
    Finite = 0,
    Infinite = 1,
    Holds = 2,
    Fails = 3,
    Inconclusive = 4,
}

/// Opaque model handle.
pub struct PredklModel {
    inner: ModelConfig,
}

/// Opaque prior handle (prior plus its marginal evaluator).
pub struct PredklPrior {
    ev: MarginalEvaluator,
}

/// Monte-Carlo estimate with its standard error.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PredklEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n: u64,
}

/// Both sides of the KL / quadratic-risk identity.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PredklBridgeResult {
    pub lhs: f64,
    pub lhs_std_error: f64,
    pub rhs: f64,
    pub rhs_error_bound: f64,
    pub discrepancy: f64,
    pub tolerance: f64,
    /// 1 when `discrepancy <= tolerance`.
    pub pass: i32,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(err: &Error) -> PredklStatus {
    match err {
        Error::QuadratureNonConvergence { .. } | Error::InfiniteMarginal(_) | Error::ZeroPriorDensity => {
            PredklStatus::Numerical
        }
        _ => PredklStatus::InvalidArgument,
    }
}

/// Run `f` with panics and errors mapped to a status.
fn guard(f: impl FnOnce() -> Result<(), (PredklStatus, String)>) -> PredklStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            PredklStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            PredklStatus::Panic
        }
    }
}

fn lib(err: Error) -> (PredklStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(what: &str) -> (PredklStatus, String) {
    (PredklStatus::NullPointer, format!("{what} is null"))
}

unsafe fn slice<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], (PredklStatus, String)> {
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn model_ref<'a>(m: *const PredklModel) -> Result<&'a ModelConfig, (PredklStatus, String)> {
    m.as_ref().map(|m| &m.inner).ok_or_else(|| null("model"))
}

unsafe fn prior_ref<'a>(p: *const PredklPrior) -> Result<&'a MarginalEvaluator, (PredklStatus, String)> {
    p.as_ref().map(|p| &p.ev).ok_or_else(|| null("prior"))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), (PredklStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn verdict(v: Verdict) -> PredklVerdict {
    match v {
        Verdict::Finite => PredklVerdict::Finite,
        Verdict::Infinite => PredklVerdict::Infinite,
        Verdict::Holds => PredklVerdict::Holds,
        Verdict::Fails => PredklVerdict::Fails,
        Verdict::Inconclusive => PredklVerdict::Inconclusive,
    }
}

/// Library version, static NUL-terminated string.
#[no_mangle]
pub extern "C" fn predkl_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(s) => s,
        Err(_) => c"",
    };
    VERSION.as_ptr()
}

/// Message of the last failed call on this thread ("" after a success).
/// Valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn predkl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn predkl_model_new(p: usize, vx: f64, vy: f64, out: *mut *mut PredklModel) -> PredklStatus {
    guard(|| {
        let inner = ModelConfig::new(p, vx, vy).map_err(lib)?;
        store(out, PredklModel { inner })
    })
}

/// # Safety
/// `model` must come from [`predkl_model_new`] and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn predkl_model_free(model: *mut PredklModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

unsafe fn new_prior(
    out: *mut *mut PredklPrior,
    build: impl FnOnce() -> predkl::Result<RadialPrior>,
) -> PredklStatus {
    guard(|| {
        let prior = build().map_err(lib)?;
        store(out, PredklPrior { ev: MarginalEvaluator::new(prior) })
    })
}

/// Flat prior in dimension `p`.
///
/// # Safety
/// `out` must be valid for writing one handle.
#[no_mangle]
pub unsafe extern "C" fn predkl_prior_uniform(p: usize, out: *mut *mut PredklPrior) -> PredklStatus {
    new_prior(out, || {
        if p == 0 {
            return Err(Error::InvalidParameter { name: "p", reason: "must be positive".into() });
        }
        Ok(make_uniform(p))
    })
}

/// `|mu|^-b`, `0 <= b < p`.
///
/// # Safety
/// `out` must be valid for writing one handle.
#[no_mangle]
pub unsafe extern "C" fn predkl_prior_power(b: f64, p: usize, out: *mut *mut PredklPrior) -> PredklStatus {
    new_prior(out, || make_power(b, p))
}

/// `|mu|^-(p-2)`, `p >= 3`.
///
/// # Safety
/// `out` must be valid for writing one handle.
#[no_mangle]
pub unsafe extern "C" fn predkl_prior_harmonic(p: usize, out: *mut *mut PredklPrior) -> PredklStatus {
    new_prior(out, || make_harmonic(p))
}

/// Normalised `N_p(0, tau2 I)` prior.
///
/// # Safety
/// `out` must be valid for writing one handle.
#[no_mangle]
pub unsafe extern "C" fn predkl_prior_gaussian(tau2: f64, p: usize, out: *mut *mut PredklPrior) -> PredklStatus {
    new_prior(out, || make_gaussian_prior(tau2, p))
}

/// Proper truncation `j_n^2 pi` of `base`.
///
/// # Safety
/// `base` must be a live prior handle; `out` valid for writing one handle.
#[no_mangle]
pub unsafe extern "C" fn predkl_prior_blyth(
    base: *const PredklPrior,
    n: u32,
    out: *mut *mut PredklPrior,
) -> PredklStatus {
    guard(|| {
        let base = prior_ref(base)?;
        let prior = make_blyth(base.prior(), n).map_err(lib)?;
        store(out, PredklPrior { ev: MarginalEvaluator::new(prior) })
    })
}

/// Dimension of a prior, 0 for null.
///
/// # Safety
/// `prior` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn predkl_prior_dim(prior: *const PredklPrior) -> usize {
    prior.as_ref().map_or(0, |p| p.ev.dim())
}

/// # Safety
/// `prior` must come from a prior constructor and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn predkl_prior_free(prior: *mut PredklPrior) {
    if !prior.is_null() {
        drop(Box::from_raw(prior));
    }
}

/// `log m_pi(z; v)`.
///
/// # Safety
/// `z` must point to `len` doubles; `out` to one writable double.
#[no_mangle]
pub unsafe extern "C" fn predkl_log_marginal(
    prior: *const PredklPrior,
    z: *const f64,
    len: usize,
    v: f64,
    out: *mut f64,
) -> PredklStatus {
    guard(|| {
        let ev = prior_ref(prior)?;
        let z = slice(z, len, "z")?;
        let value = ev.log_marginal(z, v).map_err(lib)?;
        *out.as_mut().ok_or_else(|| null("out"))? = value;
        Ok(())
    })
}

/// `log p_pi(y | x)` of the Bayes predictive density.
///
/// # Safety
/// `x` and `y` must each point to `len` doubles; `out` to one writable double.
#[no_mangle]
pub unsafe extern "C" fn predkl_bayes_predictive_logdensity(
    prior: *const PredklPrior,
    model: *const PredklModel,
    x: *const f64,
    y: *const f64,
    len: usize,
    out: *mut f64,
) -> PredklStatus {
    guard(|| {
        let ev = prior_ref(prior)?;
        let model = model_ref(model)?;
        let (x, y) = (slice(x, len, "x")?, slice(y, len, "y")?);
        let value = bayes_predictive_logdensity(ev, x, y, model).map_err(lib)?;
        *out.as_mut().ok_or_else(|| null("out"))? = value;
        Ok(())
    })
}

/// Posterior mean `z + v grad log m(z; v)`, written to `out[0..len]`.
///
/// # Safety
/// `z` and `out` must each point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn predkl_posterior_mean(
    prior: *const PredklPrior,
    z: *const f64,
    len: usize,
    v: f64,
    out: *mut f64,
) -> PredklStatus {
    guard(|| {
        let ev = prior_ref(prior)?;
        let z = slice(z, len, "z")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let m = posterior_mean(ev, z, v).map_err(lib)?;
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&m.0);
        Ok(())
    })
}

/// `R_KL(mu, uniform) - R_KL(mu, pi)` with `n` draws.
///
/// # Safety
/// `mu` must point to `len` doubles; `out` to one writable estimate.
#[no_mangle]
pub unsafe extern "C" fn predkl_kl_risk_diff(
    model: *const PredklModel,
    prior: *const PredklPrior,
    mu: *const f64,
    len: usize,
    n: usize,
    seed: u64,
    workers: usize,
    out: *mut PredklEstimate,
) -> PredklStatus {
    guard(|| {
        let model = model_ref(model)?;
        let ev = prior_ref(prior)?;
        let mu = slice(mu, len, "mu")?;
        let est = kl_risk_diff(model, mu, ev, n, &McSettings::new(seed, workers)).map_err(lib)?;
        *out.as_mut().ok_or_else(|| null("out"))? =
            PredklEstimate { value: est.value, std_error: est.std_error, n: est.n };
        Ok(())
    })
}

/// Both sides of the identity with `n` draws per side and `nodes`
/// Gauss-Legendre nodes. A failed comparison is still `Ok` with `pass = 0`;
/// a side that could not be computed is `Numerical`.
///
/// # Safety
/// `mu` must point to `len` doubles; `out` to one writable result.
#[no_mangle]
pub unsafe extern "C" fn predkl_verify_bridge(
    model: *const PredklModel,
    prior: *const PredklPrior,
    mu: *const f64,
    len: usize,
    n: usize,
    nodes: usize,
    seed: u64,
    workers: usize,
    out: *mut PredklBridgeResult,
) -> PredklStatus {
    guard(|| {
        let model = model_ref(model)?;
        let ev = prior_ref(prior)?;
        let mu = slice(mu, len, "mu")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let report = verify_bridge(model, mu, ev, BridgeBudget { n_per_side: n, nodes }, &McSettings::new(seed, workers));
        match (&report.lhs, &report.rhs) {
            (Some(l), Some(r)) => {
                *out = PredklBridgeResult {
                    lhs: l.value,
                    lhs_std_error: l.std_error,
                    rhs: r.value,
                    rhs_error_bound: r.error_bound,
                    discrepancy: report.discrepancy.unwrap_or(f64::NAN),
                    tolerance: report.tolerance.unwrap_or(f64::NAN),
                    pass: report.pass as i32,
                };
                Ok(())
            }
            _ => Err((PredklStatus::Numerical, report.diagnosis.unwrap_or_default())),
        }
    })
}

unsafe fn condition(
    prior: *const PredklPrior,
    out: *mut PredklVerdict,
    value: *mut f64,
    check: fn(&RadialPrior, usize) -> predkl::admissibility::ConditionVerdict,
) -> PredklStatus {
    guard(|| {
        let ev = prior_ref(prior)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let v = check(ev.prior(), ev.dim());
        *out = verdict(v.verdict);
        if let Some(slot) = value.as_mut() {
            *slot = v.value.unwrap_or(f64::NAN);
        }
        Ok(())
    })
}

/// Growth condition verdict; `value` (optional) receives the truncated
/// integral or NaN.
///
/// # Safety
/// `out` must be writable; `value` null or writable.
#[no_mangle]
pub unsafe extern "C" fn predkl_check_growth(
    prior: *const PredklPrior,
    out: *mut PredklVerdict,
    value: *mut f64,
) -> PredklStatus {
    condition(prior, out, value, check_growth)
}

/// Integrated gradient condition verdict; `value` as for growth.
///
/// # Safety
/// `out` must be writable; `value` null or writable.
#[no_mangle]
pub unsafe extern "C" fn predkl_check_gradient(
    prior: *const PredklPrior,
    out: *mut PredklVerdict,
    value: *mut f64,
) -> PredklStatus {
    condition(prior, out, value, check_gradient)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    #[test]
    fn last_error_is_cleared_on_success() {
        let mut m = ptr::null_mut();
        unsafe {
            assert_eq!(predkl_model_new(0, 1.0, 1.0, &mut m), PredklStatus::InvalidArgument);
            assert!(!CStr::from_ptr(predkl_last_error()).to_bytes().is_empty());
            assert_eq!(predkl_model_new(1, 1.0, 1.0, &mut m), PredklStatus::Ok);
            assert!(CStr::from_ptr(predkl_last_error()).to_bytes().is_empty());
            predkl_model_free(m);
        }
    }

    #[test]
    fn panics_are_caught() {
        let s = guard(|| panic!("boom"));
        assert_eq!(s, PredklStatus::Panic);
        let msg = unsafe { CStr::from_ptr(predkl_last_error()) }.to_string_lossy().into_owned();
        assert!(msg.contains("boom"));
    }
}
