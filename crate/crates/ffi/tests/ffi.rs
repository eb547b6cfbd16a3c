use std::ffi::CStr;
use std::process::Command;
use std::ptr;

use predkl_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(predkl_last_error()) }.to_string_lossy().into_owned()
}

struct Handles {
    model: *mut PredklModel,
    prior: *mut PredklPrior,
}

impl Handles {
    fn gaussian(p: usize, tau2: f64) -> Self {
        let mut model = ptr::null_mut();
        let mut prior = ptr::null_mut();
        unsafe {
            assert_eq!(predkl_model_new(p, 1.0, 1.0, &mut model), PredklStatus::Ok);
            assert_eq!(predkl_prior_gaussian(tau2, p, &mut prior), PredklStatus::Ok);
        }
        Handles { model, prior }
    }
}

impl Drop for Handles {
    fn drop(&mut self) {
        unsafe {
            predkl_prior_free(self.prior);
            predkl_model_free(self.model);
        }
    }
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(predkl_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn conjugate_values_through_the_abi() {
    let h = Handles::gaussian(1, 1.0);
    let (x, y) = ([0.7], [-0.4]);
    let mut out = 0.0;
    unsafe {
        // m(z; v) = N(z; 0, 1 + v)
        assert_eq!(predkl_log_marginal(h.prior, x.as_ptr(), 1, 1.0, &mut out), PredklStatus::Ok);
        let want = -0.5 * (2.0 * std::f64::consts::PI * 2.0).ln() - 0.49 / 4.0;
        assert!((out - want).abs() < 1e-9, "{out} vs {want}");

        // p(y | x) = N(y; x / 2, 1 / 2 + 1)
        assert_eq!(
            predkl_bayes_predictive_logdensity(h.prior, h.model, x.as_ptr(), y.as_ptr(), 1, &mut out),
            PredklStatus::Ok
        );
        let (m, v) = (0.35, 1.5);
        let want = -0.5 * (2.0 * std::f64::consts::PI * v).ln() - (y[0] - m) * (y[0] - m) / (2.0 * v);
        assert!((out - want).abs() < 1e-9);

        let mut mean = [0.0];
        assert_eq!(predkl_posterior_mean(h.prior, x.as_ptr(), 1, 1.0, mean.as_mut_ptr()), PredklStatus::Ok);
        assert!((mean[0] - 0.35).abs() < 1e-9);
    }
}

#[test]
fn risk_and_bridge_anchor() {
    let h = Handles::gaussian(1, 1.0);
    let mu = [0.0];
    let exact = 0.5 * ((4.0f64 / 3.0).ln() + 1.0 / 6.0);
    let mut est = PredklEstimate::default();
    let mut bridge = PredklBridgeResult::default();
    unsafe {
        assert_eq!(predkl_kl_risk_diff(h.model, h.prior, mu.as_ptr(), 1, 20_000, 3, 1, &mut est), PredklStatus::Ok);
        assert!((est.value - exact).abs() < 4.0 * est.std_error + 1e-12, "{est:?}");
        assert_eq!(
            predkl_verify_bridge(h.model, h.prior, mu.as_ptr(), 1, 20_000, 16, 3, 1, &mut bridge),
            PredklStatus::Ok
        );
    }
    assert_eq!(bridge.pass, 1, "{bridge:?}");
    assert!((bridge.rhs - exact).abs() < 0.01);
}

#[test]
fn condition_verdicts() {
    let mut prior = ptr::null_mut();
    let mut v = PredklVerdict::Inconclusive;
    let mut value = 0.0;
    unsafe {
        assert_eq!(predkl_prior_uniform(3, &mut prior), PredklStatus::Ok);
        assert_eq!(predkl_check_growth(prior, &mut v, &mut value), PredklStatus::Ok);
        assert_eq!(v, PredklVerdict::Infinite);
        assert_eq!(predkl_check_gradient(prior, &mut v, ptr::null_mut()), PredklStatus::Ok);
        assert_eq!(v, PredklVerdict::Finite);
        predkl_prior_free(prior);

        assert_eq!(predkl_prior_harmonic(3, &mut prior), PredklStatus::Ok);
        assert_eq!(predkl_prior_dim(prior), 3);
        assert_eq!(predkl_check_growth(prior, &mut v, &mut value), PredklStatus::Ok);
        assert_eq!(v, PredklVerdict::Finite);
        assert_eq!(predkl_check_gradient(prior, &mut v, &mut value), PredklStatus::Ok);
        assert_eq!(v, PredklVerdict::Infinite);

        let mut blyth = ptr::null_mut();
        assert_eq!(predkl_prior_blyth(prior, 4, &mut blyth), PredklStatus::Ok);
        assert_eq!(predkl_prior_dim(blyth), 3);
        predkl_prior_free(blyth);
        predkl_prior_free(prior);
    }
}

#[test]
fn errors_are_reported_not_raised() {
    let mut prior = ptr::null_mut();
    let mut out = 0.0;
    unsafe {
        assert_eq!(predkl_prior_harmonic(2, &mut prior), PredklStatus::InvalidArgument);
        assert!(prior.is_null());
        assert!(!last_error().is_empty());
        assert_eq!(predkl_prior_power(1.0, 3, ptr::null_mut()), PredklStatus::NullPointer);
        assert_eq!(predkl_log_marginal(ptr::null(), [0.0].as_ptr(), 1, 1.0, &mut out), PredklStatus::NullPointer);

        assert_eq!(predkl_prior_uniform(2, &mut prior), PredklStatus::Ok);
        assert_eq!(predkl_log_marginal(prior, [0.0].as_ptr(), 1, 1.0, &mut out), PredklStatus::InvalidArgument);
        assert!(last_error().contains("dimension"), "{}", last_error());
        assert_eq!(predkl_log_marginal(prior, [0.0, 0.0].as_ptr(), 2, 1.0, &mut out), PredklStatus::Ok);
        assert_eq!(last_error(), "");
        predkl_prior_free(prior);
        predkl_prior_free(ptr::null_mut());
        predkl_model_free(ptr::null_mut());
    }
}

#[test]
fn header_is_generated_and_compiles() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let header = std::fs::read_to_string(dir.join("predkl.h")).unwrap();
    for sym in [
        "predkl_model_new",
        "predkl_prior_blyth",
        "predkl_verify_bridge",
        "predkl_check_gradient",
        "PREDKL_STATUS_PANIC",
        "typedef struct PredklPrior PredklPrior",
    ] {
        assert!(header.contains(sym), "missing {sym}");
    }
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"predkl.h\"\nint main(void) { PredklModel *m = 0; \
         PredklStatus s = predkl_model_new(1, 1.0, 1.0, &m); predkl_model_free(m); return (int)s; }\n",
    )
    .unwrap();
    match Command::new("cc").arg("-fsyntax-only").arg("-Wall").arg("-Werror").arg("-I").arg(&dir).arg(&src).output() {
        Ok(out) => assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr)),
        Err(_) => eprintln!("no C compiler; header syntax not checked"),
    }
}
