//! Monte-Carlo risk engines: KL and quadratic risk, the log-marginal form of
//! the KL risk improvement over the uniform-prior rule, the Stein form of the
//! quadratic improvement, and the identity tying the two together,
//!
//! ```text
//! R_KL(mu, p_U) - R_KL(mu, p_pi)
//!     = E log m(W; v_w) - E log m(X; v_x)
//!     = 1/2 int_{v_w}^{v_x} v^-2 [R_Q(mu, mle) - R_Q(mu, mu_pi)] dv,
//! ```
//!
//! with `R_Q(mu, mle) - R_Q(mu, mu_pi) = -4 v^2 E lap sqrt(m) / sqrt(m)`.
//!
//! Every expectation over a Gaussian draw is taken on one shared pool of
//! standard normals (`z = mu + sqrt(v) xi`), so differences between scales
//! and between the two sides of the identity are paired.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_positive, Error, Result};
use crate::estimators::{posterior_mean, PredictiveProcedure};
use crate::marginals::MarginalEvaluator;
use crate::mc::{estimate, McSettings, RiskEstimate, CHUNK};
use crate::model::{dist_sq, kl_gaussian_unchecked, ModelConfig, Point};
use crate::priors::{RadialPrior, RadialSampler};
use crate::quadrature::gauss_legendre_on;

/// Default number of Gauss-Legendre nodes on `[v_w, v_x]`.
pub const DEFAULT_NODES: usize = 16;

fn normals(rng: &mut ChaCha8Rng, p: usize) -> Vec<f64> {
    (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn shifted(mu: &[f64], v: f64, xi: &[f64]) -> Vec<f64> {
    let sd = v.sqrt();
    mu.iter().zip(xi).map(|(m, e)| m + sd * e).collect()
}

/// Entropy of `N_p(mu, v_y I)`.
pub fn gaussian_entropy(p: usize, v: f64) -> f64 {
    0.5 * p as f64 * (2.0 * std::f64::consts::PI * std::f64::consts::E * v).ln()
}

/// `R_KL(mu, proc)`. The inner loss is exact when `proc(. | x)` is Gaussian;
/// otherwise one `Y` is drawn per `X` and only the cross term is sampled.
pub fn kl_risk(
    model: &ModelConfig,
    mu: &[f64],
    proc: &PredictiveProcedure,
    n: usize,
    mc: &McSettings,
) -> Result<RiskEstimate> {
    model.validate()?;
    check_dim(model.p, mu.len())?;
    let p = model.p;
    let entropy = gaussian_entropy(p, model.vy);
    estimate(mc, n, &format!("kl-risk:{}", proc.label()), |rng| {
        // Y is always drawn so every procedure consumes the same stream and
        // risks of different procedures under one seed are paired.
        let x = shifted(mu, model.vx, &normals(rng, p));
        let y = shifted(mu, model.vy, &normals(rng, p));
        match proc.gaussian_form(&x, model)? {
            Some(g) => Ok(kl_gaussian_unchecked(p, dist_sq(mu, &g.mean), model.vy, g.v)),
            None => Ok(-entropy - proc.log_density(&x, &y, model)?),
        }
    })
}

/// `R_Q(mu, est) = E |est(Z) - mu|^2`, `Z ~ N(mu, v I)`.
pub fn quadratic_risk<F>(v: f64, mu: &[f64], estimator: F, n: usize, mc: &McSettings) -> Result<RiskEstimate>
where
    F: Fn(&[f64]) -> Result<Point> + Sync,
{
    check_positive("v", v)?;
    estimate(mc, n, "quadratic-risk", |rng| {
        let z = shifted(mu, v, &normals(rng, mu.len()));
        let e = estimator(&z)?;
        check_dim(mu.len(), e.len())?;
        Ok(dist_sq(&e, mu))
    })
}

/// `R_Q(mu, mle) - R_Q(mu, mu_pi)` sampled directly, paired per draw.
pub fn quadratic_risk_gap(
    v: f64,
    mu: &[f64],
    ev: &MarginalEvaluator,
    n: usize,
    mc: &McSettings,
) -> Result<RiskEstimate> {
    check_positive("v", v)?;
    check_dim(ev.dim(), mu.len())?;
    estimate(mc, n, "quadratic-gap", |rng| {
        let z = shifted(mu, v, &normals(rng, mu.len()));
        let e = posterior_mean(ev, &z, v)?;
        Ok(dist_sq(&z, mu) - dist_sq(&e, mu))
    })
}

/// `R_KL(mu, p_U) - R_KL(mu, p_pi) = E log m(W; v_w) - E log m(X; v_x)`,
/// with `W` and `X` built from the same standard-normal draw.
pub fn kl_risk_diff(
    model: &ModelConfig,
    mu: &[f64],
    ev: &MarginalEvaluator,
    n: usize,
    mc: &McSettings,
) -> Result<RiskEstimate> {
    model.validate()?;
    check_dim(model.p, mu.len())?;
    check_dim(model.p, ev.dim())?;
    let kind = format!("kl-risk-diff:{}", ev.prior().label());
    if n == 0 {
        return Err(Error::EmptySample);
    }
    if ev.is_flat() {
        return Ok(RiskEstimate::exact(0.0, n as u64, mc.seed, kind));
    }
    let vw = model.vw();
    estimate(mc, n, &kind, |rng| {
        let xi = normals(rng, model.p);
        Ok(ev.log_marginal(&shifted(mu, vw, &xi), vw)? - ev.log_marginal(&shifted(mu, model.vx, &xi), model.vx)?)
    })
}

/// `R_Q(mu, mle) - R_Q(mu, mu_pi) = -4 v^2 E lap sqrt(m) / sqrt(m)`.
pub fn stein_quadratic_diff(
    v: f64,
    mu: &[f64],
    ev: &MarginalEvaluator,
    n: usize,
    mc: &McSettings,
) -> Result<RiskEstimate> {
    check_positive("v", v)?;
    check_dim(ev.dim(), mu.len())?;
    let kind = format!("stein-diff:{}", ev.prior().label());
    if n == 0 {
        return Err(Error::EmptySample);
    }
    if ev.is_flat() {
        return Ok(RiskEstimate::exact(0.0, n as u64, mc.seed, kind));
    }
    estimate(mc, n, &kind, |rng| {
        let z = shifted(mu, v, &normals(rng, mu.len()));
        Ok(-4.0 * v * v * ev.laplacian_sqrt_ratio(&z, v)?)
    })
}

/// A v-integral estimate with its error bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegralEstimate {
    pub value: f64,
    /// Sampling standard error plus the refinement discrepancy.
    pub error_bound: f64,
    pub std_error: f64,
    /// `rule(nodes) - rule(2 nodes)` on the refinement subsample.
    pub refinement: f64,
    pub nodes: usize,
    pub n: u64,
}

impl IntegralEstimate {
    fn zero(nodes: usize, n: u64) -> Self {
        IntegralEstimate {
            value: 0.0,
            error_bound: 0.0,
            std_error: 0.0,
            refinement: 0.0,
            nodes,
            n,
        }
    }
}

fn refinement_size(n: usize) -> usize {
    n.min((n / 8).max(2 * CHUNK))
}

type Rule = [(f64, f64)];

/// Shared driver for v-integrals. `sample` draws the randomness of one
/// replicate and `eval` applies a v-rule to it. The main estimate uses the
/// `nodes` rule; the doubled rule is compared on the leading draws of the same
/// streams, so both rules see identical replicates.
fn v_integral<D, S, E>(
    n: usize,
    model: &ModelConfig,
    nodes: usize,
    mc: &McSettings,
    kind: &str,
    sample: S,
    eval: E,
) -> Result<(RiskEstimate, RiskEstimate)>
where
    S: Fn(&mut ChaCha8Rng) -> D + Sync,
    E: Fn(&D, &Rule) -> Result<f64> + Sync,
{
    if nodes < 4 {
        return Err(Error::invalid("nodes", "need at least 4 quadrature nodes"));
    }
    let rule = v_rule(model, nodes);
    let fine = v_rule(model, 2 * nodes);
    let main = estimate(mc, n, kind, |rng| eval(&sample(rng), &rule))?;
    let refine = estimate(mc, refinement_size(n), kind, |rng| {
        let d = sample(rng);
        Ok(eval(&d, &rule)? - eval(&d, &fine)?)
    })?;
    Ok((main, refine))
}

/// Gauss-Legendre nodes on `[v_w, v_x]`.
fn v_rule(model: &ModelConfig, nodes: usize) -> Vec<(f64, f64)> {
    gauss_legendre_on(nodes, model.vw(), model.vx)
}

/// `1/2 int_{v_w}^{v_x} v^-2 [R_Q(mu, mle) - R_Q(mu, mu_pi)] dv` with the
/// Stein form inside, every node evaluated on the same `xi`.
pub fn bridge_rhs(
    model: &ModelConfig,
    mu: &[f64],
    ev: &MarginalEvaluator,
    n_per_node: usize,
    nodes: usize,
    mc: &McSettings,
) -> Result<IntegralEstimate> {
    model.validate()?;
    check_dim(model.p, mu.len())?;
    check_dim(model.p, ev.dim())?;
    if n_per_node == 0 {
        return Err(Error::EmptySample);
    }
    if nodes < 4 {
        return Err(Error::invalid("nodes", "need at least 4 quadrature nodes"));
    }
    if ev.is_flat() {
        return Ok(IntegralEstimate::zero(nodes, n_per_node as u64));
    }
    let p = model.p;
    let (main, refine) = v_integral(
        n_per_node,
        model,
        nodes,
        mc,
        "bridge-rhs",
        |rng| normals(rng, p),
        |xi, rule| {
            // 1/2 v^-2 (-4 v^2 L) = -2 L
            let mut acc = 0.0;
            for &(v, w) in rule {
                acc += w * -2.0 * ev.laplacian_sqrt_ratio(&shifted(mu, v, xi), v)?;
            }
            Ok(acc)
        },
    )?;
    Ok(IntegralEstimate {
        value: main.value,
        error_bound: main.std_error + refine.value.abs() + refine.std_error,
        std_error: main.std_error,
        refinement: refine.value,
        nodes,
        n: main.n,
    })
}

/// Sample sizes for one identity check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BridgeBudget {
    pub n_per_side: usize,
    pub nodes: usize,
}

impl BridgeBudget {
    pub fn new(n_per_side: usize) -> Self {
        BridgeBudget { n_per_side, nodes: DEFAULT_NODES }
    }
}

/// Both sides of the KL/quadratic identity at one `mu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeReport {
    pub lhs: Option<RiskEstimate>,
    pub rhs: Option<IntegralEstimate>,
    pub discrepancy: Option<f64>,
    /// `3 (lhs.std_error + rhs.error_bound)`.
    pub tolerance: Option<f64>,
    pub pass: bool,
    pub diagnosis: Option<String>,
}

/// Estimate both sides on independent streams and compare.
pub fn verify_bridge(
    model: &ModelConfig,
    mu: &[f64],
    ev: &MarginalEvaluator,
    budget: BridgeBudget,
    mc: &McSettings,
) -> BridgeReport {
    let lhs = kl_risk_diff(model, mu, ev, budget.n_per_side, &mc.derive_str("bridge-lhs"));
    let rhs = bridge_rhs(model, mu, ev, budget.n_per_side, budget.nodes, &mc.derive_str("bridge-rhs"));
    match (lhs, rhs) {
        (Ok(l), Ok(r)) => {
            let discrepancy = (l.value - r.value).abs();
            let tolerance = 3.0 * (l.std_error + r.error_bound);
            let pass = discrepancy <= tolerance;
            BridgeReport {
                diagnosis: (!pass).then(|| {
                    format!("|lhs - rhs| = {discrepancy:.3e} exceeds 3 combined errors {tolerance:.3e}")
                }),
                lhs: Some(l),
                rhs: Some(r),
                discrepancy: Some(discrepancy),
                tolerance: Some(tolerance),
                pass,
            }
        }
        (l, r) => {
            let mut why = Vec::new();
            if let Err(e) = &l {
                why.push(format!("lhs: {e}"));
            }
            if let Err(e) = &r {
                why.push(format!("rhs: {e}"));
            }
            BridgeReport {
                lhs: l.ok(),
                rhs: r.ok(),
                discrepancy: None,
                tolerance: None,
                pass: false,
                diagnosis: Some(why.join("; ")),
            }
        }
    }
}

/// Average-risk gap between the rule of `base` and the rule of its Blyth
/// truncation `pi_n`, under the unnormalised `pi_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlythGap {
    pub n: u32,
    pub estimate: RiskEstimate,
    /// `rule(nodes) - rule(2 nodes)` on the refinement subsample.
    pub refinement: f64,
    /// `int pi_n`.
    pub prior_mass: f64,
}

/// `B_KL(pi_n, p_pi) - B_KL(pi_n, p_{pi_n})` through the v-integral of Bayes
/// quadratic-risk differences, each in Stein form:
/// `mass(pi_n) E_{mu ~ pi_n / mass} int 2 (L_pi - L_{pi_n})(mu + sqrt(v) xi) dv`.
pub fn average_risk_gap(
    model: &ModelConfig,
    base: &RadialPrior,
    blyth_n: u32,
    budget: BridgeBudget,
    mc: &McSettings,
) -> Result<BlythGap> {
    model.validate()?;
    check_dim(model.p, base.dim())?;
    let blyth = crate::priors::make_blyth(base, blyth_n)?;
    average_risk_gap_between(model, base, &blyth, budget, mc).map(|mut g| {
        g.n = blyth_n;
        g
    })
}

/// As [`average_risk_gap`] for an explicit proper comparison prior.
pub fn average_risk_gap_between(
    model: &ModelConfig,
    base: &RadialPrior,
    proper: &RadialPrior,
    budget: BridgeBudget,
    mc: &McSettings,
) -> Result<BlythGap> {
    if !proper.proper {
        return Err(Error::ImproperPrior("the average-risk gap"));
    }
    if budget.n_per_side == 0 {
        return Err(Error::EmptySample);
    }
    let sampler = RadialSampler::new(proper)?;
    let mass = sampler.log_mass().exp();
    let ev_base = MarginalEvaluator::new(base.clone());
    let ev_n = MarginalEvaluator::new(proper.clone());
    let p = model.p;
    let kind = format!("average-risk-gap:{}", proper.label());
    if base == proper {
        return Ok(BlythGap {
            n: 0,
            estimate: RiskEstimate::exact(0.0, budget.n_per_side as u64, mc.seed, kind),
            refinement: 0.0,
            prior_mass: mass,
        });
    }
    let (main, refine) = v_integral(
        budget.n_per_side,
        model,
        budget.nodes,
        mc,
        &kind,
        |rng| {
            let mu = sampler.sample(rng);
            let xi = normals(rng, p);
            (mu, xi)
        },
        |(mu, xi), rule| {
            let mut acc = 0.0;
            for &(v, w) in rule {
                let z = shifted(mu, v, xi);
                let lb = if ev_base.is_flat() { 0.0 } else { ev_base.laplacian_sqrt_ratio(&z, v)? };
                acc += w * 2.0 * (lb - ev_n.laplacian_sqrt_ratio(&z, v)?);
            }
            Ok(mass * acc)
        },
    )?;
    Ok(BlythGap {
        n: 0,
        estimate: main,
        refinement: refine.value,
        prior_mass: mass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marginals::MarginalMethod;
    use crate::priors::{make_blyth, make_gaussian_prior, make_harmonic, make_uniform};
    use approx::assert_relative_eq;

    fn model(p: usize, vx: f64, vy: f64) -> ModelConfig {
        ModelConfig::new(p, vx, vy).unwrap()
    }

    /// `E log m(Z; v)` under the conjugate prior.
    fn gaussian_expected_log_m(p: usize, tau2: f64, mu2: f64, v: f64) -> f64 {
        let s2 = v + tau2;
        let pf = p as f64;
        -0.5 * pf * (2.0 * std::f64::consts::PI * s2).ln() - (pf * v + mu2) / (2.0 * s2)
    }

    #[test]
    fn plugin_and_uniform_bayes_risks() {
        let mc = McSettings::new(1, 1);
        let m = model(1, 1.0, 1.0);
        let r = kl_risk(&m, &[0.7], &PredictiveProcedure::PlugInMle, 50_000, &mc).unwrap();
        assert!(r.within(0.5, 3.0), "{r:?}");
        let m3 = model(3, 1.0, 1.0);
        let r = kl_risk(&m3, &[0.0; 3], &PredictiveProcedure::bayes(make_uniform(3)), 50_000, &mc).unwrap();
        assert!(r.within(1.5 * 2f64.ln(), 3.0), "{r:?}");
    }

    #[test]
    fn inner_sampling_path_agrees_with_closed_form() {
        let mc = McSettings::new(2, 1);
        let m = model(1, 1.0, 1.0);
        let prior = make_gaussian_prior(1.0, 1).unwrap();
        let exact = PredictiveProcedure::bayes(prior.clone());
        let quad = PredictiveProcedure::BayesRule(std::sync::Arc::new(
            MarginalEvaluator::with_method(prior, MarginalMethod::default_quadrature()).unwrap(),
        ));
        let a = kl_risk(&m, &[0.5], &exact, 20_000, &mc).unwrap();
        let b = kl_risk(&m, &[0.5], &quad, 20_000, &mc).unwrap();
        assert!((a.value - b.value).abs() < 3.0 * (a.std_error + b.std_error), "{a:?} {b:?}");
    }

    #[test]
    fn quadratic_anchors() {
        let mc = McSettings::new(3, 1);
        let r = quadratic_risk(2.0, &[1.0, -1.0], |z| Ok(Point(z.to_vec())), 50_000, &mc).unwrap();
        assert!(r.within(4.0, 3.0));
        let g = MarginalEvaluator::new(make_gaussian_prior(1.0, 1).unwrap());
        let r = quadratic_risk(1.0, &[0.0], |z| posterior_mean(&g, z, 1.0), 50_000, &mc).unwrap();
        assert!(r.within(0.25, 3.0), "{r:?}");
        let u = MarginalEvaluator::new(make_uniform(2));
        let a = quadratic_risk(1.0, &[1.0, 2.0], |z| posterior_mean(&u, z, 1.0), 10_000, &mc).unwrap();
        let b = quadratic_risk(1.0, &[1.0, 2.0], |z| Ok(Point(z.to_vec())), 10_000, &mc).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
    }

    #[test]
    fn risk_difference_anchors() {
        let mc = McSettings::new(4, 1);
        let m = model(1, 1.0, 1.0);
        let u = MarginalEvaluator::new(make_uniform(1));
        assert_eq!(kl_risk_diff(&m, &[2.0], &u, 10, &mc).unwrap().value, 0.0);
        let g = MarginalEvaluator::new(make_gaussian_prior(1.0, 1).unwrap());
        let want = gaussian_expected_log_m(1, 1.0, 0.0, 0.5) - gaussian_expected_log_m(1, 1.0, 0.0, 1.0);
        assert_relative_eq!(want, 0.5 * ((4.0f64 / 3.0).ln() + 1.0 / 6.0), max_relative = 1e-14);
        let r = kl_risk_diff(&m, &[0.0], &g, 100_000, &mc).unwrap();
        assert!(r.within(want, 3.0), "{r:?} vs {want}");
    }

    #[test]
    fn stein_difference_anchors() {
        let mc = McSettings::new(5, 1);
        let g = MarginalEvaluator::new(make_gaussian_prior(1.0, 1).unwrap());
        let r = stein_quadratic_diff(1.0, &[0.0], &g, 100_000, &mc).unwrap();
        assert!(r.within(0.75, 3.0), "{r:?}");
        let u = MarginalEvaluator::new(make_uniform(3));
        assert_eq!(stein_quadratic_diff(1.0, &[1.0, 0.0, 0.0], &u, 5, &mc).unwrap().value, 0.0);
    }

    #[test]
    fn stein_matches_direct_gap_for_harmonic() {
        let mc = McSettings::new(6, 1);
        let h = MarginalEvaluator::new(make_harmonic(3).unwrap());
        let mu = [1.0, 0.5, 0.0];
        let a = stein_quadratic_diff(1.0, &mu, &h, 20_000, &mc).unwrap();
        let b = quadratic_risk_gap(1.0, &mu, &h, 20_000, &mc.derive(1)).unwrap();
        assert!((a.value - b.value).abs() <= 3.0 * (a.std_error + b.std_error), "{a:?} {b:?}");
    }

    #[test]
    fn bridge_closed_form_gaussian() {
        let mc = McSettings::new(7, 1);
        let m = model(1, 1.0, 1.0);
        let g = MarginalEvaluator::new(make_gaussian_prior(1.0, 1).unwrap());
        let want = 0.5 * ((4.0f64 / 3.0).ln() + 1.0 / 6.0);
        let rhs = bridge_rhs(&m, &[0.0], &g, 20_000, 16, &mc).unwrap();
        assert!((rhs.value - want).abs() <= 3.0 * rhs.error_bound, "{rhs:?}");
        assert!(rhs.refinement.abs() < 1e-10);
        let rep = verify_bridge(&m, &[0.0], &g, BridgeBudget::new(20_000), &mc);
        assert!(rep.pass, "{rep:?}");
        let u = MarginalEvaluator::new(make_uniform(1));
        let rep = verify_bridge(&m, &[1.0], &u, BridgeBudget::new(100), &mc);
        assert!(rep.pass);
        assert_eq!(rep.rhs.unwrap().value, 0.0);
        assert!(bridge_rhs(&m, &[0.0], &g, 100, 3, &mc).is_err());
    }

    #[test]
    fn bridge_failure_is_reported() {
        let mc = McSettings::new(7, 1);
        let m = model(1, 1.0, 1.0);
        let g = MarginalEvaluator::new(make_gaussian_prior(1.0, 1).unwrap());
        let rep = verify_bridge(&m, &[0.0, 1.0], &g, BridgeBudget::new(100), &mc);
        assert!(!rep.pass);
        assert!(rep.diagnosis.unwrap().contains("dimension"));
    }

    #[test]
    fn blyth_gap_degenerate_and_positive() {
        let mc = McSettings::new(8, 1);
        let m = model(1, 1.0, 1.0);
        let u = make_uniform(1);
        let b = make_blyth(&u, 4).unwrap();
        let same = average_risk_gap_between(&m, &b, &b, BridgeBudget::new(100), &mc).unwrap();
        assert_eq!(same.estimate.value, 0.0);
        let gap = average_risk_gap(&m, &u, 4, BridgeBudget::new(8192), &mc).unwrap();
        assert!(gap.estimate.value > -2.0 * gap.estimate.std_error, "{gap:?}");
        assert!(average_risk_gap_between(&m, &u, &u, BridgeBudget::new(10), &mc).is_err());
    }

    #[test]
    fn estimates_are_worker_independent() {
        let m = model(3, 1.0, 1.0);
        let h = MarginalEvaluator::new(make_harmonic(3).unwrap());
        let a = kl_risk_diff(&m, &[1.0, 0.0, 0.0], &h, 5000, &McSettings::new(9, 1)).unwrap();
        let b = kl_risk_diff(&m, &[1.0, 0.0, 0.0], &h, 5000, &McSettings::new(9, 3)).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
    }
}
