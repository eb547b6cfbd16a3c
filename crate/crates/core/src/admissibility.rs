//! Checkers for the sufficient conditions under which the formal Bayes rule
//! of a radial prior is admissible, and the two constructions on the line
//! that restrict attention to bounded densities: truncation-domination and
//! strict convexity of the loss.
//!
//! Verdicts are exponent-first. The tail and origin exponents of a prior
//! decide whether an integral converges; quadrature values are attached as
//! evidence only, since no finite computation certifies divergence.
//!
//! Conditions, for a prior density `pi` on `R^p`:
//!
//! * growth: `int_{|mu|>1} pi / (|mu|^2 log^2(|mu| v 2)) dmu < inf`
//! * flatness: `int int pi |grad log m - grad pi / pi|^2 p(z|mu) dmu dz < inf`
//! * gradient: `int |grad pi|^2 / pi dmu < inf`
//! * decay: `pi <= |mu|^(2-p)`, `grad pi / pi = o(|mu|^-1)`,
//!   `|d2 pi / dmu_i dmu_j| = o(|mu|^-2)`
//! * strict decay: `pi <= |mu|^(2-p-eps)` for some `eps > 0`,
//!   `grad pi / pi = o(|mu|^-1)`

use std::f64::consts::LN_10;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::density::{in_region, kl_loss, DensityEstimate};
use crate::error::{Error, Result};
use crate::marginals::MarginalEvaluator;
use crate::mc::{estimate, McSettings};
use crate::model::{gaussian_logpdf_unchecked, ModelConfig};
use crate::priors::{PriorFamilySpec, RadialPrior};
use crate::quadrature::{gauss_legendre_on, integrate, QuadOptions};
use crate::special::log_sphere_area;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Growth,
    Flatness,
    Gradient,
    Decay,
    StrictDecay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Finite,
    Infinite,
    Holds,
    Fails,
    Inconclusive,
}

impl Verdict {
    pub fn passes(self) -> bool {
        matches!(self, Verdict::Finite | Verdict::Holds)
    }
}

/// One clause of a display condition, with its probe values `(r, q(r))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clause {
    pub name: String,
    pub verdict: Verdict,
    pub probes: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionVerdict {
    pub condition: Condition,
    pub verdict: Verdict,
    /// Numeric value of the truncated integral.
    pub value: Option<f64>,
    /// Analytic bound on what the truncation left out.
    pub remainder_bound: Option<f64>,
    /// Exponent `e` of the radial integrand `~ r^e` at the origin.
    pub origin_exponent: Option<f64>,
    /// Exponent `e` of the radial integrand `~ r^e` at infinity.
    pub tail_exponent: Option<f64>,
    pub clauses: Vec<Clause>,
    /// `(truncation radius, truncated integral)` pairs.
    pub ladder: Vec<(f64, f64)>,
    /// Variance at which a v-dependent condition was evaluated.
    pub v: Option<f64>,
    pub notes: Vec<String>,
}

impl ConditionVerdict {
    fn new(condition: Condition, verdict: Verdict) -> Self {
        ConditionVerdict {
            condition,
            verdict,
            value: None,
            remainder_bound: None,
            origin_exponent: None,
            tail_exponent: None,
            clauses: Vec::new(),
            ladder: Vec::new(),
            v: None,
            notes: Vec::new(),
        }
    }

    fn inconclusive(condition: Condition, why: impl Into<String>) -> Self {
        let mut c = Self::new(condition, Verdict::Inconclusive);
        c.notes.push(why.into());
        c
    }
}

const LOG_LO: f64 = -6.0 * LN_10;
const LOG_HI: f64 = 6.0 * LN_10;

fn quad_opts() -> QuadOptions {
    QuadOptions { rel_tol: 1e-10, abs_tol: 1e-300, max_panels: 1 << 14 }
}

/// `int f(e^u) du` over `[lo, hi]`, split at the prior's break radii.
fn log_radial_integral(prior: &RadialPrior, lo: f64, hi: f64, extra: &[f64], f: impl Fn(f64) -> f64) -> Result<f64> {
    let mut breaks: Vec<f64> = prior
        .break_radii()
        .into_iter()
        .filter(|r| *r > 0.0)
        .map(f64::ln)
        .collect();
    breaks.extend_from_slice(extra);
    Ok(integrate(|u| f(u.exp()), lo, hi, &breaks, quad_opts())?.value)
}

fn dim_guard(prior: &RadialPrior, p: usize, condition: Condition) -> Option<ConditionVerdict> {
    (prior.dim() != p).then(|| {
        ConditionVerdict::inconclusive(
            condition,
            format!("prior is defined in dimension {} but p = {p}", prior.dim()),
        )
    })
}

/// Growth condition. The radial integrand is `h(r) r^(p-3) / log^2(r v 2)`
/// on `r > 1` (the sphere area is dropped); with `h ~ r^-a` it behaves as
/// `r^(p-3-a) / log^2 r`, which converges iff `p - 3 - a <= -1`.
pub fn check_growth(prior: &RadialPrior, p: usize) -> ConditionVerdict {
    if let Some(v) = dim_guard(prior, p, Condition::Growth) {
        return v;
    }
    let a = prior.tail_exponent;
    if a.is_nan() {
        return ConditionVerdict::inconclusive(Condition::Growth, "tail exponent unavailable");
    }
    let pf = p as f64;
    let e = pf - 3.0 - a;
    let ln2 = 2f64.ln();
    let integrand = |r: f64| {
        let lh = prior.log_h(r);
        if lh == f64::NEG_INFINITY {
            return 0.0;
        }
        let l = r.ln().max(ln2);
        // dr = r du
        (lh + (pf - 2.0) * r.ln()).exp() / (l * l)
    };
    let value = log_radial_integral(prior, 0.0, LOG_HI, &[ln2], integrand);
    let r_max = LOG_HI.exp();
    let mut out = ConditionVerdict::new(Condition::Growth, Verdict::Inconclusive);
    out.tail_exponent = e.is_finite().then_some(e);
    out.value = value.as_ref().ok().copied().filter(|v| v.is_finite());
    if let Err(err) = &value {
        out.notes.push(format!("truncated integral failed: {err}"));
    }
    let lr = r_max.ln();
    let head = (prior.log_h(r_max) + (pf - 2.0) * lr).exp();
    if a == f64::INFINITY || e <= -1.0 {
        let bound = if a == f64::INFINITY {
            if prior.support_radius().is_some_and(|s| s <= r_max) {
                0.0
            } else {
                out.notes.push("super-polynomial tail; remainder bound is the integrand scale at the cut".into());
                head / (lr * lr)
            }
        } else if e < -1.0 {
            head / ((-e - 1.0) * lr * lr)
        } else {
            out.notes.push("boundary case r^-1 / log^2 r converges".into());
            head / lr
        };
        out.remainder_bound = bound.is_finite().then_some(bound);
        out.verdict = if out.value.is_some_and(f64::is_finite) && bound.is_finite() {
            Verdict::Finite
        } else {
            Verdict::Inconclusive
        };
    } else {
        out.verdict = Verdict::Infinite;
        out.notes.push(format!("tail integrand ~ r^{e} / log^2 r with exponent above -1"));
    }
    out
}

/// Gradient condition. Radially `int h (dlog h)^2 r^(p-1) dr` over `(0, inf)`.
/// Power-law ends `h ~ r^-b` give an integrand `~ b^2 r^(p-3-b)`. The value
/// includes the sphere area, so it is the full integral over `R^p`.
pub fn check_gradient(prior: &RadialPrior, p: usize) -> ConditionVerdict {
    if let Some(v) = dim_guard(prior, p, Condition::Gradient) {
        return v;
    }
    let mut out = ConditionVerdict::new(Condition::Gradient, Verdict::Inconclusive);
    if prior.is_uniform() {
        out.verdict = Verdict::Finite;
        out.value = Some(0.0);
        out.remainder_bound = Some(0.0);
        out.notes.push("grad pi = 0".into());
        return out;
    }
    let (b0, a) = (prior.origin_exponent, prior.tail_exponent);
    if b0.is_nan() || a.is_nan() {
        return ConditionVerdict::inconclusive(Condition::Gradient, "exponent metadata unavailable");
    }
    let pf = p as f64;
    // a smooth profile at the origin has dlog h = O(r)
    let e0 = if b0 == 0.0 { pf + 1.0 } else { pf - 3.0 - b0 };
    let e_inf = if a == f64::INFINITY { f64::NEG_INFINITY } else { pf - 3.0 - a };
    let log_area = log_sphere_area(p);
    out.origin_exponent = Some(e0);
    out.tail_exponent = e_inf.is_finite().then_some(e_inf);
    let radial = |r: f64| -> f64 {
        let lh = prior.log_h(r);
        let d = prior.dlog_h(r);
        if lh == f64::NEG_INFINITY || !d.is_finite() || d == 0.0 {
            return 0.0;
        }
        (log_area + lh + 2.0 * d.abs().ln() + (pf - 1.0) * r.ln()).exp()
    };
    let value = log_radial_integral(prior, LOG_LO, LOG_HI, &[], |r| radial(r) * r);
    out.value = value.as_ref().ok().copied().filter(|v| v.is_finite());
    if let Err(err) = &value {
        out.notes.push(format!("truncated integral failed: {err}"));
    }
    let origin_ok = e0 > -1.0;
    let tail_ok = e_inf < -1.0;
    if !origin_ok {
        out.notes.push(format!("origin integrand ~ r^{e0}, not integrable at 0"));
    }
    if !tail_ok {
        out.notes.push(format!("tail integrand ~ r^{e_inf}, not integrable at infinity"));
    }
    if origin_ok && tail_ok {
        let (eps, big) = (LOG_LO.exp(), LOG_HI.exp());
        let lower = radial(eps) * eps / (e0 + 1.0);
        let upper = if e_inf == f64::NEG_INFINITY {
            if prior.support_radius().is_some_and(|s| s <= big) {
                0.0
            } else {
                radial(big) * big
            }
        } else {
            radial(big) * big / (-e_inf - 1.0)
        };
        out.remainder_bound = (lower + upper).is_finite().then_some(lower + upper);
        out.verdict = if out.value.is_some_and(f64::is_finite) && (lower + upper).is_finite() {
            Verdict::Finite
        } else {
            Verdict::Inconclusive
        };
    } else {
        out.verdict = Verdict::Infinite;
    }
    out
}

/// Probe radii for the decay displays.
pub const DEFAULT_PROBES: [f64; 4] = [1e2, 1e3, 1e4, 1e5];
/// An `o(1)` ladder must end below this.
pub const LITTLE_O_EPS: f64 = 1e-2;

fn little_o_clause(name: &str, probes: Vec<(f64, f64)>) -> Clause {
    let verdict = if probes.iter().any(|(_, q)| !q.is_finite()) {
        Verdict::Inconclusive
    } else {
        let monotone = probes.windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-12));
        let small = probes.last().is_some_and(|(_, q)| *q < LITTLE_O_EPS);
        if monotone && small {
            Verdict::Holds
        } else {
            Verdict::Fails
        }
    };
    Clause { name: name.into(), verdict, probes }
}

fn bound_clause(name: &str, prior: &RadialPrior, exponent: f64, radii: &[f64]) -> Clause {
    let probes: Vec<(f64, f64)> = radii
        .iter()
        // -inf (vanishing prior) is clamped so records stay finite
        .map(|&r| (r, (prior.log_h(r) - exponent * r.ln()).max(-f64::MAX)))
        .collect();
    let verdict = if probes.iter().any(|(_, d)| d.is_nan()) {
        Verdict::Inconclusive
    } else if probes.iter().all(|(_, d)| *d <= 1e-12) {
        Verdict::Holds
    } else {
        Verdict::Fails
    };
    Clause { name: name.into(), verdict, probes }
}

/// `r |grad pi| / pi = r |dlog h(r)|`; zero where `pi` vanishes identically.
fn gradient_clause(prior: &RadialPrior, radii: &[f64]) -> Clause {
    let probes = radii
        .iter()
        .map(|&r| {
            if prior.log_h(r) == f64::NEG_INFINITY {
                (r, 0.0)
            } else {
                (r, r * prior.dlog_h(r).abs())
            }
        })
        .collect();
    little_o_clause("gradient-ratio", probes)
}

/// `r^2 max(|h''|, |h'| / r)`, the largest Hessian eigenvalue scaled by `r^2`.
/// `h'' = h (dlog h^2 + dlog h')` with `dlog h'` by central differences at
/// two steps; disagreement between them makes the clause inconclusive.
fn hessian_clause(prior: &RadialPrior, radii: &[f64]) -> Clause {
    let mut unstable = false;
    let probes = radii
        .iter()
        .map(|&r| {
            let lh = prior.log_h(r);
            if lh == f64::NEG_INFINITY {
                return (r, 0.0);
            }
            let h = lh.exp();
            let d = prior.dlog_h(r);
            let fd = |step: f64| (prior.dlog_h(r + step) - prior.dlog_h(r - step)) / (2.0 * step);
            let (d1, d2) = (fd(1e-4 * r), fd(1e-3 * r));
            if (d1 - d2).abs() > 1e-4 * d1.abs().max(d2.abs()) + 1e-300 {
                unstable = true;
            }
            let h2 = h * (d * d + d1);
            (r, r * r * h2.abs().max((h * d).abs() / r))
        })
        .collect();
    let mut c = little_o_clause("hessian", probes);
    if unstable {
        c.verdict = Verdict::Inconclusive;
    }
    c
}

fn combine_clauses(condition: Condition, clauses: Vec<Clause>) -> ConditionVerdict {
    let verdict = if clauses.iter().any(|c| c.verdict == Verdict::Fails) {
        Verdict::Fails
    } else if clauses.iter().all(|c| c.verdict == Verdict::Holds) {
        Verdict::Holds
    } else {
        Verdict::Inconclusive
    };
    let mut out = ConditionVerdict::new(condition, verdict);
    out.clauses = clauses;
    out
}

/// Decay display: `pi <= r^(2-p)`, `r |grad pi| / pi -> 0`,
/// `r^2 |Hessian pi| -> 0`, read strictly on the probe ladder: an `o(1)`
/// clause passes only if its ladder is non-increasing and ends below
/// [`LITTLE_O_EPS`]. A constant ratio fails.
pub fn check_decay(prior: &RadialPrior, p: usize, probe_radii: &[f64]) -> ConditionVerdict {
    if let Some(v) = dim_guard(prior, p, Condition::Decay) {
        return v;
    }
    let clauses = vec![
        bound_clause("bound", prior, 2.0 - p as f64, probe_radii),
        gradient_clause(prior, probe_radii),
        hessian_clause(prior, probe_radii),
    ];
    let mut out = combine_clauses(Condition::Decay, clauses);
    if out.clauses[1].verdict == Verdict::Fails
        && out.clauses[1].probes.windows(2).all(|w| (w[1].1 - w[0].1).abs() <= 1e-9 * w[0].1.abs())
    {
        out.notes.push(format!(
            "r |grad pi| / pi is constant ({:.6}) on the ladder; the strict o(1/r) clause fails",
            out.clauses[1].probes[0].1
        ));
    }
    out
}

/// Strict decay display: the tail exponent must exceed `p - 2` (then
/// `eps = min(1, (a - p + 2) / 2)` is probed) and the gradient ratio must be `o(1)`.
pub fn check_strict_decay(prior: &RadialPrior, p: usize, probe_radii: &[f64]) -> ConditionVerdict {
    if let Some(v) = dim_guard(prior, p, Condition::StrictDecay) {
        return v;
    }
    let a = prior.tail_exponent;
    let pf = p as f64;
    let bound = if a.is_nan() {
        Clause { name: "strict-bound".into(), verdict: Verdict::Inconclusive, probes: Vec::new() }
    } else if a <= pf - 2.0 {
        Clause { name: "strict-bound".into(), verdict: Verdict::Fails, probes: Vec::new() }
    } else {
        let eps = if a == f64::INFINITY { 1.0 } else { (0.5 * (a - pf + 2.0)).min(1.0) };
        bound_clause("strict-bound", prior, 2.0 - pf - eps, probe_radii)
    };
    let mut out = combine_clauses(Condition::StrictDecay, vec![bound, gradient_clause(prior, probe_radii)]);
    if a <= pf - 2.0 {
        out.notes.push(format!("tail exponent {a} leaves no eps > 0 above p - 2"));
    }
    out
}

/// Sampling effort for the flatness estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlatnessBudget {
    /// Draws of `z` per radial node (shared across nodes).
    pub n_inner: usize,
    /// Gauss-Legendre nodes per decade of radius.
    pub nodes_per_decade: usize,
}

impl Default for FlatnessBudget {
    fn default() -> Self {
        FlatnessBudget { n_inner: 1024, nodes_per_decade: 6 }
    }
}

/// Radial decades covered by the ladders: `[10^k, 10^(k+1)]` for `k` in this range.
const FLAT_DECADES: std::ops::Range<i32> = -4..4;
/// Allowed relative increase over the last decade of a ladder.
const FLAT_TOL: f64 = 0.05;

/// Flatness condition as a Monte-Carlo estimate. Using
/// `m_{grad pi} / m_pi = grad log m`, the inner term at `mu = r e_1` is
/// `F(r) = E |grad log m(z; v) - grad log pi(mu)|^2`, averaged over a shared
/// pool of `z = mu + sqrt(v) xi`. The radial integral `|S| int h F r^(p-1) dr`
/// is accumulated decade by decade and reported on two ladders, outward from
/// radius 1 and inward to it. Finite only if both ladders grow by less than
/// 5% over their last decade; never Infinite.
pub fn estimate_flatness(
    prior: &RadialPrior,
    p: usize,
    v: f64,
    budget: FlatnessBudget,
    mc: &McSettings,
) -> ConditionVerdict {
    if let Some(out) = dim_guard(prior, p, Condition::Flatness) {
        return out;
    }
    let mut out = ConditionVerdict::new(Condition::Flatness, Verdict::Inconclusive);
    out.v = Some(v);
    if prior.is_uniform() {
        out.verdict = Verdict::Finite;
        out.value = Some(0.0);
        out.notes.push("grad pi = 0 and grad log m = 0".into());
        return out;
    }
    if !(v > 0.0 && v.is_finite()) || budget.n_inner == 0 || budget.nodes_per_decade == 0 {
        out.notes.push("invalid variance or budget".into());
        return out;
    }
    let ev = MarginalEvaluator::new(prior.clone());
    let pf = p as f64;
    let log_area = log_sphere_area(p);
    let sd = v.sqrt();
    let inner = |r: f64| -> Result<f64> {
        let g_pi = prior.dlog_h(r);
        let est = estimate(mc, budget.n_inner, "flatness", |rng| {
            let mut z = vec![0.0; p];
            for (k, zk) in z.iter_mut().enumerate() {
                let e: f64 = rng.sample(StandardNormal);
                *zk = if k == 0 { r + sd * e } else { sd * e };
            }
            let g = ev.grad_log_marginal(&z, v)?;
            let mut d2 = (g[0] - g_pi).powi(2);
            for gk in &g[1..] {
                d2 += gk * gk;
            }
            Ok(d2)
        })?;
        Ok(est.value)
    };
    let mut decades = Vec::new();
    for k in FLAT_DECADES {
        let (lo, hi) = (k as f64 * LN_10, (k + 1) as f64 * LN_10);
        let mut acc = 0.0;
        for (u, w) in gauss_legendre_on(budget.nodes_per_decade, lo, hi) {
            let r = u.exp();
            let lw = prior.log_h(r) + pf * u + log_area;
            if lw < -700.0 {
                continue;
            }
            match inner(r) {
                Ok(f) => acc += w * lw.exp() * f,
                Err(e) => {
                    out.notes.push(format!("inner estimate failed at r = {r:.3e}: {e}"));
                    return out;
                }
            }
        }
        decades.push((k, acc));
    }
    let outward: Vec<(f64, f64)> = decades
        .iter()
        .filter(|(k, _)| *k >= 0)
        .scan(0.0, |s, (k, d)| {
            *s += d;
            Some((10f64.powi(k + 1), *s))
        })
        .collect();
    let inward: Vec<(f64, f64)> = decades
        .iter()
        .rev()
        .filter(|(k, _)| *k < 0)
        .scan(0.0, |s, (k, d)| {
            *s += d;
            Some((10f64.powi(*k), *s))
        })
        .collect();
    let settled = |ladder: &[(f64, f64)]| match ladder {
        [.., (_, a), (_, b)] => *b == 0.0 || (b - a).abs() <= FLAT_TOL * b.abs(),
        _ => false,
    };
    let total = outward.last().map_or(0.0, |x| x.1) + inward.last().map_or(0.0, |x| x.1);
    out.value = Some(total);
    let (so, si) = (settled(&outward), settled(&inward));
    out.ladder = inward.iter().chain(outward.iter()).copied().collect();
    if !so {
        out.notes.push("outer ladder still growing over its last decade".into());
    }
    if !si {
        out.notes.push("inner ladder still growing over its last decade (origin)".into());
    }
    out.verdict = if so && si && total.is_finite() { Verdict::Finite } else { Verdict::Inconclusive };
    out
}

/// A set of conditions that together suffice for admissibility.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    /// Growth plus the integrated gradient condition.
    GrowthAndGradient,
    /// Growth plus flatness at every checked variance.
    GrowthAndFlatness,
    /// The strict decay display.
    StrictDecay,
    /// The decay display.
    Decay,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub prior: PriorFamilySpec,
    pub p: usize,
    pub growth: ConditionVerdict,
    pub gradient: ConditionVerdict,
    pub decay: ConditionVerdict,
    pub strict_decay: ConditionVerdict,
    /// At `v_w`, `(v_w + v_x) / 2` and `v_x`; empty when not requested.
    pub flatness: Vec<ConditionVerdict>,
    /// Every route whose conditions all pass, strongest first.
    pub passing_routes: Vec<Route>,
    pub route: Route,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    /// `None` skips the Monte-Carlo flatness estimate.
    pub flatness: Option<FlatnessBudget>,
    pub seed: u64,
    pub workers: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions { flatness: Some(FlatnessBudget::default()), seed: 0, workers: 1 }
    }
}

/// Assemble every verdict and pick the strongest route whose conditions all
/// pass. The v-free conditions are checked once; flatness at three variances.
pub fn admissibility_report(prior: &RadialPrior, model: &ModelConfig, opts: &ReportOptions) -> AdmissibilityReport {
    let p = model.p;
    let growth = check_growth(prior, p);
    let gradient = check_gradient(prior, p);
    let decay = check_decay(prior, p, &DEFAULT_PROBES);
    let strict_decay = check_strict_decay(prior, p, &DEFAULT_PROBES);
    let mut notes = Vec::new();
    let flatness: Vec<ConditionVerdict> = match opts.flatness {
        Some(budget) => {
            let mc = McSettings::new(opts.seed, opts.workers).derive_str("flatness");
            let (vw, vx) = (model.vw(), model.vx);
            [vw, 0.5 * (vw + vx), vx]
                .iter()
                .map(|&v| estimate_flatness(prior, p, v, budget, &mc))
                .collect()
        }
        None => Vec::new(),
    };
    let mut passing_routes = Vec::new();
    if growth.verdict.passes() && gradient.verdict.passes() {
        passing_routes.push(Route::GrowthAndGradient);
    }
    if growth.verdict.passes() && !flatness.is_empty() && flatness.iter().all(|f| f.verdict.passes()) {
        passing_routes.push(Route::GrowthAndFlatness);
    }
    if strict_decay.verdict.passes() {
        passing_routes.push(Route::StrictDecay);
    }
    if decay.verdict.passes() {
        passing_routes.push(Route::Decay);
    }
    let route = passing_routes.first().copied().unwrap_or(Route::None);
    if route == Route::None
        && growth.verdict.passes()
        && decay.clauses.first().is_some_and(|c| c.verdict == Verdict::Holds)
    {
        notes.push(
            "growth holds and pi <= r^(2-p), but the gradient ratio is not o(1/r) under the strict \
             reading; no route is certified"
                .into(),
        );
    }
    if prior.proper {
        notes.push("prior is proper; its Bayes rule is admissible whenever its Bayes risk is finite".into());
    }
    AdmissibilityReport {
        prior: prior.spec().clone(),
        p,
        growth,
        gradient,
        decay,
        strict_decay,
        flatness,
        passing_routes,
        route,
        notes,
    }
}

/// Output of [`truncate_dominate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub g0: DensityEstimate,
    /// `C` on `region`, `c g0` elsewhere.
    pub g: DensityEstimate,
    pub bound: f64,
    pub lift: f64,
    pub region: Vec<(f64, f64)>,
    pub region_measure: f64,
    /// `int g` by quadrature.
    pub mass: f64,
    pub vy: f64,
    pub warning: Option<String>,
}

/// `L(mu, g0) - L(mu, g)` and its parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossGap {
    pub mu: f64,
    /// `+inf` when `g0` vanishes on a set of positive measure.
    pub loss_g0: f64,
    pub loss_g: f64,
    /// `log c - int_S p(y|mu) log(c g0 / C) dy`; finite even when both
    /// losses are infinite, since `g / g0 = c` off `S`.
    pub gap: f64,
}

fn merge_intervals(mut v: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (a, b) in v {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

/// `{y : g0(y) >= level}` as closed intervals.
fn level_set(g0: &DensityEstimate, level: f64) -> Vec<(f64, f64)> {
    if let DensityEstimate::Piecewise { edges, values } = g0 {
        let cells = values
            .iter()
            .zip(edges.windows(2))
            .filter(|(v, _)| **v >= level)
            .map(|(_, w)| (w[0], w[1]))
            .collect();
        return merge_intervals(cells);
    }
    let (lo, hi) = g0.window();
    let m = 20_000;
    let mut grid: Vec<f64> = (0..=m).map(|i| lo + (hi - lo) * i as f64 / m as f64).collect();
    grid.extend(g0.breakpoints());
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let above = |y: f64| g0.density_1d(y) >= level;
    let crossing = |mut a: f64, mut b: f64| {
        // a and b straddle the level
        let inside_a = above(a);
        for _ in 0..80 {
            let mid = 0.5 * (a + b);
            if above(mid) == inside_a {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    };
    let mut out = Vec::new();
    let mut start = above(grid[0]).then_some(grid[0]);
    for w in grid.windows(2) {
        match (above(w[0]), above(w[1])) {
            (false, true) => start = Some(crossing(w[0], w[1])),
            (true, false) => {
                if let Some(s) = start.take() {
                    out.push((s, crossing(w[0], w[1])));
                }
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, grid[grid.len() - 1]));
    }
    merge_intervals(out)
}

fn mass_on(g0: &DensityEstimate, region: &[(f64, f64)]) -> Result<f64> {
    let breaks = g0.breakpoints();
    let opts = QuadOptions { rel_tol: 1e-12, abs_tol: 1e-15, max_panels: 1 << 12 };
    region
        .iter()
        .map(|&(a, b)| Ok(integrate(|y| g0.density_1d(y), a, b, &breaks, opts)?.value))
        .sum()
}

/// `sup` of `g0` off `region`, exact for step densities and by grid scan otherwise.
fn sup_outside(g0: &DensityEstimate, region: &[(f64, f64)]) -> f64 {
    if let DensityEstimate::Piecewise { edges, values } = g0 {
        return values
            .iter()
            .zip(edges.windows(2))
            .filter(|(_, w)| !region.iter().any(|&(a, b)| a <= w[0] && w[1] <= b))
            .map(|(v, _)| *v)
            .fold(0.0, f64::max);
    }
    let (lo, hi) = g0.window();
    let m = 20_000;
    (0..=m)
        .map(|i| lo + (hi - lo) * i as f64 / m as f64)
        .filter(|y| !in_region(region, *y))
        .map(|y| g0.density_1d(y))
        .fold(0.0, f64::max)
}

/// Replace `g0` by `C` where it reaches the bound `C = (2 pi v_y)^(-1/2)` and
/// rescale it elsewhere by `c = (1 - C |S|) / int_{S^c} g0`. If the lift
/// pushes `c g0` above `C` off `S`, `S` grows to `{g0 >= C / c}` and `c` is
/// recomputed until the result stays below `C`. One-dimensional only.
pub fn truncate_dominate(g0: &DensityEstimate, model: &ModelConfig) -> Result<Truncation> {
    model.validate()?;
    if model.p != 1 || g0.dim() != 1 {
        return Err(Error::invalid("p", "truncation-domination is implemented on the line"));
    }
    let big_c = model.bound();
    let total = g0.total_mass()?;
    let mut level = big_c;
    let mut region = Vec::new();
    let mut lift = 1.0;
    for _ in 0..200 {
        let s = level_set(g0, level);
        let measure: f64 = s.iter().map(|(a, b)| b - a).sum();
        if measure == 0.0 {
            break;
        }
        let outside = total - mass_on(g0, &s)?;
        if !(outside > 1e-300) {
            return Err(Error::Construction(
                "g0 carries no mass off the region where it exceeds C".into(),
            ));
        }
        let c = (1.0 - big_c * measure) / outside;
        region = s;
        lift = c;
        if c * sup_outside(g0, &region) <= big_c * (1.0 + 1e-12) {
            break;
        }
        level = big_c / c;
    }
    let region_measure: f64 = region.iter().map(|(a, b)| b - a).sum();
    if region_measure == 0.0 || lift <= 1.0 {
        return Ok(Truncation {
            g0: g0.clone(),
            g: g0.clone(),
            bound: big_c,
            lift: 1.0,
            region: Vec::new(),
            region_measure: 0.0,
            mass: total,
            vy: model.vy,
            warning: Some("g0 never exceeds C; it is returned unchanged".into()),
        });
    }
    let g = DensityEstimate::Truncated {
        base: Box::new(g0.clone()),
        region: region.clone(),
        level: big_c,
        lift,
    };
    let mass = g.total_mass()?;
    Ok(Truncation {
        g0: g0.clone(),
        g,
        bound: big_c,
        lift,
        region,
        region_measure,
        mass,
        vy: model.vy,
        warning: None,
    })
}

impl Truncation {
    /// `sup g`, exact for step densities.
    pub fn sup(&self) -> f64 {
        if self.region.is_empty() {
            return self.g0.sup_bound();
        }
        self.bound.max(self.lift * sup_outside(&self.g0, &self.region))
    }

    pub fn loss_gap(&self, mu: f64) -> Result<LossGap> {
        let loss_g0 = kl_loss(&[mu], self.vy, &self.g0)?;
        let loss_g = kl_loss(&[mu], self.vy, &self.g)?;
        if self.region.is_empty() {
            return Ok(LossGap { mu, loss_g0, loss_g, gap: 0.0 });
        }
        let sd = self.vy.sqrt();
        let mut breaks = self.g0.breakpoints();
        breaks.push(mu);
        let opts = QuadOptions { rel_tol: 1e-12, abs_tol: 1e-15, max_panels: 1 << 12 };
        let (c, big_c) = (self.lift, self.bound);
        let mut gap = c.ln();
        for &(a, b) in &self.region {
            let part = integrate(
                |y| {
                    let lp = gaussian_logpdf_unchecked(&[y], &[mu], self.vy);
                    lp.exp() * (c * self.g0.density_1d(y) / big_c).ln()
                },
                a.max(mu - 40.0 * sd),
                b.min(mu + 40.0 * sd),
                &breaks,
                opts,
            );
            if a.max(mu - 40.0 * sd) < b.min(mu + 40.0 * sd) {
                gap -= part?.value;
            }
        }
        Ok(LossGap { mu, loss_g0, loss_g, gap })
    }
}

/// `lambda L(mu, g1) + (1 - lambda) L(mu, g2) - L(mu, lambda g1 + (1 - lambda) g2)`,
/// integrated as the single non-negative integrand
/// `p(y|mu) [log(lambda g1 + (1 - lambda) g2) - lambda log g1 - (1 - lambda) log g2]`.
pub fn mixture_convexity_gap(
    g1: &DensityEstimate,
    g2: &DensityEstimate,
    lambda: f64,
    mu: f64,
    vy: f64,
) -> Result<f64> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::invalid("lambda", "must lie in (0, 1)"));
    }
    for g in [g1, g2] {
        if kl_loss(&[mu], vy, g)?.is_infinite() {
            return Err(Error::invalid("g", "component loss is infinite"));
        }
    }
    if g1 == g2 {
        return Ok(0.0);
    }
    let sd = vy.sqrt();
    let mut breaks = g1.breakpoints();
    breaks.extend(g2.breakpoints());
    breaks.push(mu);
    let (l1, l2) = (lambda.ln(), (1.0 - lambda).ln());
    let opts = QuadOptions { rel_tol: 1e-12, abs_tol: 1e-16, max_panels: 1 << 14 };
    let r = integrate(
        |y| {
            let lp = gaussian_logpdf_unchecked(&[y], &[mu], vy);
            let pdf = lp.exp();
            if pdf == 0.0 {
                return 0.0;
            }
            let (a, b) = (g1.log_density(&[y]), g2.log_density(&[y]));
            let top = (l1 + a).max(l2 + b);
            let mix = top + ((l1 + a - top).exp() + (l2 + b - top).exp()).ln();
            pdf * (mix - lambda * a - (1.0 - lambda) * b)
        },
        mu - 40.0 * sd,
        mu + 40.0 * sd,
        &breaks,
        opts,
    )?;
    Ok(r.value)
}
