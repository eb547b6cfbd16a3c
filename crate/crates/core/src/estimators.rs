//! Predictive procedures: plug-in rules, formal Bayes rules in marginal-ratio
//! form, posterior means and the posterior log-score.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, check_positive, Error, Result};
use crate::marginals::MarginalEvaluator;
use crate::mc::{estimate, McSettings, RiskEstimate};
use crate::model::{combine_w, gaussian_logpdf_unchecked, IsotropicGaussian, ModelConfig, Point};
use crate::priors::RadialPrior;
use crate::quadrature::{integrate, QuadOptions};

/// A point estimator of the mean, used by custom plug-in rules.
pub type CenterFn = Arc<dyn Fn(&[f64]) -> Result<Point> + Send + Sync>;

/// A rule mapping an observation `x` to a predictive density `g(. | x)`.
#[derive(Clone)]
pub enum PredictiveProcedure {
    /// `N(y; x, v_y I)`.
    PlugInMle,
    /// `N(y; c(x), v_y I)` for a caller-supplied centre.
    PlugInCustom { label: String, center: CenterFn },
    /// Formal Bayes rule of a radial prior.
    BayesRule(Arc<MarginalEvaluator>),
}

impl fmt::Debug for PredictiveProcedure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl PredictiveProcedure {
    pub fn bayes(prior: RadialPrior) -> Self {
        PredictiveProcedure::BayesRule(Arc::new(MarginalEvaluator::new(prior)))
    }

    pub fn custom(label: impl Into<String>, center: impl Fn(&[f64]) -> Result<Point> + Send + Sync + 'static) -> Self {
        PredictiveProcedure::PlugInCustom {
            label: label.into(),
            center: Arc::new(center),
        }
    }

    pub fn label(&self) -> String {
        match self {
            PredictiveProcedure::PlugInMle => "plug-in-mle".into(),
            PredictiveProcedure::PlugInCustom { label, .. } => format!("plug-in-{label}"),
            PredictiveProcedure::BayesRule(ev) => format!("bayes-{}", ev.prior().label()),
        }
    }

    /// `log g(y | x)`.
    pub fn log_density(&self, x: &[f64], y: &[f64], model: &ModelConfig) -> Result<f64> {
        match self {
            PredictiveProcedure::PlugInMle => plugin_logdensity(x, y, model),
            PredictiveProcedure::PlugInCustom { center, .. } => {
                check_dim(model.p, y.len())?;
                let c = center(x)?;
                check_dim(model.p, c.len())?;
                Ok(gaussian_logpdf_unchecked(y, &c, model.vy))
            }
            PredictiveProcedure::BayesRule(ev) => bayes_predictive_logdensity(ev, x, y, model),
        }
    }

    /// The predictive density when it is an isotropic Gaussian.
    pub fn gaussian_form(&self, x: &[f64], model: &ModelConfig) -> Result<Option<IsotropicGaussian>> {
        check_dim(model.p, x.len())?;
        let g = match self {
            PredictiveProcedure::PlugInMle => Some((Point(x.to_vec()), model.vy)),
            PredictiveProcedure::PlugInCustom { center, .. } => Some((center(x)?, model.vy)),
            PredictiveProcedure::BayesRule(ev) => {
                if ev.is_flat() {
                    Some((Point(x.to_vec()), model.vx + model.vy))
                } else if let (Some(tau2), false) = (ev.prior().gaussian_tau2(), ev.method().is_quadrature()) {
                    let s = tau2 / (tau2 + model.vx);
                    Some((Point(x.iter().map(|c| s * c).collect()), s * model.vx + model.vy))
                } else {
                    None
                }
            }
        };
        g.map(|(m, v)| IsotropicGaussian::new(m, v)).transpose()
    }

    /// `int g(y | x) dy` by quadrature; one-dimensional models only.
    pub fn total_mass_1d(&self, x: f64, model: &ModelConfig) -> Result<f64> {
        if model.p != 1 {
            return Err(Error::invalid("p", "mass check is one-dimensional"));
        }
        let sd = (model.vx + model.vy).sqrt();
        let opts = QuadOptions { rel_tol: 1e-10, abs_tol: 1e-13, max_panels: 1 << 12 };
        let err = std::cell::RefCell::new(None);
        let r = integrate(
            |y| match self.log_density(&[x], &[y], model) {
                Ok(l) => l.exp(),
                Err(e) => {
                    err.borrow_mut().get_or_insert(e);
                    f64::NAN
                }
            },
            x - 40.0 * sd,
            x + 40.0 * sd,
            &[x],
            opts,
        );
        if let Some(e) = err.into_inner() {
            return Err(e);
        }
        Ok(r?.value)
    }
}

/// `log N(y; x, v_y I)`.
pub fn plugin_logdensity(x: &[f64], y: &[f64], model: &ModelConfig) -> Result<f64> {
    check_dim(model.p, x.len())?;
    check_dim(model.p, y.len())?;
    Ok(gaussian_logpdf_unchecked(y, x, model.vy))
}

/// `log m(w; v_w) - log m(x; v_x) + log N(y; x, (v_x + v_y) I)`.
pub fn bayes_predictive_logdensity(
    ev: &MarginalEvaluator,
    x: &[f64],
    y: &[f64],
    model: &ModelConfig,
) -> Result<f64> {
    check_dim(ev.dim(), model.p)?;
    let w = combine_w(x, y, model)?;
    let base = gaussian_logpdf_unchecked(y, x, model.vx + model.vy);
    if ev.is_flat() {
        return Ok(base);
    }
    Ok(ev.log_marginal(&w, model.vw())? - ev.log_marginal(x, model.vx)? + base)
}

/// `z + v grad log m(z; v)`.
pub fn posterior_mean(ev: &MarginalEvaluator, z: &[f64], v: f64) -> Result<Point> {
    check_positive("v", v)?;
    let g = ev.grad_log_marginal(z, v)?;
    Ok(Point(z.iter().zip(g.iter()).map(|(zi, gi)| zi + v * gi).collect()))
}

/// `-E_mu log pi(mu | X)` over `X ~ N(mu, v_x I)`.
pub fn posterior_logscore_risk(
    ev: &MarginalEvaluator,
    mu: &[f64],
    model: &ModelConfig,
    n: usize,
    mc: &McSettings,
) -> Result<RiskEstimate> {
    model.validate()?;
    check_dim(model.p, mu.len())?;
    check_dim(model.p, ev.dim())?;
    let log_prior = ev.prior().log_density(mu);
    if log_prior == f64::NEG_INFINITY {
        return Err(Error::ZeroPriorDensity);
    }
    let sd = model.vx.sqrt();
    estimate(mc, n, "posterior-logscore", |rng| {
        let x: Vec<f64> = mu.iter().map(|m| m + sd * rng.sample::<f64, _>(StandardNormal)).collect();
        let lm = if ev.is_flat() { 0.0 } else { ev.log_marginal(&x, model.vx)? };
        Ok(-(gaussian_logpdf_unchecked(&x, mu, model.vx) + log_prior - lm))
    })
}
