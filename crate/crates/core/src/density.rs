//! Concrete density estimates `g` and the Kullback-Leibler loss
//! `L(mu, g) = int p(y | mu) log(p(y | mu) / g(y)) dy`.
//!
//! Non-Gaussian estimates live on the line; their losses are computed by
//! adaptive quadrature.

use serde::{Deserialize, Serialize};

use crate::error::{check_positive, Error, Result};
use crate::model::{gaussian_logpdf_unchecked, kl_gaussian_unchecked, dist_sq, IsotropicGaussian};
use crate::quadrature::{integrate, QuadOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DensityEstimate {
    Gaussian(IsotropicGaussian),
    /// Step density on the line: `values[i]` on `[edges[i], edges[i+1])`, zero outside.
    Piecewise { edges: Vec<f64>, values: Vec<f64> },
    /// `sum_i w_i g_i` with `w_i > 0`, `sum w_i = 1`.
    Mixture { components: Vec<(f64, DensityEstimate)> },
    /// `level` on `region`, `lift * base` elsewhere.
    Truncated {
        base: Box<DensityEstimate>,
        region: Vec<(f64, f64)>,
        level: f64,
        lift: f64,
    },
}

impl DensityEstimate {
    pub fn gaussian_1d(mean: f64, v: f64) -> Result<Self> {
        Ok(DensityEstimate::Gaussian(IsotropicGaussian::new(vec![mean].into(), v)?))
    }

    pub fn piecewise(edges: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 || values.len() + 1 != edges.len() {
            return Err(Error::invalid("edges", "need one more edge than values"));
        }
        if edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("edges", "must be strictly increasing"));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("values", "must be finite and non-negative"));
        }
        Ok(DensityEstimate::Piecewise { edges, values })
    }

    pub fn mixture(components: Vec<(f64, DensityEstimate)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("components", "mixture needs a component"));
        }
        let total: f64 = components.iter().map(|c| c.0).sum();
        if components.iter().any(|c| !(c.0 > 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("weights", "must be positive and sum to one"));
        }
        Ok(DensityEstimate::Mixture { components })
    }

    /// `lambda g1 + (1 - lambda) g2`.
    pub fn blend(g1: &DensityEstimate, g2: &DensityEstimate, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::invalid("lambda", "must lie in (0, 1)"));
        }
        Self::mixture(vec![(lambda, g1.clone()), (1.0 - lambda, g2.clone())])
    }

    pub fn dim(&self) -> usize {
        match self {
            DensityEstimate::Gaussian(g) => g.dim(),
            DensityEstimate::Mixture { components } => components[0].1.dim(),
            _ => 1,
        }
    }

    /// `log g(y)`; `-inf` where `g` vanishes.
    pub fn log_density(&self, y: &[f64]) -> f64 {
        match self {
            DensityEstimate::Gaussian(g) => gaussian_logpdf_unchecked(y, &g.mean, g.v),
            DensityEstimate::Mixture { components } => {
                let logs: Vec<f64> = components
                    .iter()
                    .map(|(w, g)| w.ln() + g.log_density(y))
                    .collect();
                log_sum_exp(&logs)
            }
            DensityEstimate::Truncated { base, region, level, lift } => {
                if in_region(region, y[0]) {
                    level.ln()
                } else {
                    lift.ln() + base.log_density(y)
                }
            }
            DensityEstimate::Piecewise { .. } => self.density_1d(y[0]).ln(),
        }
    }

    /// `g(y)` on the line.
    pub fn density_1d(&self, y: f64) -> f64 {
        match self {
            DensityEstimate::Gaussian(_) | DensityEstimate::Mixture { .. } => {
                self.log_density(&[y]).exp()
            }
            DensityEstimate::Piecewise { edges, values } => {
                if y < edges[0] || y >= edges[edges.len() - 1] {
                    return 0.0;
                }
                let i = edges.partition_point(|&e| e <= y) - 1;
                values[i]
            }
            DensityEstimate::Truncated { base, region, level, lift } => {
                if in_region(region, y) {
                    *level
                } else {
                    lift * base.density_1d(y)
                }
            }
        }
    }

    /// Points where the density may jump.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            DensityEstimate::Gaussian(_) => Vec::new(),
            DensityEstimate::Piecewise { edges, .. } => edges.clone(),
            DensityEstimate::Mixture { components } => {
                components.iter().flat_map(|(_, g)| g.breakpoints()).collect()
            }
            DensityEstimate::Truncated { base, region, .. } => {
                let mut b = base.breakpoints();
                b.extend(region.iter().flat_map(|&(a, c)| [a, c]));
                b
            }
        }
    }

    /// A window outside of which a 1-D estimate carries no more than
    /// a negligible amount of mass.
    pub fn window(&self) -> (f64, f64) {
        match self {
            DensityEstimate::Gaussian(g) => {
                let sd = g.v.sqrt();
                (g.mean[0] - 40.0 * sd, g.mean[0] + 40.0 * sd)
            }
            DensityEstimate::Piecewise { edges, .. } => (edges[0], edges[edges.len() - 1]),
            DensityEstimate::Mixture { components } => components
                .iter()
                .map(|(_, g)| g.window())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |a, b| (a.0.min(b.0), a.1.max(b.1))),
            DensityEstimate::Truncated { base, region, .. } => {
                let (mut lo, mut hi) = base.window();
                for &(a, b) in region {
                    lo = lo.min(a);
                    hi = hi.max(b);
                }
                (lo, hi)
            }
        }
    }

    /// `int g` on the line by quadrature.
    pub fn total_mass(&self) -> Result<f64> {
        if let DensityEstimate::Gaussian(_) = self {
            return Ok(1.0);
        }
        let (lo, hi) = self.window();
        let opts = QuadOptions { rel_tol: 1e-12, abs_tol: 1e-15, max_panels: 1 << 14 };
        Ok(integrate(|y| self.density_1d(y), lo, hi, &self.breakpoints(), opts)?.value)
    }

    /// An upper bound on `sup g`, exact for a single Gaussian or step density.
    pub fn sup_bound(&self) -> f64 {
        match self {
            DensityEstimate::Gaussian(g) => g.log_peak().exp(),
            DensityEstimate::Piecewise { values, .. } => values.iter().copied().fold(0.0, f64::max),
            DensityEstimate::Mixture { components } => {
                components.iter().map(|(w, g)| w * g.sup_bound()).sum()
            }
            DensityEstimate::Truncated { base, level, lift, .. } => level.max(lift * base.sup_bound()),
        }
    }

    /// Does `g` vanish on a set of positive measure inside `[a, b]`?
    pub fn vanishes_within(&self, a: f64, b: f64) -> bool {
        match self {
            DensityEstimate::Gaussian(_) => false,
            DensityEstimate::Piecewise { edges, values } => {
                if a < edges[0] || b > edges[edges.len() - 1] {
                    return true;
                }
                values
                    .iter()
                    .zip(edges.windows(2))
                    .any(|(v, w)| *v == 0.0 && w[1] > a && w[0] < b)
            }
            DensityEstimate::Mixture { components } => {
                // conservative: scan a grid for a common zero
                let m = 4096;
                (0..=m).any(|i| {
                    let y = a + (b - a) * i as f64 / m as f64;
                    components.iter().all(|(_, g)| g.log_density(&[y]) == f64::NEG_INFINITY)
                })
            }
            DensityEstimate::Truncated { base, region, level, .. } => {
                if *level == 0.0 {
                    return true;
                }
                // zero only where the base vanishes off the region
                let m = 4096;
                (0..=m).any(|i| {
                    let y = a + (b - a) * i as f64 / m as f64;
                    !in_region(region, y) && base.log_density(&[y]) == f64::NEG_INFINITY
                })
            }
        }
    }
}

pub(crate) fn in_region(region: &[(f64, f64)], y: f64) -> bool {
    region.iter().any(|&(a, b)| y >= a && y <= b)
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let top = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + xs.iter().map(|x| (x - top).exp()).sum::<f64>().ln()
}

/// `L(mu, g)` for the sampling density `N_p(mu, vy I)`; `+inf` when `g`
/// vanishes on a set of positive measure.
pub fn kl_loss(mu: &[f64], vy: f64, g: &DensityEstimate) -> Result<f64> {
    check_positive("vy", vy)?;
    if let DensityEstimate::Gaussian(gg) = g {
        if gg.dim() != mu.len() {
            return Err(Error::DimensionMismatch { expected: mu.len(), got: gg.dim() });
        }
        return Ok(kl_gaussian_unchecked(mu.len(), dist_sq(mu, &gg.mean), vy, gg.v));
    }
    if mu.len() != 1 || g.dim() != 1 {
        return Err(Error::invalid("dimension", "non-Gaussian losses are one-dimensional"));
    }
    let m = mu[0];
    let sd = vy.sqrt();
    let (lo, hi) = (m - 40.0 * sd, m + 40.0 * sd);
    if g.vanishes_within(lo, hi) {
        return Ok(f64::INFINITY);
    }
    let mut breaks = g.breakpoints();
    breaks.push(m);
    let opts = QuadOptions { rel_tol: 1e-12, abs_tol: 1e-14, max_panels: 1 << 14 };
    let r = integrate(
        |y| {
            let lp = gaussian_logpdf_unchecked(&[y], &[m], vy);
            let pdf = lp.exp();
            if pdf == 0.0 {
                return 0.0;
            }
            pdf * (lp - g.log_density(&[y]))
        },
        lo,
        hi,
        &breaks,
        opts,
    )?;
    Ok(r.value)
}
