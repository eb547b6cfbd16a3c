//! The two-sample isotropic Gaussian model.
//!
//! `X | mu ~ N_p(mu, v_x I)` and `Y | mu ~ N_p(mu, v_y I)` are independent.
//! Everything here is carried in the log domain.

use std::f64::consts::PI;
use std::ops::{Deref, DerefMut};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_positive, Error, Result};

/// Dimension and the two known variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub p: usize,
    pub vx: f64,
    pub vy: f64,
}

impl ModelConfig {
    pub fn new(p: usize, vx: f64, vy: f64) -> Result<Self> {
        let m = ModelConfig { p, vx, vy };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::invalid("p", "dimension must be at least 1"));
        }
        check_positive("vx", self.vx)?;
        check_positive("vy", self.vy)
    }

    /// Variance of the combined statistic `W`, `v_x v_y / (v_x + v_y)`.
    pub fn vw(&self) -> f64 {
        self.vx * self.vy / (self.vx + self.vy)
    }

    /// `log C` where `C = (2 pi v_y)^(-p/2)` bounds every `p(y | mu)`.
    pub fn log_bound(&self) -> f64 {
        -0.5 * self.p as f64 * (2.0 * PI * self.vy).ln()
    }

    pub fn bound(&self) -> f64 {
        self.log_bound().exp()
    }
}

/// A point of `R^p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn zeros(p: usize) -> Self {
        Point(vec![0.0; p])
    }

    /// `r e_1` in dimension `p`.
    pub fn on_axis(p: usize, r: f64) -> Self {
        let mut v = vec![0.0; p];
        if p > 0 {
            v[0] = r;
        }
        Point(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }
}

impl Deref for Point {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Point {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

pub(crate) fn norm_sq(z: &[f64]) -> f64 {
    z.iter().map(|c| c * c).sum()
}

pub(crate) fn norm(z: &[f64]) -> f64 {
    norm_sq(z).sqrt()
}

pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `N_p(mean, v I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotropicGaussian {
    pub mean: Point,
    pub v: f64,
}

impl IsotropicGaussian {
    pub fn new(mean: Point, v: f64) -> Result<Self> {
        check_positive("v", v)?;
        Ok(IsotropicGaussian { mean, v })
    }

    pub fn dim(&self) -> usize {
        self.mean.dim()
    }

    pub fn logpdf(&self, z: &[f64]) -> Result<f64> {
        gaussian_logpdf(z, &self.mean, self.v)
    }

    /// Log-density at the mean, `-(p/2) log(2 pi v)`.
    pub fn log_peak(&self) -> f64 {
        -0.5 * self.dim() as f64 * (2.0 * PI * self.v).ln()
    }

    pub fn kl_to(&self, other: &IsotropicGaussian) -> Result<f64> {
        kl_gaussian(&self.mean, self.v, &other.mean, other.v)
    }
}

/// `log N_p(z; mean, v I)`.
pub fn gaussian_logpdf(z: &[f64], mean: &[f64], v: f64) -> Result<f64> {
    check_dim(mean.len(), z.len())?;
    check_positive("v", v)?;
    Ok(gaussian_logpdf_unchecked(z, mean, v))
}

#[inline]
pub(crate) fn gaussian_logpdf_unchecked(z: &[f64], mean: &[f64], v: f64) -> f64 {
    let p = z.len() as f64;
    -0.5 * p * (2.0 * PI * v).ln() - dist_sq(z, mean) / (2.0 * v)
}

/// `KL(N(mean_a, v_a I) || N(mean_b, v_b I))`.
pub fn kl_gaussian(mean_a: &[f64], va: f64, mean_b: &[f64], vb: f64) -> Result<f64> {
    check_dim(mean_a.len(), mean_b.len())?;
    check_positive("va", va)?;
    check_positive("vb", vb)?;
    Ok(kl_gaussian_unchecked(
        mean_a.len(),
        dist_sq(mean_a, mean_b),
        va,
        vb,
    ))
}

#[inline]
pub(crate) fn kl_gaussian_unchecked(p: usize, mean_dist_sq: f64, va: f64, vb: f64) -> f64 {
    let ratio = va / vb;
    // log(vb/va) + va/vb - 1 written to keep precision when va ~ vb.
    let shape = (ratio - 1.0) - (ratio - 1.0).ln_1p();
    0.5 * p as f64 * shape + mean_dist_sq / (2.0 * vb)
}

/// `W = (v_y x + v_x y) / (v_x + v_y)`.
pub fn combine_w(x: &[f64], y: &[f64], model: &ModelConfig) -> Result<Point> {
    check_dim(model.p, x.len())?;
    check_dim(model.p, y.len())?;
    let s = model.vx + model.vy;
    Ok(Point(
        x.iter()
            .zip(y)
            .map(|(xi, yi)| (model.vy * xi + model.vx * yi) / s)
            .collect(),
    ))
}

/// `n` i.i.d. draws from `N_p(mean, v I)`.
pub fn sample_isotropic<R: Rng + ?Sized>(
    rng: &mut R,
    mean: &[f64],
    v: f64,
    n: usize,
) -> Result<Vec<Point>> {
    check_positive("v", v)?;
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let sd = v.sqrt();
    Ok((0..n)
        .map(|_| {
            Point(
                mean.iter()
                    .map(|m| m + sd * rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            )
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn logpdf_anchors() {
        let l0 = gaussian_logpdf(&[0.0], &[0.0], 1.0).unwrap();
        assert_relative_eq!(l0, -0.5 * (2.0 * PI).ln(), max_relative = 1e-15);
        assert_relative_eq!(l0, -0.918_938_533_204_672_7, max_relative = 1e-14);
        let l1 = gaussian_logpdf(&[1.0], &[0.0], 1.0).unwrap();
        assert_relative_eq!(l1, l0 - 0.5, max_relative = 1e-15);
    }

    #[test]
    fn logpdf_is_product_of_marginals() {
        let joint = gaussian_logpdf(&[1.0, 1.0, 1.0], &[0.0; 3], 2.0).unwrap();
        let one = gaussian_logpdf(&[1.0], &[0.0], 2.0).unwrap();
        assert_relative_eq!(joint, 3.0 * one, max_relative = 1e-14);
    }

    #[test]
    fn logpdf_far_from_mean_stays_finite() {
        let l = gaussian_logpdf(&[1.0e3], &[0.0], 1.0).unwrap();
        assert!(l.is_finite());
        assert_relative_eq!(l, -0.918_938_533_204_672_7 - 5.0e5, max_relative = 1e-14);
    }

    #[test]
    fn logpdf_errors() {
        assert!(matches!(
            gaussian_logpdf(&[0.0, 1.0], &[0.0], 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(gaussian_logpdf(&[0.0], &[0.0], 0.0).is_err());
        assert!(gaussian_logpdf(&[0.0], &[0.0], -1.0).is_err());
    }

    #[test]
    fn kl_anchors() {
        assert_eq!(kl_gaussian(&[0.0], 1.0, &[0.0], 1.0).unwrap(), 0.0);
        assert_relative_eq!(
            kl_gaussian(&[0.0], 1.0, &[1.0], 1.0).unwrap(),
            0.5,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            kl_gaussian(&[0.0], 1.0, &[0.0], 2.0).unwrap(),
            0.5 * 2f64.ln() - 0.25,
            max_relative = 1e-14
        );
        assert!(kl_gaussian(&[0.0], 1.0, &[0.0, 0.0], 1.0).is_err());
        assert!(kl_gaussian(&[0.0], 0.0, &[0.0], 1.0).is_err());
    }

    #[test]
    fn combine_w_anchors() {
        let m = ModelConfig::new(1, 1.0, 1.0).unwrap();
        assert_eq!(combine_w(&[0.0], &[0.0], &m).unwrap().0, vec![0.0]);
        assert_eq!(combine_w(&[2.0], &[0.0], &m).unwrap().0, vec![1.0]);
        let m2 = ModelConfig::new(2, 0.3, 7.0).unwrap();
        let w = combine_w(&[1.0, -2.5], &[1.0, -2.5], &m2).unwrap();
        assert_relative_eq!(w[0], 1.0, max_relative = 1e-15);
        assert_relative_eq!(w[1], -2.5, max_relative = 1e-15);
        assert!(combine_w(&[1.0], &[1.0], &m2).is_err());
    }

    #[test]
    fn model_rejects_bad_configs() {
        assert!(ModelConfig::new(0, 1.0, 1.0).is_err());
        assert!(ModelConfig::new(1, 0.0, 1.0).is_err());
        assert!(ModelConfig::new(1, 1.0, f64::NAN).is_err());
        let m = ModelConfig::new(3, 2.0, 1.0).unwrap();
        assert!(m.vw() < m.vx.min(m.vy) && m.vw() > 0.0);
        assert!(m.bound() > 0.0);
    }

    #[test]
    fn sampling_is_deterministic_and_location_scale() {
        let mut a = ChaCha8Rng::seed_from_u64(7);
        let mut b = ChaCha8Rng::seed_from_u64(7);
        let s1 = sample_isotropic(&mut a, &[0.0], 1.0, 64).unwrap();
        let s2 = sample_isotropic(&mut b, &[0.0], 1.0, 64).unwrap();
        assert_eq!(s1, s2);

        let mut c = ChaCha8Rng::seed_from_u64(7);
        let shifted = sample_isotropic(&mut c, &[5.0], 4.0, 64).unwrap();
        for (u, s) in s1.iter().zip(&shifted) {
            assert_relative_eq!(s[0], 5.0 + 2.0 * u[0], max_relative = 1e-15);
        }
        assert!(sample_isotropic(&mut c, &[0.0], 1.0, 0).is_err());
    }

    #[test]
    fn sample_mean_within_clt_bound() {
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = sample_isotropic(&mut rng, &[0.0], 1.0, n).unwrap();
        let mean = draws.iter().map(|d| d[0]).sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt());
    }
}
