//! Spherically symmetric, possibly improper, prior densities
//! `pi(mu) = h(|mu|)`, described through the radial log-profile `log h`,
//! its derivative and its power-law exponents at the origin and at infinity.

use std::f64::consts::PI;
use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_positive, Error, Result};
use crate::model::{norm, Point};
use crate::quadrature::log_integrate;
use crate::special::log_sphere_area;

/// Named prior families understood by the config grammar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorFamilySpec {
    Uniform,
    Power { b: f64 },
    /// `Power { b: p - 2 }`, resolved once the dimension is known.
    Harmonic,
    Gaussian { tau2: f64 },
    Blyth { base: Box<PriorFamilySpec>, n: u32 },
}

impl PriorFamilySpec {
    pub fn build(&self, p: usize) -> Result<RadialPrior> {
        match self {
            PriorFamilySpec::Uniform => Ok(make_uniform(p)),
            PriorFamilySpec::Power { b } => make_power(*b, p),
            PriorFamilySpec::Harmonic => make_harmonic(p),
            PriorFamilySpec::Gaussian { tau2 } => make_gaussian_prior(*tau2, p),
            PriorFamilySpec::Blyth { base, n } => make_blyth(&base.build(p)?, *n),
        }
    }

    /// Short label used for result series.
    pub fn label(&self) -> String {
        match self {
            PriorFamilySpec::Uniform => "uniform".into(),
            PriorFamilySpec::Power { b } => format!("power(b={b})"),
            PriorFamilySpec::Harmonic => "harmonic".into(),
            PriorFamilySpec::Gaussian { tau2 } => format!("gaussian(tau2={tau2})"),
            PriorFamilySpec::Blyth { base, n } => format!("blyth({},n={n})", base.label()),
        }
    }
}

impl fmt::Display for PriorFamilySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Profile {
    Uniform,
    Power { b: f64 },
    Gaussian { tau2: f64, log_norm: f64 },
    Blyth { base: Box<RadialPrior>, n: u32, log_n: f64 },
}

/// A radial prior in a fixed ambient dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialPrior {
    profile: Profile,
    spec: PriorFamilySpec,
    p: usize,
    /// `a` with `h(r) ~ r^-a` as `r -> inf`; `+inf` for faster decay.
    pub tail_exponent: f64,
    /// `b` with `h(r) ~ r^-b` as `r -> 0`.
    pub origin_exponent: f64,
    /// `int h(|mu|) dmu < inf` in dimension `p`.
    pub proper: bool,
}

pub fn make_uniform(p: usize) -> RadialPrior {
    RadialPrior {
        profile: Profile::Uniform,
        spec: PriorFamilySpec::Uniform,
        p,
        tail_exponent: 0.0,
        origin_exponent: 0.0,
        proper: false,
    }
}

/// `h(r) = r^-b`; needs `b < p` to be locally integrable at the origin.
pub fn make_power(b: f64, p: usize) -> Result<RadialPrior> {
    if !b.is_finite() || b >= p as f64 {
        return Err(Error::invalid(
            "b",
            format!("power prior r^-{b} is not locally finite in dimension {p} (need b < p)"),
        ));
    }
    make_power_profile(b, p)
}

/// `h(r) = r^-b` for any finite `b`, without the local-integrability check.
/// Only the tail and gradient conditions are meaningful when `b >= p`; the
/// marginal of such a profile is infinite.
pub fn make_power_profile(b: f64, p: usize) -> Result<RadialPrior> {
    if !b.is_finite() {
        return Err(Error::invalid("b", "exponent must be finite"));
    }
    if b == 0.0 {
        return Ok(make_uniform(p));
    }
    Ok(RadialPrior {
        profile: Profile::Power { b },
        spec: PriorFamilySpec::Power { b },
        p,
        tail_exponent: b,
        origin_exponent: b,
        proper: false,
    })
}

/// The harmonic prior `|mu|^-(p-2)`, defined for `p >= 3`.
pub fn make_harmonic(p: usize) -> Result<RadialPrior> {
    if p < 3 {
        return Err(Error::invalid("p", "the harmonic prior needs p >= 3"));
    }
    let mut prior = make_power(p as f64 - 2.0, p)?;
    prior.spec = PriorFamilySpec::Harmonic;
    Ok(prior)
}

/// The proper conjugate prior `N_p(0, tau2 I)`.
pub fn make_gaussian_prior(tau2: f64, p: usize) -> Result<RadialPrior> {
    check_positive("tau2", tau2)?;
    Ok(RadialPrior {
        profile: Profile::Gaussian {
            tau2,
            log_norm: -0.5 * p as f64 * (2.0 * PI * tau2).ln(),
        },
        spec: PriorFamilySpec::Gaussian { tau2 },
        p,
        tail_exponent: f64::INFINITY,
        origin_exponent: 0.0,
        proper: true,
    })
}

/// Cut-off `j_n`: 1 inside the unit ball, `1 - log r / log n` up to `n`, 0 beyond.
pub fn blyth_j(mu_norm: f64, n: u32) -> Result<f64> {
    if n < 2 {
        return Err(Error::invalid("n", "Blyth cut-off index must be at least 2"));
    }
    if !(mu_norm >= 0.0) {
        return Err(Error::invalid("mu_norm", "must be non-negative"));
    }
    Ok(blyth_j_unchecked(mu_norm, (n as f64).ln()))
}

#[inline]
fn blyth_j_unchecked(r: f64, log_n: f64) -> f64 {
    if r <= 1.0 {
        1.0
    } else {
        (1.0 - r.ln() / log_n).max(0.0)
    }
}

/// `pi_n = j_n^2 pi`, compactly supported on the ball of radius `n`.
pub fn make_blyth(base: &RadialPrior, n: u32) -> Result<RadialPrior> {
    if n < 2 {
        return Err(Error::invalid("n", "Blyth cut-off index must be at least 2"));
    }
    Ok(RadialPrior {
        spec: PriorFamilySpec::Blyth {
            base: Box::new(base.spec.clone()),
            n,
        },
        p: base.p,
        tail_exponent: f64::INFINITY,
        origin_exponent: base.origin_exponent,
        proper: base.origin_exponent < base.p as f64,
        profile: Profile::Blyth {
            base: Box::new(base.clone()),
            n,
            log_n: (n as f64).ln(),
        },
    })
}

impl RadialPrior {
    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn spec(&self) -> &PriorFamilySpec {
        &self.spec
    }

    pub fn label(&self) -> String {
        self.spec.label()
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self.profile, Profile::Uniform)
    }

    /// `(tau2, log normaliser)` for the conjugate prior.
    pub fn gaussian_tau2(&self) -> Option<f64> {
        match self.profile {
            Profile::Gaussian { tau2, .. } => Some(tau2),
            _ => None,
        }
    }

    /// `log h(r)`, `-inf` where the density vanishes.
    pub fn log_h(&self, r: f64) -> f64 {
        match &self.profile {
            Profile::Uniform => 0.0,
            Profile::Power { b } => -b * r.ln(),
            Profile::Gaussian { tau2, log_norm } => log_norm - r * r / (2.0 * tau2),
            Profile::Blyth { base, log_n, .. } => {
                let j = blyth_j_unchecked(r, *log_n);
                if j <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    2.0 * j.ln() + base.log_h(r)
                }
            }
        }
    }

    pub fn h(&self, r: f64) -> f64 {
        self.log_h(r).exp()
    }

    /// `d/dr log h(r)`; at the Blyth break radii the left limit.
    pub fn dlog_h(&self, r: f64) -> f64 {
        match &self.profile {
            Profile::Uniform => 0.0,
            Profile::Power { b } => -b / r,
            Profile::Gaussian { tau2, .. } => -r / tau2,
            Profile::Blyth { base, log_n, n } => {
                if r <= 1.0 {
                    base.dlog_h(r)
                } else if r < *n as f64 {
                    let j = blyth_j_unchecked(r, *log_n);
                    -2.0 / (r * log_n * j) + base.dlog_h(r)
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    /// `log pi(mu)`.
    pub fn log_density(&self, mu: &[f64]) -> f64 {
        self.log_h(norm(mu))
    }

    /// `grad pi / pi` at `mu`.
    pub fn grad_log_density(&self, mu: &[f64]) -> Point {
        let r = norm(mu);
        if r == 0.0 {
            return Point::zeros(mu.len());
        }
        let d = self.dlog_h(r) / r;
        Point(mu.iter().map(|m| d * m).collect())
    }

    /// Radii where the profile is not smooth; quadrature panels split here.
    pub fn break_radii(&self) -> Vec<f64> {
        match &self.profile {
            Profile::Blyth { base, n, .. } => {
                let mut b = base.break_radii();
                b.push(1.0);
                b.push(*n as f64);
                b
            }
            _ => Vec::new(),
        }
    }

    /// Radius beyond which `h` vanishes, if any.
    pub fn support_radius(&self) -> Option<f64> {
        match &self.profile {
            Profile::Blyth { base, n, .. } => {
                Some(base.support_radius().map_or(*n as f64, |r| r.min(*n as f64)))
            }
            _ => None,
        }
    }

    /// Radius outside of which a proper prior carries negligible mass.
    fn effective_radius(&self) -> Option<f64> {
        if let Some(r) = self.support_radius() {
            return Some(r);
        }
        self.gaussian_tau2()
            .map(|tau2| tau2.sqrt() * ((self.p as f64).sqrt() + 40.0))
    }
}

/// Inverse-CDF sampler for a proper radial prior.
#[derive(Debug, Clone)]
pub struct RadialSampler {
    p: usize,
    edges: Vec<f64>,
    cdf: Vec<f64>,
    log_mass: f64,
}

/// Cells used to tabulate the radial CDF.
const RADIAL_CELLS: usize = 8192;

impl RadialSampler {
    pub fn new(prior: &RadialPrior) -> Result<Self> {
        if !prior.proper {
            return Err(Error::ImproperPrior("sampling"));
        }
        let r_max = prior
            .effective_radius()
            .ok_or(Error::ImproperPrior("sampling"))?;
        let p = prior.dim();
        let pm1 = p as f64 - 1.0;
        let mut cuts = vec![0.0];
        cuts.extend(prior.break_radii().into_iter().filter(|&b| b > 0.0 && b < r_max));
        cuts.push(r_max);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();

        let mut edges = vec![0.0];
        for w in cuts.windows(2) {
            let cells = ((RADIAL_CELLS as f64) * (w[1] - w[0]) / r_max).ceil().max(16.0) as usize;
            for i in 1..=cells {
                edges.push(w[0] + (w[1] - w[0]) * i as f64 / cells as f64);
            }
        }
        let log_radial = |r: f64| -> (f64, [f64; 0]) {
            let lr = if pm1 == 0.0 { 0.0 } else { pm1 * r.ln() };
            (prior.log_h(r) + lr, [])
        };
        let mut log_cells = Vec::with_capacity(edges.len() - 1);
        for w in edges.windows(2) {
            let q = log_integrate(log_radial, w[0], w[1], &[], 1e-10, 256)?;
            log_cells.push(q.log_value);
        }
        let top = log_cells.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY {
            return Err(Error::Construction("prior has zero normaliser".into()));
        }
        let mut cdf = Vec::with_capacity(log_cells.len() + 1);
        cdf.push(0.0);
        let mut acc = 0.0;
        for lc in &log_cells {
            acc += (lc - top).exp();
            cdf.push(acc);
        }
        let total = acc;
        cdf.iter_mut().for_each(|c| *c /= total);
        Ok(RadialSampler {
            p,
            edges,
            cdf,
            log_mass: top + total.ln() + log_sphere_area(p),
        })
    }

    /// `log int pi(mu) dmu`.
    pub fn log_mass(&self) -> f64 {
        self.log_mass
    }

    /// Tabulated radial CDF at `r`.
    pub fn radial_cdf(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let i = self.edges.partition_point(|&e| e <= r);
        if i >= self.edges.len() {
            return 1.0;
        }
        let (a, b) = (self.edges[i - 1], self.edges[i]);
        let t = (r - a) / (b - a);
        self.cdf[i - 1] + t * (self.cdf[i] - self.cdf[i - 1])
    }

    pub fn sample_radius<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        let i = self.cdf.partition_point(|&c| c <= u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let t = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        self.edges[i - 1] + t * (self.edges[i] - self.edges[i - 1])
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let r = self.sample_radius(rng);
        let dir = random_direction(rng, self.p);
        Point(dir.into_iter().map(|d| r * d).collect())
    }
}

/// Uniform direction on the unit sphere of `R^p`.
pub fn random_direction<R: Rng + ?Sized>(rng: &mut R, p: usize) -> Vec<f64> {
    if p == 1 {
        return vec![if rng.gen::<bool>() { 1.0 } else { -1.0 }];
    }
    loop {
        let g: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&g);
        if n > 1e-300 {
            return g.into_iter().map(|x| x / n).collect();
        }
    }
}

/// `n` draws from the normalised density proportional to `pi`.
pub fn sample_from_proper<R: Rng + ?Sized>(
    prior: &RadialPrior,
    rng: &mut R,
    n: usize,
) -> Result<Vec<Point>> {
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let sampler = RadialSampler::new(prior)?;
    Ok((0..n).map(|_| sampler.sample(rng)).collect())
}
