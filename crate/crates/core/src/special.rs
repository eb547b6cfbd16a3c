//! Spherical average of `exp(s cos theta)`.
//!
//! For the uniform distribution on the unit sphere of `R^d`,
//! `A_d(s) = E exp(s <u, e_1>) = Gamma(d/2) (2/s)^(d/2 - 1) I_(d/2 - 1)(s)`,
//! a confluent hypergeometric limit function `0F1(; d/2; s^2/4)`. It is the
//! angular factor of every radial marginal integral. Derivatives satisfy
//! `A_d' = (s/d) A_(d+2)`.

use std::f64::consts::PI;

/// Below this argument the power series is summed; above it the Hankel
/// asymptotic expansion of `I_nu` is used.
pub const SERIES_SWITCH: f64 = 20.0;

/// `log A_d(s)` together with the ratios needed for radial derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereKernel {
    pub log_a: f64,
    /// `A_(d+2)(s) / (d A_d(s))`; equals `A_d'(s) / (s A_d(s))`.
    pub q1: f64,
    /// `A_(d+4)(s) / (d (d+2) A_d(s))`.
    pub q2: f64,
}

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// `log A_d(s)` for `d > 0`, `s >= 0`.
pub fn log_sphere_average(d: f64, s: f64) -> f64 {
    debug_assert!(d > 0.0 && s >= 0.0);
    if s < SERIES_SWITCH {
        series(d, s).ln()
    } else {
        log_asymptotic(d, s)
    }
}

/// Kernel value and derivative ratios in one pass.
pub fn sphere_kernel(d: f64, s: f64) -> SphereKernel {
    debug_assert!(d > 0.0 && s >= 0.0);
    if s < SERIES_SWITCH {
        let (a0, a2, a4) = series3(d, s);
        SphereKernel {
            log_a: a0.ln(),
            q1: a2 / (a0 * d),
            q2: a4 / (a0 * d * (d + 2.0)),
        }
    } else {
        let l0 = log_asymptotic(d, s);
        let l2 = log_asymptotic(d + 2.0, s);
        let l4 = log_asymptotic(d + 4.0, s);
        SphereKernel {
            log_a: l0,
            q1: (l2 - l0).exp() / d,
            q2: (l4 - l0).exp() / (d * (d + 2.0)),
        }
    }
}

fn series(d: f64, s: f64) -> f64 {
    let x = 0.25 * s * s;
    let half = 0.5 * d;
    let (mut term, mut sum) = (1.0, 1.0);
    let mut k = 1.0;
    loop {
        term *= x / (k * (k - 1.0 + half));
        sum += term;
        if term < 1e-17 * sum {
            return sum;
        }
        k += 1.0;
    }
}

fn series3(d: f64, s: f64) -> (f64, f64, f64) {
    let x = 0.25 * s * s;
    let h0 = 0.5 * d;
    let (h2, h4) = (h0 + 1.0, h0 + 2.0);
    let (mut t0, mut t2, mut t4) = (1.0, 1.0, 1.0);
    let (mut s0, mut s2, mut s4) = (1.0, 1.0, 1.0);
    let mut k = 1.0;
    loop {
        t0 *= x / (k * (k - 1.0 + h0));
        t2 *= x / (k * (k - 1.0 + h2));
        t4 *= x / (k * (k - 1.0 + h4));
        s0 += t0;
        s2 += t2;
        s4 += t4;
        // the d-series has the slowest-decaying terms
        if t0 < 1e-17 * s0 {
            return (s0, s2, s4);
        }
        k += 1.0;
    }
}

fn log_asymptotic(d: f64, s: f64) -> f64 {
    let nu = 0.5 * d - 1.0;
    let mu = 4.0 * nu * nu;
    let (mut term, mut sum) = (1.0f64, 1.0f64);
    let mut k = 1.0f64;
    loop {
        let next = -term * (mu - (2.0 * k - 1.0).powi(2)) / (8.0 * k * s);
        if next == 0.0 || next.abs() >= term.abs() || next.abs() < 1e-17 {
            if next.abs() < term.abs() {
                sum += next;
            }
            break;
        }
        term = next;
        sum += term;
        k += 1.0;
    }
    ln_gamma(0.5 * d) + nu * (2.0 / s).ln() + s - 0.5 * (2.0 * PI * s).ln() + sum.ln()
}

/// Surface area of the unit sphere in `R^p`, `2 pi^(p/2) / Gamma(p/2)`, in log.
pub fn log_sphere_area(p: usize) -> f64 {
    let h = 0.5 * p as f64;
    (2.0f64).ln() + h * PI.ln() - ln_gamma(h)
}
