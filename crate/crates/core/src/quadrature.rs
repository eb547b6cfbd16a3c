//! One-dimensional quadrature: adaptive Gauss-Kronrod (7/15) in linear and
//! log domain, and fixed Gauss-Legendre rules.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the 7-point rule; nodes are XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Abscissae of the 15-point Kronrod rule mapped onto `[a, b]`.
fn kronrod_nodes(a: f64, b: f64) -> [f64; 15] {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut x = [0.0; 15];
    for j in 0..7 {
        x[2 * j] = c - h * XGK[j];
        x[2 * j + 1] = c + h * XGK[j];
    }
    x[14] = c;
    x
}

fn kronrod_weight(i: usize) -> (f64, f64) {
    // (kronrod weight, gauss weight) for node index in `kronrod_nodes` order
    if i == 14 {
        return (WGK[7], WG[3]);
    }
    let j = i / 2;
    let g = if j % 2 == 1 { WG[j / 2] } else { 0.0 };
    (WGK[j], g)
}

/// QUADPACK-style error estimate for one panel.
fn qk_error(kronrod: f64, gauss: f64, resabs: f64, resasc: f64) -> f64 {
    let mut err = (kronrod - gauss).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    err
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let h = 0.5 * (b - a);
    let x = kronrod_nodes(a, b);
    let mut fx = [0.0; 15];
    let (mut k, mut g, mut abs) = (0.0, 0.0, 0.0);
    for i in 0..15 {
        let v = f(x[i]);
        fx[i] = v;
        let (wk, wg) = kronrod_weight(i);
        k += wk * v;
        g += wg * v;
        abs += wk * v.abs();
    }
    let mean = 0.5 * k;
    let asc: f64 = (0..15)
        .map(|i| kronrod_weight(i).0 * (fx[i] - mean).abs())
        .sum();
    let h = h.abs();
    Panel {
        a,
        b,
        value: k * h,
        error: qk_error(k * h, g * h, abs * h, asc * h),
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub panels: usize,
}

/// Tolerances for the adaptive rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_panels: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            rel_tol: 1e-10,
            abs_tol: 1e-300,
            max_panels: 1 << 12,
        }
    }
}

fn initial_cuts(a: f64, b: f64, breaks: &[f64]) -> Vec<f64> {
    let mut cuts = vec![a];
    let mut inner: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|&c| c > a && c < b && c.is_finite())
        .collect();
    inner.sort_by(|x, y| x.total_cmp(y));
    inner.dedup();
    cuts.extend(inner);
    cuts.push(b);
    cuts
}

/// Adaptive Gauss-Kronrod on `[a, b]` with the interval pre-split at `breaks`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    opts: QuadOptions,
) -> Result<QuadResult> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::invalid("interval", "bounds must be finite"));
    }
    if a == b {
        return Ok(QuadResult { value: 0.0, error: 0.0, panels: 0 });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let cuts = initial_cuts(lo, hi, breaks);
    let mut heap: BinaryHeap<Panel> = cuts.windows(2).map(|w| gk15(&f, w[0], w[1])).collect();
    loop {
        let value: f64 = heap.iter().map(|p| p.value).sum();
        let error: f64 = heap.iter().map(|p| p.error).sum();
        if !value.is_finite() {
            return Err(Error::Construction(format!(
                "integrand is not finite on [{lo}, {hi}]"
            )));
        }
        if error <= opts.abs_tol.max(opts.rel_tol * value.abs()) {
            return Ok(QuadResult { value: sign * value, error, panels: heap.len() });
        }
        if heap.len() >= opts.max_panels {
            return Err(Error::QuadratureNonConvergence {
                panels: heap.len(),
                log_estimate: value.abs().ln(),
                rel_error: error / value.abs(),
            });
        }
        let worst = heap.pop().expect("non-empty panel heap");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // cannot split further in floating point; accept the panel as is
            heap.push(Panel { error: 0.0, ..worst });
            continue;
        }
        heap.push(gk15(&f, worst.a, mid));
        heap.push(gk15(&f, mid, worst.b));
    }
}

/// Result of a log-domain integration with attached moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogQuad<const K: usize> {
    /// `log int exp(psi)`; `-inf` when the integrand vanishes.
    pub log_value: f64,
    /// `int f_j exp(psi) / int exp(psi)`.
    pub moments: [f64; K],
    pub rel_error: f64,
    pub panels: usize,
}

#[derive(Debug, Clone, Copy)]
struct LogPanel<const K: usize> {
    a: f64,
    b: f64,
    shift: f64,
    value: f64,
    error: f64,
    moments: [f64; K],
}

impl<const K: usize> LogPanel<K> {
    fn log_error(&self) -> f64 {
        self.shift + self.error.ln()
    }
}

impl<const K: usize> PartialEq for LogPanel<K> {
    fn eq(&self, other: &Self) -> bool {
        self.log_error() == other.log_error()
    }
}
impl<const K: usize> Eq for LogPanel<K> {}
impl<const K: usize> PartialOrd for LogPanel<K> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<const K: usize> Ord for LogPanel<K> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.log_error().total_cmp(&other.log_error())
    }
}

fn log_gk15<const K: usize, F>(f: &F, a: f64, b: f64) -> LogPanel<K>
where
    F: Fn(f64) -> (f64, [f64; K]),
{
    let x = kronrod_nodes(a, b);
    let mut psi = [f64::NEG_INFINITY; 15];
    let mut mom = [[0.0; K]; 15];
    for i in 0..15 {
        let (lp, m) = f(x[i]);
        psi[i] = if lp.is_nan() { f64::NEG_INFINITY } else { lp };
        mom[i] = m;
    }
    let shift = psi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if shift == f64::NEG_INFINITY {
        return LogPanel { a, b, shift, value: 0.0, error: 0.0, moments: [0.0; K] };
    }
    let h = 0.5 * (b - a).abs();
    let (mut k, mut g, mut abs) = (0.0, 0.0, 0.0);
    let mut e = [0.0; 15];
    let mut moments = [0.0; K];
    for i in 0..15 {
        let ei = (psi[i] - shift).exp();
        e[i] = ei;
        let (wk, wg) = kronrod_weight(i);
        k += wk * ei;
        g += wg * ei;
        abs += wk * ei;
        if ei > 0.0 {
            for j in 0..K {
                moments[j] += wk * ei * mom[i][j];
            }
        }
    }
    let mean = 0.5 * k;
    let asc: f64 = (0..15).map(|i| kronrod_weight(i).0 * (e[i] - mean).abs()).sum();
    for m in moments.iter_mut() {
        *m *= h;
    }
    LogPanel {
        a,
        b,
        shift,
        value: k * h,
        error: qk_error(k * h, g * h, abs * h, asc * h),
        moments,
    }
}

/// Adaptive integration of `exp(psi(r))` where `f(r) = (psi(r), [f_j(r)])`,
/// returning the log of the integral and the `exp(psi)`-weighted averages of
/// the `f_j`. Panels carry their own shift so nothing overflows.
pub fn log_integrate<const K: usize, F>(
    f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    rel_tol: f64,
    max_panels: usize,
) -> Result<LogQuad<K>>
where
    F: Fn(f64) -> (f64, [f64; K]),
{
    let cuts = initial_cuts(a.min(b), a.max(b), breaks);
    let mut heap: BinaryHeap<LogPanel<K>> =
        cuts.windows(2).map(|w| log_gk15(&f, w[0], w[1])).collect();
    loop {
        let top = heap
            .iter()
            .map(|p| p.shift)
            .fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY {
            return Ok(LogQuad {
                log_value: f64::NEG_INFINITY,
                moments: [0.0; K],
                rel_error: 0.0,
                panels: heap.len(),
            });
        }
        let (mut value, mut error) = (0.0, 0.0);
        let mut moments = [0.0; K];
        for p in heap.iter().filter(|p| p.shift > f64::NEG_INFINITY) {
            let s = (p.shift - top).exp();
            value += s * p.value;
            error += s * p.error;
            for j in 0..K {
                moments[j] += s * p.moments[j];
            }
        }
        let rel = error / value;
        if rel <= rel_tol {
            for m in moments.iter_mut() {
                *m /= value;
            }
            return Ok(LogQuad {
                log_value: top + value.ln(),
                moments,
                rel_error: rel,
                panels: heap.len(),
            });
        }
        if heap.len() >= max_panels {
            return Err(Error::QuadratureNonConvergence {
                panels: heap.len(),
                log_estimate: top + value.ln(),
                rel_error: rel,
            });
        }
        let worst = heap.pop().expect("non-empty panel heap");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            heap.push(LogPanel { error: 0.0, ..worst });
            continue;
        }
        heap.push(log_gk15(&f, worst.a, mid));
        heap.push(log_gk15(&f, mid, worst.b));
    }
}

/// `n`-point Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Gauss-Legendre rule mapped onto `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(n);
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    x.into_iter().zip(w).map(|(xi, wi)| (c + h * xi, h * wi)).collect()
}
