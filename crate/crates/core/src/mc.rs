//! Seeded, chunked Monte-Carlo engine.
//!
//! A run of `n` draws is cut into fixed-size chunks. Chunk `k` owns the
//! ChaCha8 stream `k` of the run's key, so its draws do not depend on which
//! worker executes it. Workers take chunks from a rayon pool and the per-chunk
//! partial sums are merged in chunk order, which makes every estimate
//! bit-identical for a given seed regardless of the worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Draws per chunk. Changing this changes every random stream.
pub const CHUNK: usize = 2048;

/// Master seed plus a derived stream label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub stream: u64,
}

impl SeedRecord {
    pub fn new(seed: u64) -> Self {
        SeedRecord { seed, stream: 0 }
    }

    /// A child stream, stable under reordering of sibling derivations.
    pub fn derive(&self, label: u64) -> Self {
        SeedRecord {
            seed: self.seed,
            stream: splitmix64(self.stream ^ splitmix64(label.wrapping_add(0x9e37_79b9))),
        }
    }

    /// Derive from a text label (FNV-1a).
    pub fn derive_str(&self, label: &str) -> Self {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in label.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        self.derive(h)
    }

    /// The generator for chunk `chunk` of this stream.
    pub fn chunk_rng(&self, chunk: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(self.seed ^ splitmix64(self.stream)));
        rng.set_stream(chunk);
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed and worker count for one estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McSettings {
    pub seed: SeedRecord,
    pub workers: usize,
}

impl McSettings {
    pub fn new(seed: u64, workers: usize) -> Self {
        McSettings {
            seed: SeedRecord::new(seed),
            workers: workers.max(1),
        }
    }

    pub fn derive(&self, label: u64) -> Self {
        McSettings {
            seed: self.seed.derive(label),
            workers: self.workers,
        }
    }

    pub fn derive_str(&self, label: &str) -> Self {
        McSettings {
            seed: self.seed.derive_str(label),
            workers: self.workers,
        }
    }
}

/// Running mean and centred second moment (Welford), merged with Chan's rule.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        let nf = n as f64;
        self.mean += d * other.n as f64 / nf;
        self.m2 += other.m2 + d * d * (self.n as f64) * (other.n as f64) / nf;
        self.n = n;
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// A Monte-Carlo estimate with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n: u64,
    pub seed: SeedRecord,
    pub kind: String,
}

impl RiskEstimate {
    pub fn from_moments(m: &Moments, seed: SeedRecord, kind: impl Into<String>) -> Self {
        RiskEstimate {
            value: m.mean,
            std_error: m.std_error(),
            n: m.n,
            seed,
            kind: kind.into(),
        }
    }

    /// An exact value (no sampling error).
    pub fn exact(value: f64, n: u64, seed: SeedRecord, kind: impl Into<String>) -> Self {
        RiskEstimate {
            value,
            std_error: 0.0,
            n,
            seed,
            kind: kind.into(),
        }
    }

    /// `|value - target| <= k * std_error`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.std_error
    }
}

/// Run `n` draws in chunks; `per_chunk` receives the chunk generator and the
/// number of draws it owns, and returns `K` moment accumulators.
pub fn run_chunks<const K: usize, F>(settings: &McSettings, n: usize, per_chunk: F) -> Result<[Moments; K]>
where
    F: Fn(&mut ChaCha8Rng, usize) -> Result<[Moments; K]> + Sync,
{
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let chunks = n.div_ceil(CHUNK);
    let work = |k: usize| {
        let len = CHUNK.min(n - k * CHUNK);
        let mut rng = settings.seed.chunk_rng(k as u64);
        per_chunk(&mut rng, len)
    };
    let partials: Vec<Result<[Moments; K]>> = if settings.workers <= 1 || chunks == 1 {
        (0..chunks).map(work).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(settings.workers)
            .build()
            .map_err(|e| Error::Construction(format!("thread pool: {e}")))?;
        pool.install(|| (0..chunks).into_par_iter().map(work).collect())
    };
    let mut total = [Moments::default(); K];
    for part in partials {
        let part = part?;
        for (t, p) in total.iter_mut().zip(part.iter()) {
            t.merge(p);
        }
    }
    Ok(total)
}

/// Convenience wrapper for a scalar per-draw statistic.
pub fn estimate<F>(settings: &McSettings, n: usize, kind: &str, draw: F) -> Result<RiskEstimate>
where
    F: Fn(&mut ChaCha8Rng) -> Result<f64> + Sync,
{
    let [m] = run_chunks::<1, _>(settings, n, |rng, len| {
        let mut acc = Moments::default();
        for _ in 0..len {
            acc.push(draw(rng)?);
        }
        Ok([acc])
    })?;
    Ok(RiskEstimate::from_moments(&m, settings.seed, kind))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn moments_merge_matches_single_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.1 - 3.0).collect();
        let mut whole = Moments::default();
        xs.iter().for_each(|&x| whole.push(x));
        let mut a = Moments::default();
        let mut b = Moments::default();
        xs[..333].iter().for_each(|&x| a.push(x));
        xs[333..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        assert_eq!(a.n, whole.n);
        assert!((a.mean - whole.mean).abs() < 1e-12);
        assert!((a.variance() - whole.variance()).abs() < 1e-10);
    }

    #[test]
    fn worker_count_does_not_change_bits() {
        let draw = |rng: &mut ChaCha8Rng| -> Result<f64> { Ok(rng.sample::<f64, _>(StandardNormal).powi(2)) };
        let one = estimate(&McSettings::new(3, 1), 20_000, "t", draw).unwrap();
        let four = estimate(&McSettings::new(3, 4), 20_000, "t", draw).unwrap();
        assert_eq!(one.value.to_bits(), four.value.to_bits());
        assert_eq!(one.std_error.to_bits(), four.std_error.to_bits());
        assert!(one.within(1.0, 4.0));
    }

    #[test]
    fn derived_streams_differ() {
        let s = SeedRecord::new(1);
        assert_ne!(s.derive(1), s.derive(2));
        assert_eq!(s.derive_str("a"), s.derive_str("a"));
        let mut a = s.chunk_rng(0);
        let mut b = s.chunk_rng(1);
        assert_ne!(a.gen::<u64>(), b.gen::<u64>());
    }

    #[test]
    fn zero_draws_rejected() {
        let r = estimate(&McSettings::new(0, 1), 0, "t", |_| Ok(0.0));
        assert_eq!(r.unwrap_err(), Error::EmptySample);
    }
}
