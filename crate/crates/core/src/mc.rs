//! Monte Carlo accumulators and the deterministic chunked runner.
//!
//! Samples are split into fixed-size chunks. Chunk `c` draws from a ChaCha8
//! stream seeded by `(seed, c)`, so results depend only on the seed and the
//! sample count, never on the number of worker threads. Partial sums are
//! merged in chunk order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Samples per chunk in [`run_chunked`].
pub const CHUNK: u64 = 4096;

/// Monte Carlo estimate of `volume * E[indicator or integrand]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
    pub volume: f64,
}

impl McEstimate {
    pub fn exact(value: f64) -> Self {
        McEstimate { mean: value, stderr: 0.0, n: 1, volume: 1.0 }
    }

    pub fn zero(volume: f64) -> Self {
        McEstimate { mean: 0.0, stderr: 0.0, n: 0, volume }
    }

    /// `mean * volume`.
    pub fn measure(&self) -> f64 {
        self.mean * self.volume
    }

    /// Standard error of [`measure`](Self::measure).
    pub fn measure_stderr(&self) -> f64 {
        self.stderr * self.volume.abs()
    }
}

/// Running sums for mean and variance.
#[derive(Clone, Copy, Debug, Default)]
pub struct Accumulator {
    pub n: u64,
    pub sum: f64,
    pub sum2: f64,
}

impl Accumulator {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum2 += x * x;
    }

    pub fn merge(&mut self, o: &Accumulator) {
        self.n += o.n;
        self.sum += o.sum;
        self.sum2 += o.sum2;
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let m = self.sum / n;
        let var = ((self.sum2 / n - m * m) * n / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }

    pub fn estimate(&self, volume: f64) -> McEstimate {
        McEstimate { mean: self.mean(), stderr: self.stderr(), n: self.n, volume }
    }
}

/// RNG for chunk `chunk` of a run seeded with `seed`.
pub fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

/// Derives an independent seed from a base seed and a label.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs `body(rng, count, acc)` over `n` samples split into chunks.
pub fn run_chunked<F>(n: u64, seed: u64, body: F) -> Accumulator
where
    F: Fn(&mut ChaCha8Rng, u64, &mut Accumulator) + Sync,
{
    run_chunked_with(n, seed, Accumulator::default, |a, b| a.merge(b), body)
}

/// Generic form of [`run_chunked`] with a custom accumulator.
pub fn run_chunked_with<A, I, M, F>(n: u64, seed: u64, init: I, merge: M, body: F) -> A
where
    A: Send,
    I: Fn() -> A + Sync,
    M: Fn(&mut A, &A),
    F: Fn(&mut ChaCha8Rng, u64, &mut A) + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<A> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let count = CHUNK.min(n - c * CHUNK);
            let mut rng = chunk_rng(seed, c);
            let mut acc = init();
            body(&mut rng, count, &mut acc);
            acc
        })
        .collect();
    let mut total = init();
    for p in &parts {
        merge(&mut total, p);
    }
    total
}

/// Wilson score interval for a binomial proportion at `z` standard deviations.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let z2 = z * z;
    let den = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / den;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / den;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn chunked_is_independent_of_thread_count() {
        let body = |rng: &mut ChaCha8Rng, count: u64, acc: &mut Accumulator| {
            for _ in 0..count {
                acc.push(rng.random::<f64>());
            }
        };
        let a = run_chunked(20_000, 9, body);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| run_chunked(20_000, 9, body));
        assert_eq!(a.sum.to_bits(), b.sum.to_bits());
        assert_eq!(a.n, 20_000);
        assert!((a.mean() - 0.5).abs() < 4.0 * a.stderr());
    }

    #[test]
    fn wilson_contains_point_estimate() {
        let (lo, hi) = wilson_interval(999, 1000, 1.96);
        assert!(lo < 0.999 && 0.999 <= hi);
        let (lo, hi) = wilson_interval(0, 100, 1.96);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0);
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [0.1, 0.2, 0.4, 0.8];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(1.5)).collect();
        assert!((log_log_slope(&xs, &ys) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
    }
}
