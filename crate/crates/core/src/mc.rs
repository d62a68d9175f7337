//! Reproducible Monte Carlo plumbing.
//!
//! Every draw owns a counter-based stream: ChaCha8 seeded by `seed_base`,
//! stream `experiment_id · 2³² + index`. Draws are collected in index order
//! and reduced sequentially with compensated sums, so results are bit-identical
//! across worker counts and execution policies.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Address of one independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamSeed {
    pub seed_base: u64,
    pub experiment_id: u32,
}

impl StreamSeed {
    pub fn new(seed_base: u64, experiment_id: u32) -> Self {
        Self { seed_base, experiment_id }
    }

    pub fn stream_id(&self, index: u32) -> u64 {
        ((self.experiment_id as u64) << 32) | index as u64
    }

    pub fn rng(&self, index: u32) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed_base);
        rng.set_stream(self.stream_id(index));
        rng
    }

    /// Same base, different experiment id.
    pub fn derive(&self, sub: u32) -> Self {
        Self {
            seed_base: self.seed_base,
            experiment_id: self.experiment_id.wrapping_mul(1_000_003).wrapping_add(sub),
        }
    }
}

/// Generator for a single sample addressed by a plain 64-bit seed.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// How Monte Carlo loops are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ExecPolicy {
    Sequential,
    /// Data-parallel over draws; `threads = 0` uses the global pool.
    #[default]
    Parallel,
    ParallelWith { threads: usize },
}

/// Evaluates `f(index, rng)` for `index in 0..n` and returns the results in index order.
pub fn map_draws<T, F>(n: usize, seed: StreamSeed, policy: ExecPolicy, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u32, &mut ChaCha8Rng) -> T + Sync + Send,
{
    assert!(n <= u32::MAX as usize, "at most 2^32 draws per experiment id");
    let run_one = |i: usize| {
        let idx = i as u32;
        let mut rng = seed.rng(idx);
        f(idx, &mut rng)
    };
    match policy {
        ExecPolicy::Sequential => (0..n).map(run_one).collect(),
        ExecPolicy::Parallel => parallel_map(n, None, &run_one),
        ExecPolicy::ParallelWith { threads } => parallel_map(n, Some(threads), &run_one),
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T: Send, G: Fn(usize) -> T + Sync + Send>(n: usize, threads: Option<usize>, g: &G) -> Vec<T> {
    use rayon::prelude::*;
    match threads {
        Some(k) if k > 0 => match rayon::ThreadPoolBuilder::new().num_threads(k).build() {
            Ok(pool) => pool.install(|| (0..n).into_par_iter().map(g).collect()),
            Err(_) => (0..n).map(g).collect(),
        },
        _ => (0..n).into_par_iter().map(g).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T: Send, G: Fn(usize) -> T + Sync + Send>(n: usize, _threads: Option<usize>, g: &G) -> Vec<T> {
    (0..n).map(g).collect()
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &Self) {
        self.add(other.sum);
        self.add(other.carry);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut s = CompensatedSum::default();
    for x in xs {
        s.add(x);
    }
    s.value()
}

/// Mergeable mean/variance accumulator (count, Σx, Σx²), compensated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanAccumulator {
    n: usize,
    sum: CompensatedSum,
    sum_sq: CompensatedSum,
}

impl MeanAccumulator {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum.add(x);
        self.sum_sq.add(x * x);
    }

    pub fn merge(&mut self, other: &Self) {
        self.n += other.n;
        self.sum.merge(&other.sum);
        self.sum_sq.merge(&other.sum_sq);
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            return f64::NAN;
        }
        self.sum.value() / self.n as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return f64::NAN;
        }
        let n = self.n as f64;
        let m = self.mean();
        ((self.sum_sq.value() - n * m * m) / (n - 1.0)).max(0.0)
    }

    pub fn std_error(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }
}

impl FromIterator<f64> for MeanAccumulator {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Self::default();
        for x in iter {
            acc.push(x);
        }
        acc
    }
}

/// Mean and standard error of a ratio of means `E[x]/E[y]` over paired draws (delta method).
pub fn ratio_of_means(pairs: &[(f64, f64)]) -> (f64, f64) {
    let n = pairs.len() as f64;
    let mx = compensated_sum(pairs.iter().map(|p| p.0)) / n;
    let my = compensated_sum(pairs.iter().map(|p| p.1)) / n;
    let ratio = mx / my;
    let resid = compensated_sum(pairs.iter().map(|p| {
        let d = p.0 - ratio * p.1;
        d * d
    }));
    let se = (resid / (n - 1.0)).sqrt() / (n.sqrt() * my.abs());
    (ratio, se)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let xs = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(xs), 2.0);
    }

    #[test]
    fn map_is_policy_independent() {
        let seed = StreamSeed::new(7, 3);
        let f = |_i: u32, rng: &mut ChaCha8Rng| rng.random::<f64>();
        let a = map_draws(1000, seed, ExecPolicy::Sequential, f);
        let b = map_draws(1000, seed, ExecPolicy::Parallel, f);
        let c = map_draws(1000, seed, ExecPolicy::ParallelWith { threads: 3 }, f);
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn streams_differ() {
        let seed = StreamSeed::new(1, 1);
        let x: f64 = seed.rng(0).random();
        let y: f64 = seed.rng(1).random();
        let z: f64 = StreamSeed::new(1, 2).rng(0).random();
        assert_ne!(x, y);
        assert_ne!(x, z);
    }

    #[test]
    fn accumulator_merge_matches_single_pass() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64).sin()).collect();
        let whole: MeanAccumulator = xs.iter().copied().collect();
        let mut left: MeanAccumulator = xs[..37].iter().copied().collect();
        let right: MeanAccumulator = xs[37..].iter().copied().collect();
        left.merge(&right);
        assert_eq!(left.count(), whole.count());
        assert!((left.mean() - whole.mean()).abs() < 1e-15);
        assert!((left.variance() - whole.variance()).abs() < 1e-14);
    }
}
