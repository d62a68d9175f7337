//! Exact-in-law samplers for the radial processes: two-sided Brownian motion,
//! Brownian bridge, the torus radial process, the 3d Bessel process and the
//! Williams decomposition of drifted Brownian motion, plus supremum statistics.
//!
//! All samplers are pure functions of `(grid, seed)`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::mc::{map_draws, rng_from_seed, ExecPolicy, MeanAccumulator, StreamSeed};
use crate::special_functions::LiouvilleParams;
use crate::stats::erf;

/// Continuity correction for discretely monitored barriers: a walk sampled
/// every `dt` crosses `b` about as often as the continuous path crosses
/// `b + BARRIER_SHIFT·√dt`.
pub const BARRIER_SHIFT: f64 = 0.5826;

/// Symmetric time grid `s_k ∈ {−t, …, 0, …, t}` with `n_steps` points per side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_half: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_half: f64, n_steps: usize) -> Result<Self> {
        if !(t_half > 0.0 && t_half.is_finite()) {
            return Err(Error::Grid(format!("t_half = {t_half} must be positive")));
        }
        if n_steps < 2 {
            return Err(Error::Grid(format!("n_steps = {n_steps} must be at least 2")));
        }
        Ok(Self { t_half, n_steps })
    }

    /// Grid whose spacing is at most `dt_max`.
    pub fn with_max_step(t_half: f64, dt_max: f64) -> Result<Self> {
        let n = (t_half / dt_max).ceil().max(1.0) as usize + 1;
        Self::new(t_half, n)
    }

    pub fn t_half(&self) -> f64 {
        self.t_half
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.t_half / (self.n_steps - 1) as f64
    }

    /// Number of points of the two-sided grid.
    pub fn len(&self) -> usize {
        2 * self.n_steps - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of `s = 0` in the two-sided grid.
    pub fn center(&self) -> usize {
        self.n_steps - 1
    }

    /// Time of two-sided index `k`.
    pub fn time(&self, k: usize) -> f64 {
        let c = self.center() as f64;
        self.t_half * (k as f64 - c) / c
    }

    /// Refinement with `factor` sub-steps per step.
    pub fn refine(&self, factor: usize) -> Result<Self> {
        Self::new(self.t_half, (self.n_steps - 1) * factor.max(1) + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathKind {
    BM,
    Bridge,
    TorusRadial,
    Bessel3,
    Williams,
}

impl PathKind {
    /// Bridge and Williams paths live on `[0, t]`; the others on `[−t, t]`.
    pub fn is_one_sided(self) -> bool {
        matches!(self, PathKind::Bridge | PathKind::Williams)
    }
}

/// A discretised radial path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
    pub kind: PathKind,
    pub seed: u64,
}

impl PathSample {
    pub fn time(&self, i: usize) -> f64 {
        if self.kind.is_one_sided() {
            i as f64 * self.grid.dt()
        } else {
            self.grid.time(i)
        }
    }

    pub fn zero_index(&self) -> usize {
        if self.kind.is_one_sided() {
            0
        } else {
            self.grid.center()
        }
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn inf(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Barrier event `{sup_{−t ≤ s ≤ t} B_s < b}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupEvent {
    pub b: f64,
    pub t_half: f64,
}

impl SupEvent {
    pub fn new(b: f64, t_half: f64) -> Result<Self> {
        if !(b > 0.0) || !(t_half > 0.0) {
            return Err(domain(format!("barrier b = {b}, t = {t_half} must be positive")));
        }
        Ok(Self { b, t_half })
    }

    pub fn contains(&self, sup: f64) -> bool {
        sup < self.b
    }
}

#[inline]
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// One-sided random walk with `n` points, `out[0] = 0`.
pub fn brownian_walk(n: usize, dt: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let sd = dt.sqrt();
    let mut out = Vec::with_capacity(n);
    let mut x = 0.0;
    out.push(x);
    for _ in 1..n {
        x += sd * normal(rng);
        out.push(x);
    }
    out
}

/// One-sided bridge from 0 to 0 over `n` points by the conditioned-increment recursion.
pub fn bridge_walk(n: usize, dt: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut x = 0.0;
    out.push(x);
    let steps = n - 1;
    for k in 0..steps {
        let rem = (steps - k) as f64;
        let keep = (rem - 1.0) / rem;
        x = x * keep + (dt * keep).sqrt() * normal(rng);
        out.push(x);
    }
    out[steps] = 0.0;
    out
}

fn glue(grid: &TimeGrid, right: &[f64], left: &[f64]) -> Vec<f64> {
    let c = grid.center();
    let mut v = vec![0.0; grid.len()];
    for k in 0..grid.n_steps() {
        v[c + k] = right[k];
        v[c - k] = left[k];
    }
    v
}

pub fn sample_bm_with(grid: &TimeGrid, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let right = brownian_walk(grid.n_steps(), grid.dt(), rng);
    let left = brownian_walk(grid.n_steps(), grid.dt(), rng);
    glue(grid, &right, &left)
}

/// Two-sided Brownian motion, independent sides glued at `s = 0`.
pub fn sample_bm(grid: &TimeGrid, seed: u64) -> PathSample {
    let values = sample_bm_with(grid, &mut rng_from_seed(seed));
    PathSample { grid: *grid, values, kind: PathKind::BM, seed }
}

/// Brownian bridge on `[0, t_half]` pinned at both ends.
pub fn sample_bridge(grid: &TimeGrid, seed: u64) -> PathSample {
    let values = bridge_walk(grid.n_steps(), grid.dt(), &mut rng_from_seed(seed));
    PathSample { grid: *grid, values, kind: PathKind::Bridge, seed }
}

/// `B_t(s) = (B^e(|s|) + sign(s) B^o(|s|))/√2` from an even part and a bridge.
pub fn torus_radial_from_parts(grid: &TimeGrid, even: &[f64], odd_bridge: &[f64]) -> Vec<f64> {
    let c = grid.center();
    let mut v = vec![0.0; grid.len()];
    let k = std::f64::consts::FRAC_1_SQRT_2;
    for j in 0..grid.n_steps() {
        v[c + j] = k * (even[j] + odd_bridge[j]);
        v[c - j] = k * (even[j] - odd_bridge[j]);
    }
    v
}

pub fn sample_torus_radial_with(grid: &TimeGrid, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let even = brownian_walk(grid.n_steps(), grid.dt(), rng);
    let odd = bridge_walk(grid.n_steps(), grid.dt(), rng);
    torus_radial_from_parts(grid, &even, &odd)
}

/// Torus radial process on the full two-sided grid.
pub fn sample_torus_radial(grid: &TimeGrid, seed: u64) -> PathSample {
    let values = sample_torus_radial_with(grid, &mut rng_from_seed(seed));
    PathSample { grid: *grid, values, kind: PathKind::TorusRadial, seed }
}

/// Cylinder and torus radial paths built from the same even part and odd Brownian motion.
///
/// The cylinder path is `(B^e ± W^o)/√2`; the torus path replaces `W^o` by its
/// pinned version `W^o(s) − (s/t) W^o(t)`.
pub fn sample_coupled_radial_with(grid: &TimeGrid, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let n = grid.n_steps();
    let even = brownian_walk(n, grid.dt(), rng);
    let odd = brownian_walk(n, grid.dt(), rng);
    let end = odd[n - 1];
    let pinned: Vec<f64> = (0..n)
        .map(|j| if j == n - 1 { 0.0 } else { odd[j] - end * j as f64 / (n - 1) as f64 })
        .collect();
    (torus_radial_from_parts(grid, &even, &odd), torus_radial_from_parts(grid, &even, &pinned))
}

fn bessel_side(b: f64, n: usize, dt: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let sd = dt.sqrt();
    let (mut x, mut y, mut z) = (b, 0.0, 0.0);
    let mut out = Vec::with_capacity(n);
    out.push(b);
    for _ in 1..n {
        x += sd * normal(rng);
        y += sd * normal(rng);
        z += sd * normal(rng);
        out.push((x * x + y * y + z * z).sqrt());
    }
    out
}

pub fn sample_bessel3_with(b_start: f64, grid: &TimeGrid, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let right = bessel_side(b_start, grid.n_steps(), grid.dt(), rng);
    let left = bessel_side(b_start, grid.n_steps(), grid.dt(), rng);
    glue(grid, &right, &left)
}

/// Two-sided 3d Bessel process started from `b_start`, the norm of three Brownian coordinates.
pub fn sample_bessel3(b_start: f64, grid: &TimeGrid, seed: u64) -> Result<PathSample> {
    if !(b_start >= 0.0) {
        return Err(domain(format!("bessel start {b_start} must be non-negative")));
    }
    let values = sample_bessel3_with(b_start, grid, &mut rng_from_seed(seed));
    Ok(PathSample { grid: *grid, values, kind: PathKind::Bessel3, seed })
}

/// Output of the Williams sampler. `t_hit` is infinite when the supremum is not reached on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilliamsSample {
    pub path: PathSample,
    pub m_sup: f64,
    pub t_hit: f64,
}

/// Ascent with drift `ν` to level `m`, then `m − |W³ + ν s e₁|` from the hitting time on.
///
/// The second segment is Brownian motion with drift `−ν` started at `m` and
/// conditioned to stay below `m`; for `ν = 0` it is `m` minus a 3d Bessel process.
pub fn williams_path_with(m: f64, nu: f64, grid: &TimeGrid, rng: &mut ChaCha8Rng) -> (Vec<f64>, f64) {
    let n = grid.n_steps();
    let dt = grid.dt();
    let sd = dt.sqrt();
    let mut v = Vec::with_capacity(n);
    v.push(0.0);
    let mut x = 0.0;
    let mut hit = None;
    for k in 1..n {
        x += nu * dt + sd * normal(rng);
        if x >= m {
            v.push(m);
            hit = Some(k);
            break;
        }
        v.push(x);
    }
    let Some(k_hit) = hit else {
        return (v, f64::INFINITY);
    };
    let (mut y1, mut y2, mut y3) = (0.0, 0.0, 0.0);
    for _ in k_hit + 1..n {
        y1 += nu * dt + sd * normal(rng);
        y2 += sd * normal(rng);
        y3 += sd * normal(rng);
        v.push(m - (y1 * y1 + y2 * y2 + y3 * y3).sqrt());
    }
    (v, k_hit as f64 * dt)
}

/// Williams decomposition of `B_s + (λ − Q)s` on `[0, t_half]`.
///
/// `M ~ Exp(2(Q − λ))` by inverse CDF, the ascent is located at the first grid
/// crossing, and the conditioned descent is sampled exactly.
pub fn sample_williams(lambda: f64, params: &LiouvilleParams, grid: &TimeGrid, seed: u64) -> Result<WilliamsSample> {
    let nu = params.q_charge() - lambda;
    if !(nu > 0.0) {
        return Err(domain(format!("williams: lambda = {lambda} must be below Q = {}", params.q_charge())));
    }
    let mut rng = rng_from_seed(seed);
    let u: f64 = rng.random();
    let m = -(-u).ln_1p() / (2.0 * nu);
    let (values, t_hit) = williams_path_with(m, nu, grid, &mut rng);
    Ok(WilliamsSample {
        path: PathSample { grid: *grid, values, kind: PathKind::Williams, seed },
        m_sup: m,
        t_hit,
    })
}

/// Williams path with a prescribed supremum `m`; `nu = 0` is the critical branch.
pub fn sample_williams_given_sup(m: f64, nu: f64, grid: &TimeGrid, seed: u64) -> Result<WilliamsSample> {
    if !(m > 0.0) || !(nu >= 0.0) {
        return Err(domain(format!("williams: need m > 0 and nu >= 0, got {m}, {nu}")));
    }
    let (values, t_hit) = williams_path_with(m, nu, grid, &mut rng_from_seed(seed));
    Ok(WilliamsSample {
        path: PathSample { grid: *grid, values, kind: PathKind::Williams, seed },
        m_sup: m,
        t_hit,
    })
}

/// `f(x) = 2∫₀^x φ = erf(x/√2)`.
pub fn f_sup(x: f64) -> f64 {
    erf(x / std::f64::consts::SQRT_2)
}

/// `P(sup_{[−t,t]} B < x√t) = f(x)²` for two-sided Brownian motion.
pub fn sup_prob_bm_exact(x: f64) -> f64 {
    let f = f_sup(x);
    f * f
}

/// `P(sup_{[−t,t]} B_t < x√t) = 1 − e^{−x²}`: the torus radial process is a
/// Brownian bridge of duration `2t` read around the circle.
pub fn sup_prob_torus_exact(x: f64) -> f64 {
    -(-x * x).exp_m1()
}

/// Monte Carlo estimate of a barrier probability next to its exact value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupProbEstimate {
    pub x: f64,
    pub exact: f64,
    /// Raw frequency of `{discrete sup < x√t}`.
    pub mc: f64,
    pub std_error: f64,
    /// Frequency of `{discrete sup < x√t − BARRIER_SHIFT·√dt}`.
    pub corrected: f64,
    pub corrected_std_error: f64,
    /// First-order discretisation bias of the raw frequency.
    pub documented_bias: f64,
    pub n_samples: usize,
    pub dt: f64,
}

impl SupProbEstimate {
    fn from_codes(x: f64, grid: &TimeGrid, codes: &[u8], exact: fn(f64) -> f64) -> Self {
        let n = codes.len();
        let raw: MeanAccumulator = codes.iter().map(|&c| (c >= 1) as u8 as f64).collect();
        let cor: MeanAccumulator = codes.iter().map(|&c| (c >= 2) as u8 as f64).collect();
        let shift = BARRIER_SHIFT * (grid.dt() / grid.t_half()).sqrt();
        let bernoulli_se = |p: f64| (p * (1.0 - p) / n as f64).sqrt();
        Self {
            x,
            exact: exact(x),
            mc: raw.mean(),
            std_error: bernoulli_se(raw.mean()),
            corrected: cor.mean(),
            corrected_std_error: bernoulli_se(cor.mean()),
            documented_bias: exact(x + shift) - exact(x),
            n_samples: n,
            dt: grid.dt(),
        }
    }
}

/// 2: below the corrected barrier, 1: below the barrier only, 0: crossed.
fn barrier_code(max: f64, b: f64, b_corrected: f64) -> u8 {
    if max < b_corrected {
        2
    } else if max < b {
        1
    } else {
        0
    }
}

fn bm_side_max(n: usize, sd: f64, b: f64, rng: &mut ChaCha8Rng) -> f64 {
    let mut x = 0.0;
    let mut max: f64 = 0.0;
    for _ in 1..n {
        x += sd * normal(rng);
        if x > max {
            max = x;
            if max >= b {
                break;
            }
        }
    }
    max
}

/// Estimates `f(x)² = P(A_{x√t, t})` by Monte Carlo on two-sided walks, with the erf value.
pub fn sup_prob_bm(x: f64, grid: &TimeGrid, n_samples: usize, seed: StreamSeed, policy: ExecPolicy) -> Result<SupProbEstimate> {
    if !(x > 0.0) {
        return Err(domain(format!("sup_prob_bm: x = {x} must be positive")));
    }
    let b = x * grid.t_half().sqrt();
    let bc = b - BARRIER_SHIFT * grid.dt().sqrt();
    let sd = grid.dt().sqrt();
    let n = grid.n_steps();
    let codes = map_draws(n_samples, seed, policy, |_, rng| {
        let right = bm_side_max(n, sd, b, rng);
        if right >= b {
            return 0;
        }
        let left = bm_side_max(n, sd, b, rng);
        barrier_code(right.max(left), b, bc)
    });
    Ok(SupProbEstimate::from_codes(x, grid, &codes, sup_prob_bm_exact))
}

/// Discrete supremum of a torus radial path, stopped once it reaches `b`.
fn torus_max(n: usize, dt: f64, b: f64, rng: &mut ChaCha8Rng) -> f64 {
    let sd = dt.sqrt();
    let k = std::f64::consts::FRAC_1_SQRT_2;
    let (mut e, mut o) = (0.0, 0.0);
    let mut max: f64 = 0.0;
    let steps = n - 1;
    for j in 0..steps {
        e += sd * normal(rng);
        let rem = (steps - j) as f64;
        let keep = (rem - 1.0) / rem;
        o = o * keep + (dt * keep).sqrt() * normal(rng);
        let m = k * (e + o.abs());
        if m > max {
            max = m;
            if max >= b {
                break;
            }
        }
    }
    max
}

/// Estimates `g(x) = P(sup B_t < x√t)` for the torus radial process.
pub fn sup_prob_torus(x: f64, grid: &TimeGrid, n_samples: usize, seed: StreamSeed, policy: ExecPolicy) -> Result<SupProbEstimate> {
    Ok(sup_prob_torus_multi(&[x], grid, n_samples, seed, policy)?.remove(0))
}

/// Torus barrier probabilities for several `x` from the same paths.
pub fn sup_prob_torus_multi(
    xs: &[f64],
    grid: &TimeGrid,
    n_samples: usize,
    seed: StreamSeed,
    policy: ExecPolicy,
) -> Result<Vec<SupProbEstimate>> {
    if xs.is_empty() || xs.iter().any(|&x| !(x > 0.0)) {
        return Err(domain("sup_prob_torus: every x must be positive"));
    }
    let st = grid.t_half().sqrt();
    let b_max = xs.iter().copied().fold(0.0, f64::max) * st;
    let n = grid.n_steps();
    let dt = grid.dt();
    let maxima = map_draws(n_samples, seed, policy, |_, rng| torus_max(n, dt, b_max, rng));
    Ok(xs
        .iter()
        .map(|&x| {
            let b = x * st;
            let bc = b - BARRIER_SHIFT * dt.sqrt();
            let codes: Vec<u8> = maxima.iter().map(|&m| barrier_code(m, b, bc)).collect();
            SupProbEstimate::from_codes(x, grid, &codes, sup_prob_torus_exact)
        })
        .collect())
}

/// Monte Carlo estimate with standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McValue {
    pub mean: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

impl From<&MeanAccumulator> for McValue {
    fn from(acc: &MeanAccumulator) -> Self {
        Self { mean: acc.mean(), std_error: acc.std_error(), n_samples: acc.count() }
    }
}

/// `P_b(inf R < x)` for a one-sided 3d Bessel process from `b`.
///
/// Paths run on `[0, t_half]` with a continuity-corrected barrier and stop at
/// the first crossing; survivors contribute the exact remaining probability `x/R_T`.
pub fn bessel_hit_probability(
    b: f64,
    x: f64,
    grid: &TimeGrid,
    n_samples: usize,
    seed: StreamSeed,
    policy: ExecPolicy,
) -> Result<McValue> {
    if !(0.0 < x && x < b) {
        return Err(domain(format!("bessel hitting: need 0 < x < b, got x = {x}, b = {b}")));
    }
    let dt = grid.dt();
    let sd = dt.sqrt();
    let xc = x + BARRIER_SHIFT * sd;
    let n = grid.n_steps();
    let draws = map_draws(n_samples, seed, policy, |_, rng| {
        let (mut p, mut q, mut r) = (b, 0.0, 0.0);
        let mut rad = b;
        for _ in 1..n {
            p += sd * normal(rng);
            q += sd * normal(rng);
            r += sd * normal(rng);
            rad = (p * p + q * q + r * r).sqrt();
            if rad <= xc {
                return 1.0;
            }
        }
        (x / rad).min(1.0)
    });
    let acc: MeanAccumulator = draws.into_iter().collect();
    Ok(McValue::from(&acc))
}

/// Density at `r` of `|(x + X, Y, Z)|` for a standard 3d Gaussian `(X, Y, Z)`.
pub fn bessel_time1_density(x: f64, r: f64) -> Result<f64> {
    if !(x >= 0.0) || !(r >= 0.0) {
        return Err(domain(format!("density: x = {x}, r = {r} must be non-negative")));
    }
    let c = (2.0 / std::f64::consts::PI).sqrt();
    if x == 0.0 {
        return Ok(c * r * r * (-0.5 * r * r).exp());
    }
    // (r/x) sinh(xr) e^{−(r²+x²)/2} = r e^{−(r−x)²/2} (1 − e^{−2xr}) / (2x)
    let d = r - x;
    Ok(c * r * (-0.5 * d * d).exp() * (-(-2.0 * x * r).exp_m1()) / (2.0 * x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_times_are_symmetric() {
        let g = TimeGrid::new(2.0, 5).unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g.time(g.center()), 0.0);
        assert_eq!(g.time(0), -2.0);
        assert_eq!(g.time(8), 2.0);
        assert!(TimeGrid::new(1.0, 1).is_err());
        assert!(TimeGrid::new(0.0, 4).is_err());
    }

    #[test]
    fn bm_and_torus_vanish_at_zero() {
        let g = TimeGrid::new(1.0, 33).unwrap();
        assert_eq!(sample_bm(&g, 3).values[g.center()], 0.0);
        let t = sample_torus_radial(&g, 3);
        assert_eq!(t.values[g.center()], 0.0);
        assert_eq!(t.values[0], t.values[g.len() - 1]);
    }

    #[test]
    fn bridge_endpoints() {
        let g = TimeGrid::new(3.0, 17).unwrap();
        let b = sample_bridge(&g, 11);
        assert_eq!(b.values[0], 0.0);
        assert_eq!(b.values[16], 0.0);
    }

    #[test]
    fn williams_rejects_supercritical_drift() {
        let p = LiouvilleParams::new(1.0, 1.0).unwrap();
        let g = TimeGrid::new(1.0, 10).unwrap();
        assert!(sample_williams(p.q_charge(), &p, &g, 1).is_err());
        assert!(sample_williams(p.q_charge() - 0.5, &p, &g, 1).is_ok());
    }

    #[test]
    fn density_rejects_negative_arguments() {
        assert!(bessel_time1_density(-1.0, 1.0).is_err());
        assert!(bessel_time1_density(1.0, -1.0).is_err());
    }
}
