//! Lateral log-correlated fields on the cylinder `ℝ × S¹` and the torus
//! `(−t, t] × S¹`: covariance kernels, the insertion Green's function and
//! three samplers (dense Cholesky, the Laplacian eigenbasis, and exact
//! per-angular-mode sampling used by the Monte Carlo experiments).

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};
use std::io::{Read, Write};
use std::sync::{Arc, OnceLock, RwLock};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::mc::rng_from_seed;
use crate::processes::TimeGrid;

/// Point `(s, θ)` of the cylinder, `θ` reduced to `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CylinderPoint {
    pub s: f64,
    pub theta: f64,
}

impl CylinderPoint {
    pub fn new(s: f64, theta: f64) -> Self {
        let mut th = theta.rem_euclid(TAU);
        if th >= TAU {
            th = 0.0;
        }
        Self { s, theta: th }
    }
}

/// `−log|1 − e^{−|Δs| + iΔθ}|`; `+∞` on the diagonal.
pub fn kernel_h_delta(ds: f64, dtheta: f64) -> f64 {
    let d = ds.abs();
    let q = (-d).exp();
    let sin_half = (0.5 * dtheta).sin();
    if q < 0.5 {
        -0.5 * (q * (q - 2.0 * dtheta.cos())).ln_1p()
    } else {
        let em = (-d).exp_m1();
        -0.5 * (em * em + 4.0 * q * sin_half * sin_half).ln()
    }
}

/// Cylinder kernel `H(p, p2) = log((e^{−s} ∨ e^{−s'}) / |e^{−s+iθ} − e^{−s'+iθ'}|)`.
pub fn kernel_h(p: CylinderPoint, p2: CylinderPoint) -> Result<f64> {
    let v = kernel_h_delta(p.s - p2.s, p.theta - p2.theta);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Diagonal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    CylinderH,
    TorusHt,
}

/// Covariance model of a lateral field.
///
/// `angular_cutoff = Some(M)` keeps the angular modes `1..=M` only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LateralCovarianceModel {
    pub kind: ModelKind,
    /// `∞` for the cylinder; serialized as `null`.
    #[serde(with = "infinite_as_null")]
    pub t_half: f64,
    pub n_periodization: usize,
    pub angular_cutoff: Option<usize>,
}

mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl LateralCovarianceModel {
    pub fn cylinder() -> Self {
        Self { kind: ModelKind::CylinderH, t_half: f64::INFINITY, n_periodization: 0, angular_cutoff: None }
    }

    /// Torus model with the default truncation `max(2, ⌈8/t⌉)`.
    pub fn torus(t_half: f64) -> Result<Self> {
        let n = ((8.0 / t_half).ceil() as usize).max(2);
        Self::torus_with(t_half, n)
    }

    pub fn torus_with(t_half: f64, n_periodization: usize) -> Result<Self> {
        if !(t_half > 0.0 && t_half.is_finite()) || n_periodization < 1 {
            return Err(domain(format!("torus model: t = {t_half}, n = {n_periodization}")));
        }
        Ok(Self { kind: ModelKind::TorusHt, t_half, n_periodization, angular_cutoff: None })
    }

    pub fn with_angular_cutoff(mut self, modes: usize) -> Self {
        self.angular_cutoff = Some(modes);
        self
    }

    /// Bound on the omitted images `|n| > N` of the periodised sum, for `|Δs| ≤ t`.
    pub fn tail_bound(&self) -> f64 {
        match self.kind {
            ModelKind::CylinderH => 0.0,
            ModelKind::TorusHt => {
                let t = self.t_half;
                let n = self.n_periodization as f64;
                2.0 * (-(2.0 * n + 1.0) * t).exp() / ((-(-2.0 * t).exp_m1()) * (-(-t).exp_m1()))
            }
        }
    }

    /// Diagonal of the mode-truncated kernel, `Σ_{m≤M} 1/m` or `Σ_{m≤M} coth(mt)/m`.
    pub fn truncated_variance(&self) -> Option<f64> {
        let m_max = self.angular_cutoff?;
        Some(
            (1..=m_max)
                .map(|m| {
                    let m = m as f64;
                    match self.kind {
                        ModelKind::CylinderH => 1.0 / m,
                        ModelKind::TorusHt => 1.0 / ((m * self.t_half).tanh() * m),
                    }
                })
                .sum(),
        )
    }

    pub fn covariance(&self, p: CylinderPoint, p2: CylinderPoint) -> Result<f64> {
        match self.kind {
            ModelKind::CylinderH => kernel_h(p, p2),
            ModelKind::TorusHt => kernel_ht(self, p, p2),
        }
    }
}

/// Reduces `Δs` into `(−t, t]`.
fn wrap_ds(ds: f64, t: f64) -> f64 {
    let period = 2.0 * t;
    let mut r = (ds + t).rem_euclid(period) - t;
    if r <= -t {
        r += period;
    }
    r
}

fn kernel_ht_delta(model: &LateralCovarianceModel, ds: f64, dtheta: f64) -> f64 {
    let t = model.t_half;
    let base = wrap_ds(ds, t);
    let n = model.n_periodization as i64;
    let mut sum = 0.0;
    for k in -n..=n {
        sum += kernel_h_delta(base + 2.0 * t * k as f64, dtheta);
    }
    sum
}

/// Periodised kernel `H_t = Σ_{|n| ≤ N} H(s, θ, s' + 2nt, θ')`.
pub fn kernel_ht(model: &LateralCovarianceModel, p: CylinderPoint, p2: CylinderPoint) -> Result<f64> {
    if model.kind != ModelKind::TorusHt {
        return Err(Error::ModelMismatch("kernel_ht needs a torus model".into()));
    }
    let v = kernel_ht_delta(model, p.s - p2.s, p.theta - p2.theta);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Diagonal)
    }
}

/// `G(0, s + iθ) = H((0, 0), (s, θ))`, the insertion Green's function on the cylinder.
pub fn green_insertion(s: f64, theta: f64) -> Result<f64> {
    kernel_h(CylinderPoint::new(0.0, 0.0), CylinderPoint::new(s, theta))
}

/// `G_t(0, s + iθ) = H_t((0, 0), (s, θ))` on the torus.
pub fn green_insertion_torus(model: &LateralCovarianceModel, s: f64, theta: f64) -> Result<f64> {
    kernel_ht(model, CylinderPoint::new(0.0, 0.0), CylinderPoint::new(s, theta))
}

/// `sup |H_t − H|` over all pairs of an `n × n` grid on `[−core, core] × S¹`.
pub fn green_decay_sup(t_half: f64, n: usize, core: f64) -> Result<f64> {
    let model = LateralCovarianceModel::torus(t_half)?;
    let pts: Vec<(f64, f64)> = (0..n)
        .flat_map(|i| {
            let s = -core + 2.0 * core * i as f64 / (n - 1) as f64;
            (0..n).map(move |j| (s, TAU * j as f64 / n as f64))
        })
        .collect();
    let mut sup: f64 = 0.0;
    for (a, pa) in pts.iter().enumerate() {
        for pb in &pts[a + 1..] {
            let ds = pa.0 - pb.0;
            let dth = pa.1 - pb.1;
            let diff = (kernel_ht_delta(&model, ds, dth) - kernel_h_delta(ds, dth)).abs();
            sup = sup.max(diff);
        }
    }
    Ok(sup)
}

/// Lattice `{s_k} × {2πj/n_theta}` whose rows follow a [`TimeGrid`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldGrid {
    pub time: TimeGrid,
    pub n_theta: usize,
}

impl FieldGrid {
    pub fn new(time: TimeGrid, n_theta: usize) -> Result<Self> {
        if n_theta < 2 {
            return Err(Error::Grid(format!("n_theta = {n_theta} must be at least 2")));
        }
        Ok(Self { time, n_theta })
    }

    /// Lattice with angular spacing `2π/n_theta` and longitudinal spacing at most the same.
    pub fn square(t_half: f64, n_theta: usize) -> Result<Self> {
        Self::new(TimeGrid::with_max_step(t_half, TAU / n_theta as f64)?, n_theta)
    }

    pub fn n_rows(&self) -> usize {
        self.time.len()
    }

    pub fn n_sites(&self) -> usize {
        self.n_rows() * self.n_theta
    }

    pub fn d_theta(&self) -> f64 {
        TAU / self.n_theta as f64
    }

    pub fn ds(&self) -> f64 {
        self.time.dt()
    }

    pub fn spacing(&self) -> f64 {
        self.ds().min(self.d_theta())
    }

    pub fn theta(&self, j: usize) -> f64 {
        self.d_theta() * j as f64
    }

    pub fn point(&self, k: usize, j: usize) -> CylinderPoint {
        CylinderPoint::new(self.time.time(k), self.theta(j))
    }

    /// Trapezoid weight of row `k` times the angular spacing.
    pub fn cell_area(&self, k: usize) -> f64 {
        let w = if k == 0 || k + 1 == self.n_rows() { 0.5 } else { 1.0 };
        w * self.ds() * self.d_theta()
    }

    /// Column-major site index.
    pub fn index(&self, k: usize, j: usize) -> usize {
        k + j * self.n_rows()
    }
}

/// One lateral field sample, values stored column-major (`s` fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub grid: FieldGrid,
    pub values: Vec<f64>,
    pub model: LateralCovarianceModel,
    pub eps: f64,
    pub seed: u64,
}

impl FieldSample {
    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.values[self.grid.index(k, j)]
    }

    /// `log(1/ε)`, the per-site variance of the generating model.
    pub fn variance(&self) -> f64 {
        -self.eps.ln()
    }
}

#[derive(Serialize, Deserialize)]
struct FieldHeader {
    n_rows: usize,
    n_theta: usize,
    t_half: f64,
    n_steps: usize,
    eps: f64,
    seed: u64,
    model: LateralCovarianceModel,
}

const FIELD_MAGIC: &[u8; 8] = b"LVFIELD1";

/// Binary layout: magic, header length (u64 LE), JSON header, values as f64 LE in column-major order.
pub fn write_field<W: Write>(field: &FieldSample, mut w: W) -> Result<()> {
    let header = FieldHeader {
        n_rows: field.grid.n_rows(),
        n_theta: field.grid.n_theta,
        t_half: field.grid.time.t_half(),
        n_steps: field.grid.time.n_steps(),
        eps: field.eps,
        seed: field.seed,
        model: field.model,
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Io(e.to_string()))?;
    let io = |e: std::io::Error| Error::Io(e.to_string());
    w.write_all(FIELD_MAGIC).map_err(io)?;
    w.write_all(&(json.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&json).map_err(io)?;
    for v in &field.values {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    Ok(())
}

pub fn read_field<R: Read>(mut r: R) -> Result<FieldSample> {
    let io = |e: std::io::Error| Error::Io(e.to_string());
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != FIELD_MAGIC {
        return Err(Error::Io("not a field file".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len).map_err(io)?;
    let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
    r.read_exact(&mut json).map_err(io)?;
    let h: FieldHeader = serde_json::from_slice(&json).map_err(|e| Error::Io(e.to_string()))?;
    let grid = FieldGrid::new(TimeGrid::new(h.t_half, h.n_steps)?, h.n_theta)?;
    if grid.n_rows() != h.n_rows {
        return Err(Error::Io("inconsistent header".into()));
    }
    let mut values = Vec::with_capacity(grid.n_sites());
    let mut buf = [0u8; 8];
    for _ in 0..grid.n_sites() {
        r.read_exact(&mut buf).map_err(io)?;
        values.push(f64::from_le_bytes(buf));
    }
    Ok(FieldSample { grid, values, model: h.model, eps: h.eps, seed: h.seed })
}

/// Default cap on lattice sites for the dense sampler.
pub const CHOLESKY_CAP: usize = 4096;
/// Largest admissible `ε / spacing` for the dense sampler.
pub const MAX_EPS_RATIO: f64 = 0.125;
const JITTER_START: f64 = 1e-12;
const JITTER_MAX: f64 = 1e-8;

type FactorKey = (ModelKind, u64, usize, u64, usize, usize, u64);

fn factor_cache() -> &'static RwLock<HashMap<FactorKey, Arc<DMatrix<f64>>>> {
    static CACHE: OnceLock<RwLock<HashMap<FactorKey, Arc<DMatrix<f64>>>>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Sites that carry independent values: on the torus the row `s = −t` repeats `s = t`.
fn free_rows(model: &LateralCovarianceModel, grid: &FieldGrid) -> std::ops::Range<usize> {
    match model.kind {
        ModelKind::CylinderH => 0..grid.n_rows(),
        ModelKind::TorusHt => 1..grid.n_rows(),
    }
}

fn cholesky_factor(model: &LateralCovarianceModel, grid: &FieldGrid, eps: f64) -> Result<Arc<DMatrix<f64>>> {
    let key: FactorKey = (
        model.kind,
        model.t_half.to_bits(),
        model.n_periodization,
        grid.time.t_half().to_bits(),
        grid.time.n_steps(),
        grid.n_theta,
        eps.to_bits(),
    );
    if let Some(f) = factor_cache().read().ok().and_then(|c| c.get(&key).cloned()) {
        return Ok(f);
    }
    let rows: Vec<usize> = free_rows(model, grid).collect();
    let pts: Vec<CylinderPoint> = (0..grid.n_theta)
        .flat_map(|j| rows.iter().map(move |&k| (k, j)))
        .map(|(k, j)| grid.point(k, j))
        .collect();
    let n = pts.len();
    let diag = -eps.ln();
    let mut cov = DMatrix::<f64>::zeros(n, n);
    for a in 0..n {
        cov[(a, a)] = diag;
        for b in 0..a {
            let v = model.covariance(pts[a], pts[b])?;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    let mut jitter = JITTER_START;
    let factor = loop {
        let mut m = cov.clone();
        for a in 0..n {
            m[(a, a)] += jitter;
        }
        if let Some(ch) = m.cholesky() {
            break ch.l();
        }
        jitter *= 10.0;
        if jitter > JITTER_MAX * (1.0 + 1e-9) {
            return Err(Error::NotPositiveDefinite { jitter: jitter / 10.0 });
        }
    };
    let factor = Arc::new(factor);
    if let Ok(mut c) = factor_cache().write() {
        c.entry(key).or_insert_with(|| factor.clone());
    }
    Ok(factor)
}

/// Dense Cholesky sample with diagonal `log(1/ε)` and exact kernel off the diagonal.
pub fn sample_lateral_cholesky(model: &LateralCovarianceModel, grid: &FieldGrid, eps: f64, seed: u64) -> Result<FieldSample> {
    sample_lateral_cholesky_capped(model, grid, eps, seed, CHOLESKY_CAP)
}

pub fn sample_lateral_cholesky_capped(
    model: &LateralCovarianceModel,
    grid: &FieldGrid,
    eps: f64,
    seed: u64,
    cap: usize,
) -> Result<FieldSample> {
    if grid.n_sites() > cap {
        return Err(Error::SizeCap { sites: grid.n_sites(), cap });
    }
    if !(eps > 0.0 && eps <= MAX_EPS_RATIO * grid.spacing() * (1.0 + 1e-12)) {
        return Err(domain(format!(
            "eps = {eps} must lie in (0, {MAX_EPS_RATIO}·spacing = {}]",
            MAX_EPS_RATIO * grid.spacing()
        )));
    }
    if model.kind == ModelKind::TorusHt && (model.t_half - grid.time.t_half()).abs() > 1e-12 * model.t_half {
        return Err(Error::ModelMismatch("torus model and grid disagree on t".into()));
    }
    let l = cholesky_factor(model, grid, eps)?;
    let mut rng = rng_from_seed(seed);
    let z = DVector::<f64>::from_fn(l.nrows(), |_, _| rng.sample(StandardNormal));
    let y = &*l * z;
    let rows: Vec<usize> = free_rows(model, grid).collect();
    let mut values = vec![0.0; grid.n_sites()];
    let mut idx = 0;
    for j in 0..grid.n_theta {
        for &k in &rows {
            values[grid.index(k, j)] = y[idx];
            idx += 1;
        }
        if model.kind == ModelKind::TorusHt {
            values[grid.index(0, j)] = values[grid.index(grid.n_rows() - 1, j)];
        }
    }
    Ok(FieldSample { grid: *grid, values, model: *model, eps, seed })
}

/// Mode families of the torus Laplacian eigenbasis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    EE,
    EO,
    OE,
    OO,
}

/// Which part of the eigen-expansion to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpectralPart {
    Full,
    /// Angular modes `m ≥ 1`.
    Lateral,
    /// The `m = 0` modes.
    Radial,
}

/// Eigenbasis `f^{ee,eo,oe,oo}_{n,m}` of `−Δ` on the torus with cutoffs `n ≤ n_max`, `m ≤ m_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralBasis {
    pub t_half: f64,
    pub n_max: usize,
    pub m_max: usize,
    /// `√(2π/λ_{n,m})`, row-major in `(n, m)`; zero at `(0, 0)`.
    pub coefficients: Vec<f64>,
}

impl SpectralBasis {
    pub fn new(t_half: f64, n_max: usize, m_max: usize) -> Result<Self> {
        if n_max < 8 || m_max < 8 {
            return Err(domain("spectral cutoffs must be at least 8"));
        }
        if !(t_half > 0.0) {
            return Err(domain("t must be positive"));
        }
        let mut coefficients = Vec::with_capacity((n_max + 1) * (m_max + 1));
        for n in 0..=n_max {
            for m in 0..=m_max {
                coefficients.push(if n == 0 && m == 0 {
                    0.0
                } else {
                    (TAU / eigenvalue(t_half, n, m)).sqrt()
                });
            }
        }
        Ok(Self { t_half, n_max, m_max, coefficients })
    }

    pub fn eigenvalue(&self, n: usize, m: usize) -> f64 {
        eigenvalue(self.t_half, n, m)
    }

    /// Normalised eigenfunction; identically zero families return 0.
    pub fn mode(&self, family: Family, n: usize, m: usize, s: f64, theta: f64) -> f64 {
        let t = self.t_half;
        let arg = n as f64 * PI * s / t;
        let (ds, dm) = ((n == 0) as u8 as f64, (m == 0) as u8 as f64);
        let mf = m as f64 * theta;
        match family {
            Family::EE => arg.cos() * mf.cos() / ((1.0 + ds) * (1.0 + dm) * PI * t).sqrt(),
            Family::EO => arg.cos() * mf.sin() / ((1.0 + ds) * PI * t).sqrt(),
            Family::OE => arg.sin() * mf.cos() / ((1.0 + dm) * PI * t).sqrt(),
            Family::OO => arg.sin() * mf.sin() / (PI * t).sqrt(),
        }
    }

    fn m_range(&self, part: SpectralPart) -> std::ops::RangeInclusive<usize> {
        match part {
            SpectralPart::Full => 0..=self.m_max,
            SpectralPart::Lateral => 1..=self.m_max,
            SpectralPart::Radial => 0..=0,
        }
    }

    /// Covariance of the truncated expansion between two points.
    pub fn truncated_covariance(&self, part: SpectralPart, p: CylinderPoint, q: CylinderPoint) -> f64 {
        let t = self.t_half;
        let ds = p.s - q.s;
        let dth = p.theta - q.theta;
        let mut sum = 0.0;
        for m in self.m_range(part) {
            let mut inner = 0.0;
            for n in 0..=self.n_max {
                if n == 0 && m == 0 {
                    continue;
                }
                let w = if n == 0 { 1.0 } else { 2.0 };
                inner += w * (n as f64 * PI * ds / t).cos() / (t * self.eigenvalue(n, m));
            }
            let w = if m == 0 { 0.5 } else { 1.0 };
            sum += w * inner * (m as f64 * dth).cos();
        }
        sum
    }

    /// One draw of the truncated field evaluated at `points`.
    pub fn sample_at(&self, part: SpectralPart, points: &[CylinderPoint], rng: &mut ChaCha8Rng) -> Vec<f64> {
        let nn = self.n_max + 1;
        let mm = self.m_max + 1;
        let norm = 1.0 / (PI * self.t_half).sqrt();
        // scaled amplitudes per family, row-major (n, m)
        let mut amp = [vec![0.0; nn * mm], vec![0.0; nn * mm], vec![0.0; nn * mm], vec![0.0; nn * mm]];
        for n in 0..nn {
            for m in self.m_range(part) {
                if n == 0 && m == 0 {
                    continue;
                }
                let c = self.coefficients[n * mm + m] * norm;
                let en = if n == 0 { std::f64::consts::FRAC_1_SQRT_2 } else { 1.0 };
                let em = if m == 0 { std::f64::consts::FRAC_1_SQRT_2 } else { 1.0 };
                let i = n * mm + m;
                amp[0][i] = c * en * em * rng.sample::<f64, _>(StandardNormal);
                if m > 0 {
                    amp[1][i] = c * en * rng.sample::<f64, _>(StandardNormal);
                }
                if n > 0 {
                    amp[2][i] = c * em * rng.sample::<f64, _>(StandardNormal);
                }
                if n > 0 && m > 0 {
                    amp[3][i] = c * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
        let mut cm = vec![0.0; mm];
        let mut sm = vec![0.0; mm];
        points
            .iter()
            .map(|p| {
                for m in 0..mm {
                    let a = m as f64 * p.theta;
                    cm[m] = a.cos();
                    sm[m] = a.sin();
                }
                let mut v = 0.0;
                for n in 0..nn {
                    let a = n as f64 * PI * p.s / self.t_half;
                    let (sn, cn) = a.sin_cos();
                    let row = n * mm;
                    let (mut even, mut odd) = (0.0, 0.0);
                    for m in 0..mm {
                        even += amp[0][row + m] * cm[m] + amp[1][row + m] * sm[m];
                        odd += amp[2][row + m] * cm[m] + amp[3][row + m] * sm[m];
                    }
                    v += cn * even + sn * odd;
                }
                v
            })
            .collect()
    }
}

/// `λ_{n,m} = n²π²/t² + m²`.
pub fn eigenvalue(t_half: f64, n: usize, m: usize) -> f64 {
    let a = n as f64 * PI / t_half;
    a * a + (m * m) as f64
}

/// Truncated eigen-expansion of the torus field on a lattice.
pub fn sample_torus_gff_spectral(basis: &SpectralBasis, grid: &FieldGrid, seed: u64) -> Result<FieldSample> {
    if (basis.t_half - grid.time.t_half()).abs() > 1e-12 * basis.t_half {
        return Err(Error::ModelMismatch("basis and grid disagree on t".into()));
    }
    let pts: Vec<CylinderPoint> = (0..grid.n_theta)
        .flat_map(|j| (0..grid.n_rows()).map(move |k| (k, j)))
        .map(|(k, j)| grid.point(k, j))
        .collect();
    let values = basis.sample_at(SpectralPart::Full, &pts, &mut rng_from_seed(seed));
    let origin = CylinderPoint::new(0.0, 0.0);
    let lateral_var = basis.truncated_covariance(SpectralPart::Lateral, origin, origin);
    let model = LateralCovarianceModel::torus(basis.t_half)?.with_angular_cutoff(basis.m_max);
    Ok(FieldSample { grid: *grid, values, model, eps: (-lateral_var).exp(), seed })
}

/// Exact sampler of the angular-mode truncation of `H` or `H_t`.
///
/// Mode `m` carries two independent coefficient processes in `s` with
/// covariance `e^{−m|Δs|}/m` (cylinder, an Ornstein–Uhlenbeck recursion) or its
/// `2t`-periodisation (torus, circulant embedding through one FFT).
pub struct AngularModeSampler {
    model: LateralCovarianceModel,
    grid: FieldGrid,
    modes: usize,
    cos_table: Vec<f64>,
    sin_table: Vec<f64>,
    plan: Option<Arc<dyn Fft<f64>>>,
    spectra: Vec<Vec<f64>>,
    variance: f64,
}

impl std::fmt::Debug for AngularModeSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AngularModeSampler")
            .field("model", &self.model)
            .field("grid", &self.grid)
            .field("modes", &self.modes)
            .finish()
    }
}

impl AngularModeSampler {
    pub fn new(kind: ModelKind, grid: FieldGrid, modes: usize) -> Result<Self> {
        if modes == 0 || grid.n_theta < 2 * modes + 1 {
            return Err(domain(format!(
                "angular modes {modes} need n_theta >= 2M + 1, got {}",
                grid.n_theta
            )));
        }
        let t = grid.time.t_half();
        let model = match kind {
            ModelKind::CylinderH => LateralCovarianceModel::cylinder(),
            ModelKind::TorusHt => LateralCovarianceModel::torus(t)?,
        }
        .with_angular_cutoff(modes);
        let nt = grid.n_theta;
        let mut cos_table = vec![0.0; modes * nt];
        let mut sin_table = vec![0.0; modes * nt];
        for m in 1..=modes {
            for j in 0..nt {
                let a = (m * j % nt) as f64 * TAU / nt as f64;
                cos_table[(m - 1) * nt + j] = a.cos();
                sin_table[(m - 1) * nt + j] = a.sin();
            }
        }
        let ds = grid.ds();
        let (plan, spectra) = match kind {
            ModelKind::CylinderH => (None, Vec::new()),
            ModelKind::TorusHt => {
                let l = 2 * (grid.time.n_steps() - 1);
                let plan = FftPlanner::<f64>::new().plan_fft_forward(l);
                let mut spectra = Vec::with_capacity(modes);
                for m in 1..=modes {
                    let mf = m as f64;
                    let denom = mf * -(-2.0 * mf * t).exp_m1();
                    let mut buf: Vec<Complex<f64>> = (0..l)
                        .map(|j| {
                            let u = j as f64 * ds;
                            Complex::new(((-mf * u).exp() + (-mf * (2.0 * t - u)).exp()) / denom, 0.0)
                        })
                        .collect();
                    plan.process(&mut buf);
                    spectra.push(buf.iter().map(|c| (c.re.max(0.0) / l as f64).sqrt()).collect());
                }
                (Some(plan), spectra)
            }
        };
        let variance = model.truncated_variance().unwrap_or(0.0);
        Ok(Self { model, grid, modes, cos_table, sin_table, plan, spectra, variance })
    }

    pub fn model(&self) -> &LateralCovarianceModel {
        &self.model
    }

    pub fn grid(&self) -> &FieldGrid {
        &self.grid
    }

    /// Per-site variance `log(1/ε)` of the truncated model.
    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// Coefficient processes `(a_m(s_k), b_m(s_k))`, mode-major.
    fn coefficients(&self, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
        let rows = self.grid.n_rows();
        let mut a = vec![0.0; self.modes * rows];
        let mut b = vec![0.0; self.modes * rows];
        match &self.plan {
            None => {
                let ds = self.grid.ds();
                for m in 1..=self.modes {
                    let mf = m as f64;
                    let rho = (-mf * ds).exp();
                    let sd0 = (1.0 / mf).sqrt();
                    let innov = (-(-2.0 * mf * ds).exp_m1() / mf).sqrt();
                    for out in [&mut a, &mut b] {
                        let row = &mut out[(m - 1) * rows..m * rows];
                        let mut x = sd0 * rng.sample::<f64, _>(StandardNormal);
                        row[0] = x;
                        for v in row.iter_mut().skip(1) {
                            x = rho * x + innov * rng.sample::<f64, _>(StandardNormal);
                            *v = x;
                        }
                    }
                }
            }
            Some(plan) => {
                let l = plan.len();
                let mut buf = vec![Complex::new(0.0, 0.0); l];
                for m in 1..=self.modes {
                    let spec = &self.spectra[m - 1];
                    for (k, c) in buf.iter_mut().enumerate() {
                        let re: f64 = rng.sample(StandardNormal);
                        let im: f64 = rng.sample(StandardNormal);
                        *c = Complex::new(spec[k] * re, spec[k] * im);
                    }
                    plan.process(&mut buf);
                    for k in 0..rows {
                        let c = buf[k % l];
                        a[(m - 1) * rows + k] = c.re;
                        b[(m - 1) * rows + k] = c.im;
                    }
                }
            }
        }
        (a, b)
    }

    /// Lattice values row-major (`θ` fastest): `Y(s_k, θ_j)` at index `k·n_theta + j`.
    pub fn sample_rows(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let rows = self.grid.n_rows();
        let nt = self.grid.n_theta;
        let (a, b) = self.coefficients(rng);
        let mut out = vec![0.0; rows * nt];
        for m in 0..self.modes {
            let ct = &self.cos_table[m * nt..(m + 1) * nt];
            let st = &self.sin_table[m * nt..(m + 1) * nt];
            for k in 0..rows {
                let (am, bm) = (a[m * rows + k], b[m * rows + k]);
                let row = &mut out[k * nt..(k + 1) * nt];
                for j in 0..nt {
                    row[j] += am * ct[j] + bm * st[j];
                }
            }
        }
        out
    }

    /// Sample packaged as a column-major [`FieldSample`].
    pub fn sample(&self, seed: u64) -> FieldSample {
        let rows = self.grid.n_rows();
        let nt = self.grid.n_theta;
        let flat = self.sample_rows(&mut rng_from_seed(seed));
        let mut values = vec![0.0; rows * nt];
        for k in 0..rows {
            for j in 0..nt {
                values[self.grid.index(k, j)] = flat[k * nt + j];
            }
        }
        FieldSample { grid: self.grid, values, model: self.model, eps: (-self.variance).exp(), seed }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_is_reduced() {
        let p = CylinderPoint::new(0.0, -0.5);
        assert!((p.theta - (TAU - 0.5)).abs() < 1e-15);
        assert_eq!(CylinderPoint::new(1.0, TAU).theta, 0.0);
    }

    #[test]
    fn diagonal_is_rejected() {
        let p = CylinderPoint::new(0.3, 1.0);
        assert_eq!(kernel_h(p, p), Err(Error::Diagonal));
        let m = LateralCovarianceModel::torus(2.0).unwrap();
        let shifted = CylinderPoint::new(0.3 + 4.0, 1.0);
        assert_eq!(kernel_ht(&m, p, shifted), Err(Error::Diagonal));
        assert!(green_insertion(0.0, 0.0).is_err());
    }

    #[test]
    fn wrap_lands_in_half_open_interval() {
        for ds in [-7.9, -4.0, -2.0, 0.0, 2.0, 3.999, 4.0, 11.0] {
            let w = wrap_ds(ds, 2.0);
            assert!(w > -2.0 && w <= 2.0, "{ds} -> {w}");
            assert!(((ds - w) / 4.0 - ((ds - w) / 4.0).round()).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_large_eps_and_lattices() {
        let g = FieldGrid::square(1.0, 8).unwrap();
        let m = LateralCovarianceModel::cylinder();
        assert!(sample_lateral_cholesky(&m, &g, g.spacing(), 1).is_err());
        assert!(matches!(
            sample_lateral_cholesky_capped(&m, &g, g.spacing() / 8.0, 1, 10),
            Err(Error::SizeCap { .. })
        ));
    }

    #[test]
    fn angular_sampler_needs_enough_columns() {
        let g = FieldGrid::square(1.0, 8).unwrap();
        assert!(AngularModeSampler::new(ModelKind::CylinderH, g, 4).is_err());
        assert!(AngularModeSampler::new(ModelKind::CylinderH, g, 3).is_ok());
    }
}
