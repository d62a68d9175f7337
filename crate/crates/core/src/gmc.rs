//! Gaussian multiplicative chaos masses and their negative moments.
//!
//! [`z_mass`] and [`z_mass_torus`] evaluate the weighted masses on explicit
//! lattice samples. [`ChaosGenerator`] is the Monte Carlo workhorse: it draws
//! the radial path on a fine grid and the lateral field by exact angular-mode
//! sampling, and returns coupled cylinder and torus masses from one stream.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::fields::{
    green_insertion, kernel_ht, AngularModeSampler, CylinderPoint, FieldGrid, FieldSample, LateralCovarianceModel,
    ModelKind,
};
use crate::mc::{map_draws, ExecPolicy, MeanAccumulator, StreamSeed};
use crate::processes::{sample_coupled_radial_with, PathKind, PathSample, SupEvent, TimeGrid};
use crate::special_functions::LiouvilleParams;

/// Per-cell chaos masses `e^{γY − ½γ² log(1/ε)} · area`, column-major like the field.
pub fn chaos_cells(field: &FieldSample, gamma: f64) -> Vec<f64> {
    let var = field.variance();
    let g = &field.grid;
    let mut out = vec![0.0; g.n_sites()];
    for j in 0..g.n_theta {
        for k in 0..g.n_rows() {
            let i = g.index(k, j);
            out[i] = (gamma * field.values[i] - 0.5 * gamma * gamma * var).exp() * g.cell_area(k);
        }
    }
    out
}

/// A weighted chaos mass together with what produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChaosMass {
    pub value: f64,
    pub window: (f64, f64),
    pub lambda_drift: f64,
    pub alpha: f64,
    pub t_half: f64,
    pub radial_seed: u64,
    pub lateral_seed: u64,
    pub grid: FieldGrid,
}

fn window_rows(grid: &FieldGrid, window: (f64, f64)) -> Result<Vec<usize>> {
    let t = grid.time.t_half();
    let tol = 1e-12 * t;
    let (lo, hi) = window;
    if !(lo < hi) || lo < -t - tol || hi > t + tol {
        return Err(Error::Window(format!("window ({lo}, {hi}) not inside [−{t}, {t}]")));
    }
    let rows: Vec<usize> = (0..grid.n_rows())
        .filter(|&k| {
            let s = grid.time.time(k);
            s >= lo - tol && s <= hi + tol
        })
        .collect();
    if rows.is_empty() {
        return Err(Error::Window(format!("window ({lo}, {hi}) contains no lattice row")));
    }
    if rows == [grid.time.center()] {
        return Err(Error::InsertionOverlap);
    }
    Ok(rows)
}

fn check_shared_grid(radial: &PathSample, lateral: &FieldSample) -> Result<()> {
    if radial.grid != lateral.grid.time {
        return Err(Error::Grid("radial path and lateral field must share the time grid".into()));
    }
    Ok(())
}

fn weighted_mass<G: Fn(f64, f64) -> Result<f64>>(
    rows: &[usize],
    radial: &PathSample,
    lateral: &FieldSample,
    gamma: f64,
    alpha: f64,
    drift: f64,
    green: G,
) -> Result<f64> {
    let g = &lateral.grid;
    let cells = chaos_cells(lateral, gamma);
    let center = g.time.center();
    let mut sum = crate::mc::CompensatedSum::default();
    for &k in rows {
        let s = g.time.time(k);
        let radial_part = radial.values[k] + drift * s.abs();
        for j in 0..g.n_theta {
            if k == center && j == 0 {
                continue;
            }
            let w = gamma * (radial_part + alpha * green(s, g.theta(j))?);
            sum.add(w.exp() * cells[g.index(k, j)]);
        }
    }
    Ok(sum.value())
}

/// `Z = Σ_cells e^{γ(B_s + (λ−Q)|s| + αG(0, s+iθ))} · cell mass` over the window, insertion cell excluded.
pub fn z_mass(
    lambda: f64,
    alpha: f64,
    window: (f64, f64),
    radial: &PathSample,
    lateral: &FieldSample,
    params: &LiouvilleParams,
) -> Result<ChaosMass> {
    let q = params.q_charge();
    if !(alpha > 0.0 && alpha < q) {
        return Err(domain(format!("alpha = {alpha} must lie in (0, Q = {q})")));
    }
    check_shared_grid(radial, lateral)?;
    let rows = window_rows(&lateral.grid, window)?;
    let value = weighted_mass(&rows, radial, lateral, params.gamma(), alpha, lambda - q, green_insertion)?;
    Ok(ChaosMass {
        value,
        window,
        lambda_drift: lambda,
        alpha,
        t_half: lateral.grid.time.t_half(),
        radial_seed: radial.seed,
        lateral_seed: lateral.seed,
        grid: lateral.grid,
    })
}

/// `Z̃_t = Σ_cells e^{γ(B_t(s) + αG_t(0, s+iθ))} · cell mass` over the whole torus.
pub fn z_mass_torus(alpha: f64, radial: &PathSample, lateral: &FieldSample, params: &LiouvilleParams) -> Result<ChaosMass> {
    if lateral.model.kind != ModelKind::TorusHt {
        return Err(Error::ModelMismatch("torus mass needs a TorusHt lateral field".into()));
    }
    if radial.kind != PathKind::TorusRadial {
        return Err(Error::ModelMismatch("torus mass needs a TorusRadial path".into()));
    }
    let q = params.q_charge();
    if !(alpha > 0.0 && alpha < q) {
        return Err(domain(format!("alpha = {alpha} must lie in (0, Q = {q})")));
    }
    check_shared_grid(radial, lateral)?;
    let t = lateral.grid.time.t_half();
    let model = LateralCovarianceModel::torus(t)?;
    let origin = CylinderPoint::new(0.0, 0.0);
    let rows: Vec<usize> = (0..lateral.grid.n_rows()).collect();
    let green = |s: f64, th: f64| kernel_ht(&model, origin, CylinderPoint::new(s, th));
    let value = weighted_mass(&rows, radial, lateral, params.gamma(), alpha, 0.0, green)?;
    Ok(ChaosMass {
        value,
        window: (-t, t),
        lambda_drift: q,
        alpha,
        t_half: t,
        radial_seed: radial.seed,
        lateral_seed: lateral.seed,
        grid: lateral.grid,
    })
}

/// Which masses a [`ChaosGenerator`] computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Geometry {
    Cylinder,
    Torus,
    Both,
}

impl Geometry {
    fn cylinder(self) -> bool {
        matches!(self, Geometry::Cylinder | Geometry::Both)
    }

    fn torus(self) -> bool {
        matches!(self, Geometry::Torus | Geometry::Both)
    }
}

/// Insertion Green's function used for the torus mass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TorusGreen {
    Periodized,
    /// `G(0, ·)` of the cylinder in place of `G_t(0, ·)`.
    Cylinder,
}

/// Resolution and model knobs of the Monte Carlo mass generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChaosConfig {
    pub alpha: f64,
    /// Drift parameter `λ`; `λ = Q` is the driftless critical case.
    pub lambda: f64,
    pub t_half: f64,
    pub n_theta: usize,
    pub modes: usize,
    pub radial_substeps: usize,
    /// Rows with `|s| < core_half` form the core mass.
    pub core_half: f64,
    pub geometry: Geometry,
    pub torus_green: TorusGreen,
    /// Variance `c ≥ 0` of an independent scalar added to the lateral field.
    pub extra_variance: f64,
    /// Rows outside `[lo, hi]` carry no mass; `None` keeps the whole strip.
    pub window: Option<(f64, f64)>,
}

impl ChaosConfig {
    pub fn critical(params: &LiouvilleParams, alpha: f64, t_half: f64) -> Self {
        Self {
            alpha,
            lambda: params.q_charge(),
            t_half,
            n_theta: 32,
            modes: 15,
            radial_substeps: 8,
            core_half: t_half,
            geometry: Geometry::Both,
            torus_green: TorusGreen::Periodized,
            extra_variance: 0.0,
            window: None,
        }
    }
}

/// One coupled draw. Absent geometries carry `NaN`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassDraw {
    pub cylinder: f64,
    pub torus: f64,
    pub cylinder_core: f64,
    pub torus_core: f64,
    /// Supremum of the cylinder radial path on the fine grid.
    pub sup: f64,
    pub sup_torus: f64,
    /// Cylinder radial path at `s = t` and `s = −t`.
    pub b_plus: f64,
    pub b_minus: f64,
}

/// Something that produces i.i.d. masses with a radial supremum attached.
pub trait MassGenerator: Sync {
    /// Returns `(mass, sup of the radial path)`.
    fn sample(&self, rng: &mut ChaCha8Rng) -> (f64, f64);
}

/// Precomputed sampler of coupled cylinder and torus masses.
#[derive(Debug)]
pub struct ChaosGenerator {
    config: ChaosConfig,
    gamma: f64,
    grid: FieldGrid,
    fine: TimeGrid,
    cyl: Option<(AngularModeSampler, Vec<f64>)>,
    tor: Option<(AngularModeSampler, Vec<f64>)>,
    drift: Vec<f64>,
    core_rows: Vec<bool>,
}

impl ChaosGenerator {
    pub fn new(params: &LiouvilleParams, config: ChaosConfig) -> Result<Self> {
        let q = params.q_charge();
        let gamma = params.gamma();
        if !(config.alpha > 0.0 && config.alpha < q) {
            return Err(domain(format!("alpha = {} must lie in (0, Q = {q})", config.alpha)));
        }
        if config.lambda > q + 1e-12 {
            return Err(domain(format!("lambda = {} must not exceed Q = {q}", config.lambda)));
        }
        if config.radial_substeps == 0 || !config.radial_substeps.is_multiple_of(2) {
            return Err(domain("radial_substeps must be a positive even integer"));
        }
        if !(config.extra_variance >= 0.0) {
            return Err(domain("extra_variance must be non-negative"));
        }
        let grid = FieldGrid::square(config.t_half, config.n_theta)?;
        let fine = grid.time.refine(config.radial_substeps)?;
        let rows = grid.n_rows();
        let nt = grid.n_theta;
        let dth = grid.d_theta();
        let center = grid.time.center();
        let build = |kind: ModelKind| -> Result<(AngularModeSampler, Vec<f64>)> {
            let sampler = AngularModeSampler::new(kind, grid, config.modes)?;
            let var = sampler.variance() + config.extra_variance;
            let model = LateralCovarianceModel::torus(config.t_half)?;
            let origin = CylinderPoint::new(0.0, 0.0);
            let mut w = vec![0.0; rows * nt];
            for k in 0..rows {
                let s = grid.time.time(k);
                let outside = config.window.is_some_and(|(lo, hi)| s < lo - 1e-12 || s > hi + 1e-12);
                for j in 0..nt {
                    if outside || (k == center && j == 0) {
                        continue;
                    }
                    let th = grid.theta(j);
                    let g = match (kind, config.torus_green) {
                        (ModelKind::TorusHt, TorusGreen::Periodized) => {
                            kernel_ht(&model, origin, CylinderPoint::new(s, th))?
                        }
                        _ => green_insertion(s, th)?,
                    };
                    w[k * nt + j] = (gamma * config.alpha * g - 0.5 * gamma * gamma * var).exp() * dth;
                }
            }
            Ok((sampler, w))
        };
        let cyl = if config.geometry.cylinder() { Some(build(ModelKind::CylinderH)?) } else { None };
        let tor = if config.geometry.torus() { Some(build(ModelKind::TorusHt)?) } else { None };
        let drift_rate = gamma * (config.lambda - q);
        let drift = (0..fine.len()).map(|i| (drift_rate * fine.time(i).abs()).exp()).collect();
        let core_rows = (0..rows).map(|k| grid.time.time(k).abs() < config.core_half).collect();
        Ok(Self { config, gamma, grid, fine, cyl, tor, drift, core_rows })
    }

    pub fn config(&self) -> &ChaosConfig {
        &self.config
    }

    pub fn grid(&self) -> &FieldGrid {
        &self.grid
    }

    /// `∫_{row cell} e^{γ path + drift} ds` for every lattice row, trapezoid on the fine grid.
    fn radial_rows(&self, path: &[f64], with_drift: bool) -> Vec<f64> {
        let sub = self.config.radial_substeps;
        let half = sub / 2;
        let dt = self.fine.dt();
        let mut out = vec![0.0; self.grid.n_rows()];
        let f = |i: usize| {
            let e = (self.gamma * path[i]).exp();
            if with_drift {
                e * self.drift[i]
            } else {
                e
            }
        };
        let mut prev = f(0);
        for i in 0..self.fine.len() - 1 {
            let next = f(i + 1);
            out[(i + half) / sub] += 0.5 * (prev + next) * dt;
            prev = next;
        }
        out
    }

    fn lateral_rows(&self, sampler: &AngularModeSampler, weights: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        let nt = self.grid.n_theta;
        let y = sampler.sample_rows(rng);
        y.chunks_exact(nt)
            .zip(weights.chunks_exact(nt))
            .map(|(yr, wr)| yr.iter().zip(wr).map(|(&v, &w)| w * (self.gamma * v).exp()).sum())
            .collect()
    }

    fn combine(&self, lateral: &[f64], radial: &[f64]) -> (f64, f64) {
        let (mut all, mut core) = (0.0, 0.0);
        for k in 0..lateral.len() {
            let v = lateral[k] * radial[k];
            all += v;
            if self.core_rows[k] {
                core += v;
            }
        }
        (all, core)
    }

    /// Draw order: radial parts, cylinder lateral, torus lateral, extra scalar.
    pub fn draw(&self, rng: &mut ChaCha8Rng) -> MassDraw {
        let (cyl_path, tor_path) = sample_coupled_radial_with(&self.fine, rng);
        let sup = cyl_path.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sup_torus = tor_path.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut d = MassDraw {
            cylinder: f64::NAN,
            torus: f64::NAN,
            cylinder_core: f64::NAN,
            torus_core: f64::NAN,
            sup,
            sup_torus,
            b_plus: cyl_path[cyl_path.len() - 1],
            b_minus: cyl_path[0],
        };
        if let Some((sampler, w)) = &self.cyl {
            let lat = self.lateral_rows(sampler, w, rng);
            let rad = self.radial_rows(&cyl_path, true);
            (d.cylinder, d.cylinder_core) = self.combine(&lat, &rad);
        }
        if let Some((sampler, w)) = &self.tor {
            let lat = self.lateral_rows(sampler, w, rng);
            let rad = self.radial_rows(&tor_path, false);
            (d.torus, d.torus_core) = self.combine(&lat, &rad);
        }
        if self.config.extra_variance > 0.0 {
            let n: f64 = rng.sample(StandardNormal);
            let f = (self.gamma * self.config.extra_variance.sqrt() * n).exp();
            d.cylinder *= f;
            d.torus *= f;
            d.cylinder_core *= f;
            d.torus_core *= f;
        }
        d
    }

    /// View producing the cylinder mass.
    pub fn cylinder(&self) -> CylinderView<'_> {
        CylinderView(self)
    }

    /// View producing the torus mass.
    pub fn torus(&self) -> TorusView<'_> {
        TorusView(self)
    }
}

pub struct CylinderView<'a>(&'a ChaosGenerator);
pub struct TorusView<'a>(&'a ChaosGenerator);

impl MassGenerator for CylinderView<'_> {
    fn sample(&self, rng: &mut ChaCha8Rng) -> (f64, f64) {
        let d = self.0.draw(rng);
        (d.cylinder, d.sup)
    }
}

impl MassGenerator for TorusView<'_> {
    fn sample(&self, rng: &mut ChaCha8Rng) -> (f64, f64) {
        let d = self.0.draw(rng);
        (d.torus, d.sup_torus)
    }
}

/// Monte Carlo estimate of `E[Z^{−r}]` or `E[Z^{−r} | sup < b]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub mean: f64,
    pub std_error: f64,
    /// Draws made, accepted or not.
    pub n_samples: usize,
    pub n_accepted: usize,
    pub r: f64,
    pub conditioning: Option<SupEvent>,
    pub config_digest: Option<String>,
}

impl MomentEstimate {
    /// Empirical probability of the conditioning event.
    pub fn acceptance(&self) -> f64 {
        self.n_accepted as f64 / self.n_samples as f64
    }
}

/// Minimum number of accepted draws for a conditioned estimate.
pub const MIN_ACCEPTED: usize = 100;
const BATCH: usize = 4096;

/// `E[Z^{−r}]` by plain Monte Carlo, or conditioned on `sup < b` by rejection.
pub fn estimate_neg_moment<G: MassGenerator>(
    r: f64,
    generator: &G,
    n_samples: usize,
    seed: StreamSeed,
    policy: ExecPolicy,
    conditioning: Option<SupEvent>,
) -> Result<MomentEstimate> {
    if !(r > 0.0) {
        return Err(domain(format!("moment order r = {r} must be positive")));
    }
    let draws = map_draws(n_samples, seed, policy, |_, rng| generator.sample(rng));
    let mut acc = MeanAccumulator::default();
    for batch in draws.chunks(BATCH) {
        let mut part = MeanAccumulator::default();
        for &(mass, sup) in batch {
            if conditioning.is_none_or(|ev| ev.contains(sup)) {
                part.push(mass.powf(-r));
            }
        }
        acc.merge(&part);
    }
    if conditioning.is_some() && acc.count() < MIN_ACCEPTED {
        return Err(Error::TooFewAccepted { accepted: acc.count(), required: MIN_ACCEPTED });
    }
    Ok(MomentEstimate {
        mean: acc.mean(),
        std_error: acc.std_error(),
        n_samples,
        n_accepted: acc.count(),
        r,
        conditioning,
        config_digest: None,
    })
}

/// `E[e^{−rγ√c N}] = e^{½γ²r²c}` for a standard normal `N`.
pub fn gaussian_shift_factor(r: f64, gamma: f64, c: f64) -> f64 {
    (0.5 * gamma * gamma * r * r * c).exp()
}

/// Ratio `E[(e^{γ√cN − ½γ²c} Z)^{−r}] / E[Z^{−r}] = e^{½γ²r(r+1)c}` for an independent added scalar.
pub fn kahane_shift_factor(r: f64, gamma: f64, c: f64) -> f64 {
    (0.5 * gamma * gamma * r * (r + 1.0) * c).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::sample_lateral_cholesky;
    use crate::processes::sample_bm;

    fn setup() -> (LiouvilleParams, PathSample, FieldSample) {
        let p = LiouvilleParams::new(1.0, 1.0).unwrap();
        let grid = FieldGrid::new(TimeGrid::new(1.0, 5).unwrap(), 8).unwrap();
        let radial = sample_bm(&grid.time, 3);
        let lateral =
            sample_lateral_cholesky(&LateralCovarianceModel::cylinder(), &grid, grid.spacing() / 8.0, 4).unwrap();
        (p, radial, lateral)
    }

    #[test]
    fn window_errors() {
        let (p, radial, lateral) = setup();
        assert!(matches!(z_mass(2.5, 1.2, (-2.0, 0.5), &radial, &lateral, &p), Err(Error::Window(_))));
        assert!(matches!(z_mass(2.5, 1.2, (-0.01, 0.01), &radial, &lateral, &p), Err(Error::InsertionOverlap)));
        assert!(z_mass(2.5, 1.2, (-0.5, 0.5), &radial, &lateral, &p).unwrap().value > 0.0);
    }

    #[test]
    fn torus_mass_rejects_cylinder_field() {
        let (p, radial, lateral) = setup();
        assert!(matches!(z_mass_torus(1.2, &radial, &lateral, &p), Err(Error::ModelMismatch(_))));
    }

    #[test]
    fn conditioning_floor() {
        let p = LiouvilleParams::new(1.0, 1.0).unwrap();
        let mut cfg = ChaosConfig::critical(&p, 1.2, 1.0);
        cfg.geometry = Geometry::Cylinder;
        let g = ChaosGenerator::new(&p, cfg).unwrap();
        let ev = SupEvent::new(1e-3, 1.0).unwrap();
        let r = estimate_neg_moment(0.5, &g.cylinder(), 50, StreamSeed::new(1, 1), ExecPolicy::Sequential, Some(ev));
        assert!(matches!(r, Err(Error::TooFewAccepted { .. })));
    }
}
