//! Correlation functions assembled from chaos moments and special functions,
//! the predicted large-`t` asymptotics and the bootstrap leading order.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::gmc::{ChaosConfig, ChaosGenerator, Geometry, MassDraw};
use crate::mc::{map_draws, ratio_of_means, ExecPolicy, MeanAccumulator, StreamSeed};
use crate::processes::SupEvent;
use crate::quadrature::{integrate_semi_infinite, Tolerance};
use crate::special_functions::{dozz_deriv_crit, ln_dedekind_eta_rect, ln_gamma, LiouvilleParams};
use crate::stats::{wls_fit, LineFit};

/// `3/(4√π)`, the coefficient of the large-`t` one-point asymptotics.
pub const THEOREM_COEFFICIENT: f64 = 0.423_142_187_660_817_24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorrelatorKind {
    TruncatedThreePoint,
    OnePointTorus,
    TheoremPrediction,
    BootstrapPrediction,
    RenormalizedThreePoint,
}

/// A correlator value; `std_error` is 0 for deterministic kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorValue {
    pub kind: CorrelatorKind,
    pub value: f64,
    pub std_error: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub mu: f64,
    pub t: f64,
    pub r: f64,
    pub n_samples: usize,
    /// Canonical rendering of the inputs.
    pub inputs: String,
}

impl CorrelatorValue {
    fn new(kind: CorrelatorKind, value: f64, std_error: f64, alpha: f64, t: f64, n: usize, p: &LiouvilleParams) -> Self {
        let r = alpha / p.gamma();
        let inputs = format!(
            "kind={kind:?};alpha={alpha:e};gamma={:e};mu={:e};t={t:e};r={r:e};n={n}",
            p.gamma(),
            p.mu()
        );
        Self { kind, value, std_error, alpha, gamma: p.gamma(), mu: p.mu(), t, r, n_samples: n, inputs }
    }
}

/// Monte Carlo budget, seed and lattice resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_samples: usize,
    pub seed: StreamSeed,
    pub policy: ExecPolicy,
    pub n_theta: usize,
    pub modes: usize,
    pub radial_substeps: usize,
}

impl McConfig {
    pub fn new(n_samples: usize, seed: StreamSeed) -> Self {
        Self { n_samples, seed, policy: ExecPolicy::Parallel, n_theta: 32, modes: 15, radial_substeps: 8 }
    }

    pub fn chaos(&self, params: &LiouvilleParams, alpha: f64, t: f64, geometry: Geometry) -> ChaosConfig {
        let mut c = ChaosConfig::critical(params, alpha, t);
        c.n_theta = self.n_theta;
        c.modes = self.modes;
        c.radial_substeps = self.radial_substeps;
        c.geometry = geometry;
        c
    }

    fn draws(&self, generator: &ChaosGenerator) -> Vec<MassDraw> {
        map_draws(self.n_samples, self.seed, self.policy, |_, rng| generator.draw(rng))
    }
}

fn check_alpha(alpha: f64, params: &LiouvilleParams) -> Result<()> {
    let q = params.q_charge();
    if !(alpha > 0.0 && alpha < q) {
        return Err(domain(format!("alpha = {alpha} must lie in (0, Q = {q})")));
    }
    Ok(())
}

fn check_t(t: f64) -> Result<()> {
    if !(t >= 1.0 && t.is_finite()) {
        return Err(domain(format!("t = {t} must be at least 1")));
    }
    Ok(())
}

/// `ln(2γ^{−1} μ^{−α/γ} Γ(α/γ))`.
pub fn ln_three_point_prefactor(alpha: f64, params: &LiouvilleParams) -> f64 {
    let r = alpha / params.gamma();
    (2.0 / params.gamma()).ln() - r * params.mu().ln() + ln_gamma(r)
}

/// Deterministic factor of the torus one-point function, `2γ^{−1}μ^{−α/γ}Γ(α/γ)(t/π)^{−1/2}|η(it/π)|^{−2}`.
pub fn one_point_prefactor(alpha: f64, t: f64, params: &LiouvilleParams) -> Result<f64> {
    check_alpha(alpha, params)?;
    let ln = ln_three_point_prefactor(alpha, params) - 0.5 * (t / PI).ln() - 2.0 * ln_dedekind_eta_rect(t)?;
    Ok(ln.exp())
}

fn moment(draws: &[MassDraw], r: f64, pick: impl Fn(&MassDraw) -> f64) -> MeanAccumulator {
    draws.iter().map(|d| pick(d).powf(-r)).collect()
}

/// `2γ^{−1}μ^{−α/γ}Γ(α/γ) E[Z_t(Q)^{−α/γ}]`, the three-point function truncated to `(−t, t)`.
pub fn truncated_three_point(alpha: f64, t: f64, params: &LiouvilleParams, mc: &McConfig) -> Result<CorrelatorValue> {
    check_alpha(alpha, params)?;
    check_t(t)?;
    let generator = ChaosGenerator::new(params, mc.chaos(params, alpha, t, Geometry::Cylinder))?;
    let m = moment(&mc.draws(&generator), alpha / params.gamma(), |d| d.cylinder);
    let pre = ln_three_point_prefactor(alpha, params).exp();
    Ok(CorrelatorValue::new(
        CorrelatorKind::TruncatedThreePoint,
        pre * m.mean(),
        pre * m.std_error(),
        alpha,
        t,
        mc.n_samples,
        params,
    ))
}

/// Torus one-point function `⟨V_α(0)⟩_{it/π}`.
pub fn one_point_torus(alpha: f64, t: f64, params: &LiouvilleParams, mc: &McConfig) -> Result<CorrelatorValue> {
    check_t(t)?;
    let pre = one_point_prefactor(alpha, t, params)?;
    let generator = ChaosGenerator::new(params, mc.chaos(params, alpha, t, Geometry::Torus))?;
    let m = moment(&mc.draws(&generator), alpha / params.gamma(), |d| d.torus);
    Ok(CorrelatorValue::new(
        CorrelatorKind::OnePointTorus,
        pre * m.mean(),
        pre * m.std_error(),
        alpha,
        t,
        mc.n_samples,
        params,
    ))
}

/// `3/(4√π) |η(it/π)|^{−2} t^{−3/2} ∂²C_γ(Q, α, Q)`.
pub fn theorem_prediction(alpha: f64, t: f64, params: &LiouvilleParams) -> Result<CorrelatorValue> {
    check_alpha(alpha, params)?;
    if !(t > 0.0) {
        return Err(domain(format!("t = {t} must be positive")));
    }
    let ln = THEOREM_COEFFICIENT.ln() - 2.0 * ln_dedekind_eta_rect(t)? - 1.5 * t.ln() + dozz_deriv_crit(alpha, params)?.ln();
    Ok(CorrelatorValue::new(CorrelatorKind::TheoremPrediction, ln.exp(), 0.0, alpha, t, 0, params))
}

/// Leading-order bootstrap value `(1/(√2 π)) |η(τ)|^{−2} (Im τ)^{−3/2} ∂²C_γ(Q, α, Q)` at `τ = i·tau_im`.
///
/// In `t = π Im τ` this is `√(π/2) |η|^{−2} t^{−3/2} ∂²C`.
pub fn bootstrap_prediction(alpha: f64, tau_im: f64, params: &LiouvilleParams) -> Result<CorrelatorValue> {
    check_alpha(alpha, params)?;
    if !(tau_im > 0.0) {
        return Err(domain(format!("Im tau = {tau_im} must be positive")));
    }
    let t = PI * tau_im;
    let ln = -(SQRT_2 * PI).ln() - 2.0 * ln_dedekind_eta_rect(t)? - 1.5 * tau_im.ln()
        + dozz_deriv_crit(alpha, params)?.ln();
    Ok(CorrelatorValue::new(CorrelatorKind::BootstrapPrediction, ln.exp(), 0.0, alpha, t, 0, params))
}

/// The same value as `½ |η|^{−2} t^{−3/2} ∂²C ∫_ℝ P² e^{−P²/2} dP`, by quadrature.
pub fn bootstrap_prediction_quadrature(alpha: f64, tau_im: f64, params: &LiouvilleParams) -> Result<f64> {
    check_alpha(alpha, params)?;
    if !(tau_im > 0.0) {
        return Err(domain(format!("Im tau = {tau_im} must be positive")));
    }
    let t = PI * tau_im;
    let half_line = integrate_semi_infinite(|p| p * p * (-0.5 * p * p).exp(), 0.0, Tolerance::default())?;
    let ln_rest = -2.0 * ln_dedekind_eta_rect(t)? - 1.5 * t.ln() + dozz_deriv_crit(alpha, params)?.ln();
    Ok(0.5 * 2.0 * half_line.value * ln_rest.exp())
}

/// `E[B_t B_{−t} Z_t^{−r}]` next to `(π/2) t E[Z_t^{−r}]` from the same draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenormalizedComparison {
    pub renormalized: CorrelatorValue,
    /// `(π/2) t` times the truncated three-point function.
    pub puncture: CorrelatorValue,
    /// `E[B_t B_{−t} Z^{−r}] / (t E[Z^{−r}])`, expected to approach `π/2`.
    pub ratio: f64,
    pub ratio_se: f64,
}

pub fn renormalized_three_point(
    alpha: f64,
    t: f64,
    params: &LiouvilleParams,
    mc: &McConfig,
) -> Result<RenormalizedComparison> {
    check_alpha(alpha, params)?;
    check_t(t)?;
    let r = alpha / params.gamma();
    let generator = ChaosGenerator::new(params, mc.chaos(params, alpha, t, Geometry::Cylinder))?;
    let draws = mc.draws(&generator);
    let pairs: Vec<(f64, f64)> = draws
        .iter()
        .map(|d| {
            let z = d.cylinder.powf(-r);
            (d.b_plus * d.b_minus * z, t * z)
        })
        .collect();
    let bb: MeanAccumulator = pairs.iter().map(|p| p.0).collect();
    let tz: MeanAccumulator = pairs.iter().map(|p| p.1).collect();
    let (ratio, ratio_se) = ratio_of_means(&pairs);
    let pre = ln_three_point_prefactor(alpha, params).exp();
    let n = mc.n_samples;
    Ok(RenormalizedComparison {
        renormalized: CorrelatorValue::new(
            CorrelatorKind::RenormalizedThreePoint,
            pre * bb.mean(),
            pre * bb.std_error(),
            alpha,
            t,
            n,
            params,
        ),
        puncture: CorrelatorValue::new(
            CorrelatorKind::TruncatedThreePoint,
            0.5 * PI * pre * tz.mean(),
            0.5 * PI * pre * tz.std_error(),
            alpha,
            t,
            n,
            params,
        ),
        ratio,
        ratio_se,
    })
}

/// Coupled-seed torus/cylinder comparison at one `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioPoint {
    pub t: f64,
    /// `t E[Z_t^{−r}]`.
    pub cylinder: f64,
    pub cylinder_se: f64,
    /// `t E[Z̃_t^{−r}]`.
    pub torus: f64,
    pub torus_se: f64,
    pub ratio: f64,
    pub ratio_se: f64,
}

/// `t E[Z̃_t^{−r}] / t E[Z_t^{−r}]` with both masses built from one radial draw.
pub fn torus_cylinder_ratio(r: f64, alpha: f64, t: f64, params: &LiouvilleParams, mc: &McConfig) -> Result<RatioPoint> {
    check_alpha(alpha, params)?;
    check_t(t)?;
    if !(r > 0.0) {
        return Err(domain(format!("r = {r} must be positive")));
    }
    let generator = ChaosGenerator::new(params, mc.chaos(params, alpha, t, Geometry::Both))?;
    let draws = mc.draws(&generator);
    let pairs: Vec<(f64, f64)> = draws.iter().map(|d| (d.torus.powf(-r), d.cylinder.powf(-r))).collect();
    let cyl: MeanAccumulator = pairs.iter().map(|p| p.1).collect();
    let tor: MeanAccumulator = pairs.iter().map(|p| p.0).collect();
    let (ratio, ratio_se) = ratio_of_means(&pairs);
    Ok(RatioPoint {
        t,
        cylinder: t * cyl.mean(),
        cylinder_se: t * cyl.std_error(),
        torus: t * tor.mean(),
        torus_se: t * tor.std_error(),
        ratio,
        ratio_se,
    })
}

/// Conditioned moment at one barrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauPoint {
    pub b: f64,
    /// `E[Z_t(Q)^{−r} | sup B < b]`.
    pub mean: f64,
    pub std_error: f64,
    pub n_accepted: usize,
    pub b2_mean: f64,
    pub b2_std_error: f64,
}

/// `b² E[Z_t(Q)^{−r} | A_{b,t}]` over several barriers from one set of draws.
pub fn conditioned_plateau(
    r: f64,
    alpha: f64,
    t: f64,
    barriers: &[f64],
    params: &LiouvilleParams,
    mc: &McConfig,
) -> Result<Vec<PlateauPoint>> {
    check_alpha(alpha, params)?;
    check_t(t)?;
    let generator = ChaosGenerator::new(params, mc.chaos(params, alpha, t, Geometry::Cylinder))?;
    let draws = mc.draws(&generator);
    barriers
        .iter()
        .map(|&b| {
            let ev = SupEvent::new(b, t)?;
            let acc: MeanAccumulator =
                draws.iter().filter(|d| ev.contains(d.sup)).map(|d| d.cylinder.powf(-r)).collect();
            if acc.count() < crate::gmc::MIN_ACCEPTED {
                return Err(crate::Error::TooFewAccepted { accepted: acc.count(), required: crate::gmc::MIN_ACCEPTED });
            }
            Ok(PlateauPoint {
                b,
                mean: acc.mean(),
                std_error: acc.std_error(),
                n_accepted: acc.count(),
                b2_mean: b * b * acc.mean(),
                b2_std_error: b * b * acc.std_error(),
            })
        })
        .collect()
}

/// Weighted fit of `log mean` against `b`.
pub fn plateau_decay_fit(points: &[PlateauPoint]) -> LineFit {
    let x: Vec<f64> = points.iter().map(|p| p.b).collect();
    let y: Vec<f64> = points.iter().map(|p| p.mean.ln()).collect();
    let s: Vec<f64> = points.iter().map(|p| p.std_error / p.mean).collect();
    wls_fit(&x, &y, Some(&s))
}

/// Weighted fit of `log(value·|η(it/π)|²)` against `log t`.
pub fn theorem_slope_fit(values: &[CorrelatorValue]) -> Result<LineFit> {
    let mut x = Vec::with_capacity(values.len());
    let mut y = Vec::with_capacity(values.len());
    let mut s = Vec::with_capacity(values.len());
    for v in values {
        x.push(v.t.ln());
        y.push(v.value.ln() + 2.0 * ln_dedekind_eta_rect(v.t)?);
        s.push(v.std_error / v.value);
    }
    Ok(wls_fit(&x, &y, Some(&s)))
}

/// One point of the `λ → Q` sweep of the one-sided drifted mass `Z_{0,t}(λ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaPoint {
    pub lambda: f64,
    pub t_window: f64,
    /// `σ = 2(λ − Q) + α`.
    pub sigma: f64,
    /// `E[Z^{−α/γ}] / (2(Q − λ))`.
    pub scaled_alpha: f64,
    pub scaled_alpha_se: f64,
    /// `E[Z^{−Qσ/γ}] / (2(Q − λ))`.
    pub scaled_sigma: f64,
    pub scaled_sigma_se: f64,
}

/// Sweep result with the linear-in-`Q−λ` extrapolation of both conventions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSweep {
    pub points: Vec<LambdaPoint>,
    pub extrapolated_alpha: f64,
    pub extrapolated_sigma: f64,
}

/// Window length `min(12, (Q − λ)^{−2})`.
pub fn lambda_window(lambda: f64, params: &LiouvilleParams) -> f64 {
    let nu = params.q_charge() - lambda;
    (1.0 / (nu * nu)).clamp(1.0, 12.0)
}

fn richardson_linear(x: [f64; 2], y: [f64; 2]) -> f64 {
    (x[0] * y[1] - x[1] * y[0]) / (x[0] - x[1])
}

/// `E[Z_{0,t}(λ)^{−r}] / (2(Q−λ))` for each `λ`, coupled through one stream seed.
pub fn lambda_sweep(alpha: f64, lambdas: &[f64], params: &LiouvilleParams, mc: &McConfig) -> Result<LambdaSweep> {
    check_alpha(alpha, params)?;
    if lambdas.len() < 2 {
        return Err(domain("lambda sweep needs at least two values"));
    }
    let q = params.q_charge();
    let g = params.gamma();
    let mut points = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let nu = q - lambda;
        let sigma = 2.0 * (lambda - q) + alpha;
        if !(nu > 0.0) || !(sigma > 0.0) {
            return Err(domain(format!("lambda = {lambda}: need lambda < Q and sigma = {sigma} > 0")));
        }
        let t = lambda_window(lambda, params);
        let mut cfg = mc.chaos(params, alpha, t, Geometry::Cylinder);
        cfg.lambda = lambda;
        cfg.window = Some((0.0, t));
        let draws = mc.draws(&ChaosGenerator::new(params, cfg)?);
        let a = moment(&draws, alpha / g, |d| d.cylinder);
        let s = moment(&draws, q * sigma / g, |d| d.cylinder);
        let k = 1.0 / (2.0 * nu);
        points.push(LambdaPoint {
            lambda,
            t_window: t,
            sigma,
            scaled_alpha: k * a.mean(),
            scaled_alpha_se: k * a.std_error(),
            scaled_sigma: k * s.mean(),
            scaled_sigma_se: k * s.std_error(),
        });
    }
    let mut by_nu = points.clone();
    by_nu.sort_by(|a, b| b.lambda.total_cmp(&a.lambda));
    let x = [q - by_nu[0].lambda, q - by_nu[1].lambda];
    Ok(LambdaSweep {
        extrapolated_alpha: richardson_linear(x, [by_nu[0].scaled_alpha, by_nu[1].scaled_alpha]),
        extrapolated_sigma: richardson_linear(x, [by_nu[0].scaled_sigma, by_nu[1].scaled_sigma]),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coefficient_constant() {
        assert!((THEOREM_COEFFICIENT - 3.0 / (4.0 * PI.sqrt())).abs() <= f64::EPSILON * 0.5);
    }

    #[test]
    fn richardson_is_exact_on_lines() {
        let f = |x: f64| 2.0 - 3.0 * x;
        assert!((richardson_linear([0.1, 0.2], [f(0.1), f(0.2)]) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn window_is_capped() {
        let p = LiouvilleParams::new(1.0, 1.0).unwrap();
        assert_eq!(lambda_window(p.q_charge() - 0.1, &p), 12.0);
        assert!((lambda_window(p.q_charge() - 0.4, &p) - 6.25).abs() < 1e-12);
    }
}
