//! Zamolodchikov's Υ, the DOZZ structure constant, its critical second
//! derivative and Dedekind's η on the imaginary axis.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::quadrature::{integrate, Tolerance};

/// Coupling `γ ∈ (0, 2)` and cosmological constant `μ > 0`.
///
/// The background charge `Q = 2/γ + γ/2` is always recomputed from `γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiouvilleParams {
    gamma: f64,
    mu: f64,
}

impl LiouvilleParams {
    pub fn new(gamma: f64, mu: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 2.0) {
            return Err(domain(format!("gamma = {gamma} outside (0, 2)")));
        }
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(domain(format!("mu = {mu} must be positive")));
        }
        Ok(Self { gamma, mu })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn q_charge(&self) -> f64 {
        2.0 / self.gamma + self.gamma / 2.0
    }

    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        Self::new(self.gamma, mu)
    }

    /// `Δ_α = (α/2)(Q − α/2)`.
    pub fn conformal_dimension(&self, alpha: f64) -> f64 {
        0.5 * alpha * (self.q_charge() - 0.5 * alpha)
    }
}

/// Order `r` of a negative moment together with the insertion weight and an optional drift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentOrder {
    pub r: f64,
    pub alpha: f64,
    pub lambda: Option<f64>,
}

impl MomentOrder {
    pub fn new(r: f64, alpha: f64, lambda: Option<f64>, params: &LiouvilleParams) -> Result<Self> {
        if !(r > 0.0) {
            return Err(domain(format!("moment order r = {r} must be positive")));
        }
        if !(alpha > 0.0 && alpha < params.q_charge()) {
            return Err(domain(format!("alpha = {alpha} outside (0, Q)")));
        }
        Ok(Self { r, alpha, lambda })
    }

    /// The correlator order `r = α/γ`.
    pub fn physical(alpha: f64, params: &LiouvilleParams) -> Result<Self> {
        Self::new(alpha / params.gamma(), alpha, None, params)
    }

    /// `σ = 2(λ − Q) + α`, defined only when a drift is present.
    pub fn sigma(&self, params: &LiouvilleParams) -> Option<f64> {
        self.lambda.map(|l| 2.0 * (l - params.q_charge()) + self.alpha)
    }
}

/// `ln Γ(x)` for `x > 0`. NaN otherwise.
pub fn ln_gamma(x: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NAN;
    }
    statrs::function::gamma::ln_gamma(x)
}

/// Width of the interval near `t = 0` handled by the series.
const SERIES_CUT: f64 = 1e-3;
const PANEL_TOL: Tolerance = Tolerance {
    abs: 1e-15,
    rel: 1e-13,
    max_intervals: 400,
};
const TAIL_TOL: f64 = 1e-15;
const TOTAL_ERR: f64 = 1e-11;

/// `Ein(x) = Σ_{k≥1} (−1)^{k+1} x^k / (k·k!)`, for small `x`.
fn ein_small(x: f64) -> f64 {
    let mut term = x;
    let mut sum = x;
    let mut k = 1.0;
    loop {
        term *= -x / (k + 1.0);
        k += 1.0;
        let add = term / k;
        sum += add;
        if add.abs() < 1e-18 * sum.abs() {
            return sum;
        }
    }
}

/// `log Υ_{γ/2}(z)` for `z ∈ (0, Q)`.
pub fn log_upsilon(z: f64, params: &LiouvilleParams) -> Result<f64> {
    let q = params.q_charge();
    if !(z > 0.0 && z < q) {
        return Err(domain(format!("log_upsilon: z = {z} outside (0, {q})")));
    }
    let a = 0.5 * q - z;
    if a == 0.0 {
        return Ok(0.0);
    }
    let a2 = a * a;
    let aa = a.abs();
    let u = params.gamma() / 4.0;
    let v = 1.0 / params.gamma();
    // decay rate of the hyperbolic term: c = min(z, Q − z) > 0
    let c = u + v - aa;

    let w = 0.5 * aa;
    let n2 = w * w / 3.0;
    let n4 = 2.0 * w.powi(4) / 45.0;
    let d2 = (u * u + v * v) / 6.0;
    let d4 = (u.powi(4) + v.powi(4)) / 120.0 + u * u * v * v / 36.0;
    let r2 = n2 - d2;
    let r4 = n4 - d4 - d2 * r2;
    let delta = SERIES_CUT;
    let head = a2 * (-ein_small(delta) - r2 * delta * delta / 2.0 - r4 * delta.powi(4) / 4.0);

    let integrand = |t: f64| -> f64 {
        let ratio = ((aa - u - v) * t).exp() * (-aa * t).exp_m1().powi(2)
            / ((-2.0 * u * t).exp_m1() * (-2.0 * v * t).exp_m1());
        (a2 * (-t).exp() - ratio) / t
    };

    let mut total = head;
    let mut err = 0.0;
    let first = integrate(integrand, delta, 1.0, PANEL_TOL)?;
    total += first.value;
    err += first.abs_error;
    let mut lo = 1.0_f64;
    loop {
        let k = 1.0 / ((-(-2.0 * u * lo).exp_m1()) * (-(-2.0 * v * lo).exp_m1()));
        let tail = a2 * (-lo).exp() / lo + k * (-c * lo).exp() / (c * lo);
        if tail < TAIL_TOL {
            err += tail;
            break;
        }
        let hi = 2.0 * lo;
        let panel = integrate(integrand, lo, hi, PANEL_TOL)?;
        total += panel.value;
        err += panel.abs_error;
        lo = hi;
    }
    if err > TOTAL_ERR || !total.is_finite() {
        return Err(Error::Quadrature {
            estimate: total,
            error_estimate: err,
        });
    }
    Ok(total)
}

/// `Υ_{γ/2}(z)` on the closed interval `[0, Q]`, with exact zeros at the endpoints.
pub fn upsilon(z: f64, params: &LiouvilleParams) -> Result<f64> {
    let q = params.q_charge();
    if z == 0.0 || z == q {
        return Ok(0.0);
    }
    if !(z > 0.0 && z < q) {
        return Err(domain(format!("upsilon: z = {z} outside [0, {q}]")));
    }
    Ok(log_upsilon(z, params)?.exp())
}

/// Base step of the extrapolated difference quotient for `Υ'(0)`.
const DERIV_STEP: f64 = 1e-4;
const DERIV_TOL: f64 = 1e-7;

/// `Υ'(0)` with its extrapolation error estimate.
pub fn upsilon_prime_zero_with_error(params: &LiouvilleParams) -> Result<(f64, f64)> {
    let h = DERIV_STEP;
    let d = |h: f64| -> Result<f64> { Ok(upsilon(h, params)? / h) };
    let d0 = d(h)?;
    let d1 = d(h / 2.0)?;
    let d2 = d(h / 4.0)?;
    let r1 = 2.0 * d1 - d0;
    let r1b = 2.0 * d2 - d1;
    let r2 = (4.0 * r1b - r1) / 3.0;
    let err = (r2 - r1b).abs();
    if err > DERIV_TOL || !(r2 > 0.0) {
        return Err(Error::Convergence(format!(
            "upsilon'(0) extrapolation: value {r2}, error estimate {err}"
        )));
    }
    Ok((r2, err))
}

/// `Υ'(0) > 0`, by Richardson-extrapolated difference quotients `Υ(h)/h`.
pub fn upsilon_prime_zero(params: &LiouvilleParams) -> Result<f64> {
    upsilon_prime_zero_with_error(params).map(|(v, _)| v)
}

/// `ln(πμ(γ/2)^{2−γ²/2} Γ(γ²/4)/Γ(1−γ²/4))`.
pub fn ln_dozz_prefactor(params: &LiouvilleParams) -> f64 {
    let g = params.gamma();
    let g2 = g * g;
    std::f64::consts::PI.ln() + params.mu().ln() + (2.0 - g2 / 2.0) * (g / 2.0).ln() + ln_gamma(g2 / 4.0)
        - ln_gamma(1.0 - g2 / 4.0)
}

fn checked_log_upsilon(label: &str, z: f64, params: &LiouvilleParams) -> Result<f64> {
    let q = params.q_charge();
    if !(z > 0.0 && z < q) {
        return Err(domain(format!(
            "{label} = {z} outside (0, {q}): weights violate the admissible window"
        )));
    }
    log_upsilon(z, params)
}

/// DOZZ structure constant `C_γ(a1, a2, a3)`, evaluated in log space.
///
/// Weights are sorted first so that every permutation yields the same bits.
pub fn dozz(a1: f64, a2: f64, a3: f64, params: &LiouvilleParams) -> Result<f64> {
    let mut w = [a1, a2, a3];
    w.sort_by(|x, y| x.total_cmp(y));
    let q = params.q_charge();
    let sum = w[0] + w[1] + w[2];
    let excess = (sum - 2.0 * q) / 2.0;
    let mut ln = -((sum - 2.0 * q) / params.gamma()) * ln_dozz_prefactor(params);
    let mut denominator = checked_log_upsilon("(sum - 2Q)/2", excess, params)?;
    for &a in &w {
        ln += checked_log_upsilon("weight", a, params)?;
        denominator += checked_log_upsilon("sum/2 - weight", sum / 2.0 - a, params)?;
    }
    ln += upsilon_prime_zero(params)?.ln() - denominator;
    Ok(ln.exp())
}

/// `∂²_{α1 α3} C_γ(Q, α, Q) = P^{−α/γ} Υ'(0)³ Υ(α) / Υ(α/2)⁴`.
pub fn dozz_deriv_crit(alpha: f64, params: &LiouvilleParams) -> Result<f64> {
    let q = params.q_charge();
    if !(alpha > 0.0 && alpha < q) {
        return Err(domain(format!("alpha = {alpha} outside (0, {q})")));
    }
    let ln = -(alpha / params.gamma()) * ln_dozz_prefactor(params)
        + 3.0 * upsilon_prime_zero(params)?.ln()
        + log_upsilon(alpha, params)?
        - 4.0 * log_upsilon(alpha / 2.0, params)?;
    Ok(ln.exp())
}

/// `ln η(it/π)` from the product `q^{1/24} ∏(1 − qⁿ)`, `q = e^{−2t}`.
pub fn ln_dedekind_eta_rect(t: f64) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(domain(format!("eta: t = {t} must be positive")));
    }
    let q = (-2.0 * t).exp();
    let mut ln = -t / 12.0;
    let mut qn = q;
    while qn >= 1e-17 {
        ln += (-qn).ln_1p();
        qn *= q;
    }
    Ok(ln)
}

/// `η(it/π)` on the imaginary axis.
pub fn dedekind_eta_rect(t: f64) -> Result<f64> {
    ln_dedekind_eta_rect(t).map(f64::exp)
}

/// `Z_GFF(t) = (t/π) |η(it/π)|²`.
pub fn z_gff(t: f64) -> Result<f64> {
    Ok(t / std::f64::consts::PI * (2.0 * ln_dedekind_eta_rect(t)?).exp())
}
