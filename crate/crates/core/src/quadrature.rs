//! One-dimensional quadrature.
//!
//! [`integrate`] is a globally adaptive Gauss–Kronrod (7, 15) scheme with
//! interval bisection; [`integrate_semi_infinite`] maps `[a, ∞)` onto `[0, 1)`
//! first. [`exp_sinh`] is a double-exponential rule on `[a, ∞)` built on a
//! different node family, useful as an independent cross-check.

use crate::error::{Error, Result};

#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_838_258_730,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

/// Result of a quadrature: value and absolute error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub abs_error: f64,
    pub evaluations: usize,
}

/// Tolerances and budget for the adaptive scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs: 1e-14,
            rel: 1e-12,
            max_intervals: 2000,
        }
    }
}

/// Single 15-point Kronrod panel on `[a, b]`, error from the embedded 7-point Gauss rule.
pub fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_k = fc * WGK[7];
    let mut res_g = fc * WG[3];
    for j in 0..7 {
        let x = half * XGK[j];
        let s = f(center - x) + f(center + x);
        res_k += WGK[j] * s;
        if j % 2 == 1 {
            res_g += WG[j / 2] * s;
        }
    }
    let value = res_k * half;
    let err = ((res_k - res_g) * half).abs();
    (value, err)
}

#[derive(Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

/// Globally adaptive integration of `f` over the finite interval `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<Estimate> {
    if a == b {
        return Ok(Estimate {
            value: 0.0,
            abs_error: 0.0,
            evaluations: 0,
        });
    }
    let (v, e) = gk15(&f, a, b);
    let mut panels = vec![Panel { a, b, value: v, err: e }];
    let mut evaluations = 15;
    loop {
        let total: f64 = panels.iter().map(|p| p.value).sum();
        let err: f64 = panels.iter().map(|p| p.err).sum();
        if !total.is_finite() || !err.is_finite() {
            return Err(Error::Quadrature {
                estimate: total,
                error_estimate: err,
            });
        }
        if err <= tol.abs.max(tol.rel * total.abs()) {
            return Ok(Estimate {
                value: total,
                abs_error: err,
                evaluations,
            });
        }
        if panels.len() >= tol.max_intervals {
            return Err(Error::Quadrature {
                estimate: total,
                error_estimate: err,
            });
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, p)| if p.err > acc.1 { (i, p.err) } else { acc });
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if mid <= p.a || mid >= p.b {
            return Err(Error::Quadrature {
                estimate: total,
                error_estimate: err,
            });
        }
        let (v1, e1) = gk15(&f, p.a, mid);
        let (v2, e2) = gk15(&f, mid, p.b);
        evaluations += 30;
        panels.push(Panel { a: p.a, b: mid, value: v1, err: e1 });
        panels.push(Panel { a: mid, b: p.b, value: v2, err: e2 });
    }
}

/// Adaptive integration over `[a, ∞)` through `x = a + u/(1−u)`.
pub fn integrate_semi_infinite<F: Fn(f64) -> f64>(f: F, a: f64, tol: Tolerance) -> Result<Estimate> {
    let g = |u: f64| {
        if u >= 1.0 {
            return 0.0;
        }
        let w = 1.0 - u;
        let x = a + u / w;
        let v = f(x) / (w * w);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate(g, 0.0, 1.0, tol)
}

/// Double-exponential (exp-sinh) rule for `∫_a^∞ f`.
///
/// Nodes `x = a + exp(π/2·sinh u)`; the step is halved until two successive
/// levels agree to `rel_tol`.
pub fn exp_sinh<F: Fn(f64) -> f64>(f: F, a: f64, rel_tol: f64) -> Result<Estimate> {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let term = |u: f64| -> f64 {
        let e = (half_pi * u.sinh()).exp();
        let x = a + e;
        if !x.is_finite() || e == 0.0 {
            return 0.0;
        }
        let w = half_pi * u.cosh() * e;
        let v = f(x) * w;
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let u_max = 4.5;
    let mut h = 0.5;
    let mut sum = term(0.0);
    let mut k = 1;
    while (k as f64) * h <= u_max {
        let u = k as f64 * h;
        sum += term(u) + term(-u);
        k += 1;
    }
    let mut estimate = sum * h;
    let mut evaluations = 2 * k;
    for _ in 0..10 {
        h *= 0.5;
        let mut add = 0.0;
        let mut k = 1;
        while (k as f64) * h <= u_max {
            let u = k as f64 * h;
            add += term(u) + term(-u);
            k += 2;
        }
        evaluations += k;
        sum += add;
        let next = sum * h;
        let diff = (next - estimate).abs();
        estimate = next;
        if diff <= rel_tol * next.abs().max(1e-300) {
            return Ok(Estimate {
                value: next,
                abs_error: diff,
                evaluations,
            });
        }
    }
    Err(Error::Quadrature {
        estimate,
        error_estimate: f64::NAN,
    })
}
