use liouville_core::quadrature::exp_sinh;
use liouville_core::special_functions::*;
use liouville_core::LiouvilleParams;

fn params(gamma: f64) -> LiouvilleParams {
    LiouvilleParams::new(gamma, 1.0).unwrap()
}

/// Υ from the raw integrand on a double-exponential node family.
fn log_upsilon_oracle(z: f64, p: &LiouvilleParams) -> f64 {
    let a = p.q_charge() / 2.0 - z;
    let (u, v) = (p.gamma() / 4.0, 1.0 / p.gamma());
    let f = |t: f64| {
        if t < 1e-6 {
            return -a * a;
        }
        let ratio = if t < 50.0 {
            (a * t / 2.0).sinh().powi(2) / ((u * t).sinh() * (v * t).sinh())
        } else {
            let aa = a.abs();
            ((aa - u - v) * t).exp() * (1.0 - (-aa * t).exp()).powi(2)
                / ((1.0 - (-2.0 * u * t).exp()) * (1.0 - (-2.0 * v * t).exp()))
        };
        (a * a * (-t).exp() - ratio) / t
    };
    exp_sinh(f, 0.0, 1e-13).unwrap().value
}

fn ln_gamma_oracle(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

fn dozz_oracle(a: [f64; 3], p: &LiouvilleParams) -> f64 {
    let g = p.gamma();
    let q = p.q_charge();
    let ups = |z: f64| log_upsilon_oracle(z, p).exp();
    let hs = [1e-3, 5e-4, 2.5e-4];
    let d: Vec<f64> = hs.iter().map(|&h| ups(h) / h).collect();
    let r1 = [2.0 * d[1] - d[0], 2.0 * d[2] - d[1]];
    let up0 = (4.0 * r1[1] - r1[0]) / 3.0;
    let pref = std::f64::consts::PI * p.mu() * (g / 2.0).powf(2.0 - g * g / 2.0) * ln_gamma_oracle(g * g / 4.0).exp()
        / ln_gamma_oracle(1.0 - g * g / 4.0).exp();
    let s = a[0] + a[1] + a[2];
    pref.powf(-(s - 2.0 * q) / g) * up0 * ups(a[0]) * ups(a[1]) * ups(a[2])
        / (ups((s - 2.0 * q) / 2.0) * ups(s / 2.0 - a[0]) * ups(s / 2.0 - a[1]) * ups(s / 2.0 - a[2]))
}

#[test]
fn upsilon_matches_double_exponential_oracle() {
    let p = params(1.0);
    let got = log_upsilon(0.5, &p).unwrap();
    let want = log_upsilon_oracle(0.5, &p);
    assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "{got} vs {want}");
    for gamma in [0.5, 1.5] {
        let p = params(gamma);
        for z in [0.2, 0.7, 1.4] {
            let got = log_upsilon(z, &p).unwrap();
            let want = log_upsilon_oracle(z, &p);
            assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "γ={gamma} z={z}: {got} vs {want}");
        }
    }
}

#[test]
fn upsilon_reflection_on_grid() {
    for gamma in [0.5, 1.0, 1.5] {
        let p = params(gamma);
        let q = p.q_charge();
        for i in 0..50 {
            let z = 0.1 + (q - 0.2) * (i as f64 + 0.5) / 50.0;
            let a = upsilon(z, &p).unwrap();
            let b = upsilon(q - z, &p).unwrap();
            assert!(((a - b) / a).abs() <= 1e-8);
        }
    }
    let p = params(1.0);
    assert!((log_upsilon(0.3, &p).unwrap() - log_upsilon(p.q_charge() - 0.3, &p).unwrap()).abs() <= 1e-9);
}

#[test]
fn upsilon_prime_at_q_is_opposite() {
    for gamma in [0.8, 1.0, 1.4] {
        let p = params(gamma);
        let q = p.q_charge();
        let d0 = upsilon_prime_zero(&p).unwrap();
        assert!(d0 > 0.0);
        // one-sided differences at Q with Richardson
        let dq = |h: f64| (upsilon(q, &p).unwrap() - upsilon(q - h, &p).unwrap()) / h;
        let (a, b, c) = (dq(1e-3), dq(5e-4), dq(2.5e-4));
        let r = (4.0 * (2.0 * c - b) - (2.0 * b - a)) / 3.0;
        assert!((r + d0).abs() <= 1e-6 * d0.max(1.0), "γ={gamma}: {r} vs {}", -d0);
    }
}

#[test]
fn upsilon_prime_from_independent_extrapolation() {
    let p = params(1.0);
    let d0 = upsilon_prime_zero(&p).unwrap();
    let hs = [1e-3, 5e-4, 2.5e-4];
    let quotients: Vec<f64> = hs.iter().map(|&h| log_upsilon_oracle(h, &p).exp() / h).collect();
    let r1 = [2.0 * quotients[1] - quotients[0], 2.0 * quotients[2] - quotients[1]];
    let oracle = (4.0 * r1[1] - r1[0]) / 3.0;
    assert!(((d0 - oracle) / d0).abs() < 1e-7, "{d0} vs {oracle}");
    let errs: Vec<f64> = quotients.iter().map(|q| (q - d0).abs()).collect();
    assert!(errs[0] > errs[1] && errs[1] > errs[2]);
}

#[test]
fn dozz_is_permutation_invariant() {
    for gamma in [0.8, 1.0, 1.2] {
        let p = params(gamma);
        let q = p.q_charge();
        let w = [0.8 * q, 0.75 * q, 0.7 * q];
        let base = dozz(w[0], w[1], w[2], &p).unwrap();
        for (a, b, c) in [(0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)] {
            let v = dozz(w[a], w[b], w[c], &p).unwrap();
            assert!(((v - base) / base).abs() <= 1e-12);
        }
    }
}

#[test]
fn dozz_rejects_weights_outside_window() {
    let p = params(1.0);
    assert!(dozz(1.1, 1.3, 0.9, &p).is_err());
}

#[test]
fn dozz_mu_scaling() {
    for gamma in [0.8, 1.2] {
        let p1 = params(gamma);
        let p2 = p1.with_mu(2.0).unwrap();
        let q = p1.q_charge();
        let w = [0.8 * q, 0.75 * q, 0.7 * q];
        let s: f64 = w.iter().sum();
        let c1 = dozz(w[0], w[1], w[2], &p1).unwrap();
        let c2 = dozz(w[0], w[1], w[2], &p2).unwrap();
        let want = c1 * 2f64.powf(-(s - 2.0 * q) / gamma);
        assert!(((c2 - want) / want).abs() <= 1e-12);
        let d1 = dozz_deriv_crit(1.2 * gamma.min(1.0), &p1).unwrap();
        let d2 = dozz_deriv_crit(1.2 * gamma.min(1.0), &p2).unwrap();
        let want = d1 * 2f64.powf(-1.2 * gamma.min(1.0) / gamma);
        assert!(((d2 - want) / want).abs() <= 1e-12);
    }
}

#[test]
fn dozz_matches_dual_quadrature_oracle() {
    let p = params(1.0);
    let w = [2.0, 1.9, 1.8];
    let got = dozz(w[0], w[1], w[2], &p).unwrap();
    let want = dozz_oracle(w, &p);
    assert!(((got - want) / want).abs() <= 1e-8, "{got} vs {want}");
}

#[test]
fn deriv_crit_matches_finite_differences() {
    let p = params(1.0);
    let q = p.q_charge();
    let alpha = 1.2;
    let closed = dozz_deriv_crit(alpha, &p).unwrap();
    assert!(closed > 0.0);
    // C vanishes on both edges α1 = Q and α3 = Q, so the mixed difference is C(Q−h, α, Q−h)/h²
    let f = |h: f64| dozz(q - h, alpha, q - h, &p).unwrap() / (h * h);
    let (a, b, c) = (f(1e-2), f(5e-3), f(2.5e-3));
    let r1 = [2.0 * b - a, 2.0 * c - b];
    let fd = (4.0 * r1[1] - r1[0]) / 3.0;
    assert!(((fd - closed) / closed).abs() <= 1e-3, "{fd} vs {closed}");
}

#[test]
fn eta_matches_pentagonal_series() {
    for t in [0.3f64, 1.0, 2.5, 7.0] {
        let q = (-2.0 * t).exp();
        let mut sum = 1.0;
        for k in 1..200i64 {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let e1 = (k * (3 * k - 1) / 2) as f64;
            let e2 = (k * (3 * k + 1) / 2) as f64;
            let term = sign * (q.powf(e1) + q.powf(e2));
            sum += term;
            if term.abs() < 1e-300 {
                break;
            }
        }
        let want = (-t / 12.0).exp() * sum;
        let got = dedekind_eta_rect(t).unwrap();
        assert!(((got - want) / want).abs() <= 1e-14, "t={t}: {got} vs {want}");
    }
}

#[test]
fn eta_two_term_expansion_and_monotonicity() {
    let t = 20.0;
    let two = (-t / 12.0_f64).exp() * (1.0 - (-2.0 * t).exp());
    let got = dedekind_eta_rect(t).unwrap();
    assert!(((got - two) / two).abs() <= 1e-15);
    let mut prev = 0.0;
    for i in 1..40 {
        let t: f64 = 0.25 * i as f64;
        let v = (t / 12.0).exp() * dedekind_eta_rect(t).unwrap();
        assert!(v > prev && v <= 1.0);
        prev = v;
    }
    assert!(dedekind_eta_rect(0.0).is_err());
}

#[test]
fn z_gff_asymptotics() {
    let t = 30.0;
    let z = z_gff(t).unwrap();
    assert!(z > 0.0);
    assert!((z.ln() - (-t / 6.0 + (t / std::f64::consts::PI).ln())).abs() <= 1e-10);
}

#[test]
fn moment_order_and_dimension() {
    let p = params(1.0);
    let m = MomentOrder::physical(1.2, &p).unwrap();
    assert!((m.r - 1.2).abs() < 1e-15);
    assert!(MomentOrder::new(0.5, 3.0, None, &p).is_err());
    let drifted = MomentOrder::new(0.5, 1.2, Some(p.q_charge() - 0.2), &p).unwrap();
    assert!((drifted.sigma(&p).unwrap() - 0.8).abs() < 1e-12);
    assert!((p.conformal_dimension(1.2) - 0.6 * (2.5 - 0.6)).abs() < 1e-15);
    assert!(LiouvilleParams::new(2.0, 1.0).is_err());
    assert!(LiouvilleParams::new(1.0, 0.0).is_err());
}
