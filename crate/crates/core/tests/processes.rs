use liouville_core::mc::{map_draws, ExecPolicy, MeanAccumulator, StreamSeed};
use liouville_core::processes::*;
use liouville_core::quadrature::{integrate_semi_infinite, Tolerance};
use liouville_core::stats::{erf, ks_test, normal_cdf};
use liouville_core::LiouvilleParams;

const N: usize = 100_000;

fn within(acc: &MeanAccumulator, want: f64, slack: f64) -> bool {
    (acc.mean() - want).abs() <= 3.0 * acc.std_error() + slack
}

#[test]
fn bm_endpoint_variance_and_independent_sides() {
    let g = TimeGrid::new(2.0, 33).unwrap();
    let draws = map_draws(N, StreamSeed::new(11, 1), ExecPolicy::Parallel, |_, rng| sample_bm_with(&g, rng));
    let var: MeanAccumulator = draws.iter().map(|p| p[g.len() - 1].powi(2)).collect();
    assert!(within(&var, 2.0, 0.0), "{}", var.mean());
    let (i, j) = (g.center() + 10, g.center() - 20);
    let cov: MeanAccumulator = draws.iter().map(|p| p[i] * p[j]).collect();
    assert!(within(&cov, 0.0, 0.0));
    assert!(draws.iter().all(|p| p[g.center()] == 0.0));
}

#[test]
fn bridge_midpoint_variance_and_law() {
    let t = 3.0;
    let g = TimeGrid::new(t, 31).unwrap();
    let draws = map_draws(N, StreamSeed::new(11, 2), ExecPolicy::Parallel, |_, rng| {
        bridge_walk(g.n_steps(), g.dt(), rng)
    });
    let var: MeanAccumulator = draws.iter().map(|p| p[15].powi(2)).collect();
    assert!(within(&var, t / 4.0, 0.0), "{}", var.mean());
    assert!(draws.iter().all(|p| p[0] == 0.0 && p[30] == 0.0));

    // against the construction W(s) − (s/t)W(t) at s = t/3
    let s = t / 3.0;
    let sd = (s * (t - s) / t).sqrt();
    let recursion: Vec<f64> = draws.iter().take(10_000).map(|p| p[10]).collect();
    let constructed: Vec<f64> = map_draws(10_000, StreamSeed::new(11, 3), ExecPolicy::Parallel, |_, rng| {
        let w = brownian_walk(g.n_steps(), g.dt(), rng);
        w[10] - w[30] / 3.0
    });
    for sample in [&recursion, &constructed] {
        let (_, p) = ks_test(sample, |x| normal_cdf(x / sd));
        assert!(p > 0.001, "KS p = {p}");
    }
}

#[test]
fn torus_radial_covariance() {
    let t = 2.0;
    let g = TimeGrid::new(t, 21).unwrap();
    let draws = map_draws(N, StreamSeed::new(11, 4), ExecPolicy::Parallel, |_, rng| {
        sample_torus_radial_with(&g, rng)
    });
    assert!(draws.iter().all(|p| p[0] == p[g.len() - 1] && p[g.center()] == 0.0));
    let c = g.center();
    for k in [5, 10, 20] {
        let s = g.time(c + k);
        let var: MeanAccumulator = draws.iter().map(|p| p[c + k].powi(2)).collect();
        assert!(within(&var, s - s * s / (2.0 * t), 0.0), "s={s}: {}", var.mean());
    }
    let cov_model = |s: f64, u: f64| {
        let (lo, hi) = (s.min(u), s.max(u));
        0.5 * (lo + lo * (1.0 - hi / t))
    };
    for (a, b) in [(2, 5), (4, 16), (10, 20), (1, 19), (7, 8)] {
        let cov: MeanAccumulator = draws.iter().map(|p| p[c + a] * p[c + b]).collect();
        assert!(within(&cov, cov_model(g.time(c + a), g.time(c + b)), 0.0));
    }
}

#[test]
fn coupled_radial_paths_share_even_part() {
    let g = TimeGrid::new(1.0, 9).unwrap();
    let mut rng = StreamSeed::new(1, 1).rng(0);
    let (cyl, tor) = sample_coupled_radial_with(&g, &mut rng);
    let c = g.center();
    for k in 0..g.n_steps() {
        // the even parts coincide, so the sums over ±s agree up to the pinning term
        let even_cyl = cyl[c + k] + cyl[c - k];
        let even_tor = tor[c + k] + tor[c - k];
        assert!((even_cyl - even_tor).abs() < 1e-12);
    }
    assert_eq!(tor[0], tor[g.len() - 1]);
}

#[test]
fn bessel_paths_hit_half_from_two() {
    let g = TimeGrid::new(4.0, 4097).unwrap();
    let est = bessel_hit_probability(2.0, 1.0, &g, 20_000, StreamSeed::new(11, 5), ExecPolicy::Parallel).unwrap();
    assert!((est.mean - 0.5).abs() <= 3.0 * est.std_error + 0.01, "{} ± {}", est.mean, est.std_error);
    let p = sample_bessel3(2.0, &TimeGrid::new(1.0, 50).unwrap(), 3).unwrap();
    assert_eq!(p.values[p.zero_index()], 2.0);
    assert!(p.values.iter().all(|&v| v > 0.0));
}

#[test]
fn bessel_inverse_is_a_strict_local_martingale() {
    // E_b[1/R_s] = erf(b/√(2s))/b, which falls below 1/b
    let b = 1.0;
    let g = TimeGrid::new(2.0, 3).unwrap();
    let draws = map_draws(N, StreamSeed::new(11, 6), ExecPolicy::Parallel, |_, rng| {
        1.0 / sample_bessel3_with(b, &g, rng)[g.len() - 1]
    });
    let acc: MeanAccumulator = draws.into_iter().collect();
    let want = erf(b / (2.0 * 2.0f64).sqrt()) / b;
    assert!(within(&acc, want, 0.0), "{} vs {want}", acc.mean());
    // close to 1/b while s ≪ b²
    let g = TimeGrid::new(0.05, 3).unwrap();
    let short: MeanAccumulator = map_draws(N, StreamSeed::new(11, 7), ExecPolicy::Parallel, |_, rng| {
        1.0 / sample_bessel3_with(b, &g, rng)[g.len() - 1]
    })
    .into_iter()
    .collect();
    assert!(within(&short, 1.0 / b, 1e-5));
}

#[test]
fn williams_supremum_law() {
    let p = LiouvilleParams::new(1.0, 1.0).unwrap();
    let lambda = p.q_charge() - 0.75;
    let g = TimeGrid::new(2.0, 201).unwrap();
    let rate = 2.0 * 0.75;
    let samples: Vec<WilliamsSample> = (0..20_000u64).map(|i| sample_williams(lambda, &p, &g, i).unwrap()).collect();
    let ms: Vec<f64> = samples.iter().map(|s| s.m_sup).collect();
    let (_, pv) = ks_test(&ms, |m| -(-rate * m).exp_m1());
    assert!(pv > 0.001);
    let mean: MeanAccumulator = ms.iter().copied().collect();
    assert!(within(&mean, 1.0 / rate, 0.0));
    for s in &samples {
        assert!(s.path.sup() <= s.m_sup + 1e-12);
        if s.t_hit.is_finite() {
            assert_eq!(s.path.sup(), s.m_sup);
        }
    }
}

#[test]
fn williams_critical_branch_is_level_minus_bessel() {
    // after the hit, (m − X_end)/√(t − T) is the norm of a 3d Gaussian
    let chi3 = |x: f64| {
        if x <= 0.0 {
            0.0
        } else {
            erf(x / std::f64::consts::SQRT_2) - (2.0 / std::f64::consts::PI).sqrt() * x * (-0.5 * x * x).exp()
        }
    };
    let g = TimeGrid::new(4.0, 401).unwrap();
    let mut xs = Vec::new();
    for i in 0..20_000u64 {
        let s = sample_williams_given_sup(0.3, 0.0, &g, i).unwrap();
        if s.t_hit.is_finite() && s.t_hit < 3.0 {
            let end = *s.path.values.last().unwrap();
            xs.push((s.m_sup - end) / (4.0 - s.t_hit).sqrt());
        }
    }
    assert!(xs.len() > 5_000);
    let (_, p) = ks_test(&xs, chi3);
    assert!(p > 0.001, "KS p = {p}");
}

#[test]
fn sup_probability_limits() {
    assert!(1.0 - sup_prob_bm_exact(10.0) < 1e-20);
    let x = 0.01;
    let r = sup_prob_bm_exact(x) / (x * x);
    assert!((r - 2.0 / std::f64::consts::PI).abs() < 2.0 / std::f64::consts::PI * x * x);
    assert!(1.0 - sup_prob_torus_exact(10.0) < 1e-20);
}

#[test]
fn sup_probability_monte_carlo_against_erf() {
    let g = TimeGrid::new(1.0, 1025).unwrap();
    let est = sup_prob_bm(0.5, &g, 50_000, StreamSeed::new(11, 8), ExecPolicy::Parallel).unwrap();
    assert!((est.mc - est.exact).abs() <= 3.0 * est.std_error + est.documented_bias.abs());
    assert!((est.corrected - est.exact).abs() <= 3.0 * est.corrected_std_error + 0.1 * est.documented_bias.abs());
}

#[test]
fn torus_sup_probability_against_bridge_formula() {
    let g = TimeGrid::new(1.0, 1025).unwrap();
    let est = sup_prob_torus_multi(&[0.5, 1.0], &g, 50_000, StreamSeed::new(11, 9), ExecPolicy::Parallel).unwrap();
    for e in &est {
        assert!((e.mc - e.exact).abs() <= 3.0 * e.std_error + e.documented_bias.abs(), "{e:?}");
        assert!((e.corrected - e.exact).abs() <= 3.0 * e.corrected_std_error + 0.1 * e.documented_bias.abs(), "{e:?}");
    }
    let big = sup_prob_torus(10.0, &g, 1000, StreamSeed::new(11, 10), ExecPolicy::Parallel).unwrap();
    assert_eq!(big.mc, 1.0);
}

#[test]
fn time1_density_properties() {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    for r in [0.0, 0.3, 1.0, 2.7] {
        let want = c * r * r * (-0.5 * r * r).exp();
        assert!((bessel_time1_density(0.0, r).unwrap() - want).abs() < 1e-16);
    }
    for x in [0.0, 0.5, 1.0, 2.0] {
        let total = integrate_semi_infinite(|r| bessel_time1_density(x, r).unwrap(), 0.0, Tolerance::default())
            .unwrap()
            .value;
        assert!((total - 1.0).abs() < 1e-10, "x={x}: {total}");
    }
    let sq = integrate_semi_infinite(|r| bessel_time1_density(0.0, r).unwrap().powi(2), 0.0, Tolerance::default())
        .unwrap()
        .value;
    assert!((sq - 3.0 / (4.0 * std::f64::consts::PI.sqrt())).abs() < 1e-10);
    for x in [0.1, 0.5, 1.5] {
        for i in 0..60 {
            let r = 0.1 * i as f64;
            let f = bessel_time1_density(x, r).unwrap();
            let lo = c * r * r * (-0.5 * (r + x) * (r + x)).exp();
            let hi = c * r * r * (-0.5 * (r - x) * (r - x)).exp();
            assert!(lo <= f * (1.0 + 1e-14) && f <= hi * (1.0 + 1e-14));
        }
    }
    // against the unsimplified (r/x)·sinh(xr)·e^{−(r²+x²)/2}
    for (x, r) in [(0.5, 1.0), (1.0, 2.0), (2.0, 0.5)] {
        let direct: f64 = c * (r / x) * (x * r).sinh() * (-(r * r + x * x) / 2.0).exp();
        assert!((bessel_time1_density(x, r).unwrap() - direct).abs() < 1e-14);
    }
}

#[test]
fn samplers_are_deterministic() {
    let g = TimeGrid::new(1.5, 65).unwrap();
    assert_eq!(sample_bm(&g, 5), sample_bm(&g, 5));
    assert_eq!(sample_torus_radial(&g, 5), sample_torus_radial(&g, 5));
    assert_ne!(sample_bm(&g, 5).values, sample_bm(&g, 6).values);
    let seq = sup_prob_torus(0.4, &g, 3000, StreamSeed::new(2, 2), ExecPolicy::Sequential).unwrap();
    let par = sup_prob_torus(0.4, &g, 3000, StreamSeed::new(2, 2), ExecPolicy::ParallelWith { threads: 3 }).unwrap();
    assert_eq!(seq, par);
}
