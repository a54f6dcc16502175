use cylwalk::brownian::{reference_functional_a, sample_brownian_local_time, srw_local_times, FunctionalMethod, LocalTimeMode};
use cylwalk::rng::map_replicas;
use cylwalk::stats::RunningStats;
use statrs::function::erf::erfc;

/// `E[exp(-k (|N| - w)^+)]` for standard normal `N`, in closed form.
fn laplace_oracle(k: f64, w: f64) -> f64 {
    1.0 - erfc(w / 2f64.sqrt()) + (k * w + 0.5 * k * k).exp() * erfc((w + k) / 2f64.sqrt())
}

#[test]
fn quadrature_matches_the_closed_form() {
    let d = 2usize;
    for (alpha, cap, lambda, v) in [(1.0, 0.66, 0.0, 0.0), (1.0, 0.66, 1.0, 0.0), (2.5, 0.3, 0.2, 0.4), (0.7, 1.2, 0.0, -0.9)] {
        let tau = alpha / (d as f64 + 1.0);
        let k = (d as f64 + 1.0) * (cap + lambda) * tau.sqrt();
        let w = f64::abs(v) / tau.sqrt();
        let got = reference_functional_a(&[v], alpha, d, &[cap], &[lambda], FunctionalMethod::Quadrature).unwrap();
        assert!((got.value - laplace_oracle(k, w)).abs() < 1e-9, "{} vs {}", got.value, laplace_oracle(k, w));
    }
}

#[test]
fn monte_carlo_functional_agrees_with_quadrature() {
    let q = reference_functional_a(&[0.0], 1.0, 2, &[0.66], &[0.0], FunctionalMethod::Quadrature).unwrap();
    let mc = reference_functional_a(
        &[0.0],
        1.0,
        2,
        &[0.66],
        &[0.0],
        FunctionalMethod::MonteCarlo { samples: 20_000, fidelity: 10_000, seed: 3 },
    )
    .unwrap();
    // the walk approximation carries an O(fidelity^{-1/2}) bias on top of the error bar
    assert!((q.value - mc.value).abs() < mc.error + 0.02, "{} vs {}", q.value, mc.value);
}

#[test]
fn exact_local_time_has_the_reflected_normal_mean() {
    let t = 0.6;
    let s: RunningStats = map_replicas(40_000, 2, |_, rng| sample_brownian_local_time(0.0, t, LocalTimeMode::Exact, rng).unwrap().value)
        .into_iter()
        .collect();
    let expected = (2.0 * t / std::f64::consts::PI).sqrt();
    assert!((s.mean - expected).abs() < 5.0 * s.std_error());
}

fn return_probability(k: u64, level: i64) -> f64 {
    // P(S_k = level) for simple random walk
    let l = level.unsigned_abs();
    if l > k || (k - l) % 2 == 1 {
        return 0.0;
    }
    let up = (k + l) / 2;
    let mut logp = -(k as f64) * 2f64.ln();
    for i in 0..up.min(k - up) {
        logp += ((k - i) as f64).ln() - ((i + 1) as f64).ln();
    }
    logp.exp()
}

#[test]
fn walk_local_times_have_the_exact_mean() {
    let n = 400u64;
    let levels = [0i64, 3, -7];
    let samples = map_replicas(20_000, 6, |_, rng| srw_local_times(&levels, n, rng));
    for (i, &l) in levels.iter().enumerate() {
        let expected: f64 = (0..n).map(|k| return_probability(k, l)).sum();
        let s: RunningStats = samples.iter().map(|v| v[i] as f64).collect();
        assert!((s.mean - expected).abs() < 5.0 * s.std_error(), "level {l}: {} vs {expected}", s.mean);
    }
}

#[test]
fn invalid_inputs_are_rejected() {
    let mut rng = cylwalk::rng::replica_rng(0, 0);
    assert!(sample_brownian_local_time(0.0, 0.0, LocalTimeMode::Exact, &mut rng).is_err());
    assert!(sample_brownian_local_time(0.0, 1.0, LocalTimeMode::Walk { fidelity: 10 }, &mut rng).is_err());
    assert!(reference_functional_a(&[0.0, 1.0], 1.0, 2, &[0.5, 0.5], &[0.0, 0.0], FunctionalMethod::Quadrature).is_err());
    let one = reference_functional_a(&[0.0], 1.0, 2, &[0.0], &[0.0], FunctionalMethod::Quadrature).unwrap();
    assert_eq!(one.value, 1.0);
}
