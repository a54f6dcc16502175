//! Brownian local time `L(v, t)` (occupation density normalization) and the
//! Laplace functional that the walk's vacant set converges to.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::stats::RunningStats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LocalTimeMode {
    /// `L(v, t)` has the law of `(|B_t| - |v|)^+`.
    Exact,
    /// Local time of simple random walk after `floor(t m)` steps at level
    /// `floor(v sqrt m)`, divided by `sqrt m`.
    Walk { fidelity: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalTimeLawSample {
    pub v: f64,
    pub t: f64,
    pub value: f64,
}

pub const MIN_FIDELITY: u64 = 10_000;

fn check(v: f64, t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() || !v.is_finite() {
        return Err(invalid(format!("need t > 0 and finite v, got v = {v}, t = {t}")));
    }
    Ok(())
}

pub fn sample_brownian_local_time<R: Rng + ?Sized>(v: f64, t: f64, mode: LocalTimeMode, rng: &mut R) -> Result<LocalTimeLawSample> {
    check(v, t)?;
    let value = match mode {
        LocalTimeMode::Exact => {
            let z: f64 = StandardNormal.sample(rng);
            ((z * t.sqrt()).abs() - v.abs()).max(0.0)
        }
        LocalTimeMode::Walk { fidelity } => {
            if fidelity < MIN_FIDELITY {
                return Err(invalid(format!("fidelity must be at least {MIN_FIDELITY}")));
            }
            let level = (v * (fidelity as f64).sqrt()).floor() as i64;
            let steps = (t * fidelity as f64).floor() as u64;
            srw_local_times(&[level], steps, rng)[0] as f64 / (fidelity as f64).sqrt()
        }
    };
    Ok(LocalTimeLawSample { v, t, value })
}

/// Local times `#{0 <= k < n : S_k = level}` of one simple random walk path
/// from 0, for several levels at once.
///
/// Stretches that cannot reach any level are advanced in blocks of up to 64
/// steps, using the popcount of fresh random bits as a binomial increment.
pub fn srw_local_times<R: RngCore + ?Sized>(levels: &[i64], n: u64, rng: &mut R) -> Vec<u64> {
    let mut counts = vec![0u64; levels.len()];
    let mut z = 0i64;
    let mut t = 0u64;
    while t < n {
        let gap = levels.iter().map(|&l| l.abs_diff(z)).min().unwrap_or(u64::MAX);
        if gap == 0 {
            for (c, &l) in counts.iter_mut().zip(levels) {
                if l == z {
                    *c += 1;
                }
            }
        }
        if gap >= 2 {
            let k = (gap - 1).min(64).min(n - t);
            let bits = rng.next_u64();
            let mask = if k == 64 { u64::MAX } else { (1u64 << k) - 1 };
            z += 2 * (bits & mask).count_ones() as i64 - k as i64;
            t += k;
        } else {
            z += if rng.next_u32() & 1 == 0 { -1 } else { 1 };
            t += 1;
        }
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionalMethod {
    /// One-dimensional integral against the half-normal density; single
    /// point only.
    Quadrature,
    /// Average over joint local-time samples from shared walk paths.
    MonteCarlo { samples: u64, fidelity: u64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalValue {
    pub value: f64,
    pub error: f64,
}

/// `A = E[exp(-sum_i (d+1) L(v_i, alpha/(d+1)) (cap_i + lambda_i))]`.
pub fn reference_functional_a(vs: &[f64], alpha: f64, d: usize, caps: &[f64], lambdas: &[f64], method: FunctionalMethod) -> Result<FunctionalValue> {
    if vs.len() != caps.len() || vs.len() != lambdas.len() {
        return Err(invalid("need one cap and one lambda per point"));
    }
    if !(alpha > 0.0) {
        return Err(invalid("alpha must be positive"));
    }
    if lambdas.iter().chain(caps).any(|&x| !(x >= 0.0)) {
        return Err(invalid("caps and lambdas must be nonnegative"));
    }
    let dp1 = d as f64 + 1.0;
    let tau = alpha / dp1;
    let weights: Vec<f64> = caps.iter().zip(lambdas).map(|(c, l)| dp1 * (c + l)).collect();
    if weights.iter().all(|&w| w == 0.0) {
        return Ok(FunctionalValue { value: 1.0, error: 0.0 });
    }
    match method {
        FunctionalMethod::Quadrature => {
            if vs.len() != 1 {
                return Err(invalid("quadrature handles a single point; use Monte Carlo"));
            }
            // (|B_tau| - |v|)^+ = sqrt(tau) (|N| - w)^+
            let kappa = weights[0] * tau.sqrt();
            let w = vs[0].abs() / tau.sqrt();
            let phi = |x: f64| (2.0 / std::f64::consts::PI).sqrt() * (-0.5 * x * x).exp();
            let inner = if w > 0.0 { adaptive_simpson(&phi, 0.0, w, 1e-14) } else { 0.0 };
            let upper = (w + 40.0).max(w + 40.0 / kappa.max(1e-3));
            let tail = adaptive_simpson(&|x: f64| phi(x) * (-kappa * (x - w)).exp(), w, upper, 1e-14);
            Ok(FunctionalValue { value: inner + tail, error: 1e-10 })
        }
        FunctionalMethod::MonteCarlo { samples, fidelity, seed } => {
            if fidelity < MIN_FIDELITY {
                return Err(invalid(format!("fidelity must be at least {MIN_FIDELITY}")));
            }
            let sm = (fidelity as f64).sqrt();
            let levels: Vec<i64> = vs.iter().map(|v| (v * sm).floor() as i64).collect();
            let steps = (tau * fidelity as f64).floor() as u64;
            let stats: RunningStats = crate::rng::map_replicas(samples, seed, |_, rng| {
                let l = srw_local_times(&levels, steps, rng);
                let s: f64 = l.iter().zip(&weights).map(|(&c, w)| w * c as f64 / sm).sum();
                (-s).exp()
            })
            .into_iter()
            .collect();
            Ok(FunctionalValue { value: stats.mean, error: 3.0 * stats.std_error() })
        }
    }
}

/// Adaptive Simpson quadrature.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 48)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replica_rng;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn closed_form(kappa: f64, w: f64) -> f64 {
        // P(|N| <= w) + 2 e^{kappa w + kappa^2/2} Phibar(w + kappa)
        let n = Normal::standard();
        (2.0 * n.cdf(w) - 1.0) + 2.0 * (kappa * w + 0.5 * kappa * kappa).exp() * n.sf(w + kappa)
    }

    #[test]
    fn quadrature_matches_closed_form() {
        for &(c, v) in &[(0.6595, 0.0), (1.6595, 0.0), (0.6595, 0.4), (3.0, 1.0)] {
            let a = reference_functional_a(&[v], 1.0, 2, &[c], &[0.0], FunctionalMethod::Quadrature).unwrap();
            let tau: f64 = 1.0 / 3.0;
            let exact = closed_form(3.0 * c * tau.sqrt(), v / tau.sqrt());
            assert!((a.value - exact).abs() < 1e-9, "{} vs {exact}", a.value);
        }
    }

    #[test]
    fn trivial_functional_is_one() {
        let a = reference_functional_a(&[0.0, 0.5], 1.0, 2, &[0.0, 0.0], &[0.0, 0.0], FunctionalMethod::Quadrature).unwrap();
        assert_eq!(a.value, 1.0);
    }

    #[test]
    fn decreasing_in_lambda() {
        let f = |l: f64| reference_functional_a(&[0.0], 1.0, 2, &[0.66], &[l], FunctionalMethod::Quadrature).unwrap().value;
        assert!(f(0.0) > f(0.5) && f(0.5) > f(1.0));
        assert!((f(0.0) - 0.486).abs() < 2e-3);
    }

    #[test]
    fn exact_mode_mean_is_half_normal() {
        let mut rng = replica_rng(4, 0);
        let s: RunningStats = (0..100_000)
            .map(|_| sample_brownian_local_time(0.0, 1.0, LocalTimeMode::Exact, &mut rng).unwrap().value)
            .collect();
        let mean = (2.0 / std::f64::consts::PI).sqrt();
        assert!((s.mean - mean).abs() < 3.0 * s.std_error());
    }

    #[test]
    fn block_skipping_matches_plain_walk() {
        // same law as a step-by-step walk: compare means of L^0_n
        let n = 4000;
        let mut rng = replica_rng(5, 0);
        let fast: RunningStats = (0..4000).map(|_| srw_local_times(&[0], n, &mut rng)[0] as f64).collect();
        let slow: RunningStats = (0..4000)
            .map(|_| {
                let mut z = 0i64;
                let mut c = 0u64;
                for _ in 0..n {
                    if z == 0 {
                        c += 1;
                    }
                    z += if rng.random::<bool>() { 1 } else { -1 };
                }
                c as f64
            })
            .collect();
        let se = (fast.std_error().powi(2) + slow.std_error().powi(2)).sqrt();
        assert!((fast.mean - slow.mean).abs() < 4.0 * se, "{} vs {}", fast.mean, slow.mean);
        // E L^0_n for n = 4000 is about sqrt(2n/pi)
        assert!((fast.mean - (2.0 * n as f64 / std::f64::consts::PI).sqrt()).abs() < 2.0);
    }

    #[test]
    fn rejects_bad_arguments() {
        let mut rng = replica_rng(6, 0);
        assert!(sample_brownian_local_time(0.0, 0.0, LocalTimeMode::Exact, &mut rng).is_err());
        assert!(sample_brownian_local_time(0.0, 1.0, LocalTimeMode::Walk { fidelity: 10 }, &mut rng).is_err());
    }
}
