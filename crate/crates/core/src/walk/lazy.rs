//! Lazy nearest-neighbour walk `Q^gamma` on Z: each step goes to either
//! neighbour with probability `gamma / 2` and holds otherwise.

use num_rational::Ratio;
use rand::distr::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LazyWalkParams {
    gamma: Ratio<u64>,
}

impl LazyWalkParams {
    pub fn new(gamma: Ratio<u64>) -> Result<Self> {
        if *gamma.numer() == 0 || gamma > Ratio::from_integer(1) {
            return Err(invalid(format!("gamma must lie in (0, 1], got {gamma}")));
        }
        if *gamma.denom() > (u32::MAX / 2) as u64 {
            return Err(invalid("gamma denominator too large"));
        }
        Ok(Self { gamma })
    }

    /// `gamma = 1/(d+1)`, the vertical component of the cylinder walk.
    pub fn cylinder(d: usize) -> Self {
        Self::new(Ratio::new(1, d as u64 + 1)).expect("valid gamma")
    }

    pub fn simple() -> Self {
        Self::new(Ratio::from_integer(1)).expect("valid gamma")
    }

    pub fn gamma(&self) -> Ratio<u64> {
        self.gamma
    }

    pub fn gamma_f64(&self) -> f64 {
        *self.gamma.numer() as f64 / *self.gamma.denom() as f64
    }
}

#[derive(Debug, Clone)]
pub struct LazyWalk {
    choice: Uniform<u32>,
    down: u32,
    up: u32,
    pub z: i64,
}

impl LazyWalk {
    pub fn new(params: LazyWalkParams, start: i64) -> Self {
        let num = *params.gamma.numer() as u32;
        let den = *params.gamma.denom() as u32;
        Self {
            choice: Uniform::new(0, 2 * den).expect("nonempty range"),
            down: num,
            up: 2 * num,
            z: start,
        }
    }

    #[inline(always)]
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let r = self.choice.sample(rng);
        if r < self.down {
            self.z -= 1;
        } else if r < self.up {
            self.z += 1;
        }
    }
}

/// Decides when a lazy run ends. Called with every `(time, height)`,
/// starting at time 0.
pub trait Stopper {
    fn stop(&mut self, step: u64, z: i64) -> bool;
}

/// Stop at a fixed time.
#[derive(Debug, Clone, Copy)]
pub struct Horizon(pub u64);

impl Stopper for Horizon {
    fn stop(&mut self, step: u64, _z: i64) -> bool {
        step >= self.0
    }
}

/// Stop on exit from the open interval `(lo, hi)`.
#[derive(Debug, Clone, Copy)]
pub struct ExitInterval {
    pub lo: i64,
    pub hi: i64,
}

impl Stopper for ExitInterval {
    fn stop(&mut self, _step: u64, z: i64) -> bool {
        z <= self.lo || z >= self.hi
    }
}

impl<F: FnMut(u64, i64) -> bool> Stopper for F {
    fn stop(&mut self, step: u64, z: i64) -> bool {
        self(step, z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LazySummary {
    pub steps: u64,
    pub final_z: i64,
}

/// Runs `Q^gamma_start` until `stopper` fires, reporting every
/// `(time, height)` to `visit`, the stopping time included.
pub fn run_lazy_walk<R: Rng + ?Sized, S: Stopper, V: FnMut(u64, i64)>(
    params: LazyWalkParams,
    start: i64,
    stopper: &mut S,
    rng: &mut R,
    mut visit: V,
) -> LazySummary {
    let mut walk = LazyWalk::new(params, start);
    let mut t = 0u64;
    loop {
        visit(t, walk.z);
        if stopper.stop(t, walk.z) {
            return LazySummary {
                steps: t,
                final_z: walk.z,
            };
        }
        walk.step(rng);
        t += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replica_rng;

    fn binomial_ok(hits: u64, n: u64, p: f64) -> bool {
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        (hits as f64 - n as f64 * p).abs() <= 3.0 * sd
    }

    #[test]
    fn rejects_bad_gamma() {
        assert!(LazyWalkParams::new(Ratio::new(0, 1)).is_err());
        assert!(LazyWalkParams::new(Ratio::new(3, 2)).is_err());
    }

    #[test]
    fn simple_walk_two_step_return() {
        let mut rng = replica_rng(11, 0);
        let n = 100_000;
        let back = (0..n)
            .filter(|_| {
                run_lazy_walk(LazyWalkParams::simple(), 0, &mut Horizon(2), &mut rng, |_, _| {})
                    .final_z
                    == 0
            })
            .count() as u64;
        assert!(binomial_ok(back, n, 0.5), "{back}");
    }

    #[test]
    fn lazy_holding_probability() {
        let mut rng = replica_rng(12, 0);
        let n = 100_000;
        let params = LazyWalkParams::cylinder(2);
        let stay = (0..n)
            .filter(|_| run_lazy_walk(params, 0, &mut Horizon(1), &mut rng, |_, _| {}).final_z == 0)
            .count() as u64;
        assert!(binomial_ok(stay, n, 2.0 / 3.0), "{stay}");
    }

    #[test]
    fn symmetric_exit() {
        let mut rng = replica_rng(13, 0);
        let n = 20_000;
        let h = 10;
        let top = (0..n)
            .filter(|_| {
                let mut stop = ExitInterval { lo: -h, hi: h };
                run_lazy_walk(LazyWalkParams::simple(), 0, &mut stop, &mut rng, |_, _| {}).final_z
                    == h
            })
            .count() as u64;
        assert!(binomial_ok(top, n, 0.5), "{top}");
    }

    #[test]
    fn visit_sees_every_time() {
        let mut rng = replica_rng(14, 0);
        let mut seen = Vec::new();
        let s = run_lazy_walk(LazyWalkParams::simple(), 5, &mut Horizon(4), &mut rng, |t, _| {
            seen.push(t)
        });
        assert_eq!(s.steps, 4);
        assert_eq!(seen, vec![0, 1, 2, 3, 4]);
    }
}
