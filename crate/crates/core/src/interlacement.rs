//! Vacant set of random interlacements restricted to a finite set `B`.
//!
//! The trajectories that meet `B` form a Poisson cloud of intensity
//! `u cap(B)`; each enters `B` at a point drawn from the normalized
//! equilibrium measure and then moves as a simple random walk. The
//! backward halves never meet `B` again, so only the forward walk is
//! simulated, killed on leaving a large box. The resulting bias is bounded
//! and reported with every sample.

use rand::distr::{Distribution, Uniform};
use rand::Rng;
use rand_distr::Poisson;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{invalid, Result};
use crate::lattice::{LatticePoint, Pattern};
use crate::potential::{capacity_infinite, CapacityReport, InfiniteCapacityOptions};

/// `exp(-u cap(K))`, the probability that `K` is vacant at level `u`.
pub fn vacancy_probability_closed_form(u: f64, cap: f64) -> f64 {
    (-u * cap).exp()
}

/// Leading constant of the Green function of `Z^D`:
/// `g(x) ~ (D/2) Gamma(D/2 - 1) pi^{-D/2} |x|^{2-D}`.
pub fn green_asymptotic(dim: usize, r: f64) -> f64 {
    let d = dim as f64;
    0.5 * d * gamma(0.5 * d - 1.0) * std::f64::consts::PI.powf(-0.5 * d) * r.powf(2.0 - d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerOptions {
    /// Initial kill radius in units of `max(diam B, 1)`.
    pub kill_factor: u64,
    pub max_kill_radius: u64,
    /// Statistical error the caller is working with; the kill radius is
    /// doubled until the truncation bias is below a tenth of it.
    pub error_budget: f64,
    pub capacity: InfiniteCapacityOptions,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        Self {
            kill_factor: 32,
            max_kill_radius: 128,
            error_budget: 1e-3,
            capacity: InfiniteCapacityOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterlacementSample {
    pub u: f64,
    /// One bit per point of `B`, `true` when vacant.
    pub bits: Vec<bool>,
    pub n_traj: u64,
    pub kill_radius: u64,
    /// Upper bound on the probability that truncation changed the sample.
    pub bias_bound: f64,
}

#[derive(Debug, Clone)]
pub struct InterlacementSampler {
    points: Vec<LatticePoint>,
    radius: u64,
    dim: usize,
    capacity: CapacityReport,
    cumulative: Vec<f64>,
    opts: SamplerOptions,
}

impl InterlacementSampler {
    /// `b` is the finite set on which vacancy is sampled. It is shifted so
    /// that its bounding box is centered at the origin internally; bits are
    /// reported in the order of `b.offsets()`.
    pub fn new(b: &Pattern, opts: SamplerOptions) -> Result<Self> {
        let dim = b.dim().ok_or_else(|| invalid("the sampling set is empty"))?;
        if dim < 3 {
            return Err(invalid("random interlacements need dimension >= 3"));
        }
        let capacity = capacity_infinite(b, &opts.capacity)?;
        let mut center = Vec::with_capacity(dim);
        for axis in 0..dim {
            let lo = b.offsets().iter().map(|p| p.coords[axis]).min().unwrap_or(0);
            let hi = b.offsets().iter().map(|p| p.coords[axis]).max().unwrap_or(0);
            center.push((lo + hi).div_euclid(2));
        }
        let points: Vec<LatticePoint> = b
            .offsets()
            .iter()
            .map(|p| LatticePoint::new(p.coords.iter().zip(&center).map(|(a, c)| a - c).collect::<Vec<_>>()))
            .collect();
        let radius = points.iter().map(LatticePoint::linf_norm).max().unwrap_or(0);
        // capacity_infinite reports points sorted, which is the order of b
        let mut acc = 0.0;
        let cumulative = capacity
            .equilibrium
            .iter()
            .map(|&e| {
                acc += e.max(0.0);
                acc
            })
            .collect();
        Ok(Self {
            points,
            radius,
            dim,
            capacity,
            cumulative,
            opts,
        })
    }

    pub fn capacity(&self) -> &CapacityReport {
        &self.capacity
    }

    pub fn cap(&self) -> f64 {
        self.capacity.capacity
    }

    fn diameter(&self) -> u64 {
        let mut best = 0;
        for (i, a) in self.points.iter().enumerate() {
            for b in &self.points[i + 1..] {
                best = best.max(a.linf_distance(b));
            }
        }
        best
    }

    /// `1 - exp(-u cap(B) p_ret)` with `p_ret = cap(B) g(R - rad(B))`.
    pub fn bias_bound(&self, u: f64, kill_radius: u64) -> f64 {
        let gap = (kill_radius.saturating_sub(self.radius)).max(1) as f64;
        let p_ret = (self.cap() * green_asymptotic(self.dim, gap)).min(1.0);
        1.0 - (-u * self.cap() * p_ret).exp()
    }

    /// Kill radius used at level `u`.
    pub fn kill_radius(&self, u: f64) -> u64 {
        let mut r = self.opts.kill_factor.max(1) * self.diameter().max(1) + self.radius;
        while r < self.opts.max_kill_radius && self.bias_bound(u, r) > self.opts.error_budget / 10.0 {
            r = (2 * r).min(self.opts.max_kill_radius);
        }
        r
    }

    fn draw_start<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("nonempty");
        let x = rng.random::<f64>() * total;
        self.cumulative.partition_point(|&c| c <= x).min(self.points.len() - 1)
    }

    #[inline]
    fn site_index(&self, coords: &[i64]) -> Option<usize> {
        if coords.iter().any(|c| c.unsigned_abs() > self.radius) {
            return None;
        }
        self.points.iter().position(|p| p.coords == coords)
    }

    /// Walks one trajectory from `start`, calling `visit` on each point of
    /// `B` it meets, until the kill radius or until `visit` returns false.
    fn run_trajectory<R: Rng + ?Sized, F: FnMut(usize) -> bool>(&self, start: usize, kill: u64, rng: &mut R, mut visit: F) {
        let choice = Uniform::new(0, 2 * self.dim).expect("nonempty");
        let mut x = self.points[start].coords.clone();
        if !visit(start) {
            return;
        }
        loop {
            let r = choice.sample(rng);
            x[r >> 1] += if r & 1 == 0 { -1 } else { 1 };
            let norm = x.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0);
            if norm >= kill {
                return;
            }
            if norm <= self.radius {
                if let Some(i) = self.site_index(&x) {
                    if !visit(i) {
                        return;
                    }
                }
            }
        }
    }

    pub fn sample_vacant<R: Rng + ?Sized>(&self, u: f64, rng: &mut R) -> Result<InterlacementSample> {
        if !(u >= 0.0) || !u.is_finite() {
            return Err(invalid(format!("level u must be a finite number >= 0, got {u}")));
        }
        let kill = self.kill_radius(u);
        let mut bits = vec![true; self.points.len()];
        let mean = u * self.cap();
        let n_traj = if mean > 0.0 {
            Poisson::new(mean).map_err(|e| invalid(e.to_string()))?.sample(rng) as u64
        } else {
            0
        };
        let mut remaining = bits.len();
        for _ in 0..n_traj {
            if remaining == 0 {
                break;
            }
            let start = self.draw_start(rng);
            self.run_trajectory(start, kill, rng, |i| {
                if bits[i] {
                    bits[i] = false;
                    remaining -= 1;
                }
                remaining > 0
            });
        }
        Ok(InterlacementSample {
            u,
            bits,
            n_traj,
            kill_radius: kill,
            bias_bound: self.bias_bound(u, kill),
        })
    }

    /// Samples several levels from one cloud: trajectories of the highest
    /// level carry uniform labels and level `u` keeps those with label
    /// below `u / u_max`. Vacant sets are therefore nested.
    pub fn sample_coupled<R: Rng + ?Sized>(&self, levels: &[f64], rng: &mut R) -> Result<Vec<InterlacementSample>> {
        let u_max = levels.iter().copied().fold(0.0, f64::max);
        if levels.iter().any(|&u| !(u >= 0.0) || !u.is_finite()) {
            return Err(invalid("levels must be finite and >= 0"));
        }
        let kill = self.kill_radius(u_max);
        let mean = u_max * self.cap();
        let n_traj = if mean > 0.0 {
            Poisson::new(mean).map_err(|e| invalid(e.to_string()))?.sample(rng) as u64
        } else {
            0
        };
        // first level at which each site is visited
        let mut first_label = vec![f64::INFINITY; self.points.len()];
        for _ in 0..n_traj {
            let label = rng.random::<f64>() * u_max;
            let start = self.draw_start(rng);
            self.run_trajectory(start, kill, rng, |i| {
                if label < first_label[i] {
                    first_label[i] = label;
                }
                true
            });
        }
        Ok(levels
            .iter()
            .map(|&u| InterlacementSample {
                u,
                bits: first_label.iter().map(|&l| l >= u).collect(),
                n_traj,
                kill_radius: kill,
                bias_bound: self.bias_bound(u_max, kill),
            })
            .collect())
    }
}
