use rand::distr::{Distribution, Uniform};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::domain::FiniteDomain;
use super::solver::{KilledWalkOperator, SolveInfo, SolverOptions, NONE};
use crate::error::{invalid, Error, Result};
use crate::lattice::{LatticePoint, Pattern};
use crate::rng::replica_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapacityMethod {
    ExactSolve,
    MonteCarlo,
    Extrapolated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityReport {
    pub points: Vec<Vec<i64>>,
    /// `e_{K,U}(x)` for each point of `K`, aligned with `points`.
    pub equilibrium: Vec<f64>,
    pub capacity: f64,
    pub method: CapacityMethod,
    /// Absolute error estimate (0 for exact solves, up to solver tolerance).
    pub error: f64,
    pub solver: Option<SolveInfo>,
    /// Set when two independent estimates disagree beyond tolerance.
    pub flagged: bool,
    /// Method-specific diagnostics.
    pub details: serde_json::Value,
}

/// Unknowns `U \ K` with their neighbour lists, plus the domain-to-unknown map.
fn complement_system(dom: &FiniteDomain, in_k: &[bool]) -> (KilledWalkOperator, Vec<u32>, Vec<u32>) {
    let mut local = vec![NONE; dom.len()];
    let mut order = Vec::new();
    for i in 0..dom.len() {
        if !in_k[i] {
            local[i] = order.len() as u32;
            order.push(i as u32);
        }
    }
    let deg = dom.degree();
    let mut nbr = Vec::with_capacity(order.len() * deg);
    for &i in &order {
        for &j in dom.neighbors(i) {
            nbr.push(if j == NONE { NONE } else { local[j as usize] });
        }
    }
    (KilledWalkOperator::new(deg, nbr), local, order)
}

fn membership(dom: &FiniteDomain, k: &[u32]) -> Vec<bool> {
    let mut in_k = vec![false; dom.len()];
    for &i in k {
        in_k[i as usize] = true;
    }
    in_k
}

/// `P_x[H_K < T_U]` for every `x` in `U` (1 on `K`).
pub fn hitting_probability(dom: &FiniteDomain, k: &[u32], opts: &SolverOptions) -> Result<(Vec<f64>, SolveInfo)> {
    let in_k = membership(dom, k);
    let (op, _local, order) = complement_system(dom, &in_k);
    let w = 1.0 / dom.degree() as f64;
    let b: Vec<f64> = order
        .iter()
        .map(|&i| {
            w * dom
                .neighbors(i)
                .iter()
                .filter(|&&j| j != NONE && in_k[j as usize])
                .count() as f64
        })
        .collect();
    let (h, info) = op.solve(&b, opts)?;
    let mut out: Vec<f64> = in_k.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    for (v, &i) in h.iter().zip(&order) {
        out[i as usize] = *v;
    }
    Ok((out, info))
}

/// `P_x[Htilde_K > T_U]` for each `x` of `K`, in the order of `k`.
pub fn escape_probabilities(dom: &FiniteDomain, k: &[u32], opts: &SolverOptions) -> Result<(Vec<f64>, SolveInfo)> {
    let in_k = membership(dom, k);
    let (hit, info) = hitting_probability(dom, k, opts)?;
    let w = 1.0 / dom.degree() as f64;
    // counted as integers first so that trivial cases come out exact
    let e = k
        .iter()
        .map(|&x| {
            let mut out = 0u32;
            let mut free = 0.0;
            for &j in dom.neighbors(x) {
                if j == NONE {
                    out += 1;
                } else if !in_k[j as usize] {
                    free += 1.0 - hit[j as usize];
                }
            }
            (out as f64 + free) * w
        })
        .collect();
    Ok((e, info))
}

/// Equilibrium measure and capacity of `K` relative to the domain.
pub fn equilibrium_measure(dom: &FiniteDomain, k: &[Vec<i64>], opts: &SolverOptions) -> Result<CapacityReport> {
    let mut pts = k.to_vec();
    pts.sort();
    pts.dedup();
    let idx = dom.indices_of(&pts)?;
    let (e, info) = escape_probabilities(dom, &idx, opts)?;
    Ok(CapacityReport {
        capacity: e.iter().sum(),
        points: pts,
        equilibrium: e,
        method: CapacityMethod::ExactSolve,
        error: info.residual,
        solver: Some(info),
        flagged: false,
        details: serde_json::Value::Null,
    })
}

/// Columns `g_U(., x')` of the killed Green function for each source.
pub fn green_columns(dom: &FiniteDomain, sources: &[u32], opts: &SolverOptions) -> Result<Vec<Vec<f64>>> {
    let in_k = vec![false; dom.len()];
    let (op, _, _) = complement_system(dom, &in_k);
    let rhs: Vec<Vec<f64>> = sources
        .iter()
        .map(|&s| {
            let mut b = vec![0.0; dom.len()];
            b[s as usize] = 1.0;
            b
        })
        .collect();
    Ok(op.solve_many(&rhs, opts)?.into_iter().map(|(g, _)| g).collect())
}

/// `g_U(x, x')`, zero when either point lies outside `U`.
pub fn green_function(dom: &FiniteDomain, x: &[i64], xp: &[i64], opts: &SolverOptions) -> Result<f64> {
    let (Some(i), Some(j)) = (dom.index_of(x), dom.index_of(xp)) else {
        return Ok(0.0);
    };
    let col = green_columns(dom, &[j], opts)?;
    Ok(col[0][i as usize])
}

/// Box center and the largest l-infinity distance from it to `K`.
fn enclosing(k: &Pattern) -> (LatticePoint, u64) {
    let dim = k.dim().unwrap_or(0);
    let mut center = Vec::with_capacity(dim);
    for axis in 0..dim {
        let lo = k.offsets().iter().map(|p| p.coords[axis]).min().unwrap_or(0);
        let hi = k.offsets().iter().map(|p| p.coords[axis]).max().unwrap_or(0);
        center.push((lo + hi).div_euclid(2));
    }
    let c = LatticePoint::new(center);
    let ext = k.offsets().iter().map(|p| p.linf_distance(&c)).max().unwrap_or(0);
    (c, ext)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfiniteCapacityOptions {
    /// Margin between `K` and the smallest box; boxes use margins
    /// `R, 2R, 4R`.
    pub base_radius: u64,
    pub solver: SolverOptions,
    /// Monte Carlo cross-check; `None` skips it.
    pub monte_carlo: Option<EscapeMcOptions>,
    /// Relative disagreement above which the report is flagged.
    pub tolerance: f64,
}

impl Default for InfiniteCapacityOptions {
    fn default() -> Self {
        Self {
            base_radius: 8,
            solver: SolverOptions::default(),
            monte_carlo: None,
            tolerance: 0.01,
        }
    }
}

/// Value at `x = 0` of the polynomial through `(x_i, v_i)`.
fn extrapolate_to_zero(xs: &[f64], vs: &[f64]) -> f64 {
    let mut total = 0.0;
    for (i, (&xi, &vi)) in xs.iter().zip(vs).enumerate() {
        let mut w = 1.0;
        for (j, &xj) in xs.iter().enumerate() {
            if i != j {
                w *= xj / (xj - xi);
            }
        }
        total += w * vi;
    }
    total
}

/// `cap({0})` in `Z^3` as produced by [`capacity_infinite`] with default
/// options; `examples/derive_capacity_constant.rs` re-derives it and checks
/// it against the Monte Carlo escape estimate.
pub const CAP_ORIGIN_Z3: f64 = 0.659488;

/// Capacity of `K` in `Z^D`, `D >= 3`, by exact solves on three nested
/// boxes extrapolated in `R^{-(D-2)}`. The error is the gap between the
/// three-box fit and the two-box fit on the larger boxes.
pub fn capacity_infinite(k: &Pattern, opts: &InfiniteCapacityOptions) -> Result<CapacityReport> {
    let dim = k.dim().ok_or_else(|| invalid("capacity of the empty set is 0; nothing to solve"))?;
    if dim < 3 {
        return Err(invalid(format!("walk on Z^{dim} is recurrent; need dimension >= 3")));
    }
    let (center, ext) = enclosing(k);
    let pts: Vec<Vec<i64>> = k.offsets().iter().map(|p| p.coords.clone()).collect();
    let mut per_radius = Vec::new();
    let mut last_info = None;
    for j in 0..3 {
        let r = ext + (opts.base_radius.max(1) << j);
        let dom = FiniteDomain::lattice_box(&center, r)?;
        let rep = equilibrium_measure(&dom, &pts, &opts.solver)?;
        last_info = rep.solver.clone();
        per_radius.push((r, rep));
    }
    let xs: Vec<f64> = per_radius
        .iter()
        .map(|(r, _)| (*r as f64).powi(-(dim as i32 - 2)))
        .collect();
    let caps: Vec<f64> = per_radius.iter().map(|(_, r)| r.capacity).collect();
    let cap3 = extrapolate_to_zero(&xs, &caps);
    let cap2 = extrapolate_to_zero(&xs[1..], &caps[1..]);
    let points = per_radius[0].1.points.clone();
    let equilibrium: Vec<f64> = (0..points.len())
        .map(|i| {
            let vs: Vec<f64> = per_radius.iter().map(|(_, r)| r.equilibrium[i]).collect();
            extrapolate_to_zero(&xs, &vs)
        })
        .collect();
    let mut report = CapacityReport {
        points,
        equilibrium,
        capacity: cap3,
        method: CapacityMethod::Extrapolated,
        error: (cap3 - cap2).abs(),
        solver: last_info,
        flagged: false,
        details: serde_json::json!({
            "radii": per_radius.iter().map(|(r, _)| r).collect::<Vec<_>>(),
            "box_capacities": caps,
            "two_box_fit": cap2,
        }),
    };
    if let Some(mc_opts) = &opts.monte_carlo {
        let mc = escape_mc(k, mc_opts)?;
        let rel = (mc.capacity - cap3).abs() / cap3;
        report.flagged = rel > opts.tolerance;
        report.details["monte_carlo"] = serde_json::to_value(&mc)?;
        report.details["relative_gap"] = rel.into();
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscapeMcOptions {
    /// Walkers started from each point of `K`.
    pub walkers: u64,
    pub seed: u64,
    /// Kill radius in units of `max(diam K, 1)`.
    pub kill_factor: u64,
}

impl Default for EscapeMcOptions {
    fn default() -> Self {
        Self {
            walkers: 100_000,
            seed: 0,
            kill_factor: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeMcReport {
    pub equilibrium: Vec<f64>,
    pub capacity: f64,
    /// One standard deviation of the capacity estimate.
    pub std_error: f64,
    /// Size of the return-after-kill correction that was applied.
    pub kill_correction: f64,
    /// Statistical error (3 sd) plus half the correction.
    pub error: f64,
    pub kill_radius: u64,
    /// Estimated probability that a walker past the kill radius returns.
    pub return_after_kill: f64,
    pub walkers: u64,
}

/// Outcome of a single walker.
#[derive(Debug, Clone, Copy, Default)]
struct EscapeTally {
    killed: u64,
    returned_late: u64,
}

impl EscapeTally {
    fn merge(self, o: Self) -> Self {
        Self {
            killed: self.killed + o.killed,
            returned_late: self.returned_late + o.returned_late,
        }
    }
}

/// Nearest-neighbour walk on `Z^D` that knows whether it sits on `K`.
pub struct LatticeWalker<'k> {
    pub coords: Vec<i64>,
    choice: Uniform<usize>,
    k: &'k [LatticePoint],
    k_radius: u64,
}

impl<'k> LatticeWalker<'k> {
    /// `k` must be sorted and centered so that `|x|_inf <= k_radius` on it.
    pub fn new(k: &'k [LatticePoint], k_radius: u64, start: &[i64]) -> Self {
        Self {
            coords: start.to_vec(),
            choice: Uniform::new(0, 2 * start.len()).expect("nonempty"),
            k,
            k_radius,
        }
    }

    #[inline]
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let r = self.choice.sample(rng);
        self.coords[r >> 1] += if r & 1 == 0 { -1 } else { 1 };
    }

    #[inline]
    pub fn norm(&self) -> u64 {
        self.coords.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0)
    }

    #[inline]
    pub fn on_k(&self) -> bool {
        self.norm() <= self.k_radius && self.k.iter().any(|p| p.coords == self.coords)
    }

    /// Walks until `K` is hit (true) or the norm reaches `radius` (false).
    pub fn run_until<R: Rng + ?Sized>(&mut self, rng: &mut R, radius: u64) -> bool {
        loop {
            if self.on_k() {
                return true;
            }
            if self.norm() >= radius {
                return false;
            }
            self.step(rng);
        }
    }
}

const MC_CHUNKS: u64 = 64;

/// Escape probabilities by simulation. Walkers leave `K` with one forced
/// step and are killed at l-infinity radius `kill_factor * max(diam, 1)`.
/// Killed walkers are continued to twice that radius; the fraction `p1`
/// that comes back gives the return-after-kill estimate
/// `p1 / (1 - 2^{-(D-2)})`, which corrects the killed fraction.
pub fn escape_mc(k: &Pattern, opts: &EscapeMcOptions) -> Result<EscapeMcReport> {
    let dim = k.dim().ok_or_else(|| invalid("empty pattern"))?;
    if dim < 3 {
        return Err(invalid("escape needs dimension >= 3"));
    }
    if opts.walkers == 0 {
        return Err(invalid("need at least one walker"));
    }
    let (center, _) = enclosing(k);
    let shifted: Vec<LatticePoint> = k
        .offsets()
        .iter()
        .map(|p| LatticePoint::new(p.coords.iter().zip(&center.coords).map(|(a, c)| a - c).collect::<Vec<_>>()))
        .collect();
    let k_radius = shifted.iter().map(LatticePoint::linf_norm).max().unwrap_or(0);
    let kill = opts.kill_factor.max(1) * k.diameter().max(1) + k_radius;
    let q = 0.5f64.powi(dim as i32 - 2);
    let mut equilibrium = Vec::with_capacity(shifted.len());
    let mut var = 0.0;
    let mut correction = 0.0;
    let mut p1_total = (0u64, 0u64);
    for (pi, start) in shifted.iter().enumerate() {
        let per_chunk = opts.walkers.div_ceil(MC_CHUNKS);
        let tally = (0..MC_CHUNKS)
            .into_par_iter()
            .map(|c| {
                let mut rng = replica_rng(opts.seed, (pi as u64) * MC_CHUNKS + c);
                let n = per_chunk.min(opts.walkers.saturating_sub(c * per_chunk));
                let mut t = EscapeTally::default();
                for _ in 0..n {
                    let mut w = LatticeWalker::new(&shifted, k_radius, &start.coords);
                    w.step(&mut rng);
                    if w.run_until(&mut rng, kill) {
                        continue;
                    }
                    t.killed += 1;
                    if w.run_until(&mut rng, 2 * kill) {
                        t.returned_late += 1;
                    }
                }
                t
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold(EscapeTally::default(), EscapeTally::merge);
        let n = opts.walkers as f64;
        let f = tally.killed as f64 / n;
        let p1 = if tally.killed > 0 {
            tally.returned_late as f64 / tally.killed as f64
        } else {
            0.0
        };
        p1_total.0 += tally.returned_late;
        p1_total.1 += tally.killed;
        let p_ret = p1 / (1.0 - q);
        let e = f * (1.0 - p_ret);
        var += f * (1.0 - f) / n;
        correction += f * p_ret;
        equilibrium.push(e);
    }
    let capacity: f64 = equilibrium.iter().sum();
    let std_error = var.sqrt();
    let p1 = if p1_total.1 > 0 {
        p1_total.0 as f64 / p1_total.1 as f64
    } else {
        0.0
    };
    Ok(EscapeMcReport {
        equilibrium,
        capacity,
        std_error,
        kill_correction: correction,
        error: 3.0 * std_error + 0.5 * correction,
        kill_radius: kill,
        return_after_kill: p1 / (1.0 - q),
        walkers: opts.walkers,
    })
}

/// `cap(K)` as a [`CapacityReport`] built from [`escape_mc`].
pub fn capacity_mc(k: &Pattern, opts: &EscapeMcOptions) -> Result<CapacityReport> {
    let mc = escape_mc(k, opts)?;
    Ok(CapacityReport {
        points: k.offsets().iter().map(|p| p.coords.clone()).collect(),
        equilibrium: mc.equilibrium.clone(),
        capacity: mc.capacity,
        method: CapacityMethod::MonteCarlo,
        error: mc.error,
        solver: None,
        flagged: false,
        details: serde_json::to_value(&mc)?,
    })
}

/// Guard used by callers that require `K` to sit inside the domain.
pub fn ensure_contained(dom: &FiniteDomain, k: &[Vec<i64>]) -> Result<()> {
    if k.iter().all(|c| dom.index_of(c).is_some()) {
        Ok(())
    } else {
        Err(Error::NotContained)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_site_ambient() {
        let dom = FiniteDomain::lattice_set(&[LatticePoint::origin(3)]).unwrap();
        let rep = equilibrium_measure(&dom, &[vec![0, 0, 0]], &SolverOptions::default()).unwrap();
        assert_eq!(rep.equilibrium, vec![1.0]);
        assert_eq!(rep.capacity, 1.0);
        let g = green_function(&dom, &[0, 0, 0], &[0, 0, 0], &SolverOptions::default()).unwrap();
        assert!((g - 1.0).abs() < 1e-14);
        assert_eq!(green_function(&dom, &[1, 0, 0], &[0, 0, 0], &SolverOptions::default()).unwrap(), 0.0);
    }

    #[test]
    fn target_outside_is_rejected() {
        let dom = FiniteDomain::lattice_box(&LatticePoint::origin(3), 1).unwrap();
        let err = equilibrium_measure(&dom, &[vec![5, 0, 0]], &SolverOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NotContained));
    }

    #[test]
    fn symmetric_pair_has_equal_weights() {
        let dom = FiniteDomain::lattice_box(&LatticePoint::origin(3), 4).unwrap();
        let rep = equilibrium_measure(&dom, &[vec![-1, 0, 0], vec![1, 0, 0]], &SolverOptions::default()).unwrap();
        assert!((rep.equilibrium[0] - rep.equilibrium[1]).abs() < 1e-12);
        assert!(rep.capacity <= 2.0);
    }

    #[test]
    fn extrapolation_is_exact_on_polynomials() {
        let xs = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0];
        let vs: Vec<f64> = xs.iter().map(|x| 0.5 + 2.0 * x - 3.0 * x * x).collect();
        assert!((extrapolate_to_zero(&xs, &vs) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn dense_and_cg_agree() {
        let dom = FiniteDomain::lattice_box(&LatticePoint::origin(3), 6).unwrap();
        let k = vec![vec![0, 0, 0], vec![1, 0, 0], vec![0, 2, 1]];
        let dense = equilibrium_measure(&dom, &k, &SolverOptions { dense_below: 10_000, ..Default::default() }).unwrap();
        let cg = equilibrium_measure(&dom, &k, &SolverOptions { dense_below: 0, ..Default::default() }).unwrap();
        assert_eq!(cg.solver.as_ref().unwrap().method, "cg");
        assert_eq!(dense.solver.as_ref().unwrap().method, "dense_lu");
        for (a, b) in dense.equilibrium.iter().zip(&cg.equilibrium) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
