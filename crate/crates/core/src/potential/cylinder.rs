//! Potential theory on the slab `Btilde = T x (z* - h, z* + h)` of the
//! cylinder.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::capacity::{equilibrium_measure, hitting_probability, CapacityMethod, CapacityReport};
use super::domain::FiniteDomain;
use super::solver::SolverOptions;
use crate::error::{invalid, Error, Result};
use crate::lattice::{CylinderPoint, Site, TorusParams, TorusTable};
use crate::rng::replica_rng;
use crate::walk::CylinderWalk;

/// The slab `T x (center - h, center + h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slab {
    pub params: TorusParams,
    pub center: i64,
    pub h: u64,
}

impl Slab {
    pub fn z_range(&self) -> (i64, i64) {
        (self.center - self.h as i64 + 1, self.center + self.h as i64 - 1)
    }

    pub fn sites(&self) -> u64 {
        self.params.volume() * (2 * self.h - 1)
    }

    pub fn contains_z(&self, z: i64) -> bool {
        z.abs_diff(self.center) < self.h
    }

    pub fn domain(&self) -> Result<FiniteDomain> {
        if self.h == 0 {
            return Err(invalid("slab half-width must be positive"));
        }
        let (lo, hi) = self.z_range();
        FiniteDomain::cylinder_slab(self.params, lo, hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CylinderCapacityOptions {
    pub solver: SolverOptions,
    /// Slabs with more sites fall back to simulation.
    pub max_exact_sites: u64,
    pub mc_walkers: u64,
    pub seed: u64,
}

impl Default for CylinderCapacityOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            max_exact_sites: 4_000_000,
            mc_walkers: 100_000,
            seed: 0,
        }
    }
}

fn check_inside(slab: &Slab, c: &[CylinderPoint]) -> Result<()> {
    if c.iter().all(|p| slab.contains_z(p.z) && p.y.len() == slab.params.d()) {
        Ok(())
    } else {
        Err(Error::NotContained)
    }
}

/// `cap_Btilde(C)`: exact on the slab when it is small enough, simulated
/// otherwise.
pub fn cylinder_relative_capacity(slab: &Slab, c: &[CylinderPoint], opts: &CylinderCapacityOptions) -> Result<CapacityReport> {
    check_inside(slab, c)?;
    let mut pts: Vec<Vec<i64>> = c.iter().map(FiniteDomain::cylinder_coords).collect();
    pts.sort();
    pts.dedup();
    if pts.is_empty() {
        return Ok(CapacityReport {
            points: Vec::new(),
            equilibrium: Vec::new(),
            capacity: 0.0,
            method: CapacityMethod::ExactSolve,
            error: 0.0,
            solver: None,
            flagged: false,
            details: serde_json::Value::Null,
        });
    }
    if slab.sites() <= opts.max_exact_sites {
        let dom = slab.domain()?;
        let mut rep = equilibrium_measure(&dom, &pts, &opts.solver)?;
        rep.details = serde_json::json!({ "slab_sites": slab.sites() });
        return Ok(rep);
    }
    cylinder_capacity_mc(slab, &pts, opts)
}

fn cylinder_capacity_mc(slab: &Slab, pts: &[Vec<i64>], opts: &CylinderCapacityOptions) -> Result<CapacityReport> {
    let params = slab.params;
    let table = TorusTable::new(params);
    let sites: Vec<Site> = pts
        .iter()
        .map(|c| Site {
            y: params.encode(&c[..params.d()].iter().map(|&v| v as u32).collect::<Vec<_>>()),
            z: c[params.d()],
        })
        .collect();
    let mut sorted = sites.clone();
    sorted.sort_unstable();
    let (zlo, zhi) = slab.z_range();
    let c_lo = sorted.iter().map(|s| s.z).min().expect("nonempty");
    let c_hi = sorted.iter().map(|s| s.z).max().expect("nonempty");
    let mut equilibrium = Vec::new();
    let mut var = 0.0;
    for (i, &start) in sites.iter().enumerate() {
        let escapes: u64 = (0..64u64)
            .into_par_iter()
            .map(|chunk| {
                let mut rng = replica_rng(opts.seed, i as u64 * 64 + chunk);
                let n = opts.mc_walkers.div_ceil(64).min(opts.mc_walkers.saturating_sub(chunk * opts.mc_walkers.div_ceil(64)));
                let mut esc = 0;
                for _ in 0..n {
                    let mut w = CylinderWalk::new(&table, start);
                    loop {
                        w.step(&mut rng);
                        let z = w.pos.z;
                        if z < zlo || z > zhi {
                            esc += 1;
                            break;
                        }
                        if z >= c_lo && z <= c_hi && sorted.binary_search(&w.pos).is_ok() {
                            break;
                        }
                    }
                }
                esc
            })
            .sum();
        let f = escapes as f64 / opts.mc_walkers as f64;
        var += f * (1.0 - f) / opts.mc_walkers as f64;
        equilibrium.push(f);
    }
    let sd = var.sqrt();
    Ok(CapacityReport {
        points: pts.to_vec(),
        capacity: equilibrium.iter().sum(),
        equilibrium,
        method: CapacityMethod::MonteCarlo,
        error: 3.0 * sd,
        solver: None,
        flagged: false,
        details: serde_json::json!({ "slab_sites": slab.sites(), "walkers": opts.mc_walkers, "std_error": sd }),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformStartHitting {
    pub z1: i64,
    /// `P_{nu_{z1}}[H_C < T_Btilde]`.
    pub probability: f64,
    /// `cap_Btilde(C)`.
    pub capacity: f64,
    /// `(d+1) (h / N^d) cap_Btilde(C)`.
    pub reference: f64,
    pub ratio: f64,
}

/// Exact `P_{nu_{z1}}[H_C < T_Btilde]` and its ratio to
/// `(d+1) (h/N^d) cap_Btilde(C)`.
pub fn hitting_probability_uniform_start(slab: &Slab, c: &[CylinderPoint], z1: i64, solver: &SolverOptions) -> Result<UniformStartHitting> {
    check_inside(slab, c)?;
    if !slab.contains_z(z1) {
        return Err(Error::OutOfInterval(format!("level {z1} is outside the slab")));
    }
    let params = slab.params;
    if c.is_empty() {
        return Ok(UniformStartHitting {
            z1,
            probability: 0.0,
            capacity: 0.0,
            reference: 0.0,
            ratio: f64::NAN,
        });
    }
    let dom = slab.domain()?;
    let pts: Vec<Vec<i64>> = c.iter().map(FiniteDomain::cylinder_coords).collect();
    let idx = dom.indices_of(&pts)?;
    let (hit, _) = hitting_probability(&dom, &idx, solver)?;
    let vol = params.volume();
    let mut sum = 0.0;
    for y in 0..vol as u32 {
        let mut coords: Vec<i64> = params.decode(y).into_iter().map(i64::from).collect();
        coords.push(z1);
        sum += hit[dom.index_of(&coords).expect("level inside slab") as usize];
    }
    let probability = sum / vol as f64;
    let cap = equilibrium_measure(&dom, &pts, solver)?.capacity;
    let reference = (params.d() as f64 + 1.0) * slab.h as f64 / vol as f64 * cap;
    Ok(UniformStartHitting {
        z1,
        probability,
        capacity: cap,
        reference,
        ratio: probability / reference,
    })
}

/// Simulated `P_{nu_{z1}}[H_C < T_Btilde]` with its standard error.
pub fn hitting_probability_mc(slab: &Slab, c: &[CylinderPoint], z1: i64, walkers: u64, seed: u64) -> Result<(f64, f64)> {
    check_inside(slab, c)?;
    let params = slab.params;
    let table = TorusTable::new(params);
    let mut sites: Vec<Site> = c.iter().map(|p| p.site(&params)).collect();
    sites.sort_unstable();
    let (zlo, zhi) = slab.z_range();
    let chunk = walkers.div_ceil(64);
    let hits: u64 = (0..64u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = replica_rng(seed, k);
            let n = chunk.min(walkers.saturating_sub(k * chunk));
            let mut hits = 0;
            for _ in 0..n {
                let start = crate::walk::StartLaw::UniformLevel { z: z1 }.sample(&params, &mut rng);
                let mut w = CylinderWalk::new(&table, start);
                loop {
                    if sites.binary_search(&w.pos).is_ok() {
                        hits += 1;
                        break;
                    }
                    w.step(&mut rng);
                    if w.pos.z < zlo || w.pos.z > zhi {
                        break;
                    }
                }
            }
            hits
        })
        .sum();
    let p = hits as f64 / walkers as f64;
    Ok((p, (p * (1.0 - p) / walkers as f64).sqrt()))
}
