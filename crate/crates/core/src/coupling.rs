//! Excursions conditioned on their exit height, and two experiments built
//! on them: homogenization of the torus coordinate at the first return to
//! `C`, and the comparison of the true walk's vacant windows with windows
//! rebuilt from independently resampled excursions.

use std::collections::BTreeMap;

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{invalid, Error, Result};
use crate::grid::{build_grid, compute_schedule, ExcursionDetector, ExcursionEvent, Grid, GridSpec};
use crate::lattice::{CylinderPoint, Site, TorusParams, TorusTable, Window};
use crate::rng::{derive_seed, map_replicas, replica_rng};
use crate::stats::{average_ranks, chi_square_independence, chi_square_two_sample, chi_square_uniform, tv_from_uniform, ChiSquareResult};
use crate::walk::{CylinderWalk, LazyWalkParams, Observer, StartLaw};

use num_rational::Ratio;

/// Attempts per conditional sample before giving up.
pub const MAX_ATTEMPTS: u64 = 1_000_000;

/// The law `P_{z,z'}`: start uniform on level `z` in `C`, run to the
/// departure from the enclosing component of `O`, keep only runs that leave
/// at height `z'`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionalExcursionSpec {
    pub z: i64,
    pub exit: i64,
    pub center: i64,
    pub h: i64,
}

impl ConditionalExcursionSpec {
    pub fn new(grid: &Grid, z: i64, exit: i64) -> Result<Self> {
        let center = grid
            .c_component(z)
            .ok_or_else(|| invalid(format!("start height {z} is not in C")))?;
        let h = grid.h();
        if exit != center - h && exit != center + h {
            return Err(invalid(format!(
                "exit height {exit} is not an endpoint of ({}, {})",
                center - h,
                center + h
            )));
        }
        let spec = Self { z, exit, center, h };
        let p = spec.acceptance_probability();
        if p < 1e-3 {
            warn!("conditional excursion {z} -> {exit}: acceptance probability {p:.2e}");
        }
        Ok(spec)
    }

    /// Gambler's ruin: the vertical coordinate is a lazy symmetric walk, so
    /// the exit side does not depend on the holding probability.
    pub fn acceptance_probability(&self) -> f64 {
        let up = (self.z - (self.center - self.h)) as f64 / (2 * self.h) as f64;
        if self.exit > self.center {
            up
        } else {
            1.0 - up
        }
    }
}

/// An accepted excursion together with what its observer saw.
#[derive(Debug, Clone)]
pub struct Accepted<O> {
    pub observer: O,
    pub start: Site,
    /// `D_1`, the number of steps of the accepted run.
    pub steps: u64,
    pub attempts: u64,
}

/// Runs one excursion from `start` to its departure from `(c - h, c + h)`,
/// reporting times `0..=D_1`. Returns `(D_1, Z_{D_1})`.
pub fn run_excursion<R: Rng + ?Sized, O: Observer + ?Sized>(
    table: &TorusTable,
    start: Site,
    center: i64,
    h: i64,
    rng: &mut R,
    observer: &mut O,
) -> (u64, i64) {
    let (lo, hi) = (center - h, center + h);
    let band = observer.band();
    let seen = |z: i64| band.is_none_or(|(a, b)| z >= a && z <= b);
    let mut walk = CylinderWalk::new(table, start);
    let mut n = 0u64;
    loop {
        let z = walk.pos.z;
        if seen(z) {
            observer.observe(n, walk.pos);
        }
        if z <= lo || z >= hi {
            observer.finish(n);
            return (n, z);
        }
        walk.step(rng);
        n += 1;
    }
}

/// Rejection sampler for `P_{z,z'}`; `make` builds a fresh observer for
/// every attempt and the accepted one is returned.
pub fn sample_conditional_excursion_with<R: Rng + ?Sized, O: Observer, F: FnMut() -> O>(
    spec: &ConditionalExcursionSpec,
    table: &TorusTable,
    rng: &mut R,
    mut make: F,
) -> Result<Accepted<O>> {
    let start_law = StartLaw::UniformLevel { z: spec.z };
    for attempt in 1..=MAX_ATTEMPTS {
        let start = start_law.sample(table.params(), rng);
        let mut observer = make();
        let (steps, exit) = run_excursion(table, start, spec.center, spec.h, rng, &mut observer);
        if exit == spec.exit {
            return Ok(Accepted {
                observer,
                start,
                steps,
                attempts: attempt,
            });
        }
    }
    Err(invalid(format!(
        "no excursion {} -> {} accepted in {MAX_ATTEMPTS} attempts",
        spec.z, spec.exit
    )))
}

/// Records every position.
#[derive(Debug, Clone, Default)]
pub struct PathRecorder(pub Vec<Site>);

impl Observer for PathRecorder {
    fn observe(&mut self, _step: u64, site: Site) {
        self.0.push(site);
    }
}

/// One accepted excursion, trajectory included.
#[derive(Debug, Clone)]
pub struct ExcursionSegment {
    pub path: Vec<Site>,
    pub attempts: u64,
}

pub fn sample_conditional_excursion<R: Rng + ?Sized>(
    spec: &ConditionalExcursionSpec,
    table: &TorusTable,
    rng: &mut R,
) -> Result<ExcursionSegment> {
    let acc = sample_conditional_excursion_with(spec, table, rng, PathRecorder::default)?;
    Ok(ExcursionSegment {
        path: acc.observer.0,
        attempts: acc.attempts,
    })
}

/// Marks which of a sorted list of sites were visited.
#[derive(Debug, Clone)]
pub struct TargetHits<'a> {
    targets: &'a [Site],
    band: (i64, i64),
    pub hit: Vec<bool>,
}

impl<'a> TargetHits<'a> {
    /// `targets` must be sorted and nonempty.
    pub fn new(targets: &'a [Site]) -> Self {
        let lo = targets.iter().map(|s| s.z).min().expect("nonempty targets");
        let hi = targets.iter().map(|s| s.z).max().expect("nonempty targets");
        Self {
            targets,
            band: (lo, hi),
            hit: vec![false; targets.len()],
        }
    }

    pub fn any(&self) -> bool {
        self.hit.iter().any(|&h| h)
    }
}

impl Observer for TargetHits<'_> {
    fn band(&self) -> Option<(i64, i64)> {
        Some(self.band)
    }

    #[inline]
    fn observe(&mut self, _step: u64, site: Site) {
        if let Ok(i) = self.targets.binary_search(&site) {
            self.hit[i] = true;
        }
    }
}

// ---------------------------------------------------------------------------
// homogenization

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogenizationConfig {
    pub params: TorusParams,
    pub grid: GridSpec,
    pub start: CylinderPoint,
    pub replicas: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitHistogram {
    pub z_exit: i64,
    pub count: u64,
    pub tv: f64,
    /// Mean TV of an exactly uniform sample of the same size.
    pub noise_floor: f64,
    pub chi_square: ChiSquareResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogenizationReport {
    pub n: u32,
    pub d: usize,
    pub h_n: u64,
    pub d_n: u64,
    pub start_z: i64,
    pub samples: u64,
    /// Sample-weighted TV of `Y_{R_1}` given `Z_{R_1}` from uniform.
    pub tv: f64,
    pub noise_floor: f64,
    /// Sum of the per-exit chi-square statistics.
    pub chi_square: ChiSquareResult,
    pub exits: Vec<ExitHistogram>,
    pub retries: u32,
    /// Some exit height still had fewer than five expected counts per cell.
    pub flagged: bool,
}

fn expected_uniform_tv(count: u64, cells: u64) -> f64 {
    if count == 0 {
        return 1.0;
    }
    0.5 * (2.0 * (cells as f64 - 1.0) / (std::f64::consts::PI * count as f64)).sqrt()
}

/// Runs from `start` to the first time the height lies in `C`, skipping
/// blocks of steps that cannot reach it. Returns the site at `R_1`.
pub fn first_return<R: Rng + ?Sized>(table: &TorusTable, grid: &Grid, start: Site, rng: &mut R) -> Site {
    if grid.in_c(start.z) {
        return start;
    }
    let lo = grid.point_below(start.z) + grid.d();
    let hi = grid.point_above(start.z) - grid.d();
    let mut walk = CylinderWalk::new(table, start);
    loop {
        let z = walk.pos.z;
        if z <= lo || z >= hi {
            return walk.pos;
        }
        let gap = (z - lo).min(hi - z);
        for _ in 0..gap.max(2) - 1 {
            walk.step(rng);
        }
    }
}

pub fn homogenization_test(cfg: &HomogenizationConfig) -> Result<HomogenizationReport> {
    let grid = build_grid(cfg.grid.clone())?;
    let z0 = cfg.start.z;
    if grid.in_c(z0) {
        return Err(invalid(format!("start height {z0} is already in C, so R_1 = 0")));
    }
    let dist = (z0 - grid.point_below(z0) - grid.d()).min(grid.point_above(z0) - grid.d() - z0);
    if (2 * dist) < grid.h() {
        return Err(invalid(format!(
            "start is {dist} from C, below the homogenization distance h/2 = {}",
            grid.h() / 2
        )));
    }
    if cfg.replicas == 0 {
        return Err(invalid("replicas must be positive"));
    }
    let table = TorusTable::new(cfg.params);
    let start = cfg.start.site(&cfg.params);
    let cells = cfg.params.volume();
    let mut hist: BTreeMap<i64, Vec<u64>> = BTreeMap::new();
    let mut done = 0u64;
    let mut batch = cfg.replicas;
    let mut retries = 0;
    loop {
        let offset = done;
        let hits = map_replicas(batch, cfg.seed, |r, _| {
            let mut rng = replica_rng(cfg.seed, offset + r);
            first_return(&table, &grid, start, &mut rng)
        });
        for s in hits {
            hist.entry(s.z).or_insert_with(|| vec![0; cells as usize])[s.y as usize] += 1;
        }
        done += batch;
        let thin = hist.values().any(|c| c.iter().sum::<u64>() < 5 * cells);
        if !thin || retries == 1 {
            break;
        }
        retries += 1;
        batch = done;
    }
    let mut exits = Vec::new();
    let (mut tv, mut floor, mut stat, mut dof) = (0.0, 0.0, 0.0, 0.0);
    for (&z_exit, counts) in &hist {
        let count: u64 = counts.iter().sum();
        let chi = chi_square_uniform(counts);
        let e = ExitHistogram {
            z_exit,
            count,
            tv: tv_from_uniform(counts),
            noise_floor: expected_uniform_tv(count, cells),
            chi_square: chi,
        };
        let w = count as f64 / done as f64;
        tv += w * e.tv;
        floor += w * e.noise_floor;
        stat += chi.statistic;
        dof += chi.dof;
        exits.push(e);
    }
    let p_value = ChiSquared::new(dof).map(|c| c.sf(stat)).unwrap_or(f64::NAN);
    let flagged = exits.iter().any(|e| e.count < 5 * cells);
    Ok(HomogenizationReport {
        n: cfg.params.n(),
        d: cfg.params.d(),
        h_n: cfg.grid.h,
        d_n: cfg.grid.d,
        start_z: z0,
        samples: done,
        tv,
        noise_floor: floor,
        chi_square: ChiSquareResult { statistic: stat, dof, p_value },
        exits,
        retries,
        flagged,
    })
}

// ---------------------------------------------------------------------------
// pipeline comparison

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingConfig {
    pub params: TorusParams,
    pub grid: GridSpec,
    /// `T = floor(rho a_N^2)`, which fixes `k_*` through the schedule.
    pub rho: Ratio<u64>,
    pub start_level: i64,
    pub windows: Vec<Window>,
    pub replicas: u64,
    pub seed: u64,
    pub permutations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteComparison {
    pub site: CylinderPoint,
    pub vacant_a: f64,
    pub vacant_b: f64,
    /// Standard error of the paired difference.
    pub sigma: f64,
    pub z_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowComparison {
    pub base: CylinderPoint,
    pub vacant_a: f64,
    pub vacant_b: f64,
    pub sigma: f64,
    pub z_score: f64,
    /// Two-sample test on the full vacancy configuration, when the window
    /// has at most ten sites.
    pub configurations: Option<ChiSquareResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationTest {
    /// Sum over excursion types of `n_t rho_t^2`, `rho_t` the rank
    /// correlation of position and duration within the type.
    pub statistic: f64,
    pub p_value: f64,
    pub permutations: u64,
    pub records: u64,
    pub types: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    pub n: u32,
    pub h_n: u64,
    pub d_n: u64,
    pub t: u64,
    pub k_star: u64,
    pub replicas: u64,
    pub resampled: u64,
    pub acceptance_rate: f64,
    pub truncated: u64,
    pub sites: Vec<SiteComparison>,
    pub windows: Vec<WindowComparison>,
    /// Largest site `|z|`.
    pub max_site_z: f64,
    pub exchangeability: PermutationTest,
    pub uniformity: UniformityCheck,
}

/// Torus coordinate at `D_{k_*}`: goodness of fit to uniform, and
/// independence from the side of the start level on which `Z_{D_{k_*}}`
/// lies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformityCheck {
    pub uniform: ChiSquareResult,
    pub independence: ChiSquareResult,
    pub below: u64,
    pub above: u64,
}

impl CouplingReport {
    pub fn sites_within(&self, sigmas: f64) -> bool {
        self.sites.iter().all(|s| s.z_score.abs() <= sigmas)
    }
}

#[derive(Debug, Clone, Copy)]
struct Resampled {
    z_r: i64,
    z_d: i64,
    position: u32,
    duration: u64,
}

struct ReplicaOutcome {
    at_departure: Site,
    a: Vec<bool>,
    b: Vec<bool>,
    resampled: Vec<Resampled>,
    attempts: u64,
    truncated: bool,
}

/// Step cap for pipeline A, as a multiple of `T`.
const TRUNCATION_FACTOR: u64 = 1000;

pub fn resampled_excursion_comparison(cfg: &CouplingConfig) -> Result<CouplingReport> {
    let grid = build_grid(cfg.grid.clone())?;
    let gamma = LazyWalkParams::cylinder(cfg.params.d()).gamma();
    let schedule = compute_schedule(&cfg.grid, gamma, cfg.rho)?;
    let k_star = schedule.k_star;
    if k_star == 0 {
        return Err(invalid("k_* = 0: the schedule has no excursions"));
    }
    if cfg.replicas == 0 {
        return Err(invalid("replicas must be positive"));
    }
    if !grid.in_c(cfg.start_level) {
        return Err(invalid(format!("start level {} is not in C", cfg.start_level)));
    }
    let mut targets: Vec<Site> = Vec::new();
    for w in &cfg.windows {
        w.ensure_unwrapped()?;
        targets.extend(w.sites().iter().copied());
    }
    targets.sort_unstable();
    targets.dedup();
    if targets.is_empty() {
        return Err(invalid("no window sites"));
    }
    let mut centers: Vec<i64> = Vec::new();
    for s in &targets {
        let c = grid.c_component(s.z).ok_or_else(|| Error::OutOfInterval(format!("window site at height {} is not in C", s.z)))?;
        centers.push(c);
    }
    centers.sort_unstable();
    centers.dedup();

    let table = TorusTable::new(cfg.params);
    let seed_b = derive_seed(cfg.seed, "resampled-excursions");
    let cap = TRUNCATION_FACTOR * schedule.t.max(1);
    let start_law = StartLaw::UniformLevel { z: cfg.start_level };

    let outcomes: Vec<Result<ReplicaOutcome>> = map_replicas(cfg.replicas, cfg.seed, |r, rng| {
        let start = start_law.sample(&cfg.params, rng);
        let mut walk = CylinderWalk::new(&table, start);
        let mut det = ExcursionDetector::new(&grid);
        let mut hits = TargetHits::new(&targets);
        let mut excursions: Vec<(i64, i64, i64)> = Vec::new();
        let mut pending: Option<(i64, i64)> = None;
        let (lo, hi) = hits.band;
        let mut n = 0u64;
        let mut truncated = false;
        loop {
            let z = walk.pos.z;
            if z >= lo && z <= hi {
                hits.observe(n, walk.pos);
            }
            match det.feed(n, z) {
                Some(ExcursionEvent::Return { z, center, .. }) => pending = Some((z, center)),
                Some(ExcursionEvent::Departure { k, z, .. }) => {
                    let (z_r, center) = pending.take().expect("departure follows a return");
                    excursions.push((z_r, center, z));
                    if k as u64 == k_star {
                        break;
                    }
                }
                None => {}
            }
            if n >= cap {
                truncated = true;
                break;
            }
            walk.step(rng);
            n += 1;
        }

        let mut rng_b = replica_rng(seed_b, r);
        let mut b = vec![false; targets.len()];
        let mut resampled = Vec::new();
        let mut attempts = 0;
        for &(z_r, center, z_d) in &excursions {
            if centers.binary_search(&center).is_err() {
                continue;
            }
            let spec = ConditionalExcursionSpec::new(&grid, z_r, z_d)?;
            let acc = sample_conditional_excursion_with(&spec, &table, &mut rng_b, || TargetHits::new(&targets))?;
            for (x, &h) in b.iter_mut().zip(&acc.observer.hit) {
                *x |= h;
            }
            attempts += acc.attempts;
            resampled.push(Resampled {
                z_r,
                z_d,
                position: resampled.len() as u32,
                duration: acc.steps,
            });
        }
        Ok(ReplicaOutcome {
            at_departure: walk.pos,
            a: hits.hit.iter().map(|&h| !h).collect(),
            b: b.iter().map(|&h| !h).collect(),
            resampled,
            attempts,
            truncated,
        })
    });
    let outcomes: Vec<ReplicaOutcome> = outcomes.into_iter().collect::<Result<_>>()?;
    let reps = outcomes.len() as f64;

    let paired = |fa: &dyn Fn(&ReplicaOutcome) -> bool, fb: &dyn Fn(&ReplicaOutcome) -> bool| {
        let (mut sa, mut sb, mut sd, mut sdd) = (0.0, 0.0, 0.0, 0.0);
        for o in &outcomes {
            let (a, b) = (fa(o) as u8 as f64, fb(o) as u8 as f64);
            sa += a;
            sb += b;
            sd += a - b;
            sdd += (a - b) * (a - b);
        }
        let mean_d = sd / reps;
        let var = if reps > 1.0 { (sdd - reps * mean_d * mean_d) / (reps - 1.0) } else { 0.0 };
        let sigma = (var.max(0.0) / reps).sqrt();
        let z = if sigma > 0.0 { mean_d / sigma } else if mean_d == 0.0 { 0.0 } else { f64::INFINITY };
        (sa / reps, sb / reps, sigma, z)
    };

    let sites: Vec<SiteComparison> = targets
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let (vacant_a, vacant_b, sigma, z_score) = paired(&|o| o.a[i], &|o| o.b[i]);
            SiteComparison {
                site: s.point(&cfg.params),
                vacant_a,
                vacant_b,
                sigma,
                z_score,
            }
        })
        .collect();

    let windows: Vec<WindowComparison> = cfg
        .windows
        .iter()
        .map(|w| {
            let idx: Vec<usize> = w
                .sites()
                .iter()
                .map(|s| targets.binary_search(s).expect("window site is a target"))
                .collect();
            let (vacant_a, vacant_b, sigma, z_score) =
                paired(&|o| idx.iter().all(|&i| o.a[i]), &|o| idx.iter().all(|&i| o.b[i]));
            let configurations = (idx.len() <= 10).then(|| {
                let mut ca = vec![0u64; 1 << idx.len()];
                let mut cb = vec![0u64; 1 << idx.len()];
                let code = |bits: &[bool]| idx.iter().enumerate().fold(0usize, |acc, (j, &i)| acc | ((bits[i] as usize) << j));
                for o in &outcomes {
                    ca[code(&o.a)] += 1;
                    cb[code(&o.b)] += 1;
                }
                chi_square_two_sample(&ca, &cb)
            });
            WindowComparison {
                base: w.base.clone(),
                vacant_a,
                vacant_b,
                sigma,
                z_score,
                configurations,
            }
        })
        .collect();

    let records: Vec<Resampled> = outcomes.iter().flat_map(|o| o.resampled.iter().copied()).collect();
    let attempts: u64 = outcomes.iter().map(|o| o.attempts).sum();
    let exchangeability = permutation_test(&records, cfg.permutations, derive_seed(cfg.seed, "permutation"));
    let cells = cfg.params.volume() as usize;
    let mut by_side = vec![vec![0u64; cells]; 2];
    for o in outcomes.iter().filter(|o| !o.truncated) {
        by_side[(o.at_departure.z > cfg.start_level) as usize][o.at_departure.y as usize] += 1;
    }
    let pooled: Vec<u64> = (0..cells).map(|c| by_side[0][c] + by_side[1][c]).collect();
    let (below, above) = (by_side[0].iter().sum(), by_side[1].iter().sum());
    let uniformity = UniformityCheck {
        uniform: chi_square_uniform(&pooled),
        independence: chi_square_independence(&by_side),
        below,
        above,
    };
    let max_site_z = sites.iter().map(|s| s.z_score.abs()).fold(0.0, f64::max);
    Ok(CouplingReport {
        n: cfg.params.n(),
        h_n: cfg.grid.h,
        d_n: cfg.grid.d,
        t: schedule.t,
        k_star,
        replicas: cfg.replicas,
        resampled: records.len() as u64,
        acceptance_rate: if attempts > 0 { records.len() as f64 / attempts as f64 } else { 1.0 },
        truncated: outcomes.iter().filter(|o| o.truncated).count() as u64,
        sites,
        windows,
        max_site_z,
        exchangeability,
        uniformity,
    })
}

/// Groups of `(position rank, duration rank)` per excursion type.
struct RankGroup {
    pos: Vec<f64>,
    dur: Vec<f64>,
    /// centered sums of squares
    sxx: f64,
    syy: f64,
}

impl RankGroup {
    fn statistic(&self) -> f64 {
        let n = self.pos.len() as f64;
        let sxy: f64 = self.pos.iter().zip(&self.dur).map(|(a, b)| a * b).sum();
        let rho = sxy / (self.sxx * self.syy).sqrt();
        n * rho * rho
    }
}

fn permutation_test(records: &[Resampled], permutations: u64, seed: u64) -> PermutationTest {
    let mut by_type: BTreeMap<(i64, i64), Vec<&Resampled>> = BTreeMap::new();
    for r in records {
        by_type.entry((r.z_r, r.z_d)).or_default().push(r);
    }
    let mut groups = Vec::new();
    for recs in by_type.values() {
        if recs.len() < 3 {
            continue;
        }
        let center = |v: Vec<f64>| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.into_iter().map(|x| x - m).collect::<Vec<f64>>()
        };
        let pos = center(average_ranks(&recs.iter().map(|r| r.position as f64).collect::<Vec<_>>()));
        let dur = center(average_ranks(&recs.iter().map(|r| r.duration as f64).collect::<Vec<_>>()));
        let sxx: f64 = pos.iter().map(|x| x * x).sum();
        let syy: f64 = dur.iter().map(|x| x * x).sum();
        if sxx > 0.0 && syy > 0.0 {
            groups.push(RankGroup { pos, dur, sxx, syy });
        }
    }
    let total = |g: &[RankGroup]| g.iter().map(RankGroup::statistic).sum::<f64>();
    let observed = total(&groups);
    let mut rng = replica_rng(seed, 0);
    let mut exceed = 0u64;
    for _ in 0..permutations {
        for g in groups.iter_mut() {
            g.dur.shuffle(&mut rng);
        }
        if total(&groups) >= observed - 1e-12 {
            exceed += 1;
        }
    }
    PermutationTest {
        statistic: observed,
        p_value: (1 + exceed) as f64 / (1 + permutations) as f64,
        permutations,
        records: records.len() as u64,
        types: groups.len() as u64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Constraints;
    use crate::lattice::Pattern;

    fn grid(h: u64, d: u64) -> Grid {
        build_grid(GridSpec {
            a_n: 100 * h + 1,
            h,
            d,
            specials: vec![0],
            constraints: Constraints::Structural,
        })
        .unwrap()
    }

    #[test]
    fn spec_validation() {
        let g = grid(20, 4);
        assert!(ConditionalExcursionSpec::new(&g, 0, 20).is_ok());
        assert!(ConditionalExcursionSpec::new(&g, 0, 19).is_err());
        assert!(ConditionalExcursionSpec::new(&g, 10, 20).is_err());
        let s = ConditionalExcursionSpec::new(&g, 4, -20).unwrap();
        assert!((s.acceptance_probability() - 16.0 / 40.0).abs() < 1e-15);
    }

    #[test]
    fn accepted_samples_exit_where_asked() {
        let params = TorusParams::new(4, 2).unwrap();
        let table = TorusTable::new(params);
        let g = grid(12, 2);
        let spec = ConditionalExcursionSpec::new(&g, 0, -12).unwrap();
        let mut rng = replica_rng(1, 0);
        let mut accepted = 0u64;
        let mut attempts = 0u64;
        for _ in 0..2000 {
            let seg = sample_conditional_excursion(&spec, &table, &mut rng).unwrap();
            assert_eq!(seg.path.last().unwrap().z, -12);
            assert_eq!(seg.path[0].z, 0);
            assert!(seg.path[..seg.path.len() - 1].iter().all(|s| s.z > -12 && s.z < 12));
            accepted += 1;
            attempts += seg.attempts;
        }
        let rate = accepted as f64 / attempts as f64;
        let sd = (0.25 / attempts as f64).sqrt();
        assert!((rate - 0.5).abs() < 4.0 * sd, "rate {rate}");
    }

    #[test]
    fn homogenization_rejects_start_in_c() {
        let params = TorusParams::new(4, 2).unwrap();
        let cfg = HomogenizationConfig {
            params,
            grid: GridSpec {
                a_n: 10_000,
                h: 20,
                d: 4,
                specials: vec![0],
                constraints: Constraints::Structural,
            },
            start: CylinderPoint::new(&[0, 0], 2, &params).unwrap(),
            replicas: 10,
            seed: 0,
        };
        assert!(homogenization_test(&cfg).is_err());
        let near = HomogenizationConfig {
            start: CylinderPoint::new(&[0, 0], 8, &params).unwrap(),
            ..cfg.clone()
        };
        assert!(homogenization_test(&near).is_err());
        let ok = HomogenizationConfig {
            start: CylinderPoint::new(&[0, 0], 20, &params).unwrap(),
            ..cfg
        };
        let rep = homogenization_test(&ok).unwrap();
        assert_eq!(rep.exits.iter().map(|e| e.count).sum::<u64>(), rep.samples);
        assert!(rep.exits.iter().all(|e| e.z_exit == 4 || e.z_exit == 36));
    }

    #[test]
    fn windows_out_of_reach_stay_vacant() {
        let params = TorusParams::new(6, 2).unwrap();
        let h = 12;
        let far = CylinderPoint::new(&[0, 0], 240, &params).unwrap();
        let cfg = CouplingConfig {
            params,
            grid: GridSpec {
                a_n: 36,
                h,
                d: 2,
                specials: vec![0],
                constraints: Constraints::Structural,
            },
            rho: Ratio::new(8, 1),
            start_level: 0,
            windows: vec![Window::new(far, Pattern::origin(3), &params).unwrap()],
            replicas: 20,
            seed: 3,
            permutations: 19,
        };
        let rep = resampled_excursion_comparison(&cfg).unwrap();
        assert_eq!(rep.sites[0].vacant_a, 1.0);
        assert_eq!(rep.sites[0].vacant_b, 1.0);
        assert_eq!(rep.resampled, 0);
    }
}
