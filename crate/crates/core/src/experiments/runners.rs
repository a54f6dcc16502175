//! Runners for every kind except the theorem.

use serde::Serialize;

use super::params::{CapacityParams, CouplingParams, InterlaceParams, Lemma31Params, Lemma42Params, MartingaleParams, Prop21Params, WindowSpec};
use super::plot::{Plot, PlotPoint, Series};
use super::{cell, not_above, Gate, Outcome, Table};
use crate::coupling::{homogenization_test, resampled_excursion_comparison, CouplingConfig, HomogenizationConfig};
use crate::error::{invalid, Result};
use crate::grid::{
    build_grid, compute_schedule, default_d, default_h, expected_exit_local_time, hitting_factor, parse_ratio, Constraints, ExcursionDetector,
    ExcursionEvent, GridSpec,
};
use crate::interlacement::{InterlacementSampler, SamplerOptions};
use crate::lattice::{CylinderPoint, Pattern, Site, TorusParams, Window};
use crate::potential::{
    capacity_infinite, hitting_probability_mc, hitting_probability_uniform_start, EscapeMcOptions, InfiniteCapacityOptions, Slab, SolverOptions,
    CAP_ORIGIN_Z3,
};
use crate::rng::{derive_seed, map_replicas};
use crate::stats::RunningStats;
use crate::walk::{LazyWalk, LazyWalkParams, LocalTimeTable, Observer};

fn ratio_f64(r: num_rational::Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Largest drop of `b` below `a` beyond the slacks, over consecutive
/// pairs; `<= 0` means nondecreasing within the slacks. `None` with fewer
/// than two rungs.
fn worst_decrease(values: &[(f64, f64)]) -> Option<f64> {
    values
        .windows(2)
        .map(|w| (w[0].0 - w[0].1) - (w[1].0 + w[1].1))
        .reduce(f64::max)
}

/// Largest rise of `b` above `a` beyond the slacks.
fn worst_increase(values: &[(f64, f64)]) -> Option<f64> {
    values
        .windows(2)
        .map(|w| {
            let (a, sa, b, sb) = (w[0].0, w[0].1, w[1].0, w[1].1);
            debug_assert_eq!(not_above(a, sa, b, sb), (b - sb) - (a + sa) <= 0.0);
            (b - sb) - (a + sa)
        })
        .reduce(f64::max)
}

fn per_rung<T: Copy>(given: &Option<Vec<T>>, len: usize, what: &str) -> Result<Option<Vec<T>>> {
    match given {
        Some(v) if v.len() != len => Err(invalid(format!("{what} has {} entries for {len} rungs", v.len()))),
        other => Ok(other.clone()),
    }
}

fn pow(n: u32, d: usize) -> Result<u64> {
    (n as u64).checked_pow(d as u32).ok_or_else(|| invalid("N^d overflows"))
}

fn window_at(spec: &WindowSpec, params: &TorusParams) -> Result<Window> {
    let n = params.n() as f64;
    if spec.y.len() != params.d() {
        return Err(invalid(format!("window position {:?} needs {} coordinates", spec.y, params.d())));
    }
    let y: Vec<i64> = spec.y.iter().map(|f| (f * n).floor() as i64).collect();
    let z = (spec.v * params.vertical_scale()).floor() as i64 + spec.dz;
    let w = Window::new(CylinderPoint::new(&y, z, params)?, spec.pattern.parse::<Pattern>()?, params)?;
    w.ensure_unwrapped()?;
    Ok(w)
}

// ---------------------------------------------------------------------------
// excursion schedule of the lazy walk

#[derive(Debug, Clone, Serialize)]
struct Prop21Rung {
    gamma: String,
    a_n: u64,
    h: u64,
    d: u64,
    t: u64,
    sigma: u64,
    k_star: u64,
    k_upper_star: u64,
    /// Grid points whose local times are tracked.
    tracked: usize,
    coverage: f64,
    coverage_se: f64,
    /// `sup_z E[(|L^z_T - L^z_{D_{k_*}}| / a) ^ 1]`.
    time_change: f64,
    time_change_se: f64,
    /// `sup_I (h/a) E[#{k <= k_* : Z_{R_k} in I}]`.
    count_bound: f64,
    /// `sup_z E[|L^z_{D_{k_*}} - proxy|] / a`.
    proxy_error: f64,
    proxy_error_se: f64,
    proxy_error_at: i64,
    truncated: u64,
}

struct Prop21Replica {
    covered: bool,
    truncated: bool,
    time_change: Vec<f64>,
    proxy_error: Vec<f64>,
    returns: Vec<u64>,
}

/// Steps allowed past `T`, as a multiple of `T`.
const LAZY_CAP: u64 = 100;

fn prop21_rung(gamma_text: &str, a: u64, h: u64, d: u64, p: &Prop21Params, seed: u64) -> Result<Prop21Rung> {
    let gamma = parse_ratio(gamma_text)?;
    let rho = parse_ratio(&p.rho)?;
    let spec = GridSpec {
        a_n: a,
        h,
        d,
        specials: vec![0],
        constraints: Constraints::Structural,
    };
    let grid = build_grid(spec.clone())?;
    let sched = compute_schedule(&spec, gamma, rho)?;
    if sched.k_star == 0 {
        return Err(invalid(format!("k_* = 0 at a_N = {a}, h = {h}")));
    }
    let lazy = LazyWalkParams::new(gamma)?;
    let t_end = sched.t;
    // heights further than 8 standard deviations are not tracked
    let reach = (8.0 * (ratio_f64(gamma) * 2.0 * t_end as f64).sqrt()) as i64 + 2 * h as i64;
    let points = grid.points_in(-reach, reach);
    let (k_star, k_up) = (sched.k_star as usize, sched.k_upper_star as usize);
    let af = a as f64;
    let hg = h as f64 / ratio_f64(gamma);
    let rseed = derive_seed(seed, &format!("prop21/{gamma_text}/{a}"));
    let reps: Vec<Prop21Replica> = map_replicas(p.replicas, rseed, |_, rng| {
        let mut walk = LazyWalk::new(lazy, 0);
        let mut det = ExcursionDetector::new(&grid);
        let mut lt = LocalTimeTable::new(&points, u64::MAX);
        let mut returns = vec![0u64; points.len()];
        let (mut at_t, mut at_d): (Option<Vec<u64>>, Option<Vec<u64>>) = (None, None);
        let (mut before_t, mut covered_low) = (0usize, false);
        let mut t = 0u64;
        let mut truncated = false;
        loop {
            let z = walk.z;
            if t == t_end {
                before_t = det.departures();
            }
            match det.feed(t, z) {
                Some(ExcursionEvent::Return { k, center, .. }) if k <= k_star => {
                    if let Ok(i) = points.binary_search(&center) {
                        returns[i] += 1;
                    }
                }
                Some(ExcursionEvent::Departure { k, .. }) if k == k_star => at_d = Some(lt.counts().to_vec()),
                _ => {}
            }
            if t == t_end {
                covered_low = det.departures() >= k_star;
                at_t = Some(lt.counts().to_vec());
            }
            if t >= t_end && at_d.is_some() {
                break;
            }
            if t >= LAZY_CAP * t_end.max(1) {
                truncated = true;
                break;
            }
            lt.observe(t, Site { y: 0, z });
            walk.step(rng);
            t += 1;
        }
        let (lt_t, lt_d) = match (at_t, at_d) {
            (Some(x), Some(y)) => (x, y),
            (x, y) => {
                let zero = vec![0; points.len()];
                (x.unwrap_or_else(|| zero.clone()), y.unwrap_or(zero))
            }
        };
        Prop21Replica {
            covered: !truncated && covered_low && before_t < k_up,
            truncated,
            time_change: lt_t
                .iter()
                .zip(&lt_d)
                .map(|(&x, &y)| (x.abs_diff(y) as f64 / af).min(1.0))
                .collect(),
            proxy_error: lt_d
                .iter()
                .zip(&returns)
                .map(|(&l, &r)| (l as f64 - hg * r as f64).abs() / af)
                .collect(),
            returns,
        }
    });

    let n = reps.len() as f64;
    let coverage = reps.iter().filter(|r| r.covered).count() as f64 / n;
    let sup_stat = |f: &dyn Fn(&Prop21Replica, usize) -> f64| {
        let mut best = (f64::NEG_INFINITY, 0.0, 0usize);
        for i in 0..points.len() {
            let s: RunningStats = reps.iter().map(|r| f(r, i)).collect();
            if s.mean > best.0 {
                best = (s.mean, s.std_error(), i);
            }
        }
        best
    };
    let (time_change, time_change_se, _) = sup_stat(&|r, i| r.time_change[i]);
    let (proxy_error, proxy_error_se, at) = sup_stat(&|r, i| r.proxy_error[i]);
    let count_bound = (0..points.len())
        .map(|i| reps.iter().map(|r| r.returns[i] as f64).sum::<f64>() / n)
        .fold(0.0, f64::max)
        * h as f64
        / af;
    Ok(Prop21Rung {
        gamma: gamma_text.into(),
        a_n: a,
        h,
        d,
        t: sched.t,
        sigma: sched.sigma,
        k_star: sched.k_star,
        k_upper_star: sched.k_upper_star,
        tracked: points.len(),
        coverage,
        coverage_se: (coverage * (1.0 - coverage) / n).sqrt(),
        time_change,
        time_change_se,
        count_bound,
        proxy_error,
        proxy_error_se,
        proxy_error_at: points[at],
        truncated: reps.iter().filter(|r| r.truncated).count() as u64,
    })
}

#[derive(Debug, Clone, Serialize)]
struct MartingaleCheck {
    gamma: String,
    z: i64,
    k_star: u64,
    increments: u64,
    mean: f64,
    std_error: f64,
    z_score: f64,
}

/// Increments `L^z_{[R_k, D_k)} - Q_{Z_{R_k}}[H_z < T] E_z[L^z_T]` over the
/// excursions from the component of `0`, pooled over `k <= k_*`.
fn martingale_check(gamma_text: &str, m: &MartingaleParams, rho: &str, seed: u64) -> Result<MartingaleCheck> {
    let gamma = parse_ratio(gamma_text)?;
    let spec = GridSpec {
        a_n: m.a_n,
        h: m.h,
        d: m.d_n,
        specials: vec![0],
        constraints: Constraints::Structural,
    };
    let grid = build_grid(spec.clone())?;
    let sched = compute_schedule(&spec, gamma, parse_ratio(rho)?)?;
    let z = m.offset;
    if z.unsigned_abs() > m.d_n {
        return Err(invalid(format!("tracked height {z} is outside I_0")));
    }
    let exit_lt = ratio_f64(expected_exit_local_time(z, 0, m.h, gamma)?);
    let lazy = LazyWalkParams::new(gamma)?;
    let k_star = sched.k_star as usize;
    let cap = LAZY_CAP * sched.t.max(1);
    let per: Vec<Result<RunningStats>> = map_replicas(m.replicas, derive_seed(seed, &format!("prop21/martingale/{gamma_text}")), |_, rng| {
        let mut walk = LazyWalk::new(lazy, 0);
        let mut det = ExcursionDetector::new(&grid);
        let mut stats = RunningStats::default();
        let mut current: Option<(f64, u64)> = None;
        let mut t = 0u64;
        while t < cap {
            let zt = walk.z;
            match det.feed(t, zt) {
                Some(ExcursionEvent::Return { z: zr, center, .. }) => {
                    current = if center == 0 {
                        Some((ratio_f64(hitting_factor(zr, z, 0, m.h)?) * exit_lt, 0))
                    } else {
                        None
                    };
                }
                Some(ExcursionEvent::Departure { k, .. }) => {
                    if let Some((comp, visits)) = current.take() {
                        stats.push(visits as f64 - comp);
                    }
                    if k == k_star {
                        break;
                    }
                }
                None => {}
            }
            if zt == z {
                if let Some((_, v)) = current.as_mut() {
                    *v += 1;
                }
            }
            walk.step(rng);
            t += 1;
        }
        Ok(stats)
    });
    let mut pooled = RunningStats::default();
    for s in per {
        pooled.merge(&s?);
    }
    let se = pooled.std_error();
    Ok(MartingaleCheck {
        gamma: gamma_text.into(),
        z,
        k_star: sched.k_star,
        increments: pooled.n,
        mean: pooled.mean,
        std_error: se,
        z_score: if se > 0.0 { pooled.mean / se } else { 0.0 },
    })
}

/// Default `h_N = ceil(a_N^{1/4})`.
fn quarter_root(a: u64) -> u64 {
    let mut h = (a as f64).powf(0.25).floor() as u64;
    while h.pow(4) < a {
        h += 1;
    }
    h.max(1)
}

pub fn prop21(p: &Prop21Params, seed: u64) -> Result<Outcome> {
    if p.scales.is_empty() || p.gammas.is_empty() || p.replicas == 0 {
        return Err(invalid("need scales, gammas and replicas"));
    }
    let heights = per_rung(&p.heights, p.scales.len(), "heights")?;
    let dns = per_rung(&p.d_n, p.scales.len(), "d_n")?;
    let mut rungs = Vec::new();
    let mut gates = Vec::new();
    let mut martingales = Vec::new();
    let mut table = Table::new(
        "prop21",
        &[
            "gamma", "a_N", "h", "d", "T", "k_star", "k_upper_star", "coverage", "time_change", "count_bound", "proxy_error", "truncated",
        ],
    );
    let (mut cov_series, mut proxy_series) = (Vec::new(), Vec::new());
    for g in &p.gammas {
        let mut these = Vec::new();
        for (i, &a) in p.scales.iter().enumerate() {
            let h = heights.as_ref().map_or_else(|| quarter_root(a), |v| v[i]);
            let d = dns.as_ref().map_or(0, |v| v[i]);
            let r = prop21_rung(g, a, h, d, p, seed)?;
            table.push(vec![
                cell(g),
                cell(r.a_n),
                cell(r.h),
                cell(r.d),
                cell(r.t),
                cell(r.k_star),
                cell(r.k_upper_star),
                cell(r.coverage),
                cell(r.time_change),
                cell(r.count_bound),
                cell(r.proxy_error),
                cell(r.truncated),
            ]);
            these.push(r);
        }
        let top = these.last().expect("nonempty ladder");
        let s = p.sigmas;
        let cov: Vec<(f64, f64)> = these.iter().map(|r| (r.coverage, s * r.coverage_se)).collect();
        if let Some(v) = worst_decrease(&cov) {
            gates.push(Gate::at_most(format!("coverage trend, gamma {g}"), v, 0.0, format!("largest drop of P[D_k* <= T <= D_k^*] beyond {s} sd")));
        }
        gates.push(Gate::at_least(
            format!("coverage at a_N = {}, gamma {g}", top.a_n),
            top.coverage,
            p.coverage,
            format!("{} replicas", p.replicas),
        ));
        let tc: Vec<(f64, f64)> = these.iter().map(|r| (r.time_change, s * r.time_change_se)).collect();
        if let Some(v) = worst_increase(&tc) {
            gates.push(Gate::at_most(format!("local time change trend, gamma {g}"), v, 0.0, "sup over tracked heights of E[(|L_T - L_D| / a) ^ 1]"));
        }
        let pe: Vec<(f64, f64)> = these.iter().map(|r| (r.proxy_error, s * r.proxy_error_se)).collect();
        if let Some(v) = worst_increase(&pe) {
            gates.push(Gate::at_most(format!("proxy error trend, gamma {g}"), v, 0.0, format!("largest rise beyond {s} sd")));
        }
        gates.push(Gate::at_most(
            format!("proxy error at a_N = {}, gamma {g}", top.a_n),
            top.proxy_error,
            p.proxy_tolerance,
            format!("worst height {}", top.proxy_error_at),
        ));
        gates.push(Gate::at_most(
            format!("return count bound, gamma {g}"),
            these.iter().map(|r| r.count_bound).fold(0.0, f64::max),
            p.count_bound,
            "sup over rungs and components of (h/a) E[#returns up to k_*]",
        ));
        let m = martingale_check(g, &p.martingale, &p.rho, seed)?;
        gates.push(Gate::at_most(
            format!("martingale increments, gamma {g}"),
            m.z_score.abs(),
            p.sigmas,
            format!("mean {:.4} over {} increments", m.mean, m.increments),
        ));
        cov_series.push(Series {
            label: format!("gamma {g}"),
            points: these.iter().map(|r| PlotPoint::new(r.a_n as f64, r.coverage, s * r.coverage_se)).collect(),
        });
        proxy_series.push(Series {
            label: format!("gamma {g}"),
            points: these
                .iter()
                .map(|r| PlotPoint::new(r.a_n as f64, r.proxy_error, s * r.proxy_error_se))
                .collect(),
        });
        martingales.push(m);
        rungs.extend(these);
    }
    Ok(Outcome {
        summary: serde_json::json!({ "rungs": rungs, "martingale": martingales }),
        tables: vec![table],
        plots: vec![
            Plot {
                name: "coverage".into(),
                title: "P[D_k* <= T <= D_k^*]".into(),
                x_label: "a_N".into(),
                y_label: "probability".into(),
                series: cov_series,
                reference: Some(p.coverage),
            },
            Plot {
                name: "proxy_error".into(),
                title: "Local time proxy error".into(),
                x_label: "a_N".into(),
                y_label: "sup_z E|L - proxy| / a_N".into(),
                series: proxy_series,
                reference: Some(p.proxy_tolerance),
            },
        ],
        gates,
    })
}

// ---------------------------------------------------------------------------
// homogenization

pub fn lemma31(p: &Lemma31Params, seed: u64) -> Result<Outcome> {
    if p.ladder.is_empty() {
        return Err(invalid("empty ladder"));
    }
    let heights = per_rung(&p.heights, p.ladder.len(), "heights")?;
    let dns = per_rung(&p.d_n, p.ladder.len(), "d_n")?;
    let mut reports = Vec::new();
    let mut table = Table::new("homogenization", &["N", "h", "d", "samples", "tv", "noise_floor", "chi_square_p", "retries", "flagged"]);
    for (i, &n) in p.ladder.iter().enumerate() {
        let h = heights.as_ref().map_or_else(|| default_h(n), |v| v[i]);
        let d = dns.as_ref().map_or_else(|| default_d(h), |v| v[i]);
        let params = TorusParams::new(n, p.d)?;
        let a_n = pow(n, p.d)?;
        let replicas = match p.replicas {
            Some(r) => r,
            None => p.replica_factor * a_n * a_n,
        };
        // midway between the grid points 0 and 2h
        let start = CylinderPoint::new(&vec![0; p.d], h as i64, &params)?;
        let rep = homogenization_test(&HomogenizationConfig {
            params,
            grid: GridSpec {
                a_n,
                h,
                d,
                specials: vec![0],
                constraints: Constraints::Structural,
            },
            start,
            replicas,
            seed: derive_seed(seed, &format!("lemma31/{n}")),
        })?;
        table.push(vec![
            cell(n),
            cell(h),
            cell(d),
            cell(rep.samples),
            cell(rep.tv),
            cell(rep.noise_floor),
            cell(rep.chi_square.p_value),
            cell(rep.retries),
            cell(rep.flagged),
        ]);
        reports.push(rep);
    }
    let rise = reports
        .windows(2)
        .map(|w| w[1].tv - w[0].tv)
        .fold(f64::NEG_INFINITY, f64::max);
    let top = reports.last().expect("nonempty");
    let mut gates = Vec::new();
    if reports.len() > 1 {
        gates.push(Gate {
            name: "TV strictly decreasing".into(),
            passed: rise < 0.0,
            value: rise,
            threshold: 0.0,
            detail: "largest change of TV between consecutive rungs".into(),
        });
    }
    gates.push(Gate::at_most(
        format!("TV at N = {}", top.n),
        top.tv,
        p.tv_tolerance,
        format!("noise floor {:.4}", top.noise_floor),
    ));
    let plot = Plot {
        name: "homogenization".into(),
        title: "TV of Y at the first return from uniform".into(),
        x_label: "N".into(),
        y_label: "TV".into(),
        series: vec![
            Series {
                label: "TV".into(),
                points: reports.iter().map(|r| PlotPoint::new(r.n as f64, r.tv, 0.0)).collect(),
            },
            Series {
                label: "uniform noise".into(),
                points: reports.iter().map(|r| PlotPoint::new(r.n as f64, r.noise_floor, 0.0)).collect(),
            },
        ],
        reference: Some(p.tv_tolerance),
    };
    Ok(Outcome {
        summary: serde_json::json!({ "rungs": reports }),
        tables: vec![table],
        plots: vec![plot],
        gates,
    })
}

// ---------------------------------------------------------------------------
// hitting from a uniform level

#[derive(Debug, Clone, Serialize)]
struct Lemma42Rung {
    n: u64,
    h: u64,
    d: u64,
    sites: usize,
    capacity: f64,
    ratio_below: f64,
    ratio_above: f64,
    /// `max |ratio - 1| / (d/h)`.
    deviation: f64,
}

pub fn lemma42(p: &Lemma42Params, seed: u64) -> Result<Outcome> {
    if p.rungs.is_empty() {
        return Err(invalid("empty ladder"));
    }
    let mut caps = Vec::new();
    for w in &p.windows {
        let k: Pattern = w.pattern.parse()?;
        caps.push(capacity_infinite(&k, &InfiniteCapacityOptions::default())?.capacity);
    }
    let cap_sum: f64 = caps.iter().sum();
    let solver = SolverOptions::default();
    let mut rungs = Vec::new();
    let mut cross_check = None;
    let mut table = Table::new("lemma42", &["N", "h", "d", "cap_slab", "ratio_minus_d", "ratio_plus_d", "bound"]);
    for (i, &[n, h, d]) in p.rungs.iter().enumerate() {
        let n32 = u32::try_from(n).map_err(|_| invalid("N too large"))?;
        let params = TorusParams::new(n32, p.d)?;
        if d == 0 || d >= h {
            return Err(invalid(format!("need 0 < d_N < h_N, got d = {d}, h = {h}")));
        }
        let mut c: Vec<CylinderPoint> = Vec::new();
        for w in &p.windows {
            let win = window_at(w, &params)?;
            c.extend(win.sites().iter().map(|s| s.point(&params)));
        }
        c.sort();
        c.dedup();
        if c.iter().any(|x| x.z.unsigned_abs() > d) {
            return Err(invalid("every window has to lie in I = [-d_N, d_N]"));
        }
        let slab = Slab { params, center: 0, h };
        let up = hitting_probability_uniform_start(&slab, &c, d as i64, &solver)?;
        let down = hitting_probability_uniform_start(&slab, &c, -(d as i64), &solver)?;
        let scale = d as f64 / h as f64;
        let deviation = (up.ratio - 1.0).abs().max((down.ratio - 1.0).abs()) / scale;
        if i == 0 && p.mc_walkers > 0 {
            let (pm, sd) = hitting_probability_mc(&slab, &c, d as i64, p.mc_walkers, derive_seed(seed, "lemma42/mc"))?;
            cross_check = Some(serde_json::json!({
                "n": n,
                "exact": up.probability,
                "simulated": pm,
                "std_error": sd,
                "z_score": if sd > 0.0 { (pm - up.probability) / sd } else { 0.0 },
            }));
        }
        table.push(vec![
            cell(n),
            cell(h),
            cell(d),
            cell(up.capacity),
            cell(down.ratio),
            cell(up.ratio),
            cell(p.ratio_factor * scale),
        ]);
        rungs.push(Lemma42Rung {
            n,
            h,
            d,
            sites: c.len(),
            capacity: up.capacity,
            ratio_below: down.ratio,
            ratio_above: up.ratio,
            deviation,
        });
    }
    let mut gates = Vec::new();
    for r in &rungs {
        gates.push(Gate::at_most(
            format!("hitting ratio at N = {}", r.n),
            r.deviation,
            p.ratio_factor,
            format!("ratios {:.5} / {:.5}, d/h = {}/{}", r.ratio_below, r.ratio_above, r.d, r.h),
        ));
    }
    let top = rungs.last().expect("nonempty");
    let rel = (top.capacity - cap_sum).abs() / cap_sum;
    gates.push(Gate::at_most(
        format!("slab capacity vs sum of capacities at N = {}", top.n),
        rel,
        p.sum_tolerance,
        format!("{:.5} vs {:.5}", top.capacity, cap_sum),
    ));
    Ok(Outcome {
        summary: serde_json::json!({
            "rungs": rungs,
            "capacities": caps,
            "capacity_sum": cap_sum,
            "simulated_cross_check": cross_check,
        }),
        tables: vec![table],
        plots: vec![Plot {
            name: "lemma42".into(),
            title: "Hitting ratio deviation in units of d/h".into(),
            x_label: "N".into(),
            y_label: "|ratio - 1| h / d".into(),
            series: vec![Series {
                label: "worst side".into(),
                points: rungs.iter().map(|r| PlotPoint::new(r.n as f64, r.deviation, 0.0)).collect(),
            }],
            reference: Some(p.ratio_factor),
        }],
        gates,
    })
}

// ---------------------------------------------------------------------------
// pipelines A and B

/// Default `h_N = ceil(N^{3d/4})`.
fn coupling_h(n: u32, d: usize) -> u64 {
    let x = (n as f64).powf(0.75 * d as f64);
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r as u64
    } else {
        x.ceil() as u64
    }
}

pub fn coupling(p: &CouplingParams, seed: u64) -> Result<Outcome> {
    if p.ladder.is_empty() {
        return Err(invalid("empty ladder"));
    }
    let heights = per_rung(&p.heights, p.ladder.len(), "heights")?;
    let dns = per_rung(&p.d_n, p.ladder.len(), "d_n")?;
    let rho = parse_ratio(&p.alpha)?;
    let mut reports = Vec::new();
    let mut gates = Vec::new();
    let mut table = Table::new("coupling_sites", &["N", "site", "vacant_a", "vacant_b", "sigma", "z_score"]);
    for (i, &n) in p.ladder.iter().enumerate() {
        let h = heights.as_ref().map_or_else(|| coupling_h(n, p.d), |v| v[i]);
        let d = dns.as_ref().map_or_else(|| default_d(h), |v| v[i]);
        let params = TorusParams::new(n, p.d)?;
        let windows = p.windows.iter().map(|w| window_at(w, &params)).collect::<Result<Vec<_>>>()?;
        let rep = resampled_excursion_comparison(&CouplingConfig {
            params,
            grid: GridSpec {
                a_n: pow(n, p.d)?,
                h,
                d,
                specials: vec![0],
                constraints: Constraints::Structural,
            },
            rho,
            start_level: 0,
            windows,
            replicas: p.replicas,
            seed: derive_seed(seed, &format!("coupling/{n}")),
            permutations: p.permutations,
        })?;
        for s in &rep.sites {
            table.push(vec![cell(n), cell(&s.site), cell(s.vacant_a), cell(s.vacant_b), cell(s.sigma), cell(s.z_score)]);
        }
        gates.push(Gate::at_most(
            format!("site vacancy A vs B at N = {n}"),
            rep.max_site_z,
            p.sigmas,
            format!("{} sites, k_* = {}, {} excursions resampled", rep.sites.len(), rep.k_star, rep.resampled),
        ));
        gates.push(Gate::at_least(
            format!("exchangeability at N = {n}"),
            rep.exchangeability.p_value,
            p.p_min,
            format!("{} records in {} types", rep.exchangeability.records, rep.exchangeability.types),
        ));
        // two tests on the torus coordinate at D_{k_*}
        let level = p.p_min / 2.0;
        gates.push(Gate::at_least(
            format!("uniform torus coordinate at D_k* (N = {n})"),
            rep.uniformity.uniform.p_value,
            level,
            "chi-square against uniform",
        ));
        gates.push(Gate::at_least(
            format!("torus coordinate independent of the exit side (N = {n})"),
            rep.uniformity.independence.p_value,
            level,
            format!("{} below, {} above the start level", rep.uniformity.below, rep.uniformity.above),
        ));
        reports.push(rep);
    }
    Ok(Outcome {
        summary: serde_json::json!({ "rungs": reports }),
        tables: vec![table],
        plots: Vec::new(),
        gates,
    })
}

// ---------------------------------------------------------------------------
// capacity and interlacements

pub fn capacity(p: &CapacityParams, seed: u64) -> Result<Outcome> {
    let k: Pattern = p.pattern.parse()?;
    let rep = capacity_infinite(
        &k,
        &InfiniteCapacityOptions {
            base_radius: p.base_radius,
            monte_carlo: Some(EscapeMcOptions {
                walkers: p.walkers,
                seed: derive_seed(seed, "capacity/escape"),
                kill_factor: p.kill_factor,
            }),
            tolerance: p.tolerance,
            ..InfiniteCapacityOptions::default()
        },
    )?;
    let mc = rep.details["monte_carlo"]["capacity"].as_f64().unwrap_or(f64::NAN);
    let mc_err = rep.details["monte_carlo"]["error"].as_f64().unwrap_or(f64::NAN);
    let rel = rep.details["relative_gap"].as_f64().unwrap_or(f64::INFINITY);
    let mut gates = vec![Gate::at_most(
        "extrapolated vs escape estimate",
        rel,
        p.tolerance,
        format!("{:.6} vs {:.6}", rep.capacity, mc),
    )];
    let single = k.len() == 1 && k.dim() == Some(3);
    if single && p.base_radius == InfiniteCapacityOptions::default().base_radius {
        gates.push(Gate::at_most(
            "pinned single-site constant",
            (rep.capacity - CAP_ORIGIN_Z3).abs(),
            1e-6,
            format!("pinned {CAP_ORIGIN_Z3}"),
        ));
    }
    let mut table = Table::new("capacity", &["method", "value", "error"]);
    table.push(vec![cell("extrapolated"), cell(rep.capacity), cell(rep.error)]);
    table.push(vec![cell("escape"), cell(mc), cell(mc_err)]);
    Ok(Outcome {
        summary: serde_json::to_value(&rep)?,
        tables: vec![table],
        plots: Vec::new(),
        gates,
    })
}

#[derive(Debug, Clone, Serialize)]
struct InterlaceCell {
    pattern: String,
    u: f64,
    cap: f64,
    expected: f64,
    frequency: f64,
    sigma: f64,
    bias_bound: f64,
    kill_radius: u64,
}

pub fn interlace(p: &InterlaceParams, seed: u64) -> Result<Outcome> {
    if p.replicas == 0 {
        return Err(invalid("replicas must be positive"));
    }
    let mut cells = Vec::new();
    for (i, lit) in p.patterns.iter().enumerate() {
        let k: Pattern = lit.parse()?;
        let sampler = InterlacementSampler::new(
            &k,
            SamplerOptions {
                kill_factor: p.kill_factor,
                max_kill_radius: p.max_kill_radius,
                error_budget: p.error_budget,
                capacity: InfiniteCapacityOptions::default(),
            },
        )?;
        let cap = sampler.cap();
        let mut tally: Vec<(u64, f64, u64)> = vec![(0, 0.0, 0); p.levels.len()];
        if p.coupled {
            let s = derive_seed(seed, &format!("interlace/{i}/coupled"));
            let runs = map_replicas(p.replicas, s, |_, rng| sampler.sample_coupled(&p.levels, rng));
            for r in runs {
                for (t, x) in tally.iter_mut().zip(r?) {
                    t.0 += x.bits.iter().all(|&b| b) as u64;
                    t.1 = x.bias_bound;
                    t.2 = x.kill_radius;
                }
            }
        } else {
            for (j, &u) in p.levels.iter().enumerate() {
                let s = derive_seed(seed, &format!("interlace/{i}/{j}"));
                let runs = map_replicas(p.replicas, s, |_, rng| sampler.sample_vacant(u, rng));
                for x in runs {
                    let x = x?;
                    tally[j].0 += x.bits.iter().all(|&b| b) as u64;
                    tally[j].1 = x.bias_bound;
                    tally[j].2 = x.kill_radius;
                }
            }
        }
        for (&u, &(vacant, bias, kill)) in p.levels.iter().zip(&tally) {
            let expected = (-u * cap).exp();
            cells.push(InterlaceCell {
                pattern: k.literal(),
                u,
                cap,
                expected,
                frequency: vacant as f64 / p.replicas as f64,
                sigma: (expected * (1.0 - expected) / p.replicas as f64).sqrt(),
                bias_bound: bias,
                kill_radius: kill,
            });
        }
    }
    let mut table = Table::new("interlace", &["pattern", "u", "cap", "expected", "frequency", "sigma", "bias_bound", "kill_radius"]);
    let mut gates = Vec::new();
    for c in &cells {
        table.push(vec![
            cell(&c.pattern),
            cell(c.u),
            cell(c.cap),
            cell(c.expected),
            cell(c.frequency),
            cell(c.sigma),
            cell(c.bias_bound),
            cell(c.kill_radius),
        ]);
        let allowed = p.sigmas * c.sigma + c.bias_bound;
        gates.push(Gate::at_most(
            format!("vacancy of {} at u = {}", c.pattern, c.u),
            (c.frequency - c.expected).abs(),
            allowed,
            format!("{:.5} vs exp(-u cap) = {:.5}", c.frequency, c.expected),
        ));
    }
    let series = p
        .patterns
        .iter()
        .enumerate()
        .map(|(i, lit)| Series {
            label: lit.clone(),
            points: cells[i * p.levels.len()..(i + 1) * p.levels.len()]
                .iter()
                .map(|c| PlotPoint::new(c.u, c.frequency - c.expected, p.sigmas * c.sigma + c.bias_bound))
                .collect(),
        })
        .collect();
    Ok(Outcome {
        summary: serde_json::json!({ "cells": cells }),
        tables: vec![table],
        plots: vec![Plot {
            name: "interlace".into(),
            title: "Vacancy frequency minus exp(-u cap)".into(),
            x_label: "u".into(),
            y_label: "difference".into(),
            series,
            reference: Some(0.0),
        }],
        gates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quarter_root_is_exact() {
        assert_eq!(quarter_root(300), 5);
        assert_eq!(quarter_root(1000), 6);
        assert_eq!(quarter_root(3000), 8);
        assert_eq!(quarter_root(256), 4);
        assert_eq!(quarter_root(257), 5);
    }

    #[test]
    fn coupling_height_default() {
        assert_eq!(coupling_h(16, 2), 64);
        assert_eq!(coupling_h(10, 2), 32);
    }

    #[test]
    fn trend_helpers() {
        assert!(worst_decrease(&[(0.8, 0.01), (0.9, 0.01)]).unwrap() <= 0.0);
        assert!(worst_decrease(&[(0.9, 0.01), (0.8, 0.01)]).unwrap() > 0.0);
        assert!(worst_increase(&[(0.2, 0.01), (0.1, 0.01)]).unwrap() <= 0.0);
        assert!(worst_increase(&[(0.1, 0.01), (0.2, 0.01)]).unwrap() > 0.0);
        assert_eq!(worst_increase(&[(0.1, 0.01)]), None);
    }

    #[test]
    fn martingale_increments_are_centred() {
        let m = MartingaleParams {
            a_n: 200,
            h: 10,
            d_n: 2,
            offset: 1,
            replicas: 200,
        };
        let c = martingale_check("1/3", &m, "1", 4).unwrap();
        assert!(c.increments > 100);
        assert!(c.z_score.abs() < 4.0, "{c:?}");
    }
}
