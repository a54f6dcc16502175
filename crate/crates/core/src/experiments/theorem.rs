//! Laplace functional of the vacant set and local times near the tracked
//! heights, rung by rung, against the Brownian limit.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::params::{TheoremParams, WindowSpec};
use super::plot::{Plot, PlotPoint, Series};
use super::{cell, not_above, Gate, Outcome, Table};
use crate::brownian::{reference_functional_a, sample_brownian_local_time, FunctionalMethod, LocalTimeMode};
use crate::error::{invalid, Result};
use crate::grid::parse_ratio;
use crate::lattice::{linf_distance, CylinderPoint, Pattern, TorusParams, TorusTable, Window};
use crate::potential::{capacity_infinite, InfiniteCapacityOptions};
use crate::rng::{derive_seed, map_replicas};
use crate::stats::{hoeffding_half_width, ks_two_sample, ks_two_sample_critical, KsResult, RunningStats};
use crate::walk::{run_walk, LocalTimeTable, StartLaw, VacantTracker, WalkConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalEstimate {
    pub lambdas: Vec<f64>,
    pub estimate: f64,
    pub std_error: f64,
    /// Hoeffding half-width at level `1 - delta`.
    pub half_width: f64,
    pub reference: f64,
    pub reference_error: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalTimeFit {
    pub window: usize,
    pub z: i64,
    pub ks: KsResult,
    /// Two-sample critical value at `ks_alpha`.
    pub critical: f64,
    pub mean: f64,
    pub oracle_mean: f64,
    /// Against `(d+1) sqrt(2 alpha / ((d+1) pi))`; only for `v = 0`.
    pub mean_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalCovariance {
    /// Weighted within-bin covariance of the vacancy indicators of the
    /// first two windows, bins being quantiles of the first local time.
    pub value: f64,
    pub std_error: f64,
    pub bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremRung {
    pub n: u32,
    pub t: u64,
    pub skipped: Option<String>,
    pub replicas: u64,
    /// Frequency with which each window stays vacant up to `T_N`.
    pub vacancy: Vec<f64>,
    pub functionals: Vec<FunctionalEstimate>,
    pub local_times: Vec<LocalTimeFit>,
    pub conditional_covariance: Option<ConditionalCovariance>,
    /// Smallest distance between two windows, in lattice units.
    pub min_separation: Option<u64>,
}

impl TheoremRung {
    fn skipped(n: u32, t: u64, why: String) -> Self {
        Self {
            n,
            t,
            skipped: Some(why),
            replicas: 0,
            vacancy: Vec::new(),
            functionals: Vec::new(),
            local_times: Vec::new(),
            conditional_covariance: None,
            min_separation: None,
        }
    }

    pub fn ran(&self) -> bool {
        self.skipped.is_none()
    }
}

/// Per-replica record: vacancy bit and local time of every window.
struct Sample {
    vacant: Vec<bool>,
    local: Vec<f64>,
}

struct Reference {
    caps: Vec<f64>,
    values: Vec<(f64, f64)>,
    oracles: Vec<Vec<f64>>,
}

const COV_BINS: usize = 5;

fn validate(p: &TheoremParams) -> Result<Vec<Pattern>> {
    if p.ladder.is_empty() {
        return Err(invalid("empty ladder"));
    }
    if p.d < 2 {
        return Err(invalid("need d >= 2"));
    }
    if p.replicas == 0 || p.oracle_samples == 0 {
        return Err(invalid("replicas and oracle samples must be positive"));
    }
    for (j, l) in p.lambdas.iter().enumerate() {
        if l.len() != p.windows.len() {
            return Err(invalid(format!("lambda set {j} has {} entries for {} windows", l.len(), p.windows.len())));
        }
        if l.iter().any(|&x| !(x >= 0.0)) {
            return Err(invalid("lambdas must be nonnegative"));
        }
    }
    p.windows
        .iter()
        .map(|w| {
            if w.y.len() != p.d {
                return Err(invalid(format!("window position {:?} needs {} coordinates", w.y, p.d)));
            }
            w.pattern.parse::<Pattern>()
        })
        .collect()
}

fn alpha_of(p: &TheoremParams) -> Result<f64> {
    let a = parse_ratio(&p.alpha)?;
    if *a.numer() == 0 {
        return Err(invalid("alpha must be positive"));
    }
    Ok(*a.numer() as f64 / *a.denom() as f64)
}

fn window_at(spec: &WindowSpec, pattern: &Pattern, params: &TorusParams) -> Result<Window> {
    let n = params.n() as f64;
    let y: Vec<i64> = spec.y.iter().map(|f| (f * n).floor() as i64).collect();
    let z = (spec.v * params.vertical_scale()).floor() as i64 + spec.dz;
    let base = CylinderPoint::new(&y, z, params)?;
    let w = Window::new(base, pattern.clone(), params)?;
    w.ensure_unwrapped()?;
    Ok(w)
}

fn min_separation(windows: &[Window], params: &TorusParams) -> Option<u64> {
    let mut best: Option<u64> = None;
    for i in 0..windows.len() {
        for j in i + 1..windows.len() {
            for a in windows[i].sites() {
                for b in windows[j].sites() {
                    let d = linf_distance(&a.point(params), &b.point(params), params);
                    best = Some(best.map_or(d, |x| x.min(d)));
                }
            }
        }
    }
    best
}

fn reference(p: &TheoremParams, patterns: &[Pattern], alpha: f64, seed: u64) -> Result<Reference> {
    let mut cache: BTreeMap<String, f64> = BTreeMap::new();
    let mut caps = Vec::new();
    for k in patterns {
        let key = k.literal();
        let cap = match cache.get(&key) {
            Some(&c) => c,
            None => {
                let c = if k.is_empty() {
                    0.0
                } else {
                    capacity_infinite(k, &InfiniteCapacityOptions::default())?.capacity
                };
                cache.insert(key, c);
                c
            }
        };
        caps.push(cap);
    }
    let vs: Vec<f64> = p.windows.iter().map(|w| w.v).collect();
    let method = |j: usize| {
        if vs.len() == 1 {
            FunctionalMethod::Quadrature
        } else {
            FunctionalMethod::MonteCarlo {
                samples: p.reference_samples,
                fidelity: p.reference_fidelity,
                seed: derive_seed(seed, &format!("theorem01/reference/{j}")),
            }
        }
    };
    let mut values = Vec::new();
    for (j, l) in p.lambdas.iter().enumerate() {
        let f = reference_functional_a(&vs, alpha, p.d, &caps, l, method(j))?;
        values.push((f.value, f.error));
    }
    let dp1 = p.d as f64 + 1.0;
    let tau = alpha / dp1;
    let mut oracles = Vec::new();
    for (i, &v) in vs.iter().enumerate() {
        let s = derive_seed(seed, &format!("theorem01/oracle/{i}"));
        let xs = map_replicas(p.oracle_samples, s, |_, rng| {
            sample_brownian_local_time(v, tau, LocalTimeMode::Exact, rng).map(|x| dp1 * x.value)
        });
        oracles.push(xs.into_iter().collect::<Result<Vec<f64>>>()?);
    }
    Ok(Reference { caps, values, oracles })
}

fn conditional_covariance(samples: &[Sample]) -> ConditionalCovariance {
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.sort_by(|&a, &b| samples[a].local[0].total_cmp(&samples[b].local[0]).then(a.cmp(&b)));
    let n = samples.len();
    let (mut value, mut var) = (0.0, 0.0);
    let mut bins = 0;
    for b in 0..COV_BINS {
        let part = &idx[b * n / COV_BINS..(b + 1) * n / COV_BINS];
        if part.len() < 2 {
            continue;
        }
        bins += 1;
        let m = part.len() as f64;
        let bit = |i: usize, w: usize| if samples[i].vacant[w] { 1.0 } else { 0.0 };
        let ma = part.iter().map(|&i| bit(i, 0)).sum::<f64>() / m;
        let mb = part.iter().map(|&i| bit(i, 1)).sum::<f64>() / m;
        let mab = part.iter().map(|&i| bit(i, 0) * bit(i, 1)).sum::<f64>() / m;
        let w = m / n as f64;
        value += w * (mab - ma * mb);
        var += w * w * ma * (1.0 - ma) * mb * (1.0 - mb) / m;
    }
    ConditionalCovariance { value, std_error: var.sqrt(), bins }
}

fn run_rung(p: &TheoremParams, patterns: &[Pattern], alpha: f64, reference: &Reference, n: u32, seed: u64) -> Result<TheoremRung> {
    let params = TorusParams::new(n, p.d)?;
    let t = (alpha * params.vertical_scale() * params.vertical_scale()).floor() as u64;
    if t > p.max_steps {
        return Ok(TheoremRung::skipped(n, t, format!("T_N = {t} exceeds the step budget {}", p.max_steps)));
    }
    let windows: Vec<Window> = p
        .windows
        .iter()
        .zip(patterns)
        .map(|(w, k)| window_at(w, k, &params))
        .collect::<Result<_>>()?;
    let sep = min_separation(&windows, &params);
    if let Some(s) = sep {
        if (s as f64) < p.separation * n as f64 {
            return Err(invalid(format!(
                "windows are {s} apart at N = {n}, need at least {}",
                p.separation * n as f64
            )));
        }
    }
    let heights: Vec<i64> = windows.iter().map(|w| w.base.z).collect();
    let table = TorusTable::new(params);
    let cfg = WalkConfig {
        params,
        start: StartLaw::UniformLevel { z: 0 },
        seed: derive_seed(seed, &format!("theorem01/walk/{n}")),
        max_steps: t,
    };
    let trackers: Vec<VacantTracker> = windows.iter().cloned().map(VacantTracker::new).collect::<Result<_>>()?;
    let scale = params.vertical_scale();
    let samples: Vec<Sample> = map_replicas(p.replicas, cfg.seed, |_, rng| {
        // local times up to T_N - 1, vacancy over the closed interval
        let mut obs = (trackers.clone(), LocalTimeTable::new(&heights, t));
        run_walk(&cfg, &table, rng, &mut obs).expect("table matches params");
        let (tr, lt) = obs;
        Sample {
            vacant: tr.iter().map(|x| x.hitting_time().is_none()).collect(),
            local: heights.iter().map(|&z| lt.get(z).unwrap_or(0) as f64 / scale).collect(),
        }
    });

    let half_width = hoeffding_half_width(p.replicas, p.delta);
    let functionals = p
        .lambdas
        .iter()
        .zip(&reference.values)
        .map(|(l, &(reference, reference_error))| {
            let stats: RunningStats = samples
                .iter()
                .map(|s| {
                    if s.vacant.iter().all(|&v| v) {
                        (-l.iter().zip(&s.local).map(|(a, b)| a * b).sum::<f64>()).exp()
                    } else {
                        0.0
                    }
                })
                .collect();
            FunctionalEstimate {
                lambdas: l.clone(),
                estimate: stats.mean,
                std_error: stats.std_error(),
                half_width,
                reference,
                reference_error,
                gap: (stats.mean - reference).abs(),
            }
        })
        .collect();

    let dp1 = p.d as f64 + 1.0;
    let local_times = (0..windows.len())
        .map(|i| {
            let xs: Vec<f64> = samples.iter().map(|s| s.local[i]).collect();
            let oracle = &reference.oracles[i];
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let oracle_mean = oracle.iter().sum::<f64>() / oracle.len() as f64;
            let mean_ratio = (p.windows[i].v == 0.0)
                .then(|| mean / (dp1 * (2.0 * alpha / (dp1 * std::f64::consts::PI)).sqrt()));
            LocalTimeFit {
                window: i,
                z: heights[i],
                ks: ks_two_sample(&xs, oracle),
                critical: ks_two_sample_critical(xs.len(), oracle.len(), p.ks_alpha),
                mean,
                oracle_mean,
                mean_ratio,
            }
        })
        .collect();
    let vacancy = (0..windows.len())
        .map(|i| samples.iter().filter(|s| s.vacant[i]).count() as f64 / samples.len() as f64)
        .collect();
    let conditional_covariance = (windows.len() >= 2).then(|| conditional_covariance(&samples));
    Ok(TheoremRung {
        n,
        t,
        skipped: None,
        replicas: p.replicas,
        vacancy,
        functionals,
        local_times,
        conditional_covariance,
        min_separation: sep,
    })
}

/// Runs every rung of the ladder. Returns the rungs and the capacities used
/// in the reference functional.
pub fn estimate_theorem_functional(p: &TheoremParams, seed: u64) -> Result<(Vec<TheoremRung>, Vec<f64>)> {
    let patterns = validate(p)?;
    let alpha = alpha_of(p)?;
    let reference = reference(p, &patterns, alpha, seed)?;
    let rungs = p
        .ladder
        .iter()
        .map(|&n| run_rung(p, &patterns, alpha, &reference, n, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok((rungs, reference.caps))
}

/// Only the local-time fits of each rung, `None` for skipped rungs.
pub fn local_time_distribution_check(p: &TheoremParams, seed: u64) -> Result<Vec<(u32, Option<Vec<LocalTimeFit>>)>> {
    let (rungs, _) = estimate_theorem_functional(p, seed)?;
    Ok(rungs
        .into_iter()
        .map(|r| (r.n, r.ran().then_some(r.local_times)))
        .collect())
}

/// Largest CI-adjusted increase between consecutive rungs; `<= 0` means
/// nonincreasing. `None` with fewer than two rungs.
fn worst_increase(values: &[(f64, f64)]) -> Option<f64> {
    values
        .windows(2)
        .map(|w| {
            let ((a, sa), (b, sb)) = (w[0], w[1]);
            debug_assert_eq!(not_above(a, sa, b, sb), (b - sb) - (a + sa) <= 0.0);
            (b - sb) - (a + sa)
        })
        .reduce(f64::max)
}

pub fn run(p: &TheoremParams, seed: u64) -> Result<Outcome> {
    let (rungs, caps) = estimate_theorem_functional(p, seed)?;
    let ran: Vec<&TheoremRung> = rungs.iter().filter(|r| r.ran()).collect();
    let mut gates = Vec::new();
    let Some(top) = ran.last() else {
        gates.push(Gate::at_least("rungs run", 0.0, 1.0, "every rung exceeded the step budget"));
        return Ok(Outcome {
            summary: serde_json::json!({ "rungs": rungs, "caps": caps }),
            gates,
            ..Outcome::default()
        });
    };

    let mut functional_table = Table::new(
        "functional",
        &["N", "T", "lambdas", "estimate", "std_error", "half_width", "reference", "gap"],
    );
    let mut ks_table = Table::new(
        "local_time",
        &["N", "window", "z", "ks", "p_value", "critical", "mean", "oracle_mean", "mean_ratio"],
    );
    for r in &ran {
        for f in &r.functionals {
            functional_table.push(vec![
                cell(r.n),
                cell(r.t),
                cell(format!("{:?}", f.lambdas)),
                cell(f.estimate),
                cell(f.std_error),
                cell(f.half_width),
                cell(f.reference),
                cell(f.gap),
            ]);
        }
        for l in &r.local_times {
            ks_table.push(vec![
                cell(r.n),
                cell(l.window),
                cell(l.z),
                cell(l.ks.statistic),
                cell(l.ks.p_value),
                cell(l.critical),
                cell(l.mean),
                cell(l.oracle_mean),
                l.mean_ratio.map(cell).unwrap_or_default(),
            ]);
        }
    }
    let ladder = ran.iter().map(|r| r.n.to_string()).collect::<Vec<_>>().join(",");

    let mut gap_series = Vec::new();
    for (j, l) in p.lambdas.iter().enumerate() {
        let pts: Vec<(f64, f64)> = ran
            .iter()
            .map(|r| {
                let f = &r.functionals[j];
                (f.gap, f.half_width + f.reference_error)
            })
            .collect();
        if let Some(v) = worst_increase(&pts) {
            gates.push(Gate::at_most(format!("functional gap trend, lambda {l:?}"), v, 0.0, format!("CI-adjusted increase of |A_N - A| over N = {ladder}")));
        }
        let f = &top.functionals[j];
        gates.push(Gate::at_most(
            format!("functional gap at N = {}, lambda {l:?}", top.n),
            f.gap,
            p.a_tolerance,
            format!("estimate {:.5} vs reference {:.5}", f.estimate, f.reference),
        ));
        gap_series.push(Series {
            label: format!("lambda {l:?}"),
            points: ran
                .iter()
                .map(|r| PlotPoint::new(r.n as f64, r.functionals[j].gap, r.functionals[j].half_width))
                .collect(),
        });
    }
    let mut ks_series = Vec::new();
    for i in 0..p.windows.len() {
        let pts: Vec<(f64, f64)> = ran
            .iter()
            .map(|r| (r.local_times[i].ks.statistic, r.local_times[i].critical))
            .collect();
        if let Some(v) = worst_increase(&pts) {
            gates.push(Gate::at_most(format!("local time KS trend, window {i}"), v, 0.0, format!("increase beyond the KS critical values over N = {ladder}")));
        }
        gates.push(Gate::at_most(
            format!("local time KS at N = {}, window {i}", top.n),
            top.local_times[i].ks.statistic,
            p.ks_tolerance,
            format!("critical value {:.4}", top.local_times[i].critical),
        ));
        ks_series.push(Series {
            label: format!("window {i}"),
            points: ran
                .iter()
                .map(|r| PlotPoint::new(r.n as f64, r.local_times[i].ks.statistic, r.local_times[i].critical))
                .collect(),
        });
    }
    let plots = vec![
        Plot {
            name: "functional_gap".into(),
            title: "|A_N - A| along the ladder".into(),
            x_label: "N".into(),
            y_label: "|A_N - A|".into(),
            series: gap_series,
            reference: Some(p.a_tolerance),
        },
        Plot {
            name: "local_time_ks".into(),
            title: "KS distance of L/N^d to the Brownian limit".into(),
            x_label: "N".into(),
            y_label: "KS".into(),
            series: ks_series,
            reference: Some(p.ks_tolerance),
        },
    ];
    Ok(Outcome {
        summary: serde_json::json!({
            "caps": caps,
            "rungs": rungs,
            "window_separation_proxy": p.separation,
        }),
        tables: vec![functional_table, ks_table],
        plots,
        gates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TheoremParams {
        TheoremParams {
            ladder: vec![4],
            replicas: 200,
            oracle_samples: 200,
            ..TheoremParams::default()
        }
    }

    #[test]
    fn empty_window_without_lambda_gives_one() {
        let p = TheoremParams {
            windows: vec![WindowSpec::at(&[0.0, 0.0], "[]")],
            lambdas: vec![vec![0.0]],
            ..small()
        };
        let (rungs, caps) = estimate_theorem_functional(&p, 3).unwrap();
        assert_eq!(caps, vec![0.0]);
        let f = &rungs[0].functionals[0];
        assert_eq!(f.estimate, 1.0);
        assert_eq!(f.reference, 1.0);
    }

    #[test]
    fn over_budget_rungs_are_skipped() {
        let p = TheoremParams { ladder: vec![4, 40], ..small() };
        let (rungs, _) = estimate_theorem_functional(&p, 1).unwrap();
        assert!(rungs[0].ran());
        assert!(rungs[1].skipped.as_deref().unwrap().contains("budget"));
    }

    #[test]
    fn close_windows_are_rejected() {
        let p = TheoremParams {
            windows: vec![WindowSpec::default(), WindowSpec::at(&[0.1, 0.0], "[(0,0,0)]")],
            lambdas: vec![vec![0.0, 0.0]],
            ladder: vec![10],
            ..small()
        };
        assert!(estimate_theorem_functional(&p, 1).is_err());
    }

    #[test]
    fn lambda_count_must_match_windows() {
        let p = TheoremParams { lambdas: vec![vec![0.0, 1.0]], ..small() };
        assert!(estimate_theorem_functional(&p, 1).is_err());
    }
}
