// Shared by several test targets; not every target uses every item.
#![allow(dead_code)]

use std::collections::HashMap;

use cylwalk::experiments::{ExperimentKind, ExperimentParams, ExperimentSpec, WindowSpec};
use rand::Rng;

/// A connected set of `size` sites of `Z^dim` grown from the origin.
pub fn random_connected_set<R: Rng>(rng: &mut R, dim: usize, size: usize) -> Vec<Vec<i64>> {
    let mut set = vec![vec![0i64; dim]];
    while set.len() < size {
        let base = set[rng.random_range(0..set.len())].clone();
        let mut q = base;
        let axis = rng.random_range(0..dim);
        q[axis] += if rng.random_bool(0.5) { 1 } else { -1 };
        if !set.contains(&q) {
            set.push(q);
        }
    }
    set
}

fn lattice_neighbours(p: &[i64]) -> Vec<Vec<i64>> {
    let mut out = Vec::with_capacity(2 * p.len());
    for axis in 0..p.len() {
        for delta in [-1, 1] {
            let mut q = p.to_vec();
            q[axis] += delta;
            out.push(q);
        }
    }
    out
}

/// Sums over paths grouped by length, with every step read off `Z^dim`
/// directly. Returns `G[x][y]` = sum over paths `x -> y` inside `set` of
/// `(2 dim)^{-length}`.
pub fn path_sum_green(set: &[Vec<i64>]) -> Vec<Vec<f64>> {
    let n = set.len();
    let dim = set[0].len();
    let w = 1.0 / (2 * dim) as f64;
    let pos: HashMap<&[i64], usize> = set.iter().enumerate().map(|(i, p)| (p.as_slice(), i)).collect();
    let adj: Vec<Vec<usize>> = set
        .iter()
        .map(|p| lattice_neighbours(p).iter().filter_map(|q| pos.get(q.as_slice()).copied()).collect())
        .collect();
    let mut g = vec![vec![0.0; n]; n];
    for x in 0..n {
        let mut layer = vec![0.0; n];
        layer[x] = 1.0;
        for _ in 0..100_000 {
            let mass: f64 = layer.iter().sum();
            for y in 0..n {
                g[x][y] += layer[y];
            }
            if mass < 1e-16 {
                break;
            }
            let mut next = vec![0.0; n];
            for (y, &m) in layer.iter().enumerate() {
                if m != 0.0 {
                    for &z in &adj[y] {
                        next[z] += m * w;
                    }
                }
            }
            layer = next;
        }
    }
    g
}

/// Escape probabilities of `k` from `set`, by path sums: step off `k`, then
/// walk inside `set \ k` until a step leaves `set` (escape) or enters `k`.
pub fn path_sum_escape(set: &[Vec<i64>], k: &[Vec<i64>]) -> Vec<f64> {
    let dim = set[0].len();
    let w = 1.0 / (2 * dim) as f64;
    let free: Vec<Vec<i64>> = set.iter().filter(|p| !k.contains(p)).cloned().collect();
    let hit_from = |start: &[i64]| -> f64 {
        // probability of entering k before leaving set, started in free
        if free.is_empty() {
            return 0.0;
        }
        let g = path_sum_green(&free);
        let i = free.iter().position(|p| p == start).unwrap();
        free.iter()
            .enumerate()
            .map(|(j, p)| {
                let into_k = lattice_neighbours(p).iter().filter(|q| k.contains(q)).count();
                g[i][j] * into_k as f64 * w
            })
            .sum()
    };
    k.iter()
        .map(|x| {
            lattice_neighbours(x)
                .iter()
                .map(|q| {
                    if !set.contains(q) {
                        w
                    } else if k.contains(q) {
                        0.0
                    } else {
                        w * (1.0 - hit_from(q))
                    }
                })
                .sum()
        })
        .collect()
}

/// Depth-first enumeration of individual paths `x -> y` in `set` up to
/// `max_len` steps, each weighted `(2 dim)^{-length}`.
pub fn dfs_green(set: &[Vec<i64>], x: &[i64], y: &[i64], max_len: usize) -> f64 {
    let w = 1.0 / (2 * x.len()) as f64;
    fn go(set: &[Vec<i64>], at: &[i64], y: &[i64], left: usize, weight: f64, w: f64) -> f64 {
        let mut total = if at == y { weight } else { 0.0 };
        if left == 0 {
            return total;
        }
        for q in lattice_neighbours(at) {
            if set.contains(&q) {
                total += go(set, &q, y, left - 1, weight * w, w);
            }
        }
        total
    }
    go(set, x, y, max_len, 1.0, w)
}

/// Cheap versions of every experiment kind, for determinism and smoke runs.
pub fn small_spec(kind: ExperimentKind, seed: u64) -> ExperimentSpec {
    let mut spec = ExperimentSpec::new(kind, seed);
    match &mut spec.params {
        ExperimentParams::Theorem01(p) => {
            p.ladder = vec![8];
            p.replicas = 1000;
            p.oracle_samples = 1000;
            p.reference_samples = 2000;
            p.reference_fidelity = 2000;
        }
        ExperimentParams::Prop21(p) => {
            p.scales = vec![300];
            p.replicas = 100;
            p.martingale.a_n = 200;
            p.martingale.h = 10;
            p.martingale.d_n = 2;
            p.martingale.offset = 1;
            p.martingale.replicas = 100;
        }
        ExperimentParams::Lemma31(p) => {
            p.ladder = vec![6];
            p.replicas = Some(1000);
        }
        ExperimentParams::Lemma42(p) => {
            p.rungs = vec![[10, 8, 2]];
            p.mc_walkers = 1000;
        }
        ExperimentParams::Coupling(p) => {
            p.ladder = vec![8];
            p.replicas = 1000;
            p.permutations = 99;
            p.windows = vec![WindowSpec::default(), WindowSpec::at(&[0.5, 0.5], "[(0,0,0)]")];
        }
        ExperimentParams::Capacity(p) => {
            p.base_radius = 3;
            p.walkers = 2000;
            p.kill_factor = 8;
        }
        ExperimentParams::Interlace(p) => {
            p.patterns = vec!["[(0,0,0)]".into()];
            p.levels = vec![1.0];
            p.replicas = 1000;
            p.max_kill_radius = 32;
        }
    }
    spec
}
