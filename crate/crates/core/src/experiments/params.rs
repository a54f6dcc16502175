//! Per-kind parameters. Defaults are the acceptance-scale settings.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::ExperimentKind;
use crate::error::{Error, Result};

/// A window `x + K`: torus coordinates as fractions of `N` (so that a spec
/// describes the same geometry at every rung), height `floor(v N^d) + dz`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowSpec {
    pub y: Vec<f64>,
    pub v: f64,
    pub dz: i64,
    /// Pattern literal, e.g. `"[(0,0,0),(1,0,0)]"`.
    pub pattern: String,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            y: vec![0.0, 0.0],
            v: 0.0,
            dz: 0,
            pattern: "[(0,0,0)]".into(),
        }
    }
}

impl WindowSpec {
    pub fn at(y: &[f64], pattern: &str) -> Self {
        Self {
            y: y.to_vec(),
            pattern: pattern.into(),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoremParams {
    pub d: usize,
    pub ladder: Vec<u32>,
    /// `T_N = floor(alpha N^{2d})`; a decimal or a fraction.
    pub alpha: String,
    pub windows: Vec<WindowSpec>,
    /// One functional per entry, one `lambda` per window.
    pub lambdas: Vec<Vec<f64>>,
    pub replicas: u64,
    pub oracle_samples: u64,
    /// Rungs with `T_N` above this are skipped.
    pub max_steps: u64,
    pub a_tolerance: f64,
    pub ks_tolerance: f64,
    /// Level of the two-sample KS critical value used as trend slack.
    pub ks_alpha: f64,
    /// Hoeffding intervals hold with probability `1 - delta`.
    pub delta: f64,
    /// Monte Carlo settings of the reference functional when it has more
    /// than one point.
    pub reference_samples: u64,
    pub reference_fidelity: u64,
    /// Windows must be at least `separation * N` apart.
    pub separation: f64,
}

impl Default for TheoremParams {
    fn default() -> Self {
        Self {
            d: 2,
            ladder: vec![8, 12, 16, 24],
            alpha: "1".into(),
            windows: vec![WindowSpec::default()],
            lambdas: vec![vec![0.0], vec![1.0]],
            replicas: 20_000,
            oracle_samples: 20_000,
            max_steps: 400_000,
            a_tolerance: 0.05,
            ks_tolerance: 0.05,
            ks_alpha: 0.05,
            delta: 0.05,
            reference_samples: 100_000,
            reference_fidelity: 100_000,
            separation: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MartingaleParams {
    pub a_n: u64,
    pub h: u64,
    pub d_n: u64,
    /// The tracked height is `offset` above the grid point `0`.
    pub offset: i64,
    pub replicas: u64,
}

impl Default for MartingaleParams {
    fn default() -> Self {
        Self {
            a_n: 1000,
            h: 30,
            d_n: 6,
            offset: 2,
            replicas: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Prop21Params {
    pub gammas: Vec<String>,
    /// The `a_N` ladder.
    pub scales: Vec<u64>,
    /// `h_N` per rung; default `ceil(a_N^{1/4})`.
    pub heights: Option<Vec<u64>>,
    /// `d_N` per rung; default 0.
    pub d_n: Option<Vec<u64>>,
    pub rho: String,
    pub replicas: u64,
    pub coverage: f64,
    pub proxy_tolerance: f64,
    /// Ceiling for `(h/a) E[#returns to I_0 up to k_*]`.
    pub count_bound: f64,
    pub sigmas: f64,
    pub martingale: MartingaleParams,
}

impl Default for Prop21Params {
    fn default() -> Self {
        Self {
            gammas: vec!["1".into(), "1/3".into()],
            scales: vec![300, 1000, 3000],
            heights: None,
            d_n: None,
            rho: "1".into(),
            replicas: 400,
            coverage: 0.9,
            proxy_tolerance: 0.1,
            count_bound: 5.0,
            sigmas: 3.0,
            martingale: MartingaleParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Lemma31Params {
    pub d: usize,
    pub ladder: Vec<u32>,
    /// `h_N` per rung; default `ceil(N ln(N)^2)`.
    pub heights: Option<Vec<u64>>,
    /// `d_N` per rung; default `ceil(h^{2/3})`.
    pub d_n: Option<Vec<u64>>,
    /// Replicas per rung are `replica_factor * N^{2d}` unless `replicas`
    /// is given.
    pub replica_factor: u64,
    pub replicas: Option<u64>,
    pub tv_tolerance: f64,
}

impl Default for Lemma31Params {
    fn default() -> Self {
        Self {
            d: 2,
            ladder: vec![6, 10, 14],
            heights: None,
            d_n: None,
            replica_factor: 4,
            replicas: None,
            tv_tolerance: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Lemma42Params {
    pub d: usize,
    /// `(N, h_N, d_N)` per rung.
    pub rungs: Vec<[u64; 3]>,
    /// Components of `C`; heights are `dz` relative to the grid point.
    pub windows: Vec<WindowSpec>,
    pub ratio_factor: f64,
    pub sum_tolerance: f64,
    /// Walkers of the simulated cross-check on the first rung; 0 skips it.
    pub mc_walkers: u64,
}

impl Default for Lemma42Params {
    fn default() -> Self {
        Self {
            d: 2,
            rungs: vec![[10, 8, 2], [20, 16, 2], [40, 32, 2]],
            windows: vec![
                WindowSpec::default(),
                WindowSpec {
                    y: vec![0.5, 0.5],
                    dz: 1,
                    pattern: "[(0,0,0),(1,0,0)]".into(),
                    ..WindowSpec::default()
                },
            ],
            ratio_factor: 5.0,
            sum_tolerance: 0.05,
            mc_walkers: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplingParams {
    pub d: usize,
    pub ladder: Vec<u32>,
    /// `h_N` per rung; default `ceil(N^{3d/4})`.
    pub heights: Option<Vec<u64>>,
    /// `d_N` per rung; default `ceil(h^{2/3})`.
    pub d_n: Option<Vec<u64>>,
    /// `T = floor(alpha N^{2d})`.
    pub alpha: String,
    pub windows: Vec<WindowSpec>,
    pub replicas: u64,
    pub permutations: u64,
    pub sigmas: f64,
    pub p_min: f64,
}

impl Default for CouplingParams {
    fn default() -> Self {
        Self {
            d: 2,
            ladder: vec![16],
            heights: None,
            d_n: None,
            alpha: "4".into(),
            windows: vec![WindowSpec::default(), WindowSpec::at(&[0.5, 0.5], "[(0,0,0)]")],
            replicas: 20_000,
            permutations: 999,
            sigmas: 3.0,
            p_min: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CapacityParams {
    pub pattern: String,
    pub base_radius: u64,
    pub walkers: u64,
    pub kill_factor: u64,
    pub tolerance: f64,
}

impl Default for CapacityParams {
    fn default() -> Self {
        Self {
            pattern: "[(0,0,0)]".into(),
            base_radius: 8,
            walkers: 200_000,
            kill_factor: 64,
            tolerance: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterlaceParams {
    pub patterns: Vec<String>,
    pub levels: Vec<f64>,
    pub replicas: u64,
    pub error_budget: f64,
    pub kill_factor: u64,
    pub max_kill_radius: u64,
    /// Sample all levels from one cloud per replica.
    pub coupled: bool,
    pub sigmas: f64,
}

impl Default for InterlaceParams {
    fn default() -> Self {
        Self {
            patterns: vec![
                "[(0,0,0)]".into(),
                "[(0,0,0),(1,0,0)]".into(),
                "[(0,0,0),(1,0,0),(0,1,0),(1,1,0)]".into(),
            ],
            levels: vec![0.5, 1.0, 2.0],
            replicas: 100_000,
            error_budget: 1e-3,
            kill_factor: 32,
            max_kill_radius: 128,
            coupled: false,
            sigmas: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentParams {
    Theorem01(TheoremParams),
    Prop21(Prop21Params),
    Lemma31(Lemma31Params),
    Lemma42(Lemma42Params),
    Coupling(CouplingParams),
    Capacity(CapacityParams),
    Interlace(InterlaceParams),
}

fn from_table<T: DeserializeOwned>(table: toml::Table) -> Result<T> {
    toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
}

fn to_table<T: Serialize>(x: &T) -> Result<toml::Table> {
    match toml::Value::try_from(x).map_err(|e| Error::Config(e.to_string()))? {
        toml::Value::Table(t) => Ok(t),
        _ => Err(Error::Config("parameters did not serialize to a table".into())),
    }
}

impl ExperimentParams {
    pub fn default_for(kind: ExperimentKind) -> Self {
        match kind {
            ExperimentKind::Theorem01 => Self::Theorem01(Default::default()),
            ExperimentKind::Prop21 => Self::Prop21(Default::default()),
            ExperimentKind::Lemma31 => Self::Lemma31(Default::default()),
            ExperimentKind::Lemma42 => Self::Lemma42(Default::default()),
            ExperimentKind::Coupling => Self::Coupling(Default::default()),
            ExperimentKind::Capacity => Self::Capacity(Default::default()),
            ExperimentKind::Interlace => Self::Interlace(Default::default()),
        }
    }

    pub fn kind(&self) -> ExperimentKind {
        match self {
            Self::Theorem01(_) => ExperimentKind::Theorem01,
            Self::Prop21(_) => ExperimentKind::Prop21,
            Self::Lemma31(_) => ExperimentKind::Lemma31,
            Self::Lemma42(_) => ExperimentKind::Lemma42,
            Self::Coupling(_) => ExperimentKind::Coupling,
            Self::Capacity(_) => ExperimentKind::Capacity,
            Self::Interlace(_) => ExperimentKind::Interlace,
        }
    }

    pub fn from_table(kind: ExperimentKind, table: toml::Table) -> Result<Self> {
        Ok(match kind {
            ExperimentKind::Theorem01 => Self::Theorem01(from_table(table)?),
            ExperimentKind::Prop21 => Self::Prop21(from_table(table)?),
            ExperimentKind::Lemma31 => Self::Lemma31(from_table(table)?),
            ExperimentKind::Lemma42 => Self::Lemma42(from_table(table)?),
            ExperimentKind::Coupling => Self::Coupling(from_table(table)?),
            ExperimentKind::Capacity => Self::Capacity(from_table(table)?),
            ExperimentKind::Interlace => Self::Interlace(from_table(table)?),
        })
    }

    pub fn to_table(&self) -> Result<toml::Table> {
        match self {
            Self::Theorem01(p) => to_table(p),
            Self::Prop21(p) => to_table(p),
            Self::Lemma31(p) => to_table(p),
            Self::Lemma42(p) => to_table(p),
            Self::Coupling(p) => to_table(p),
            Self::Capacity(p) => to_table(p),
            Self::Interlace(p) => to_table(p),
        }
    }

    /// Overrides the main sample size of the kind.
    pub fn set_replicas(&mut self, replicas: u64) {
        match self {
            Self::Theorem01(p) => {
                p.replicas = replicas;
                p.oracle_samples = replicas;
            }
            Self::Prop21(p) => {
                p.replicas = replicas;
                p.martingale.replicas = replicas;
            }
            Self::Lemma31(p) => p.replicas = Some(replicas),
            Self::Lemma42(p) => p.mc_walkers = replicas,
            Self::Coupling(p) => p.replicas = replicas,
            Self::Capacity(p) => p.walkers = replicas,
            Self::Interlace(p) => p.replicas = replicas,
        }
    }
}
