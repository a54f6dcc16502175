//! Declarative experiments: a TOML spec in, a [`RunResult`] plus
//! `result.json`, `tables/*.csv` and `plots/*.svg` out.
//!
//! A spec is a flat TOML table:
//!
//! ```toml
//! schema_version = 1
//! kind = "theorem01"      # theorem01 | prop21 | lemma31 | lemma42 | coupling | capacity | interlace
//! seed = 7
//! # every other key belongs to the kind; see the `*Params` structs,
//! # whose defaults are the acceptance-scale settings
//! ladder = [8, 12, 16, 24]
//! replicas = 20000
//! ```

mod params;
mod plot;
mod runners;
mod theorem;

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use params::{
    CapacityParams, CouplingParams, ExperimentParams, InterlaceParams, Lemma31Params, Lemma42Params,
    MartingaleParams, Prop21Params, TheoremParams, WindowSpec,
};
pub use plot::{render_svg, Plot, PlotPoint, Series};
pub use theorem::{estimate_theorem_functional, local_time_distribution_check, TheoremRung};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Theorem01,
    Prop21,
    Lemma31,
    Lemma42,
    Coupling,
    Capacity,
    Interlace,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        Self::Theorem01,
        Self::Prop21,
        Self::Lemma31,
        Self::Lemma42,
        Self::Coupling,
        Self::Capacity,
        Self::Interlace,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Theorem01 => "theorem01",
            Self::Prop21 => "prop21",
            Self::Lemma31 => "lemma31",
            Self::Lemma42 => "lemma42",
            Self::Coupling => "coupling",
            Self::Capacity => "capacity",
            Self::Interlace => "interlace",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub schema_version: u32,
    pub seed: u64,
    pub params: ExperimentParams,
}

impl ExperimentSpec {
    /// The acceptance-scale spec of a kind.
    pub fn new(kind: ExperimentKind, seed: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed,
            params: ExperimentParams::default_for(kind),
        }
    }

    pub fn kind(&self) -> ExperimentKind {
        self.params.kind()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let version = match table.remove("schema_version") {
            Some(toml::Value::Integer(v)) => v,
            Some(_) => return Err(Error::Config("schema_version must be an integer".into())),
            None => return Err(Error::Config("missing schema_version".into())),
        };
        if version != SCHEMA_VERSION as i64 {
            return Err(Error::Config(format!(
                "schema_version {version} is not supported (expected {SCHEMA_VERSION})"
            )));
        }
        let kind: ExperimentKind = match table.remove("kind") {
            Some(toml::Value::String(k)) => k.parse()?,
            Some(_) => return Err(Error::Config("kind must be a string".into())),
            None => return Err(Error::Config("missing kind".into())),
        };
        let seed = match table.remove("seed") {
            Some(toml::Value::Integer(s)) if s >= 0 => s as u64,
            Some(_) => return Err(Error::Config("seed must be a nonnegative integer".into())),
            None => 0,
        };
        let params = ExperimentParams::from_table(kind, table)?;
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            seed,
            params,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        let mut table = toml::Table::new();
        table.insert("schema_version".into(), toml::Value::Integer(self.schema_version as i64));
        table.insert("kind".into(), toml::Value::String(self.kind().name().into()));
        table.insert("seed".into(), toml::Value::Integer(self.seed as i64));
        let body = self.params.to_table()?;
        table.extend(body);
        toml::to_string(&table).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn set_replicas(&mut self, replicas: u64) {
        self.params.set_replicas(replicas);
    }

    pub fn to_json(&self) -> Result<serde_json::Value> {
        let mut v = serde_json::to_value(&self.params)?;
        v["schema_version"] = self.schema_version.into();
        v["seed"] = self.seed.into();
        Ok(v)
    }
}

/// A pass/fail check with the number it was decided on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub name: String,
    pub passed: bool,
    #[serde(with = "lenient_f64")]
    pub value: f64,
    #[serde(with = "lenient_f64")]
    pub threshold: f64,
    pub detail: String,
}

/// JSON has no infinities or NaN; those are written as strings.
mod lenient_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_str(&x.to_string())
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl Gate {
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed: value <= threshold,
            value,
            threshold,
            detail: detail.into(),
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed: value >= threshold,
            value,
            threshold,
            detail: detail.into(),
        }
    }
}

/// A CSV table; cells are already formatted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Cell formatting shared by all tables.
pub(crate) fn cell<T: ToString>(x: T) -> String {
    x.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Runtime {
    pub seconds: f64,
    pub threads: usize,
    pub finished_unix: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub schema_version: u32,
    pub kind: ExperimentKind,
    pub seed: u64,
    pub config: serde_json::Value,
    pub summary: serde_json::Value,
    pub tables: Vec<Table>,
    pub gates: Vec<Gate>,
    pub passed: bool,
    /// Excluded from the determinism hash.
    pub runtime: Runtime,
    pub determinism_hash: String,
}

impl RunResult {
    /// SHA-256 of the canonical JSON of everything except `runtime` and
    /// `determinism_hash`.
    pub fn compute_hash(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(obj) = v.as_object_mut() {
            obj.remove("runtime");
            obj.remove("determinism_hash");
        }
        let bytes = serde_json::to_vec(&v)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }

    pub fn failed_gates(&self) -> impl Iterator<Item = &Gate> {
        self.gates.iter().filter(|g| !g.passed)
    }
}

/// What a runner hands back before bookkeeping.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub summary: serde_json::Value,
    pub tables: Vec<Table>,
    pub plots: Vec<Plot>,
    pub gates: Vec<Gate>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` lets rayon decide.
    pub threads: Option<usize>,
    /// Artifact directory; nothing is written when `None`.
    pub out: Option<PathBuf>,
}

pub fn run_experiment(spec: &ExperimentSpec, opts: &RunOptions) -> Result<RunResult> {
    let started = Instant::now();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = opts.threads {
        builder = builder.num_threads(t.max(1));
    }
    let pool = builder.build().map_err(|e| Error::Config(e.to_string()))?;
    let threads = pool.current_num_threads();
    let outcome = pool.install(|| dispatch(spec))?;
    let passed = outcome.gates.iter().all(|g| g.passed);
    let mut result = RunResult {
        schema_version: SCHEMA_VERSION,
        kind: spec.kind(),
        seed: spec.seed,
        config: spec.to_json()?,
        summary: outcome.summary,
        tables: outcome.tables,
        gates: outcome.gates,
        passed,
        runtime: Runtime {
            seconds: started.elapsed().as_secs_f64(),
            threads,
            finished_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        },
        determinism_hash: String::new(),
    };
    result.determinism_hash = result.compute_hash()?;
    if let Some(dir) = &opts.out {
        write_artifacts(&result, &outcome.plots, dir)?;
    }
    Ok(result)
}

fn dispatch(spec: &ExperimentSpec) -> Result<Outcome> {
    let seed = spec.seed;
    match &spec.params {
        ExperimentParams::Theorem01(p) => theorem::run(p, seed),
        ExperimentParams::Prop21(p) => runners::prop21(p, seed),
        ExperimentParams::Lemma31(p) => runners::lemma31(p, seed),
        ExperimentParams::Lemma42(p) => runners::lemma42(p, seed),
        ExperimentParams::Coupling(p) => runners::coupling(p, seed),
        ExperimentParams::Capacity(p) => runners::capacity(p, seed),
        ExperimentParams::Interlace(p) => runners::interlace(p, seed),
    }
}

pub fn write_artifacts(result: &RunResult, plots: &[Plot], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir.join("tables"))?;
    fs::create_dir_all(dir.join("plots"))?;
    fs::write(dir.join("result.json"), serde_json::to_string_pretty(result)?)?;
    for t in &result.tables {
        t.write_csv(fs::File::create(dir.join("tables").join(format!("{}.csv", t.name)))?)?;
    }
    for p in plots {
        fs::write(dir.join("plots").join(format!("{}.svg", p.name)), render_svg(p))?;
    }
    Ok(())
}

/// `b` does not exceed `a` by more than the two slacks together.
pub(crate) fn not_above(a: f64, slack_a: f64, b: f64, slack_b: f64) -> bool {
    b - slack_b <= a + slack_a
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_kind_is_rejected() {
        let e = ExperimentSpec::from_toml_str("schema_version = 1\nkind = \"percolation\"\n").unwrap_err();
        assert!(matches!(e, Error::UnknownKind(_)));
    }

    #[test]
    fn schema_version_is_required() {
        assert!(ExperimentSpec::from_toml_str("kind = \"capacity\"\n").is_err());
        assert!(ExperimentSpec::from_toml_str("schema_version = 2\nkind = \"capacity\"\n").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = ExperimentSpec::from_toml_str("schema_version = 1\nkind = \"capacity\"\nwalker = 3\n");
        assert!(matches!(e, Err(Error::Config(_))));
    }

    #[test]
    fn toml_round_trip() {
        for kind in ExperimentKind::ALL {
            let spec = ExperimentSpec::new(kind, 9);
            let text = spec.to_toml_string().unwrap();
            let back = ExperimentSpec::from_toml_str(&text).unwrap();
            assert_eq!(back, spec, "{text}");
        }
    }

    #[test]
    fn non_finite_gate_values_round_trip() {
        for v in [f64::INFINITY, f64::NEG_INFINITY, 0.25] {
            let g = Gate::at_most("g", v, 0.0, "");
            let back: Gate = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
            assert_eq!(back.value, v);
        }
        let g = Gate::at_most("g", f64::NAN, 0.0, "");
        let back: Gate = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
        assert!(back.value.is_nan() && !back.passed);
    }

    #[test]
    fn hash_ignores_runtime() {
        let mut r = RunResult {
            schema_version: 1,
            kind: ExperimentKind::Capacity,
            seed: 1,
            config: serde_json::json!({}),
            summary: serde_json::json!({"x": 1.5}),
            tables: vec![],
            gates: vec![],
            passed: true,
            runtime: Runtime { seconds: 1.0, threads: 1, finished_unix: 5 },
            determinism_hash: String::new(),
        };
        let h = r.compute_hash().unwrap();
        r.runtime = Runtime { seconds: 9.0, threads: 8, finished_unix: 6 };
        r.determinism_hash = "x".into();
        assert_eq!(h, r.compute_hash().unwrap());
        r.summary["x"] = 2.5.into();
        assert_ne!(h, r.compute_hash().unwrap());
    }
}
