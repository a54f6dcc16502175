//! `cylwalk`: runs one experiment and exits 0 iff all its gates pass.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cylwalk::experiments::{run_experiment, ExperimentKind, ExperimentSpec, RunOptions};
use log::info;

#[derive(Parser)]
#[command(name = "cylwalk", version, about = "Random walk on discrete cylinders: vacant set experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run whatever kind the config file names.
    Simulate(Common),
    /// Capacity of a pattern in Z^{d+1}: box extrapolation vs escape walks.
    Capacity(Common),
    /// Vacancy of random interlacements against exp(-u cap K).
    Interlace(Common),
    /// Laplace functional and local times of the cylinder walk.
    VerifyTheorem(Common),
    /// Excursion counts, proxies and the martingale of the lazy walk.
    VerifyProp21(Common),
    /// Homogenization of the torus coordinate at the first return.
    VerifyLemma31(Common),
    /// Hitting probability from a uniform level vs relative capacity.
    VerifyLemma42(Common),
    /// True walk vs resampled conditional excursions.
    VerifyCoupling(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment file; defaults of the kind are used without one.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the main sample size of the kind.
    #[arg(long)]
    replicas: Option<u64>,
    #[arg(long, env = "CYLWALK_THREADS")]
    threads: Option<usize>,
    /// Directory for result.json, tables/ and plots/.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the effective config as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

const DEFAULT_SEED: u64 = 1;

fn spec_for(kind: Option<ExperimentKind>, c: &Common) -> Result<ExperimentSpec, String> {
    let mut spec = match (&c.config, kind) {
        (Some(path), k) => {
            let s = ExperimentSpec::from_file(path).map_err(|e| format!("{}: {e}", path.display()))?;
            if let Some(k) = k {
                if s.kind() != k {
                    return Err(format!(
                        "{} describes a {} experiment, this command runs {}",
                        path.display(),
                        s.kind().name(),
                        k.name()
                    ));
                }
            }
            s
        }
        (None, Some(k)) => ExperimentSpec::new(k, DEFAULT_SEED),
        (None, None) => return Err("simulate needs --config".into()),
    };
    if let Some(seed) = c.seed {
        spec.seed = seed;
    }
    if let Some(r) = c.replicas {
        if r == 0 {
            return Err("--replicas must be positive".into());
        }
        spec.set_replicas(r);
    }
    Ok(spec)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (kind, common) = match &cli.command {
        Command::Simulate(c) => (None, c),
        Command::Capacity(c) => (Some(ExperimentKind::Capacity), c),
        Command::Interlace(c) => (Some(ExperimentKind::Interlace), c),
        Command::VerifyTheorem(c) => (Some(ExperimentKind::Theorem01), c),
        Command::VerifyProp21(c) => (Some(ExperimentKind::Prop21), c),
        Command::VerifyLemma31(c) => (Some(ExperimentKind::Lemma31), c),
        Command::VerifyLemma42(c) => (Some(ExperimentKind::Lemma42), c),
        Command::VerifyCoupling(c) => (Some(ExperimentKind::Coupling), c),
    };
    let spec = match spec_for(kind, common) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if common.print_config {
        return match spec.to_toml_string() {
            Ok(t) => {
                print!("{t}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        };
    }
    info!("running {} with seed {}", spec.kind().name(), spec.seed);
    let opts = RunOptions {
        threads: common.threads,
        out: common.out.clone(),
    };
    let result = match run_experiment(&spec, &opts) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    for g in &result.gates {
        println!(
            "{} {}: {:.6} (threshold {:.6}) {}",
            if g.passed { "PASS" } else { "FAIL" },
            g.name,
            g.value,
            g.threshold,
            g.detail
        );
    }
    println!(
        "{} {} in {:.1}s on {} threads, hash {}",
        result.kind.name(),
        if result.passed { "passed" } else { "failed" },
        result.runtime.seconds,
        result.runtime.threads,
        result.determinism_hash
    );
    if let Some(dir) = &common.out {
        println!("artifacts in {}", dir.display());
    }
    if result.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
