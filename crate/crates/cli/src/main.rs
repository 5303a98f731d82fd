//! `qtherm` — drive the simulation experiments from the command line.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numeric error,
//! 4 verification failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qtherm::error::Error;
use qtherm_cli::config::{load_config, JobConfig};
use qtherm_cli::output::write_atomic;
use qtherm_cli::presets;
use qtherm_cli::verify::{run_all, ArtifactStore, VerifyOptions};
use qtherm_cli::experiment;

#[derive(Parser)]
#[command(
    name = "qtherm",
    version,
    about = "System-bath thermalization experiments: runs, entropy curves, limit sweeps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Path to a config file (a bare config or a previous run's manifest).
    #[arg(long, value_name = "PATH", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration.
    #[arg(long, value_name = "NAME", value_parser = presets::PRESET_NAMES)]
    preset: Option<String>,
    /// Override the master seed.
    #[arg(long, value_name = "INT")]
    seed: Option<u64>,
}

#[derive(Args)]
struct ExecArgs {
    #[command(flatten)]
    source: ConfigArgs,
    /// Output directory (default: runs/<config name>).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for the per-seed loop.
    #[arg(long, value_name = "INT", default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Print the derived scales of a configuration without running it.
    Model {
        #[command(flatten)]
        source: ConfigArgs,
    },
    /// Evolve one ensemble and write its time series and profiles.
    Run {
        #[command(flatten)]
        exec: ExecArgs,
    },
    /// Trace entropy against `gamma0` for initial and evolved states.
    Curve {
        #[command(flatten)]
        exec: ExecArgs,
    },
    /// Halve the coupling step by step at a fixed golden-rule width.
    Sweep {
        #[command(flatten)]
        exec: ExecArgs,
    },
    /// Run the full verification suite and write a report.
    Verify {
        /// Output directory for the report and scratch runs.
        #[arg(long, value_name = "DIR", default_value = "runs/verify")]
        out: PathBuf,
        /// Worker threads for the per-seed loops.
        #[arg(long, value_name = "INT", default_value_t = 1)]
        jobs: usize,
    },
}

fn resolve_config(source: &ConfigArgs) -> Result<JobConfig, Error> {
    let mut cfg = match (&source.config, &source.preset) {
        (Some(path), None) => load_config(path)?,
        (None, Some(name)) => presets::by_name(name)?,
        (None, None) => {
            return Err(Error::config(
                "provide a configuration with --config PATH or --preset NAME",
            ))
        }
        (Some(_), Some(_)) => unreachable!("clap rejects --config with --preset"),
    };
    if let Some(seed) = source.seed {
        cfg.set_master_seed(seed);
    }
    cfg.validate()?;
    Ok(cfg)
}

/// The subcommand must match the config kind, so a `run` invocation never
/// silently executes a sweep.
fn demand_kind(cfg: &JobConfig, expected: &str) -> Result<(), Error> {
    let actual = match cfg {
        JobConfig::Run(_) => "run",
        JobConfig::Curve(_) => "curve",
        JobConfig::Sweep(_) => "sweep",
    };
    if actual != expected {
        return Err(Error::config(format!(
            "config '{}' is a {actual} experiment; use `qtherm {actual}`",
            cfg.name()
        )));
    }
    Ok(())
}

fn cache_dir() -> Option<PathBuf> {
    std::env::var_os("QTHERM_CACHE_DIR").map(PathBuf::from)
}

fn out_dir(requested: &Option<PathBuf>, cfg: &JobConfig) -> PathBuf {
    requested
        .clone()
        .unwrap_or_else(|| Path::new("runs").join(cfg.name()))
}

fn execute(exec: &ExecArgs, expected_kind: &str) -> Result<(), Error> {
    let cfg = resolve_config(&exec.source)?;
    demand_kind(&cfg, expected_kind)?;
    let out = out_dir(&exec.out, &cfg);
    let manifest = experiment::execute(&cfg, &out, exec.jobs.max(1), cache_dir().as_deref())?;
    eprintln!(
        "wrote {} artifacts to {} in {:.1}s",
        manifest.digests.len(),
        out.display(),
        manifest.wall_clock_seconds
    );
    Ok(())
}

fn describe(source: &ConfigArgs) -> Result<(), Error> {
    let cfg = resolve_config(source)?;
    let units = experiment::describe(&cfg)?;
    let text = serde_json::to_string_pretty(&units)
        .map_err(|e| Error::numeric(format!("cannot serialize derived scales: {e}")))?;
    println!("{text}");
    Ok(())
}

fn verify(out: &Path, jobs: usize) -> Result<bool, Error> {
    let store = ArtifactStore::new(VerifyOptions {
        cache_dir: cache_dir(),
        work_dir: out.join("work"),
        jobs: jobs.max(1),
    });
    let report = run_all(&store);
    for c in &report.criteria {
        println!("{}", c.render());
    }
    let mut bytes = serde_json::to_vec_pretty(&report)
        .map_err(|e| Error::numeric(format!("cannot serialize report: {e}")))?;
    bytes.push(b'\n');
    std::fs::create_dir_all(out)?;
    write_atomic(&out.join("verify_report.json"), &bytes)?;
    eprintln!("report: {}", out.join("verify_report.json").display());
    Ok(report.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Model { source } => describe(source).map(|()| 0u8),
        Command::Run { exec } => execute(exec, "run").map(|()| 0),
        Command::Curve { exec } => execute(exec, "curve").map(|()| 0),
        Command::Sweep { exec } => execute(exec, "sweep").map(|()| 0),
        Command::Verify { out, jobs } => verify(out, *jobs).map(|ok| if ok { 0 } else { 4 }),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}
