//! Experiment driver: single solves, the mesh sweep, the diagnostics suite
//! and field export.
//!
//! Exit codes: 0 success, 1 check or convergence failure, 2 usage error.

pub mod checks;
pub mod config;
pub mod sweep;
pub mod vtk;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::newton::{self, IterationRecord, NewtonStatus};
use crate::operators::SelectorPolicy;
use crate::{Error, FeMatrices, Result};

pub use checks::{run_checks, CheckOverrides, ChecksOutput, CHECK_NAMES};
pub use config::{RunConfig, ScalarField};
pub use sweep::{compute_eoc, compute_eoc_at, run_sweep, SweepResult, SweepRow, CSV_HEADER};
pub use vtk::{export_fields, read_vtk, VtkData};

pub const EXIT_SUCCESS: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "obstacle-control", version, about = "Semismooth Newton solver for optimal control of the obstacle problem")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve on a single mesh and write the iteration history as JSON.
    Solve(SolveArgs),
    /// Run the mesh sweep and write the CSV table (plus a JSON sidecar).
    Sweep(SweepArgs),
    /// Run diagnostics checks and write a JSON report.
    Check(CheckArgs),
    /// Solve on a single mesh and write the fields as legacy VTK.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// JSON configuration file; missing fields take preset values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Named preset used as the base configuration.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// `strict_only` or `strict_plus_biactive`.
    #[arg(long, value_parser = parse_selector)]
    pub selector: Option<SelectorPolicy>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Cells per side of the mesh.
    #[arg(long, default_value_t = 16)]
    pub n: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Mesh parameters, overriding the configured list.
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<usize>,
    /// Include the configured large meshes.
    #[arg(long)]
    pub large: bool,
    /// Record the wall-clock time in the provenance block.
    #[arg(long)]
    pub timestamp: bool,
    /// CSV output path; the JSON sidecar uses the same stem.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Checks to run (default: all).
    #[arg(value_delimiter = ',')]
    pub names: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, default_value_t = 16)]
    pub n: usize,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_selector(s: &str) -> std::result::Result<SelectorPolicy, String> {
    match s {
        "strict_only" => Ok(SelectorPolicy::StrictOnly),
        "strict_plus_biactive" => Ok(SelectorPolicy::StrictPlusBiactive),
        other => Err(format!("unknown selector {other:?}; use strict_only or strict_plus_biactive")),
    }
}

impl ConfigArgs {
    /// Preset (default `paper`), then the JSON file, then flag overrides.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::preset(self.preset.as_deref().unwrap_or("paper"))?;
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)?;
            let mut value = serde_json::to_value(&cfg)?;
            let overrides: serde_json::Value = serde_json::from_str(&text)?;
            let (Some(base), serde_json::Value::Object(over)) = (value.as_object_mut(), overrides) else {
                return Err(Error::InvalidArgument("configuration must be a JSON object".into()));
            };
            for (k, v) in over {
                base.insert(k, v);
            }
            cfg = serde_json::from_value(value)?;
        }
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        if let Some(t) = self.tol {
            cfg.tol = t;
        }
        if let Some(m) = self.max_iter {
            cfg.max_iter = m;
        }
        if let Some(s) = self.selector {
            cfg.selector = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Serialize)]
struct SolveSummary<'a> {
    provenance: sweep::Provenance,
    n: usize,
    iterations: usize,
    status: NewtonStatus,
    final_residue: f64,
    history: &'a [IterationRecord],
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn status_code(status: NewtonStatus) -> i32 {
    match status {
        NewtonStatus::Converged => EXIT_SUCCESS,
        NewtonStatus::MaxIterReached => EXIT_FAILURE,
    }
}

fn solve_single(cfg: &RunConfig, n: usize) -> Result<(FeMatrices, newton::Problem, newton::NewtonReport)> {
    let mats = FeMatrices::unit_square(n)?;
    let problem = cfg.problem(&mats)?;
    let report = newton::run(&cfg.newton_config(), &problem, &mats)?;
    Ok((mats, problem, report))
}

fn unix_time() -> Option<u64> {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .ok()
        .map(|d| d.as_secs())
}

/// Executes a parsed command and returns the process exit code.
pub fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Solve(args) => {
            let cfg = args.config.resolve()?;
            let (_, _, report) = solve_single(&cfg, args.n)?;
            let summary = SolveSummary {
                provenance: sweep::Provenance::new(&cfg, None),
                n: args.n,
                iterations: report.iterations,
                status: report.status,
                final_residue: report.final_residual(),
                history: &report.history,
            };
            let mut text = serde_json::to_string_pretty(&summary)?;
            text.push('\n');
            write_or_print(args.out.as_deref(), &text)?;
            Ok(status_code(report.status))
        }
        Command::Sweep(args) => {
            let cfg = args.config.resolve()?;
            let mut meshes = if args.n.is_empty() { cfg.meshes.clone() } else { args.n.clone() };
            if args.large {
                meshes.extend(&cfg.large_meshes);
            }
            let result = run_sweep(&cfg, &meshes, if args.timestamp { unix_time() } else { None })?;
            let csv = result.to_csv();
            write_or_print(args.out.as_deref(), &csv)?;
            if let Some(path) = &args.out {
                let mut json = serde_json::to_string_pretty(&result)?;
                json.push('\n');
                std::fs::write(path.with_extension("json"), json)?;
            }
            let failed = result.rows.iter().any(|r| r.status != NewtonStatus::Converged);
            Ok(if failed { EXIT_FAILURE } else { EXIT_SUCCESS })
        }
        Command::Check(args) => {
            let overrides = CheckOverrides {
                seed: args.seed,
                trials: args.trials,
            };
            checks::validate_request(&args.names, &overrides)?;
            let cfg = args.config.resolve()?;
            let output = run_checks(&args.names, &cfg, &overrides)?;
            let mut text = serde_json::to_string_pretty(&output)?;
            text.push('\n');
            write_or_print(args.out.as_deref(), &text)?;
            for c in &output.checks {
                eprintln!(
                    "{:<18} {}  max violation {:e} (tolerance {:e})",
                    c.name,
                    if c.passed { "pass" } else { "FAIL" },
                    c.max_violation,
                    c.tolerance
                );
            }
            Ok(if output.all_passed() { EXIT_SUCCESS } else { EXIT_FAILURE })
        }
        Command::Export(args) => {
            let cfg = args.config.resolve()?;
            let (mats, problem, report) = solve_single(&cfg, args.n)?;
            export_fields(&report, problem.desired.values(), mats.mesh(), &args.out)?;
            Ok(status_code(report.status))
        }
    }
}

/// Exit code for an error raised while executing a command.
pub fn error_code(err: &Error) -> i32 {
    match err {
        Error::InvalidArgument(_) | Error::Json(_) => EXIT_USAGE,
        _ => EXIT_FAILURE,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            error_code(&e)
        }
    }
}
