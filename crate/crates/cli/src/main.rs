//! `maght`: scenario generation, map building, relocalization and experiment sweeps.
//!
//! Exit codes: 0 success (including no consensus), 1 usage, 2 I/O, 3 schema.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use maght_core::eval::{EvalError, Method, ReportFormat};
use maght_core::io::IoError;
use maght_core::synth::{ScenarioKind, SynthError};
use thiserror::Error;

use config::{MaghtArgs, PfArgs};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Schema(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) => 2,
            CliError::Schema(_) => 3,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Io { .. } => CliError::Io(e.to_string()),
            IoError::Schema(m) => CliError::Schema(m),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Usage(format!("cannot generate scenario: {e}"))
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Params(m) => CliError::Usage(m),
            EvalError::Synth(s) => s.into(),
            other => CliError::Schema(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "maght", version, about = "Magnetic place recognition by Hough voting over 4-DoF transforms")]
pub struct Cli {
    /// Directory for output files
    #[arg(long, global = true, env = "MAGHT_OUT_DIR", default_value = ".", value_name = "DIR")]
    pub out_dir: PathBuf,
    /// TOML file with [maght], [pf] and [scenario] tables; flags take precedence
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Suppress the human-readable summary on stdout
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic world, map layout and test trajectories
    Gen(GenArgs),
    /// Build the magnetic map of a scenario and write it as a map document
    Map(MapArgs),
    /// Relocalize a single trajectory against a map
    Reloc(RelocArgs),
    /// Run methods over every case of a scenario and write CSV and JSON-lines reports
    Eval(EvalArgs),
    /// Time relocalization methods on a scenario
    Bench(BenchArgs),
}

/// Scenario construction flags shared by gen, eval and bench.
#[derive(Debug, Clone, Default, Args)]
#[command(next_help_heading = "Scenario generation")]
pub struct ScenarioArgs {
    /// Mapped floor area WxD, m, e.g. 40x30 [default: 40x30, staircase 20x20]
    #[arg(long, value_name = "WxD")]
    pub bounds: Option<String>,
    /// Cases per trajectory length [default: gen 20, eval 100, bench 20]
    #[arg(long, value_name = "N")]
    pub cases: Option<usize>,
    /// Trajectory lengths, m, comma-separated [default: 12]
    #[arg(long = "traj-len", visible_alias = "lens", value_name = "M,..", value_delimiter = ',')]
    pub traj_len: Option<Vec<f64>>,
    /// Random seed for world, trajectories and noise [default: 0]
    #[arg(long, value_name = "SEED")]
    pub seed: Option<u64>,
    /// Magnetometer noise σ per component, µT [default: 0.5]
    #[arg(long, value_name = "UT")]
    pub mag_noise: Option<f64>,
    /// Odometry position drift σ, m per √m traveled [default: 0.05]
    #[arg(long, value_name = "M")]
    pub drift: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Layout: open, corridor, unmapped or staircase [default: open]
    #[arg(long, value_name = "KIND")]
    pub kind: Option<ScenarioKind>,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Map lattice step λ, m [default: 0.5]
    #[arg(long, value_name = "M")]
    pub lambda: Option<f64>,
    /// Output scenario document [default: <out-dir>/scenario.json]
    #[arg(long, short, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MapArgs {
    /// Scenario document written by gen
    #[arg(long, value_name = "FILE")]
    pub scenario: PathBuf,
    /// Output map document [default: <out-dir>/map.json]
    #[arg(long, short, value_name = "FILE")]
    pub output: Option<PathBuf>,
    /// Also write every case as <out-dir>/trajectories/case-NNNN.json
    #[arg(long)]
    pub export_trajectories: bool,
    /// Minimum horizontal field for a valid magnetic frame, µT [default: 0.05]
    #[arg(long, value_name = "UT")]
    pub horizontal_floor: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RelocArgs {
    /// Map document written by map
    #[arg(long, value_name = "FILE")]
    pub map: PathBuf,
    /// Trajectory document
    #[arg(long, value_name = "FILE", conflicts_with_all = ["scenario", "case"], required_unless_present = "scenario")]
    pub trajectory: Option<PathBuf>,
    /// Scenario document to take the trajectory from (with --case)
    #[arg(long, value_name = "FILE", requires = "case")]
    pub scenario: Option<PathBuf>,
    /// Case id within --scenario
    #[arg(long, value_name = "ID", requires = "scenario")]
    pub case: Option<usize>,
    /// Record the relocalization wall time in the result document
    #[arg(long)]
    pub timing: bool,
    /// Output result document [default: <out-dir>/result.json]
    #[arg(long, short, value_name = "FILE")]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub maght: MaghtArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Scenario document, or a preset generated on the fly: open, corridor, unmapped, staircase [default: open]
    #[arg(long, value_name = "FILE|PRESET")]
    pub scenario: Option<String>,
    /// Methods, comma-separated: maght, pf<N> (e.g. pf1600) [default: maght]
    #[arg(long, value_name = "M,..", value_delimiter = ',')]
    pub methods: Option<Vec<Method>>,
    /// Re-simulate odometry so the median endpoint error at 12 m equals each value, m, comma-separated [default: off]
    #[arg(long, value_name = "M,..", value_delimiter = ',')]
    pub drift_sweep: Option<Vec<f64>>,
    /// Record wall times in output files (makes them non-reproducible)
    #[arg(long)]
    pub timing: bool,
    /// Stdout format: table, csv or json-lines
    #[arg(long, value_name = "FMT", default_value = "table")]
    pub format: ReportFormat,
    #[command(flatten)]
    pub gen: ScenarioArgs,
    #[command(flatten)]
    pub maght: MaghtArgs,
    #[command(flatten)]
    pub pf: PfArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Scenario document or preset [default: open]
    #[arg(long, value_name = "FILE|PRESET")]
    pub scenario: Option<String>,
    /// Methods, comma-separated [default: maght,pf1600]
    #[arg(long, value_name = "M,..", value_delimiter = ',')]
    pub methods: Option<Vec<Method>>,
    /// Record wall times in bench.json (they are always printed)
    #[arg(long)]
    pub timing: bool,
    #[command(flatten)]
    pub gen: ScenarioArgs,
    #[command(flatten)]
    pub maght: MaghtArgs,
    #[command(flatten)]
    pub pf: PfArgs,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
