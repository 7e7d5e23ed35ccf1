//! The `kdvb` command line.
//!
//! Exit codes: 0 success, 1 I/O or internal failure, 2 invalid config,
//! 3 solver failure, 4 a verification check failed. Every error is also
//! printed to stderr as a JSON record and, when possible, written to
//! `error.json` in the output directory.

pub mod commands;
pub mod config;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::Error;
use crate::io::{to_json, write_json};

pub use config::{RunConfig, CONFIG_HELP};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_VERIFICATION: i32 = 4;

/// Environment override of the output directory, below `--output-dir`.
pub const OUTPUT_DIR_ENV: &str = "KDVB_OUTPUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "kdvb",
    version,
    about = "Null controls and trajectory tracking for the KdV-Burgers equation",
    after_long_help = CONFIG_HELP
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML config; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `output_dir` and KDVB_OUTPUT_DIR.
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Forward solve from `[simulate]`: field.csv, norms.json.
    Simulate,
    /// Free trajectory from `[trajectory] ybar0`: ybar.csv, norms.json.
    Trajectory,
    /// Null control from `[null_control]`: control/state/resimulated/multiplier CSV, report.json.
    NullControl,
    /// Control onto the free trajectory from `[track]`: CSV fields, report.json, sweep.json.
    Track,
    /// Verification suites, one JSON report each; exit 4 when a check fails.
    Verify {
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
    },
    /// Beta weights at the time levels and the spatial profile: weights.csv, profile.csv, profile.json.
    WeightsExport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Carleman,
    Duality,
    Energy,
    Bilinear,
    Mms,
    All,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Trajectory => "trajectory",
            Command::NullControl => "null-control",
            Command::Track => "track",
            Command::Verify { .. } => "verify",
            Command::WeightsExport => "weights-export",
        }
    }
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    command: &'a str,
    category: &'a str,
    exit_code: i32,
    message: String,
}

fn classify(e: &Error) -> (&'static str, i32) {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) | Error::ShapeMismatch { .. } => {
            ("config", EXIT_CONFIG)
        }
        e if e.is_solver_failure() => ("solver", EXIT_SOLVER),
        _ => ("internal", EXIT_FAILURE),
    }
}

fn report_error(command: &str, e: &Error, out: Option<&Path>) -> i32 {
    let (category, exit_code) = classify(e);
    let record = ErrorRecord {
        command,
        category,
        exit_code,
        message: e.to_string(),
    };
    match to_json("error", &record) {
        Ok(text) => eprintln!("{text}"),
        Err(_) => eprintln!("error: {e}"),
    }
    if let Some(dir) = out {
        let _ = write_json(&dir.join("error.json"), "error", &record);
    }
    exit_code
}

fn output_dir(cli: &Cli, cfg: &RunConfig) -> PathBuf {
    cli.output_dir
        .clone()
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| cfg.output_dir.clone())
}

/// Runs one subcommand and returns its exit code.
pub fn run(cli: &Cli) -> i32 {
    let name = cli.command.name();
    let mut cfg = match &cli.config {
        Some(p) => match RunConfig::load(p) {
            Ok(c) => c,
            Err(e) => return report_error(name, &e, None),
        },
        None => RunConfig::default(),
    };
    cfg.output_dir = output_dir(cli, &cfg);
    let out = cfg.output_dir.clone();
    if let Err(e) = std::fs::create_dir_all(&out) {
        return report_error(name, &Error::Io(e), None);
    }
    let resolved = match cfg.resolve() {
        Ok(r) => r,
        Err(e) => return report_error(name, &e, Some(&out)),
    };
    let echo = cfg
        .to_toml()
        .and_then(|t| std::fs::write(out.join("config.resolved.toml"), t).map_err(Error::from));
    if let Err(e) = echo {
        return report_error(name, &e, Some(&out));
    }
    let result = match cli.command {
        Command::Simulate => commands::simulate(&cfg, &resolved, &out),
        Command::Trajectory => commands::trajectory(&cfg, &resolved, &out),
        Command::NullControl => commands::null_control(&cfg, &resolved, &out),
        Command::Track => commands::track(&cfg, &resolved, &out),
        Command::Verify { suite } => commands::verify(&cfg, &resolved, suite, &out),
        Command::WeightsExport => commands::weights_export(&cfg, &resolved, &out),
    };
    match result {
        Ok(true) => {
            println!("{name}: ok, outputs in {}", out.display());
            EXIT_OK
        }
        Ok(false) => {
            eprintln!("{name}: verification failed, reports in {}", out.display());
            EXIT_VERIFICATION
        }
        Err(e) => report_error(name, &e, Some(&out)),
    }
}

/// Parses `std::env::args` and runs; clap usage errors exit with 2.
pub fn main_exit_code() -> i32 {
    match Cli::try_parse() {
        Ok(cli) => run(&cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}
