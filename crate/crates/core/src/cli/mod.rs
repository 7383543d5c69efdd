//! The `rpcheck` batch front end.
//!
//! Each subcommand reads a JSON experiment config, runs its pipeline and
//! produces a [`RunReport`]. Exit codes: 0 pass, 1 verified failure, 2 usage,
//! config or IO error.

pub mod commands;
pub mod config;
pub mod report;
pub mod selftest;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub use config::{Experiment, ExperimentConfig};
pub use report::{Command, Outcome, Reason, RunReport};
pub use selftest::SelftestConfig;

use crate::gaussian::cross_block;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Library(#[from] crate::Error),
}

#[derive(Debug, Clone, Default)]
pub struct Options {
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub csv_dir: Option<PathBuf>,
    pub quiet: bool,
}

/// Loads and resolves the experiment config named in `opts`.
pub fn load_experiment(opts: &Options) -> Result<Experiment, CliError> {
    let path = opts
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    ExperimentConfig::load(path)?.resolve(base, opts.seed)
}

fn load_selftest(opts: &Options) -> Result<SelftestConfig, CliError> {
    let mut config = match &opts.config {
        None => SelftestConfig::default(),
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("invalid selftest config: {e}")))?
        }
    };
    if let Some(seed) = opts.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn dump_matrices(exp: &Experiment, dir: &Path) -> Result<(), CliError> {
    let Some(c) = &exp.covariance else {
        return Ok(());
    };
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    write_file(&dir.join("covariance.csv"), &config::matrix_to_csv(c.matrix()))?;
    write_file(
        &dir.join("cross_block.csv"),
        &config::matrix_to_csv(&cross_block(c, &exp.lattice)),
    )
}

/// Runs a subcommand without printing. Files named by `--out` and
/// `--csv-dir` are written.
pub fn run(command: Command, opts: &Options) -> Result<RunReport, CliError> {
    let start = Instant::now();
    let mut report = match command {
        Command::Selftest => selftest::run(load_selftest(opts)?)?,
        _ => {
            let exp = load_experiment(opts)?;
            if let Some(dir) = &opts.csv_dir {
                dump_matrices(&exp, dir)?;
            }
            match command {
                Command::CheckGaussian => commands::check_gaussian(&exp)?,
                Command::CheckDensity => commands::check_density(&exp)?,
                _ => commands::verify_rp(&exp)?,
            }
        }
    };
    report.wall_time_seconds = start.elapsed().as_secs_f64();
    if let Some(out) = &opts.out {
        write_file(out, &report.to_json())?;
    }
    Ok(report)
}

/// Runs a subcommand, prints the summary and returns the exit code.
pub fn execute(command: Command, opts: &Options) -> i32 {
    match run(command, opts) {
        Ok(report) => {
            if !opts.quiet {
                print!("{}", report.summary());
            }
            report.exit_code
        }
        Err(e) => {
            eprintln!("rpcheck: error: {e}");
            EXIT_USAGE
        }
    }
}
