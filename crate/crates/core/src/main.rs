use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rp_lattice::cli::{self, Command, Options};

#[derive(Parser)]
#[command(name = "rpcheck", version, about = "Reflection positivity checks on finite lattices")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Gaussian reflection positivity and the P/Q decomposition.
    CheckGaussian(Common),
    /// θ-splitting of a polynomial density.
    CheckDensity(Common),
    /// Full pipeline with Monte Carlo Gram estimates.
    VerifyRp(Common),
    /// Built-in oracle suite.
    Selftest(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides mc.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Write covariance.csv and cross_block.csv here.
    #[arg(long)]
    csv_dir: Option<PathBuf>,
    /// Suppress the summary on standard output.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let parsed = Cli::parse();
    let (command, common) = match parsed.command {
        Sub::CheckGaussian(c) => (Command::CheckGaussian, c),
        Sub::CheckDensity(c) => (Command::CheckDensity, c),
        Sub::VerifyRp(c) => (Command::VerifyRp, c),
        Sub::Selftest(c) => (Command::Selftest, c),
    };
    let opts = Options {
        config: common.config,
        out: common.out,
        seed: common.seed,
        csv_dir: common.csv_dir,
        quiet: common.quiet,
    };
    let code = cli::execute(command, &opts);
    ExitCode::from(code as u8)
}
