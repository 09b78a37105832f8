//! `fsens`: functional sensitivity analysis of model-run ensembles.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use fsens_core::io::{parse_alpha_list, read_run_table};
use fsens_core::{run_pipeline, write_outputs, AnalysisConfig, DesignEncoding, ErrorKind, Stage};

const EXIT_INPUT: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "fsens", version, about = "Functional finite-change sensitivity analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Smooth every run and write the fitted curves.
    Smooth(Common),
    /// Compute per-model sensitivity index curves.
    Indices(Common),
    /// Fit the cross-model coefficient functions.
    Fanova(Common),
    /// Permutation tests of every coefficient function (needs --seed).
    Test(Common),
    /// Indices, coefficients and plots; tests too when a seed is given.
    Report(Common),
    /// Every stage, tables and plots (needs --seed).
    All(Common),
}

#[derive(Args)]
struct Common {
    /// Long-format CSV with header `model,run_label,t,value`.
    #[arg(long)]
    runs: PathBuf,
    /// Flat key=value settings file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "fsens-out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated significance levels, e.g. `0.05,0.1`.
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    permutations: Option<usize>,
    /// Add the total-change contrast to the regression design.
    #[arg(long)]
    include_total_delta: bool,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self { code: EXIT_INPUT, message: message.into() }
    }
}

fn load_config(args: &Common) -> Result<AnalysisConfig, Failure> {
    let mut config = match &args.config {
        Some(path) => AnalysisConfig::from_file(path).map_err(|e| Failure::input(e.to_string()))?,
        None => AnalysisConfig::default(),
    };
    if let Some(a) = &args.alpha {
        config.alpha = parse_alpha_list(a).map_err(Failure::input)?;
    }
    if let Some(b) = args.permutations {
        if b == 0 {
            return Err(Failure::input("--permutations must be at least 1"));
        }
        config.permutations = b;
    }
    if args.include_total_delta {
        config.encoding = DesignEncoding::IncludeTotalDelta;
    }
    Ok(config)
}

fn execute(command: Command) -> Result<(), Failure> {
    let (args, stage, plots) = match command {
        Command::Smooth(a) => (a, Stage::Smooth, false),
        Command::Indices(a) => (a, Stage::Indices, false),
        Command::Fanova(a) => (a, Stage::Fanova, false),
        Command::Test(a) => (a, Stage::Test, false),
        Command::Report(a) => {
            let stage = if a.seed.is_some() { Stage::Test } else { Stage::Fanova };
            (a, stage, true)
        }
        Command::All(a) => (a, Stage::Test, true),
    };
    let config = load_config(&args)?;
    if stage == Stage::Test && args.seed.is_none() && config.seed.is_none() {
        return Err(Failure::input("--seed is required for permutation testing"));
    }
    let table = read_run_table(&args.runs).map_err(|e| Failure::input(e.to_string()))?;
    let fail = |e: fsens_core::PipelineError| Failure {
        code: match e.kind() {
            ErrorKind::Input => EXIT_INPUT,
            ErrorKind::Numerical => EXIT_NUMERICAL,
        },
        message: e.to_string(),
    };
    let output = run_pipeline(&config, &table, stage, args.seed).map_err(fail)?;
    let files = write_outputs(&output, &args.out, plots).map_err(fail)?;
    info!("wrote {} files to {}", files.len(), args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
