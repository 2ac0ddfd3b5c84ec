mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "seqrank", version, about = "Sequential ranking from noisy pairwise comparisons")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args, serde::Serialize)]
pub struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Repetitions per cell (Monte Carlo draws for `estimate-tc`).
    #[arg(long, global = true, value_name = "N")]
    pub reps: Option<usize>,
    /// Master seed.
    #[arg(long, global = true, value_name = "S")]
    pub seed: Option<u64>,
    /// Comma-separated costs, e.g. `2^-5,2^-10` or `0.001`.
    #[arg(long = "c-list", global = true, value_name = "LIST", value_delimiter = ',')]
    pub c_list: Option<Vec<String>>,
    /// Worker threads; 0 picks one per core.
    #[arg(long, global = true, env = "SEQRANK_THREADS", value_name = "N")]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Risk ratio against `c E t_c` over a grid of costs.
    Study1,
    /// Kendall loss against matched fixed-length baselines.
    Study2,
    /// Optimal design `lambda*` and `D(theta)` for one parameter vector.
    SolveDesign(commands::DesignArgs),
    /// One trial with a per-step trajectory log.
    SingleTrial(commands::TrialArgs),
    /// Monte Carlo estimate of `E t_c` under the prior.
    EstimateTc,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.global.config {
        Some(path) => config::FileConfig::load(path)?,
        None => config::FileConfig::default(),
    };
    let threads = cli.global.threads.or(file.threads).unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    let ctx = commands::Context {
        global: cli.global,
        file,
    };
    match cli.command {
        Command::Study1 => commands::study1(&ctx),
        Command::Study2 => commands::study2(&ctx),
        Command::SolveDesign(a) => commands::solve_design(&ctx, &a),
        Command::SingleTrial(a) => commands::single_trial(&ctx, &a),
        Command::EstimateTc => commands::estimate_tc(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("seqrank: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
