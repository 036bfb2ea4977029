use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gcrs::harness;

#[derive(Parser)]
#[command(
    name = "gcrs",
    version,
    about = "Plan over abstract task models, shape rewards, and train goal-conditioned policies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed in an experiment config; writes metrics, eval
    /// reports, checkpoints, and a manifest under the output root
    Train { config: PathBuf },
    /// Evaluate a checkpoint on a suite's held-out distribution or on a
    /// family swept over a difficulty range
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        /// Named suite (multigoal, object-colors)
        #[arg(long, conflicts_with_all = ["family", "difficulty"])]
        suite: Option<String>,
        /// Task family (kebab-case, e.g. umaze, door-key)
        #[arg(long)]
        family: Option<String>,
        /// Single difficulty or inclusive range a..b
        #[arg(long)]
        difficulty: Option<String>,
        #[arg(long, default_value_t = 100)]
        episodes: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Parse a map file and print the plan each abstraction finds from reset
    PlanDebug { map: PathBuf },
    /// Generate a world and print it in the map text format
    GenMap {
        #[arg(long)]
        family: String,
        #[arg(long)]
        difficulty: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Aggregate seed_*/metrics.csv under a run directory into aggregate.csv
    PlotData { dir: PathBuf },
    /// Print a checkpoint's mode, counters, shapes, and digests
    DescribeCheckpoint { path: PathBuf },
}

fn main() -> ExitCode {
    let code = match Cli::parse().command {
        Command::Train { config } => harness::cli_train(&config),
        Command::Eval { ckpt, suite, family, difficulty, episodes, seed } => {
            harness::cli_eval(&ckpt, suite, family, difficulty, episodes, seed)
        }
        Command::PlanDebug { map } => harness::cli_plan_debug(&map),
        Command::GenMap { family, difficulty, seed } => {
            harness::cli_gen_map(&family, difficulty, seed)
        }
        Command::PlotData { dir } => harness::cli_plot_data(&dir),
        Command::DescribeCheckpoint { path } => harness::cli_describe_checkpoint(&path),
    };
    ExitCode::from(code as u8)
}
