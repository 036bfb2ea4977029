//! Sweeps a trained checkpoint across a difficulty range and prints the
//! resulting report table, the same path the `gcrs eval` subcommand takes.
//! The checkpoint records its own conditioning mode, so evaluation needs no
//! further configuration. With no arguments it first trains a small policy
//! on easy U-mazes so the example stands alone.
//!
//! Usage: cargo run --release --example evaluate_checkpoint [ckpt] [family] [lo..hi]

use std::path::PathBuf;

use gcrs::abstraction::AbstractionKind;
use gcrs::harness::{evaluate_checkpoint, parse_difficulty_range, EvalTarget};
use gcrs::shaping::{run_training, Mode, TrainHooks, TrainParams};
use gcrs::world::{TaskDescriptor, TaskFamily};

fn main() {
    let mut args = std::env::args().skip(1);
    let ckpt: PathBuf = args.next().map_or_else(train_demo_checkpoint, PathBuf::from);
    let family: TaskFamily =
        args.next().unwrap_or_else(|| "umaze".into()).parse().expect("unknown family");
    let difficulty =
        parse_difficulty_range(&args.next().unwrap_or_else(|| "2..5".into())).expect("range");

    let target = EvalTarget::Family { family, difficulty };
    let rows = evaluate_checkpoint(&ckpt, &target, 40, 7).expect("evaluate");
    println!("{:>20} {:>8} {:>8} {:>9}", "dist", "success", "ep_len", "episodes");
    for row in rows {
        println!(
            "{:>20} {:>8.2} {:>8.1} {:>9}",
            row.dist, row.success_rate, row.mean_episode_len, row.n_episodes,
        );
    }
}

fn train_demo_checkpoint() -> PathBuf {
    let task = TaskDescriptor::new(TaskFamily::UMaze, 2, 0);
    let mut params =
        TrainParams::new(Mode::gcrs(AbstractionKind::Grid), vec![task], 40_000, 0);
    params.workers = 4;
    params.rollout_len = 512;
    eprintln!("no checkpoint given; training one on {} first...", task.dist_id());
    let outcome = run_training(&params, &mut TrainHooks::default()).expect("training");
    let path = std::env::temp_dir().join("evaluate_checkpoint_demo.ckpt");
    outcome
        .agent
        .save(&path, [0; 32], params.mode.abstraction, params.mode.shaping, params.mode.subgoal)
        .expect("save checkpoint");
    path
}
