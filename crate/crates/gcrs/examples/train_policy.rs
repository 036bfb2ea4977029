//! Trains a small shaped, subgoal-conditioned policy on easy U-mazes straight
//! from the library API, skipping the config-file harness. Prints one line per
//! optimization round, saves a checkpoint, reloads it, and evaluates the
//! deterministic policy on the training difficulty and one harder setting.
//!
//! Usage: cargo run --release --example train_policy [env_steps] [seed]

use gcrs::abstraction::AbstractionKind;
use gcrs::learner::Agent;
use gcrs::shaping::{run_eval, run_training, EvalParams, Mode, TrainHooks, TrainParams};
use gcrs::world::{TaskDescriptor, TaskFamily};
use sha2::{Digest, Sha256};

fn main() {
    let mut args = std::env::args().skip(1);
    let env_steps: u64 = args.next().map_or(40_000, |s| s.parse().expect("env_steps"));
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));

    let task = TaskDescriptor::new(TaskFamily::UMaze, 2, 0);
    let mut params =
        TrainParams::new(Mode::gcrs(AbstractionKind::Grid), vec![task], env_steps, seed);
    params.workers = 4;
    params.rollout_len = 512;

    println!(
        "training {} on {} for {} env steps, seed {}",
        params.mode.label(),
        task.dist_id(),
        env_steps,
        seed
    );
    println!("{:>5} {:>9} {:>8} {:>8} {:>9} {:>8}", "round", "steps", "success", "ep_len", "raw_ret", "kl");

    let mut hooks = TrainHooks {
        on_round: Some(Box::new(|row: &gcrs::shaping::MetricsRow| {
            println!(
                "{:>5} {:>9} {:>8.2} {:>8.1} {:>9.3} {:>8.5}",
                row.round, row.env_steps, row.success_rate, row.episode_len, row.return_raw,
                row.approx_kl,
            );
        })),
        ..TrainHooks::default()
    };
    let outcome = run_training(&params, &mut hooks).expect("training");
    println!(
        "done: {} episodes, {} planner solves, {} cache hits",
        outcome.episodes, outcome.planner_solves, outcome.planner_hits
    );

    let digest: [u8; 32] = Sha256::digest(format!("{params:?}")).into();
    let ckpt = std::env::temp_dir().join("train_policy_demo.ckpt");
    outcome
        .agent
        .save(&ckpt, digest, params.mode.abstraction, params.mode.shaping, params.mode.subgoal)
        .expect("save checkpoint");
    let (agent, info) = Agent::load(&ckpt).expect("load checkpoint");
    println!("\nsaved and reloaded {}:\n{info}\n", ckpt.display());

    let eval = EvalParams {
        mode: params.mode,
        tasks: vec![task, TaskDescriptor::new(TaskFamily::UMaze, 4, 0)],
        episodes_per_task: 50,
        seed: seed + 1,
        planner_cap: params.planner_cap,
    };
    println!("{:>14} {:>8} {:>8} {:>8}", "task", "success", "ep_len", "raw_ret");
    for row in run_eval(&agent, &eval).expect("eval") {
        println!(
            "{:>14} {:>8.2} {:>8.1} {:>8.3}",
            row.task.dist_id(),
            row.success_rate,
            row.episode_len,
            row.return_raw,
        );
    }
}
