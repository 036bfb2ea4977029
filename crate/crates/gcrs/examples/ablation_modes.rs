//! Trains the same task under all four conditioning modes with an identical
//! budget and seed, then evaluates each deterministically: the core ablation.
//! At small budgets the subgoal channel tends to move first, while shaping's
//! advantage grows with task sparsity and horizon; expect noisy numbers for
//! the weaker modes rather than a clean sweep.
//!
//! Usage: cargo run --release --example ablation_modes [env_steps] [seed]

use gcrs::abstraction::AbstractionKind;
use gcrs::shaping::{run_eval, run_training, EvalParams, Mode, TrainHooks, TrainParams};
use gcrs::world::{TaskDescriptor, TaskFamily};

fn main() {
    let mut args = std::env::args().skip(1);
    let env_steps: u64 = args.next().map_or(100_000, |s| s.parse().expect("env_steps"));
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));

    let task = TaskDescriptor::new(TaskFamily::UMaze, 3, 0);
    let kind = AbstractionKind::Grid;
    let modes = [
        Mode::vanilla(),
        Mode { abstraction: Some(kind), shaping: true, subgoal: false },
        Mode { abstraction: Some(kind), shaping: false, subgoal: true },
        Mode::gcrs(kind),
    ];

    println!("{} for {env_steps} env steps each, seed {seed}\n", task.dist_id());
    println!("{:>14} {:>13} {:>12} {:>8}", "mode", "train_success", "eval_success", "ep_len");
    for mode in modes {
        let mut params = TrainParams::new(mode, vec![task], env_steps, seed);
        params.workers = 4;
        params.rollout_len = 512;
        let outcome = run_training(&params, &mut TrainHooks::default()).expect("training");
        let train_success = outcome.rows.last().map_or(0.0, |r| r.success_rate);

        let eval = EvalParams {
            mode,
            tasks: vec![task],
            episodes_per_task: 50,
            seed: seed + 1,
            planner_cap: params.planner_cap,
        };
        let row = &run_eval(&outcome.agent, &eval).expect("eval")[0];
        println!(
            "{:>14} {:>13.2} {:>12.2} {:>8.1}",
            mode.label(),
            train_success,
            row.success_rate,
            row.episode_len,
        );
    }
}
