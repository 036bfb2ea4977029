//! Solves one generated world under each abstraction and prints the optimal
//! plan, state-space size, and root value side by side. Shows how the grid
//! view prices every cell move while the room views collapse whole regions,
//! and how the plan reads as a macro-action script in each case.
//!
//! Usage: cargo run --example inspect_plan [family] [difficulty] [seed]

use gcrs::abstraction::{AbstractModel, AbstractionKind};
use gcrs::planner::{debug_report, solve};
use gcrs::sim::reset;
use gcrs::world::{generate_task, render_map, TaskFamily};

fn main() {
    let mut args = std::env::args().skip(1);
    let family: TaskFamily = args
        .next()
        .unwrap_or_else(|| "door-key".into())
        .parse()
        .expect("unknown family");
    let difficulty: u32 = args.next().map_or(6, |s| s.parse().expect("difficulty"));
    let seed: u64 = args.next().map_or(3, |s| s.parse().expect("seed"));

    let spec = generate_task(family, difficulty, seed).expect("generate task");
    match render_map(&spec) {
        Ok(text) => println!("{text}"),
        Err(err) => println!("(no text form: {err})\n"),
    }

    let sim = reset(&spec);
    for kind in AbstractionKind::ALL {
        let model = AbstractModel::new(&spec, kind);
        let origin = model.phi(&sim);
        println!("--- {} abstraction ---", kind.name());
        match solve(&model, &origin) {
            Ok(sol) => {
                print!("{}", debug_report(&model, &sol));
                println!(
                    "reachable abstract states: {}, expansions: {}\n",
                    sol.state_count(),
                    sol.expanded,
                );
            }
            Err(err) => println!("no plan: {err}\n"),
        }
    }
}
