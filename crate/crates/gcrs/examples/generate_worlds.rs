//! Generates one world per task family at its lowest and highest difficulty
//! and prints the text maps side by side with their vital statistics. Good
//! first stop for getting a feel for what each procedural family looks like
//! and how difficulty stretches it.
//!
//! Usage: cargo run --example generate_worlds [seed]

use gcrs::world::{generate_task, render_map, TaskFamily};

fn main() {
    let seed: u64 = std::env::args().nth(1).map_or(7, |s| s.parse().expect("seed"));

    for family in TaskFamily::ALL {
        let (lo, hi) = family.difficulty_range();
        println!("=== {family} (difficulty {lo}..={hi}) ===");
        for difficulty in [lo, hi] {
            let spec = generate_task(family, difficulty, seed).expect("generate task");
            let task = &spec.task;
            println!(
                "difficulty {difficulty}: {}x{} cells, {} walls, {} lava, {} doors, {} keys, {} objects, budget {} steps",
                spec.width,
                spec.height,
                count_kind(&spec, gcrs::world::CellKind::Wall),
                count_kind(&spec, gcrs::world::CellKind::Lava),
                spec.doors.len(),
                spec.keys.len(),
                spec.objects.len(),
                task.episode_limit(),
            );
            if let Some((shape, color)) = task.target_object {
                println!("deliver the {} {} to the goal cell", color.name(), shape.name());
            }
            match render_map(&spec) {
                Ok(text) => println!("{text}"),
                Err(err) => println!("(no text form: {err})\n"),
            }
        }
    }
}

fn count_kind(spec: &gcrs::world::WorldSpec, kind: gcrs::world::CellKind) -> usize {
    (0..spec.height as i32)
        .flat_map(|row| (0..spec.width as i32).map(move |col| (col, row)))
        .filter(|&(col, row)| spec.kind_at(col, row) == kind)
        .count()
}
