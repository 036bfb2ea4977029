//! Scripted walkthrough of the physics core on a fixed door-key map, with no
//! planner and no policy: wall contact, grabbing a key, carrying it across
//! the arena, unlocking and shouldering open a door, and finishing on the
//! goal pad. Prints the simulator state at each phase so the continuous
//! mechanics that the abstractions summarize are visible one by one.
//!
//! Usage: cargo run --example sim_tour

use gcrs::sim::{reset, step, SimState, Termination, DOOR_OPEN_FRACTION};
use gcrs::world::{parse_map, WorldSpec};

const MAP: &str = ".{rK}.W..\n...W..\n...{rD}..\n...W..\n...W..\nA..W.G";

fn main() {
    let spec = parse_map(MAP).expect("parse map");
    println!("{}", gcrs::world::render_map(&spec).expect("render"));
    let mut sim = reset(&spec);
    report("spawn", &sim);

    println!("\n-- shoving the left wall: position clamps, velocity dies on contact");
    for _ in 0..12 {
        step(&spec, &mut sim, [-1.0, 0.0, -1.0]);
    }
    report("after 12 steps pushing left", &sim);

    println!("\n-- walking to the key");
    assert!(drive(&spec, &mut sim, (1.5, 0.5), -1.0, 300), "never reached the key cell");
    report("at the key", &sim);
    step(&spec, &mut sim, [0.0, 0.0, 1.0]);
    assert!(sim.carried.is_some(), "grab failed");
    report("grabbed", &sim);

    println!("\n-- carrying it to the door; the key trails behind the agent");
    assert!(drive(&spec, &mut sim, (2.5, 2.5), 1.0, 300), "never reached the door approach");
    report("west of the door", &sim);

    println!("\n-- pushing into the locked door: first contact unlocks and eats the key,");
    println!("   then sustained contact swings it open");
    let mut announced_unlock = false;
    for _ in 0..200 {
        let ay = ((2.5 - sim.agent_pos[1]) * 4.0 - sim.agent_vel[1]).clamp(-1.0, 1.0);
        step(&spec, &mut sim, [1.0, ay, 1.0]);
        if !announced_unlock && !sim.doors[0].locked {
            announced_unlock = true;
            report("unlocked", &sim);
        }
        if sim.doors[0].open_fraction >= DOOR_OPEN_FRACTION && sim.agent_pos[0] > 4.0 {
            break;
        }
    }
    assert!(sim.agent_pos[0] > 4.0, "never made it through the door");
    report("through the door", &sim);

    println!("\n-- down to the goal pad");
    drive(&spec, &mut sim, (5.5, 5.5), -1.0, 300);
    assert_eq!(sim.terminal, Some(Termination::Goal), "episode should end on the goal");
    report("done", &sim);
    println!("\nreached the goal in {} steps of a {}-step budget", sim.t, spec.task.episode_limit());
}

/// Proportional-derivative steering toward a point; returns true on arrival.
fn drive(spec: &WorldSpec, sim: &mut SimState, target: (f64, f64), grab: f64, budget: u32) -> bool {
    for _ in 0..budget {
        if sim.terminal.is_some() {
            return true;
        }
        let dx = target.0 - sim.agent_pos[0];
        let dy = target.1 - sim.agent_pos[1];
        if dx.hypot(dy) < 0.15 {
            return true;
        }
        let ax = (dx * 4.0 - sim.agent_vel[0]).clamp(-1.0, 1.0);
        let ay = (dy * 4.0 - sim.agent_vel[1]).clamp(-1.0, 1.0);
        step(spec, sim, [ax, ay, grab]);
    }
    false
}

fn report(label: &str, sim: &SimState) {
    let carried = match sim.carried {
        Some(gcrs::sim::ItemRef::Key(i)) => format!("key #{i}"),
        Some(gcrs::sim::ItemRef::Object(i)) => format!("object #{i}"),
        None => "nothing".to_string(),
    };
    let door = &sim.doors[0];
    println!(
        "[{label}] t={:3}  pos=({:.2},{:.2})  speed={:.2}  carrying {}  door {} {:.0}% open  key present: {}",
        sim.t,
        sim.agent_pos[0],
        sim.agent_pos[1],
        sim.agent_vel[0].hypot(sim.agent_vel[1]),
        carried,
        if door.locked { "locked," } else { "unlocked," },
        door.open_fraction * 100.0,
        sim.keys[0].present,
    );
}
