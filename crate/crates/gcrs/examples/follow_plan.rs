//! Drives the simulator with a hand-scripted controller that steers straight
//! at the planner's current waypoint, printing the waypoint chain and the
//! shaped-reward stream. A sanity check that plans are followable before any
//! learning enters the picture: if this controller cannot reach the goal,
//! no policy conditioned on the same subgoals can be expected to.
//!
//! Usage: cargo run --release --example follow_plan [family] [difficulty] [seed]

use gcrs::abstraction::{AbstractModel, AbstractState, AbstractionKind, MacroAction};
use gcrs::planner::PlannerCache;
use gcrs::shaping::shaped_reward;
use gcrs::sim::{reset, step, Termination, DT};
use gcrs::world::{generate_task, Cell, TaskFamily};

fn main() {
    let mut args = std::env::args().skip(1);
    let family: TaskFamily = args
        .next()
        .unwrap_or_else(|| "random-corner".into())
        .parse()
        .expect("unknown family");
    let difficulty: u32 = args.next().map_or(7, |s| s.parse().expect("difficulty"));
    let seed: u64 = args.next().map_or(1, |s| s.parse().expect("seed"));

    let spec = generate_task(family, difficulty, seed).expect("generate task");
    println!("{}", gcrs::world::render_map(&spec).expect("render"));

    let mut cache = PlannerCache::new();
    let model = AbstractModel::new(&spec, AbstractionKind::Grid);
    let mut sim = reset(&spec);
    let gamma = 0.99;

    let mut shaped_total = 0.0;
    let mut raw_total = 0.0;
    let mut discount = 1.0;
    let mut announced = None;

    for t in 0..100_000u32 {
        let here = model.phi(&sim);
        let sol = cache.solution(&model, &here).expect("plan");
        let potential = sol.potential(&here).expect("known state");
        let action = sol.action(&here);
        let waypoint = sol.subgoal(&here).expect("reachable state has a plan");
        if announced.as_ref() != Some(&waypoint) {
            println!(
                "t={t:4}  V*={:>4}  macro={}  next={}",
                sol.value(&here).expect("known state"),
                action.map_or("stay".to_string(), |a| a.to_string()),
                model.canonical_id(&waypoint),
            );
            announced = Some(waypoint.clone());
        }

        let target = steer_target(&spec, &sim, &waypoint, action);
        let (tx, ty) = target.center(spec.cell_size);
        let dx = tx - sim.agent_pos[0];
        let dy = ty - sim.agent_pos[1];
        let ax = (dx * 4.0 - sim.agent_vel[0]).clamp(-1.0, 1.0);
        let ay = (dy * 4.0 - sim.agent_vel[1]).clamp(-1.0, 1.0);
        let centered = dx.hypot(dy) < 0.2;
        let grab = grab_channel(action, sim.carried.is_some(), centered);

        let out = step(&spec, &mut sim, [ax, ay, grab]);
        let next_potential = match sim.terminal {
            Some(Termination::Goal) | Some(Termination::Lava) => 0.0,
            _ => {
                let img = model.phi(&sim);
                let sol = cache.solution(&model, &img).expect("plan");
                sol.potential(&img).expect("known state")
            }
        };
        let shaped = shaped_reward(out.reward, gamma, potential, next_potential, true);
        raw_total += discount * out.reward;
        shaped_total += discount * shaped;
        discount *= gamma;

        if out.terminated || out.truncated {
            println!(
                "episode over at t={} ({:?}), raw return {raw_total:.3}, shaped return {shaped_total:.3}",
                t + 1,
                sim.terminal.expect("episode ended"),
            );
            println!(
                "simulated {:.1}s, planner solves {}, cache hits {}",
                f64::from(t + 1) * DT,
                cache.solves,
                cache.hits
            );
            return;
        }
    }
    println!("controller never finished (raw {raw_total:.3}, shaped {shaped_total:.3})");
}

/// Cell to steer toward: door macros aim at the door itself so the agent
/// pushes the panel, a drop aims at the agent's own cell center so the
/// trailing carried item settles inside the cell, and everything else aims
/// at the waypoint's agent cell.
fn steer_target(
    spec: &gcrs::world::WorldSpec,
    sim: &gcrs::sim::SimState,
    waypoint: &AbstractState,
    action: Option<MacroAction>,
) -> Cell {
    match action {
        Some(MacroAction::Unlock(c)) | Some(MacroAction::Open(c)) => c,
        Some(MacroAction::Drop) => spec.cell_of((sim.agent_pos[0], sim.agent_pos[1])),
        _ => match waypoint {
            AbstractState::Grid(g) => g.agent,
            AbstractState::Room(_) => spec.cell_of(spec.agent_spawn),
        },
    }
}

/// Carried items trail behind the agent, so a drop only lands in the current
/// cell when released near its center.
fn grab_channel(action: Option<MacroAction>, carrying: bool, centered: bool) -> f64 {
    match action {
        Some(MacroAction::PickUp(_)) => 1.0,
        Some(MacroAction::Drop) => {
            if centered {
                -1.0
            } else {
                1.0
            }
        }
        _ => {
            if carrying {
                1.0
            } else {
                -1.0
            }
        }
    }
}
