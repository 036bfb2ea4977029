//! A self-contained laboratory for reward shaping driven by expert abstract models.
//!
//! The pipeline: procedural continuous-control worlds ([`world`]) are simulated by a
//! deterministic point-mass physics core ([`sim`]); expert abstraction functions map
//! simulator states to small discrete models ([`abstraction`]); a uniform-cost planner
//! solves those models exactly ([`planner`]); the resulting optimal values become
//! potential-based shaped rewards and next-subgoal targets for a goal-conditioned
//! policy ([`shaping`], [`learner`]); and an experiment harness ties it together into
//! reproducible training and evaluation runs ([`harness`]).
//!
//! Every run is a pure function of its configuration and seed: two runs with the same
//! inputs produce byte-identical metrics, evaluation tables, and checkpoints (wall-clock
//! columns excepted).
//!
//! Start with the runnable examples: `cargo run --release -p gcrs --example <name>`.

#![forbid(unsafe_code)]

pub mod abstraction;
pub mod harness;
pub mod learner;
pub mod planner;
pub mod shaping;
pub mod sim;
pub mod world;
