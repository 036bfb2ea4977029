//! Optimal planning over abstract models.
//!
//! [`solve`] explores the full abstract component reachable from an origin
//! (capped), then runs a multi-source backward breadth-first pass from every
//! goal-classified state over the reversed edge set. Macro actions all cost
//! one, so a state's optimal value is minus its backward distance; states
//! from which no goal is reachable get minus infinity, and [`PlanSolution::potential`]
//! floors those at [`phi_fail`] so shaped rewards stay finite.
//!
//! The greedy policy breaks ties deterministically: successors arrive sorted
//! by [`MacroAction`] order and the first minimizer wins. Solving twice from
//! the same origin yields identical values, policies, and reports.
//!
//! [`PlannerCache`] memoizes solutions per task. Replanning from a state the
//! cached solution has never seen solves again from that state and merges the
//! result, so values already handed out never change. Keys are task
//! descriptors, which identify generated worlds uniquely; hand-parsed maps
//! should use one cache per world.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt::Write as _;

use thiserror::Error;

use crate::abstraction::{AbstractModel, AbstractState, MacroAction};
use crate::sim::TerminalClass;
use crate::world::{TaskDescriptor, WorldSpec};

/// Default limit on forward state expansions per solve.
pub const DEFAULT_EXPANSION_CAP: usize = 200_000;

/// Potential assigned to states from which the abstract model reaches no
/// goal: well below any reachable value on this world.
pub fn phi_fail(spec: &WorldSpec) -> f64 {
    -2.0 * (spec.width as f64 * spec.height as f64)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlanError {
    #[error("no abstract path to a goal from the planning origin")]
    NoPathToGoal,
    #[error("abstract search exceeded {cap} state expansions")]
    SearchBudgetExceeded { cap: usize },
}

/// Values and greedy policy over one explored component.
#[derive(Debug, Clone)]
pub struct PlanSolution {
    pub origin: AbstractState,
    /// Nonterminal states expanded while exploring (summed across merges).
    pub expanded: usize,
    /// Terminal boundary states found while exploring (summed across merges,
    /// so shared boundaries may be counted more than once).
    pub terminal_count: usize,
    pub phi_fail: f64,
    values: HashMap<AbstractState, f64>,
    policy: HashMap<AbstractState, (MacroAction, AbstractState)>,
}

impl PlanSolution {
    /// Optimal value of a known state: minus the number of macro actions to
    /// the nearest goal, `0` at goals, minus infinity where no goal is
    /// reachable. `None` for states this solution has never explored.
    pub fn value(&self, state: &AbstractState) -> Option<f64> {
        self.values.get(state).copied()
    }

    /// The shaping potential: the value, with minus infinity floored at
    /// [`PlanSolution::phi_fail`].
    pub fn potential(&self, state: &AbstractState) -> Option<f64> {
        self.value(state)
            .map(|v| if v.is_finite() { v } else { self.phi_fail })
    }

    /// Greedy optimal macro at a state, if one leads anywhere useful.
    pub fn action(&self, state: &AbstractState) -> Option<MacroAction> {
        self.policy.get(state).map(|(m, _)| *m)
    }

    /// The next waypoint handed to the policy: the state the greedy macro
    /// leads to, or the state itself once it is terminal.
    pub fn subgoal(&self, state: &AbstractState) -> Option<AbstractState> {
        if state.is_terminal() {
            return Some(state.clone());
        }
        self.policy.get(state).map(|(_, t)| t.clone())
    }

    pub fn knows(&self, state: &AbstractState) -> bool {
        self.values.contains_key(state)
    }

    pub fn state_count(&self) -> usize {
        self.values.len()
    }

    pub fn states(&self) -> impl Iterator<Item = (&AbstractState, f64)> {
        self.values.iter().map(|(s, v)| (s, *v))
    }

    /// Follows the greedy policy from the origin until a terminal state or a
    /// dead end.
    pub fn rollout(&self) -> Vec<(MacroAction, AbstractState)> {
        let mut out = Vec::new();
        let mut cur = self.origin.clone();
        for _ in 0..=self.values.len() {
            if cur.is_terminal() {
                break;
            }
            let Some((m, next)) = self.policy.get(&cur) else { break };
            out.push((*m, next.clone()));
            cur = next.clone();
        }
        out
    }
}

pub fn solve(
    model: &AbstractModel<'_>,
    origin: &AbstractState,
) -> Result<PlanSolution, PlanError> {
    solve_with_cap(model, origin, DEFAULT_EXPANSION_CAP)
}

pub fn solve_with_cap(
    model: &AbstractModel<'_>,
    origin: &AbstractState,
    cap: usize,
) -> Result<PlanSolution, PlanError> {
    let mut edges: HashMap<AbstractState, Vec<(MacroAction, AbstractState)>> = HashMap::new();
    let mut terminals: Vec<AbstractState> = Vec::new();
    let mut seen: HashSet<AbstractState> = HashSet::from([origin.clone()]);
    let mut queue = VecDeque::from([origin.clone()]);
    let mut expanded = 0usize;

    while let Some(s) = queue.pop_front() {
        if s.is_terminal() {
            terminals.push(s);
            continue;
        }
        if expanded >= cap {
            return Err(PlanError::SearchBudgetExceeded { cap });
        }
        expanded += 1;
        let succ = model.successors(&s).expect("nonterminal state expands");
        for (_, t) in &succ {
            if seen.insert(t.clone()) {
                queue.push_back(t.clone());
            }
        }
        edges.insert(s, succ);
    }

    let mut rev: HashMap<&AbstractState, Vec<&AbstractState>> = HashMap::new();
    for (s, succ) in &edges {
        for (_, t) in succ {
            rev.entry(t).or_default().push(s);
        }
    }
    let mut dist: HashMap<AbstractState, u32> = HashMap::new();
    let mut bfs: VecDeque<&AbstractState> = VecDeque::new();
    for t in &terminals {
        if t.terminal() == TerminalClass::Goal && !dist.contains_key(t) {
            dist.insert(t.clone(), 0);
            bfs.push_back(t);
        }
    }
    while let Some(t) = bfs.pop_front() {
        let d = dist[t];
        let Some(preds) = rev.get(t) else { continue };
        for &p in preds {
            if !dist.contains_key(p) {
                dist.insert(p.clone(), d + 1);
                bfs.push_back(p);
            }
        }
    }

    if !dist.contains_key(origin) {
        return Err(PlanError::NoPathToGoal);
    }

    let mut values = HashMap::with_capacity(edges.len() + terminals.len());
    for s in edges.keys() {
        let v = dist.get(s).map_or(f64::NEG_INFINITY, |d| -f64::from(*d));
        values.insert(s.clone(), v);
    }
    let terminal_count = terminals.len();
    for t in terminals {
        let v = if t.terminal() == TerminalClass::Goal { 0.0 } else { f64::NEG_INFINITY };
        values.insert(t, v);
    }

    let mut policy = HashMap::new();
    for (s, succ) in &edges {
        let mut best: Option<(u32, &(MacroAction, AbstractState))> = None;
        for e in succ {
            if let Some(&d) = dist.get(&e.1) {
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, e));
                }
            }
        }
        if let Some((_, e)) = best {
            policy.insert(s.clone(), e.clone());
        }
    }

    Ok(PlanSolution {
        origin: origin.clone(),
        expanded,
        terminal_count,
        phi_fail: phi_fail(model.spec),
        values,
        policy,
    })
}

/// Memoized solutions, one merged entry per task descriptor.
#[derive(Debug, Default)]
pub struct PlannerCache {
    entries: HashMap<TaskDescriptor, PlanSolution>,
    cap: usize,
    pub solves: usize,
    pub hits: usize,
}

impl PlannerCache {
    pub fn new() -> PlannerCache {
        PlannerCache::with_cap(DEFAULT_EXPANSION_CAP)
    }

    pub fn with_cap(cap: usize) -> PlannerCache {
        PlannerCache { entries: HashMap::new(), cap, solves: 0, hits: 0 }
    }

    /// The solution covering `state`, solving and merging if this task's
    /// entry has never explored it.
    pub fn solution(
        &mut self,
        model: &AbstractModel<'_>,
        state: &AbstractState,
    ) -> Result<&PlanSolution, PlanError> {
        let key = model.spec.task;
        let known = self.entries.get(&key).is_some_and(|e| e.knows(state));
        if known {
            self.hits += 1;
        } else {
            let fresh = solve_with_cap(model, state, self.cap)?;
            self.solves += 1;
            match self.entries.entry(key) {
                std::collections::hash_map::Entry::Occupied(mut e) => {
                    let merged = e.get_mut();
                    merged.expanded += fresh.expanded;
                    merged.terminal_count += fresh.terminal_count;
                    for (s, v) in fresh.values {
                        merged.values.entry(s).or_insert(v);
                    }
                    for (s, edge) in fresh.policy {
                        merged.policy.entry(s).or_insert(edge);
                    }
                }
                std::collections::hash_map::Entry::Vacant(v) => {
                    v.insert(fresh);
                }
            }
        }
        Ok(&self.entries[&key])
    }
}

/// Human-readable account of one solution: origin, greedy rollout, stats.
pub fn debug_report(model: &AbstractModel<'_>, solution: &PlanSolution) -> String {
    let mut out = String::new();
    let v0 = solution.value(&solution.origin).unwrap_or(f64::NEG_INFINITY);
    writeln!(out, "origin: {}", model.canonical_id(&solution.origin)).unwrap();
    writeln!(out, "value: {v0}").unwrap();
    writeln!(out, "plan:").unwrap();
    let rollout = solution.rollout();
    if rollout.is_empty() {
        writeln!(out, "  (origin is terminal or has no useful action)").unwrap();
    }
    let mut last = solution.origin.clone();
    for (i, (macro_action, state)) in rollout.iter().enumerate() {
        let v = solution.value(state).unwrap_or(f64::NEG_INFINITY);
        writeln!(
            out,
            "  {:>3}. {macro_action}  (value {v})  -> {}",
            i + 1,
            model.canonical_id(state)
        )
        .unwrap();
        last = state.clone();
    }
    writeln!(out, "terminal class: {:?}", last.terminal()).unwrap();
    writeln!(
        out,
        "explored {} states ({} expanded, {} terminal)",
        solution.state_count(),
        solution.expanded,
        solution.terminal_count
    )
    .unwrap();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abstraction::{AbstractionKind, DoorStatus, GridState, ItemId, NearTarget};
    use crate::sim::reset;
    use crate::world::{generate_task, parse_map, Cell, CellKind, Color, TaskFamily};
    use std::collections::BTreeMap;

    const DOOR_KEY_6X6: &str = "\
.{rK}.W..\n\
...W..\n\
...{rD}..\n\
...W..\n\
...W..\n\
A..W.G";

    fn grid_image(spec: &WorldSpec, model: &AbstractModel<'_>) -> AbstractState {
        model.phi(&reset(spec))
    }

    #[test]
    fn open_grid_value_and_first_move_tie_break() {
        let spec = parse_map("..G\n...\nA..").unwrap();
        let model = AbstractModel::new(&spec, AbstractionKind::Grid);
        let origin = grid_image(&spec, &model);
        let sol = solve(&model, &origin).unwrap();
        assert_eq!(sol.value(&origin), Some(-4.0));
        assert_eq!(sol.action(&origin), Some(MacroAction::MoveTo(Cell::new(0, 1))));
        let rollout = sol.rollout();
        assert_eq!(rollout.len(), 4);
        assert_eq!(rollout.last().unwrap().1.terminal(), TerminalClass::Goal);
    }

    #[test]
    fn values_satisfy_the_one_step_recursion() {
        let tasks = [
            generate_task(TaskFamily::SimpleCrossing, 2, 3).unwrap(),
            generate_task(TaskFamily::DoorKey, 6, 9).unwrap(),
            generate_task(TaskFamily::UMaze, 3, 1).unwrap(),
        ];
        for spec in &tasks {
            let model = AbstractModel::new(spec, AbstractionKind::Grid);
            let origin = grid_image(spec, &model);
            let sol = solve(&model, &origin).unwrap();
            for (state, v) in sol.states() {
                if state.is_terminal() || !v.is_finite() {
                    continue;
                }
                let best = model
                    .successors(state)
                    .unwrap()
                    .into_iter()
                    .map(|(_, t)| sol.value(&t).expect("closure is closed"))
                    .fold(f64::NEG_INFINITY, f64::max);
                assert_eq!(v, -1.0 + best, "value recursion broken at {}", model.canonical_id(state));
            }
        }
    }

    #[test]
    fn split_world_room_plan_is_exactly_six_macros() {
        let spec = parse_map(DOOR_KEY_6X6).unwrap();
        let model = AbstractModel::new(&spec, AbstractionKind::Room);
        let origin = model.phi(&reset(&spec));
        let sol = solve(&model, &origin).unwrap();
        assert_eq!(sol.value(&origin), Some(-6.0));

        let key = ItemId::Key(Color::Red);
        let door = Cell::new(3, 2);
        let macros: Vec<MacroAction> = sol.rollout().into_iter().map(|(m, _)| m).collect();
        assert_eq!(
            macros,
            vec![
                MacroAction::MoveNear(NearTarget::Item(key)),
                MacroAction::PickUp(key),
                MacroAction::MoveNear(NearTarget::Door(door)),
                MacroAction::Unlock(door),
                MacroAction::Open(door),
                MacroAction::GoThroughDoor(door),
            ]
        );
    }

    #[test]
    fn rollout_values_rise_one_per_macro() {
        let spec = generate_task(TaskFamily::DoorKey, 6, 4).unwrap();
        let model = AbstractModel::new(&spec, AbstractionKind::Grid);
        let origin = grid_image(&spec, &model);
        let sol = solve(&model, &origin).unwrap();
        let mut prev = sol.value(&origin).unwrap();
        for (_, state) in sol.rollout() {
            let v = sol.value(&state).unwrap();
            assert_eq!(v, prev + 1.0);
            prev = v;
        }
        assert_eq!(prev, 0.0, "rollout ends at a goal");
    }

    #[test]
    fn walled_off_goal_is_an_error() {
        let spec = WorldSpec::new(
            3,
            1,
            vec![CellKind::Empty, CellKind::Wall, CellKind::Goal],
            (0.5, 0.5),
            crate::world::TaskDescriptor::new(TaskFamily::SimpleCrossing, 3, 0),
            0,
        )
        .unwrap();
        let model = AbstractModel::new(&spec, AbstractionKind::Grid);
        let origin = grid_image(&spec, &model);
        assert_eq!(solve(&model, &origin).unwrap_err(), PlanError::NoPathToGoal);
    }

    #[test]
    fn tiny_budget_is_reported() {
        let spec = parse_map("..G\n...\nA..").unwrap();
        let model = AbstractModel::new(&spec, AbstractionKind::Grid);
        let origin = grid_image(&spec, &model);
        assert_eq!(
            solve_with_cap(&model, &origin, 2).unwrap_err(),
            PlanError::SearchBudgetExceeded { cap: 2 }
        );
    }

    #[test]
    fn stranded_states_get_the_failure_floor() {
        let spec = parse_map("A{rK}.{rD}G\n...{rD}W").unwrap();
        let model = AbstractModel::new(&spec, AbstractionKind::Grid);
        let origin = grid_image(&spec, &model);
        let sol = solve(&model, &origin).unwrap();
        assert_eq!(sol.value(&origin), Some(-6.0));

        let stranded = AbstractState::Grid(GridState {
            agent: Cell::new(2, 1),
            items: BTreeMap::new(),
            carried: None,
            doors: BTreeMap::from([
                (Cell::new(3, 0), DoorStatus::Locked),
                (Cell::new(3, 1), DoorStatus::Closed),
            ]),
            terminal: crate::sim::TerminalClass::Nonterminal,
        });
        assert_eq!(sol.value(&stranded), Some(f64::NEG_INFINITY));
        assert_eq!(sol.potential(&stranded), Some(-20.0));
        assert_eq!(sol.action(&stranded), None);
    }

    #[test]
    fn cache_reuses_and_merges() {
        let spec = parse_map("A{rK}.{rD}G").unwrap();
        let model = AbstractModel::new(&spec, AbstractionKind::Grid);
        let origin = grid_image(&spec, &model);
        let mut cache = PlannerCache::new();

        let v0 = cache.solution(&model, &origin).unwrap().value(&origin);
        assert_eq!((cache.solves, cache.hits), (1, 0));
        let again = cache.solution(&model, &origin).unwrap().value(&origin);
        assert_eq!((cache.solves, cache.hits), (1, 1));
        assert_eq!(v0, again);

        let novel = AbstractState::Grid(GridState {
            agent: Cell::new(0, 0),
            items: BTreeMap::from([(ItemId::Key(Color::Red), Cell::new(1, 0))]),
            carried: None,
            doors: BTreeMap::from([(Cell::new(3, 0), DoorStatus::Open)]),
            terminal: crate::sim::TerminalClass::Nonterminal,
        });
        let (knows_novel, merged_origin) = {
            let sol = cache.solution(&model, &novel).unwrap();
            (sol.knows(&novel), sol.value(&origin))
        };
        assert_eq!((cache.solves, cache.hits), (2, 1));
        assert!(knows_novel);
        assert_eq!(merged_origin, v0, "merge keeps earlier values");
    }

    #[test]
    fn solving_twice_is_identical() {
        let spec = generate_task(TaskFamily::DoorKey, 7, 2).unwrap();
        let model = AbstractModel::new(&spec, AbstractionKind::Grid);
        let origin = grid_image(&spec, &model);
        let a = solve(&model, &origin).unwrap();
        let b = solve(&model, &origin).unwrap();
        assert_eq!(a.state_count(), b.state_count());
        for (s, v) in a.states() {
            assert_eq!(b.value(s), Some(v));
            assert_eq!(a.action(s), b.action(s));
        }
        assert_eq!(debug_report(&model, &a), debug_report(&model, &b));
    }

    #[test]
    fn subgoal_is_next_waypoint_or_self_at_terminals() {
        let spec = parse_map("A..G\n....").unwrap();
        let model = AbstractModel::new(&spec, AbstractionKind::Grid);
        let origin = grid_image(&spec, &model);
        let sol = solve(&model, &origin).unwrap();
        let sub = sol.subgoal(&origin).unwrap();
        assert_eq!(sol.value(&sub), Some(sol.value(&origin).unwrap() + 1.0));

        let (_, terminal) = sol.rollout().pop().unwrap();
        assert!(terminal.is_terminal());
        assert_eq!(sol.subgoal(&terminal), Some(terminal.clone()));
    }

    #[test]
    fn report_mentions_plan_and_stats() {
        let spec = parse_map(DOOR_KEY_6X6).unwrap();
        let model = AbstractModel::new(&spec, AbstractionKind::Room);
        let origin = model.phi(&reset(&spec));
        let sol = solve(&model, &origin).unwrap();
        let report = debug_report(&model, &sol);
        assert!(report.contains("value: -6"));
        assert!(report.contains("pick-up(key red)"));
        assert!(report.contains("go-through-door(3,2)"));
        assert!(report.contains("terminal class: Goal"));
        assert!(report.contains("expanded"));
    }
}
