//! Deterministic continuous-control simulation on top of a [`WorldSpec`].
//!
//! The agent is an axis-aligned square of half-extent [`AGENT_HALF`] driven by
//! a force action; velocity integrates semi-implicitly and decays by a fixed
//! friction factor each step. Movement resolves collisions one axis at a time
//! against wall cells, the arena boundary (out-of-bounds reads as wall), and
//! the solid part of each door panel.
//!
//! Doors are sliding panels inside a wall run. A panel shrinks from the low
//! side of its cell along the run axis as `open_fraction` grows; an agent in
//! the door cell or one of its two crossing-axis neighbors pushes the panel
//! open by driving into it. A locked panel will not move until the agent
//! presses it while holding the matching key, which unlocks it and consumes
//! the key.
//!
//! Keys and delivery objects are point items with small collision extents.
//! The agent may hold one item at a time: the grab channel of the action
//! attaches the nearest item in the agent's own cell within [`GRAB_RADIUS`],
//! and releasing throws the item with the agent's current velocity, after
//! which it slides under the same friction until it rests.

use crate::world::{Cell, CellKind, Color, Shape, TaskFamily, WorldSpec};

/// Simulation timestep in seconds.
pub const DT: f64 = 0.05;
/// Fraction of velocity lost per step.
pub const FRICTION: f64 = 0.05;
/// Force-to-acceleration scale; a unit force accelerates at this rate.
pub const ACCEL: f64 = 10.0;
/// Half-extent of the agent's collision square.
pub const AGENT_HALF: f64 = 0.2;
/// Half-extent of item collision squares.
pub const OBJECT_HALF: f64 = 0.15;
/// Maximum distance at which the grab channel can attach an item.
pub const GRAB_RADIUS: f64 = 0.6;
/// Distance a held item trails behind the moving agent.
pub const HOLD_OFFSET: f64 = 0.35;
/// Door opening speed, in open-fraction per second of pushing.
pub const DOOR_RATE: f64 = 1.0;
/// Speed below which a delivered object counts as at rest.
pub const REST_EPS: f64 = 0.05;
/// Open fraction at which the abstract door status flips to open.
pub const DOOR_OPEN_FRACTION: f64 = 0.6;
/// Action layout: force x, force y, grab.
pub const ACTION_DIM: usize = 3;

/// Identifies one movable item by its index in the spec's spawn lists.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ItemRef {
    Key(usize),
    Object(usize),
}

/// Why an episode ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    Goal,
    Lava,
    Timeout,
}

/// Timeless classification of a state: whether the task's success or failure
/// condition holds right now. Timeouts are not a state property and never
/// appear here.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TerminalClass {
    Nonterminal,
    Goal,
    Failure,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KeyState {
    pub color: Color,
    pub pos: [f64; 2],
    pub vel: [f64; 2],
    /// Cleared when the key is consumed unlocking a door.
    pub present: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectState {
    pub shape: Shape,
    pub color: Color,
    pub pos: [f64; 2],
    pub vel: [f64; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct DoorState {
    pub cell: Cell,
    pub color: Color,
    pub locked: bool,
    pub open_fraction: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub agent_pos: [f64; 2],
    pub agent_vel: [f64; 2],
    pub keys: Vec<KeyState>,
    pub objects: Vec<ObjectState>,
    pub doors: Vec<DoorState>,
    pub carried: Option<ItemRef>,
    pub t: u32,
    pub terminal: Option<Termination>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
}

pub fn reset(spec: &WorldSpec) -> SimState {
    let s = spec.cell_size;
    SimState {
        agent_pos: [spec.agent_spawn.0, spec.agent_spawn.1],
        agent_vel: [0.0, 0.0],
        keys: spec
            .keys
            .iter()
            .map(|k| KeyState {
                color: k.color,
                pos: center(k.cell, s),
                vel: [0.0, 0.0],
                present: true,
            })
            .collect(),
        objects: spec
            .objects
            .iter()
            .map(|o| ObjectState {
                shape: o.shape,
                color: o.color,
                pos: center(o.cell, s),
                vel: [0.0, 0.0],
            })
            .collect(),
        doors: spec
            .doors
            .iter()
            .map(|d| DoorState {
                cell: d.cell,
                color: d.color,
                locked: d.locked,
                open_fraction: 0.0,
            })
            .collect(),
        carried: None,
        t: 0,
        terminal: None,
    }
}

fn center(cell: Cell, size: f64) -> [f64; 2] {
    let (x, y) = cell.center(size);
    [x, y]
}

/// Advances the simulation by one step. Panics if the state is already
/// terminal; callers reset between episodes.
pub fn step(spec: &WorldSpec, state: &mut SimState, action: [f64; ACTION_DIM]) -> StepOutcome {
    assert!(state.terminal.is_none(), "step on a finished episode");

    let fx = action[0].clamp(-1.0, 1.0);
    let fy = action[1].clamp(-1.0, 1.0);
    state.agent_vel[0] = (state.agent_vel[0] + fx * ACCEL * DT) * (1.0 - FRICTION);
    state.agent_vel[1] = (state.agent_vel[1] + fy * ACCEL * DT) * (1.0 - FRICTION);

    let mut contacts = Vec::new();
    for axis in 0..2 {
        if let Some(door) = move_axis(
            spec,
            &state.doors,
            &mut state.agent_pos,
            &mut state.agent_vel,
            axis,
            AGENT_HALF,
        ) {
            contacts.push(door);
        }
    }
    contacts.dedup();
    push_doors(spec, state, &contacts);
    apply_grab(spec, state, action[2]);
    follow_carried(state);
    move_free_items(spec, state);

    state.t += 1;
    let class = is_terminal_class(spec, state);
    let limit = spec.task.episode_limit();
    match class {
        TerminalClass::Goal => {
            state.terminal = Some(Termination::Goal);
            StepOutcome { reward: 1.0, terminated: true, truncated: false }
        }
        TerminalClass::Failure => {
            state.terminal = Some(Termination::Lava);
            StepOutcome { reward: 0.0, terminated: true, truncated: false }
        }
        TerminalClass::Nonterminal if state.t >= limit => {
            state.terminal = Some(Termination::Timeout);
            StepOutcome { reward: 0.0, terminated: false, truncated: true }
        }
        TerminalClass::Nonterminal => {
            StepOutcome { reward: 0.0, terminated: false, truncated: false }
        }
    }
}

/// Whether the task's success or failure condition holds in this state.
///
/// Success is reaching a goal cell (agent center inside it), except for
/// object delivery, where it is the target object resting in a goal cell:
/// center inside, not held, speed below [`REST_EPS`]. Failure is the agent's
/// center inside a lava cell. Success takes priority when both hold.
pub fn is_terminal_class(spec: &WorldSpec, state: &SimState) -> TerminalClass {
    let goal = if spec.task.family == TaskFamily::ObjectDelivery {
        let target = spec.task.target_object.expect("delivery task has a target");
        state.objects.iter().enumerate().any(|(i, o)| {
            (o.shape, o.color) == target
                && spec.is_goal(spec.cell_of((o.pos[0], o.pos[1])))
                && state.carried != Some(ItemRef::Object(i))
                && speed(o.vel) < REST_EPS
        })
    } else {
        spec.is_goal(spec.cell_of((state.agent_pos[0], state.agent_pos[1])))
    };
    if goal {
        return TerminalClass::Goal;
    }
    let agent_cell = spec.cell_of((state.agent_pos[0], state.agent_pos[1]));
    if matches!(spec.kind_at(agent_cell.col, agent_cell.row), CellKind::Lava) {
        return TerminalClass::Failure;
    }
    TerminalClass::Nonterminal
}

fn speed(v: [f64; 2]) -> f64 {
    (v[0] * v[0] + v[1] * v[1]).sqrt()
}

#[derive(Clone, Copy, Debug)]
struct Rect {
    min: [f64; 2],
    max: [f64; 2],
}

impl Rect {
    fn overlaps(&self, other: &Rect) -> bool {
        self.min[0] < other.max[0]
            && self.max[0] > other.min[0]
            && self.min[1] < other.max[1]
            && self.max[1] > other.min[1]
    }
}

fn cell_rect(cell: Cell, size: f64) -> Rect {
    Rect {
        min: [cell.col as f64 * size, cell.row as f64 * size],
        max: [(cell.col + 1) as f64 * size, (cell.row + 1) as f64 * size],
    }
}

/// Axis along which the wall containing a door runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// A door panel slides along its wall run; vertical if the cells above or
/// below are wall-like, otherwise horizontal.
pub fn door_run_axis(spec: &WorldSpec, cell: Cell) -> Axis {
    let wall_like = |c: i32, r: i32| {
        matches!(spec.kind_at(c, r), CellKind::Wall | CellKind::Door { .. })
    };
    if wall_like(cell.col, cell.row - 1) || wall_like(cell.col, cell.row + 1) {
        Axis::Y
    } else {
        Axis::X
    }
}

/// The still-solid part of a door panel: the cell minus a gap of
/// `open_fraction` of its span, opening from the low-coordinate side of the
/// run axis. Fully open panels have no solid part.
fn door_solid_rect(spec: &WorldSpec, door: &DoorState) -> Option<Rect> {
    if door.open_fraction >= 1.0 {
        return None;
    }
    let mut rect = cell_rect(door.cell, spec.cell_size);
    let axis = match door_run_axis(spec, door.cell) {
        Axis::X => 0,
        Axis::Y => 1,
    };
    rect.min[axis] += door.open_fraction * spec.cell_size;
    Some(rect)
}

/// Moves one coordinate by its velocity, clamping against the nearest solid
/// surface and zeroing that velocity component on contact. Returns the index
/// of the door whose panel was the binding constraint, if any.
fn move_axis(
    spec: &WorldSpec,
    doors: &[DoorState],
    pos: &mut [f64; 2],
    vel: &mut [f64; 2],
    axis: usize,
    half: f64,
) -> Option<usize> {
    let delta = vel[axis] * DT;
    if delta == 0.0 {
        return None;
    }
    let mut target = pos[axis] + delta;
    let mut binding = None;

    let mut bb = Rect {
        min: [pos[0] - half, pos[1] - half],
        max: [pos[0] + half, pos[1] + half],
    };
    bb.min[axis] = target - half;
    bb.max[axis] = target + half;

    let s = spec.cell_size;
    let lo_col = (bb.min[0] / s).floor() as i32;
    let hi_col = (bb.max[0] / s).floor() as i32;
    let lo_row = (bb.min[1] / s).floor() as i32;
    let hi_row = (bb.max[1] / s).floor() as i32;

    let consider = |rect: Rect, door: Option<usize>, target: &mut f64, binding: &mut Option<usize>| {
        let mut probe = bb;
        probe.min[axis] = *target - half;
        probe.max[axis] = *target + half;
        if !probe.overlaps(&rect) {
            return;
        }
        let clamped = if delta > 0.0 { rect.min[axis] - half } else { rect.max[axis] + half };
        if (delta > 0.0 && clamped < *target) || (delta < 0.0 && clamped > *target) {
            *target = clamped;
            *binding = door;
        }
    };

    for row in lo_row..=hi_row {
        for col in lo_col..=hi_col {
            let cell = Cell::new(col, row);
            match spec.kind_at(col, row) {
                CellKind::Wall => {
                    consider(cell_rect(cell, s), None, &mut target, &mut binding)
                }
                CellKind::Door { .. } => {
                    let idx = spec.door_index(cell).expect("door cell has door state");
                    if let Some(rect) = door_solid_rect(spec, &doors[idx]) {
                        consider(rect, Some(idx), &mut target, &mut binding)
                    }
                }
                _ => {}
            }
        }
    }

    let contact = target != pos[axis] + delta;
    pos[axis] = target;
    if contact {
        vel[axis] = 0.0;
        binding
    } else {
        None
    }
}

/// Applies pushing contact to door panels. Only an agent standing in the door
/// cell or one of its two crossing-axis neighbors can work the panel; pushing
/// a locked panel while holding the matching key unlocks it and consumes the
/// key.
fn push_doors(spec: &WorldSpec, state: &mut SimState, contacts: &[usize]) {
    let agent_cell = spec.cell_of((state.agent_pos[0], state.agent_pos[1]));
    for &idx in contacts {
        let cell = state.doors[idx].cell;
        let eligible = match door_run_axis(spec, cell) {
            Axis::Y => {
                agent_cell == cell
                    || agent_cell == Cell::new(cell.col - 1, cell.row)
                    || agent_cell == Cell::new(cell.col + 1, cell.row)
            }
            Axis::X => {
                agent_cell == cell
                    || agent_cell == Cell::new(cell.col, cell.row - 1)
                    || agent_cell == Cell::new(cell.col, cell.row + 1)
            }
        };
        if !eligible {
            continue;
        }
        if state.doors[idx].locked {
            let held_key = match state.carried {
                Some(ItemRef::Key(k)) if state.keys[k].color == state.doors[idx].color => Some(k),
                _ => None,
            };
            if let Some(k) = held_key {
                state.doors[idx].locked = false;
                state.keys[k].present = false;
                state.carried = None;
            } else {
                continue;
            }
        }
        let door = &mut state.doors[idx];
        door.open_fraction = (door.open_fraction + DOOR_RATE * DT).min(1.0);
    }
}

fn item_pos(state: &SimState, item: ItemRef) -> [f64; 2] {
    match item {
        ItemRef::Key(i) => state.keys[i].pos,
        ItemRef::Object(i) => state.objects[i].pos,
    }
}

fn apply_grab(spec: &WorldSpec, state: &mut SimState, grab: f64) {
    if grab > 0.0 {
        if state.carried.is_some() {
            return;
        }
        let agent_cell = spec.cell_of((state.agent_pos[0], state.agent_pos[1]));
        let mut best: Option<(f64, ItemRef)> = None;
        let candidates = state
            .keys
            .iter()
            .enumerate()
            .filter(|(_, k)| k.present)
            .map(|(i, k)| (ItemRef::Key(i), k.pos))
            .chain(
                state
                    .objects
                    .iter()
                    .enumerate()
                    .map(|(i, o)| (ItemRef::Object(i), o.pos)),
            );
        for (item, pos) in candidates {
            if spec.cell_of((pos[0], pos[1])) != agent_cell {
                continue;
            }
            let d = ((pos[0] - state.agent_pos[0]).powi(2)
                + (pos[1] - state.agent_pos[1]).powi(2))
            .sqrt();
            if d <= GRAB_RADIUS && best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, item));
            }
        }
        if let Some((_, item)) = best {
            state.carried = Some(item);
        }
    } else if let Some(item) = state.carried.take() {
        let vel = state.agent_vel;
        let pos = resolve_overlap(spec, &state.doors, item_pos(state, item), OBJECT_HALF);
        match item {
            ItemRef::Key(i) => {
                state.keys[i].pos = pos;
                state.keys[i].vel = vel;
            }
            ItemRef::Object(i) => {
                state.objects[i].pos = pos;
                state.objects[i].vel = vel;
            }
        }
    }
}

/// A held item rides behind the agent, trailing opposite the direction of
/// motion, and keeps the agent's velocity.
fn follow_carried(state: &mut SimState) {
    let Some(item) = state.carried else { return };
    let v = state.agent_vel;
    let sp = speed(v);
    let pos = if sp > 1e-9 {
        [
            state.agent_pos[0] - HOLD_OFFSET * v[0] / sp,
            state.agent_pos[1] - HOLD_OFFSET * v[1] / sp,
        ]
    } else {
        item_pos(state, item)
    };
    match item {
        ItemRef::Key(i) => {
            state.keys[i].pos = pos;
            state.keys[i].vel = v;
        }
        ItemRef::Object(i) => {
            state.objects[i].pos = pos;
            state.objects[i].vel = v;
        }
    }
}

/// Held items pass over walls; a release can therefore leave an item
/// overlapping a solid cell. Pushes it out along the axis of least
/// penetration.
fn resolve_overlap(
    spec: &WorldSpec,
    doors: &[DoorState],
    mut pos: [f64; 2],
    half: f64,
) -> [f64; 2] {
    for _ in 0..4 {
        let bb = Rect {
            min: [pos[0] - half, pos[1] - half],
            max: [pos[0] + half, pos[1] + half],
        };
        let s = spec.cell_size;
        let mut hit = None;
        'scan: for row in (bb.min[1] / s).floor() as i32..=(bb.max[1] / s).floor() as i32 {
            for col in (bb.min[0] / s).floor() as i32..=(bb.max[0] / s).floor() as i32 {
                let cell = Cell::new(col, row);
                let rect = match spec.kind_at(col, row) {
                    CellKind::Wall => Some(cell_rect(cell, s)),
                    CellKind::Door { .. } => spec
                        .door_index(cell)
                        .and_then(|i| door_solid_rect(spec, &doors[i])),
                    _ => None,
                };
                if let Some(rect) = rect {
                    if bb.overlaps(&rect) {
                        hit = Some(rect);
                        break 'scan;
                    }
                }
            }
        }
        let Some(rect) = hit else { return pos };
        let push = [
            rect.max[0] + half - pos[0],
            rect.min[0] - half - pos[0],
            rect.max[1] + half - pos[1],
            rect.min[1] - half - pos[1],
        ];
        let (axis, amount) = push
            .iter()
            .enumerate()
            .map(|(i, &p)| (i / 2, p))
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .expect("four candidate pushes");
        pos[axis] += amount;
    }
    pos
}

/// Free items coast under friction and clamp against walls and door panels.
fn move_free_items(spec: &WorldSpec, state: &mut SimState) {
    let carried = state.carried;
    let doors = state.doors.clone();
    let glide = |pos: &mut [f64; 2], vel: &mut [f64; 2]| {
        vel[0] *= 1.0 - FRICTION;
        vel[1] *= 1.0 - FRICTION;
        if vel[0] == 0.0 && vel[1] == 0.0 {
            return;
        }
        for axis in 0..2 {
            move_axis(spec, &doors, pos, vel, axis, OBJECT_HALF);
        }
    };
    for (i, key) in state.keys.iter_mut().enumerate() {
        if key.present && carried != Some(ItemRef::Key(i)) {
            glide(&mut key.pos, &mut key.vel);
        }
    }
    for (i, obj) in state.objects.iter_mut().enumerate() {
        if carried != Some(ItemRef::Object(i)) {
            glide(&mut obj.pos, &mut obj.vel);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::parse_map;

    fn drive(
        spec: &WorldSpec,
        state: &mut SimState,
        action: [f64; 3],
        steps: u32,
    ) -> Option<StepOutcome> {
        for _ in 0..steps {
            let out = step(spec, state, action);
            if out.terminated || out.truncated {
                return Some(out);
            }
        }
        None
    }

    #[test]
    fn acceleration_follows_drag_recurrence_and_clamps_at_wall() {
        let spec = parse_map(".....\nA....\n....G").unwrap();
        let mut state = reset(&spec);
        let (mut x, mut v) = (0.5_f64, 0.0_f64);
        for _ in 0..300 {
            step(&spec, &mut state, [1.0, 0.0, -1.0]);
            v = (v + 1.0 * ACCEL * DT) * (1.0 - FRICTION);
            x += v * DT;
            if x > 5.0 - AGENT_HALF {
                x = 5.0 - AGENT_HALF;
                v = 0.0;
            }
            assert!((state.agent_pos[0] - x).abs() < 1e-12);
            assert!((state.agent_vel[0] - v).abs() < 1e-12);
            assert!((state.agent_pos[1] - 1.5).abs() < 1e-12);
        }
        assert_eq!(state.agent_pos[0], 5.0 - AGENT_HALF);
        assert_eq!(state.agent_vel[0], 0.0);
    }

    #[test]
    fn per_axis_speed_is_bounded_by_drag_equilibrium() {
        let bound = ACCEL * DT * (1.0 - FRICTION) / FRICTION;
        let spec = parse_map("A....\n....G").unwrap();
        let mut state = reset(&spec);
        for i in 0..2_000 {
            let a = [if i % 37 < 30 { 1.0 } else { -1.0 }, if i % 11 < 8 { -1.0 } else { 1.0 }, 0.0];
            let out = step(&spec, &mut state, a);
            if out.terminated || out.truncated {
                state = reset(&spec);
            }
            assert!(state.agent_vel[0].abs() <= bound + 1e-9);
            assert!(state.agent_vel[1].abs() <= bound + 1e-9);
        }
    }

    #[test]
    fn goal_and_lava_trigger_on_center_not_overlap() {
        let spec = parse_map("AL.G\n....").unwrap();
        let mut state = reset(&spec);
        let mut saw_overlap_alive = false;
        loop {
            let out = step(&spec, &mut state, [1.0, 0.0, 0.0]);
            let x = state.agent_pos[0];
            if out.terminated {
                assert!(x >= 1.0, "died before center entered lava");
                assert_eq!(state.terminal, Some(Termination::Lava));
                assert_eq!(out.reward, 0.0);
                break;
            }
            if x + AGENT_HALF > 1.0 {
                saw_overlap_alive = true;
            }
        }
        assert!(saw_overlap_alive, "overlap alone must not kill");

        let spec = parse_map("A..G\n....").unwrap();
        let mut state = reset(&spec);
        let out = drive(&spec, &mut state, [1.0, 0.0, 0.0], 500).expect("reaches goal");
        assert_eq!(out.reward, 1.0);
        assert!(out.terminated);
        assert!(state.agent_pos[0] >= 3.0);
        assert_eq!(state.terminal, Some(Termination::Goal));
    }

    #[test]
    fn standing_still_times_out() {
        let spec = parse_map("AG").unwrap();
        let mut state = reset(&spec);
        let limit = spec.task.episode_limit();
        for i in 1..=limit {
            let out = step(&spec, &mut state, [0.0, 0.0, 0.0]);
            if i < limit {
                assert!(!out.terminated && !out.truncated);
            } else {
                assert!(out.truncated && !out.terminated);
                assert_eq!(out.reward, 0.0);
            }
        }
        assert_eq!(state.terminal, Some(Termination::Timeout));
    }

    #[test]
    fn grab_requires_same_cell_then_attaches() {
        let spec = parse_map("AO.G\n....").unwrap();
        let mut state = reset(&spec);
        state.agent_pos = [0.95, 0.5];
        state.objects[0].pos = [1.3, 0.5];
        step(&spec, &mut state, [0.0, 0.0, 1.0]);
        assert_eq!(state.carried, None, "cross-cell grab must fail");
        state.agent_pos = [1.05, 0.5];
        step(&spec, &mut state, [0.0, 0.0, 1.0]);
        assert_eq!(state.carried, Some(ItemRef::Object(0)));
    }

    #[test]
    fn carried_items_trail_and_thrown_items_coast_to_rest() {
        let spec = parse_map("AO.G\n....").unwrap();
        let mut state = reset(&spec);
        state.agent_pos = [1.5, 0.5];
        step(&spec, &mut state, [0.0, 0.0, 1.0]);
        assert_eq!(state.carried, Some(ItemRef::Object(0)));
        for _ in 0..4 {
            step(&spec, &mut state, [1.0, 0.0, 1.0]);
        }
        let trail = state.agent_pos[0] - state.objects[0].pos[0];
        assert!((trail - HOLD_OFFSET).abs() < 1e-9, "trail {trail}");
        assert_eq!(state.objects[0].vel, state.agent_vel);

        let thrown_v = state.agent_vel[0];
        assert!(thrown_v > 1.0);
        step(&spec, &mut state, [0.0, 0.0, -1.0]);
        assert_eq!(state.carried, None);
        let mut expect = state.objects[0].vel[0];
        for _ in 0..80 {
            let out = step(&spec, &mut state, [0.0, 0.0, -1.0]);
            expect *= 1.0 - FRICTION;
            assert!((state.objects[0].vel[0] - expect).abs() < 1e-9);
            if out.terminated {
                break;
            }
        }
        assert!(state.objects[0].pos[0] <= 4.0 - OBJECT_HALF + 1e-12);
    }

    #[test]
    fn delivery_completes_only_at_rest_and_unheld() {
        let spec = parse_map("AO.G\n....").unwrap();
        assert_eq!(spec.task.family, TaskFamily::ObjectDelivery);
        let mut state = reset(&spec);
        state.agent_pos = [1.5, 0.5];
        step(&spec, &mut state, [0.0, 0.0, 1.0]);
        let mut carried_on_pad = false;
        for _ in 0..200 {
            let out = step(&spec, &mut state, [1.0, 0.0, 1.0]);
            assert!(!out.terminated, "held object must not complete delivery");
            if spec.is_goal(spec.cell_of((state.objects[0].pos[0], state.objects[0].pos[1]))) {
                carried_on_pad = true;
                break;
            }
        }
        assert!(carried_on_pad);
        for _ in 0..60 {
            let out = step(&spec, &mut state, [0.0, 0.0, 1.0]);
            assert!(!out.terminated, "held object must not complete delivery");
        }
        let out = drive(&spec, &mut state, [0.0, 0.0, -1.0], 50).expect("delivery terminates");
        assert_eq!(out.reward, 1.0);
        let obj = &state.objects[0];
        assert!(speed(obj.vel) < REST_EPS);
        assert!(spec.is_goal(spec.cell_of((obj.pos[0], obj.pos[1]))));
        assert_eq!(state.carried, None);
    }

    #[test]
    fn locked_door_needs_key_then_opens_under_pushing() {
        let spec = parse_map("A{rK}.{rD}G").unwrap();
        let mut state = reset(&spec);
        let blocked = drive(&spec, &mut state, [1.0, 0.0, -1.0], 200);
        assert!(blocked.is_none(), "locked door must block");
        assert!(state.doors[0].locked);
        assert_eq!(state.doors[0].open_fraction, 0.0);
        assert!(state.agent_pos[0] <= 3.0 - AGENT_HALF + 1e-12);

        let mut state = reset(&spec);
        let mut unlocked_at = None;
        let mut out = None;
        for i in 0..400 {
            let o = step(&spec, &mut state, [1.0, 0.0, 1.0]);
            if unlocked_at.is_none() && !state.doors[0].locked {
                unlocked_at = Some(i);
                assert!(!state.keys[0].present, "key is consumed on unlock");
                assert_eq!(state.carried, None);
            }
            if o.terminated {
                out = Some(o);
                break;
            }
        }
        assert!(unlocked_at.is_some());
        let out = out.expect("agent passes the opened door and reaches the goal");
        assert_eq!(out.reward, 1.0);
        assert!(state.doors[0].open_fraction > 0.5);
    }

    #[test]
    fn door_ignores_pushes_from_the_run_axis() {
        let spec = parse_map(".{rd}.\nA..\n..G").unwrap();
        let mut state = reset(&spec);
        state.agent_pos = [1.5, 1.5];
        for _ in 0..100 {
            step(&spec, &mut state, [0.0, -1.0, 0.0]);
        }
        assert_eq!(state.doors[0].open_fraction, 0.0);
        assert!(state.agent_pos[1] >= 1.0 + AGENT_HALF - 1e-12);
    }

    #[test]
    fn unlocked_door_opens_from_crossing_side() {
        let spec = parse_map("A.{rd}G").unwrap();
        let mut state = reset(&spec);
        let out = drive(&spec, &mut state, [1.0, 0.0, -1.0], 400).expect("passes through");
        assert_eq!(out.reward, 1.0);
        assert!(state.doors[0].open_fraction > 0.5);
        assert!(!state.doors[0].locked);
    }

    #[test]
    fn reset_places_everything_at_cell_centers() {
        let spec = parse_map("A{rK}{bO}G\n....").unwrap();
        let state = reset(&spec);
        assert_eq!(state.agent_pos, [0.5, 0.5]);
        assert_eq!(state.keys[0].pos, [1.5, 0.5]);
        assert_eq!(state.objects[0].pos, [2.5, 0.5]);
        assert_eq!(state.t, 0);
        assert_eq!(state.terminal, None);
    }

    #[test]
    fn identical_action_sequences_reproduce_states() {
        let spec = crate::world::generate_task(TaskFamily::SimpleCrossing, 2, 5).unwrap();
        let run = || {
            let mut state = reset(&spec);
            for i in 0..500u32 {
                if state.terminal.is_some() {
                    state = reset(&spec);
                }
                let a = [
                    ((i as f64) * 0.37).sin(),
                    ((i as f64) * 0.73).cos(),
                    if i % 17 == 0 { 1.0 } else { -1.0 },
                ];
                step(&spec, &mut state, a);
            }
            state
        };
        assert_eq!(run(), run());
    }
}

#[cfg(test)]
mod prop_tests {
    use super::*;
    use crate::world::generate_task;
    use crate::world::TaskFamily;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn agent_never_penetrates_solids(seed in 0u64..500, actions in prop::collection::vec(
            (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), 300)) {
            let spec = generate_task(TaskFamily::SimpleCrossing, 3, seed).unwrap();
            let mut state = reset(&spec);
            for &(fx, fy, g) in &actions {
                if state.terminal.is_some() {
                    state = reset(&spec);
                }
                step(&spec, &mut state, [fx, fy, g]);
                let [x, y] = state.agent_pos;
                prop_assert!(x >= AGENT_HALF - 1e-9 && x <= 9.0 - AGENT_HALF + 1e-9);
                prop_assert!(y >= AGENT_HALF - 1e-9 && y <= 9.0 - AGENT_HALF + 1e-9);
                for row in 0..9 {
                    for col in 0..9 {
                        if matches!(spec.kind_at(col, row), CellKind::Wall) {
                            let overlap = x - AGENT_HALF < (col + 1) as f64 - 1e-9
                                && x + AGENT_HALF > col as f64 + 1e-9
                                && y - AGENT_HALF < (row + 1) as f64 - 1e-9
                                && y + AGENT_HALF > row as f64 + 1e-9;
                            prop_assert!(!overlap, "agent at ({x},{y}) inside wall ({col},{row})");
                        }
                    }
                }
            }
        }
    }
}
