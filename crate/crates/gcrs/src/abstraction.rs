//! Expert abstractions: maps from simulation states to small discrete states,
//! together with the macro-action successor models the planner searches.
//!
//! Two families are provided. The grid abstraction tracks the agent's cell,
//! each item's cell, the held item, and door statuses. The room abstraction
//! replaces the agent's cell with a room id (rooms are flood-filled regions of
//! non-wall, non-door cells, lava included) plus the set of nearby things
//! within [`NEAR_RADIUS`]; its `room-pos` variant additionally pins the
//! delivery target's cell so that where an object rests is visible to the
//! planner.
//!
//! An agent standing inside a door cell is attributed to the neighboring cell
//! on its own side of the door plane, so the abstract position flips exactly
//! when the agent crosses the middle of the doorway.
//!
//! Images of real states classify success and failure with the simulator's
//! own predicate. Successor states invented by the model classify by content
//! at the abstraction's granularity (a delivery looks done when the target's
//! cell is a goal cell, with no rest condition; a room looks done when the
//! agent's room contains a goal). The small mismatch is the abstraction's
//! approximation, repaired by replanning from observed images.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::sim::{self, Axis, ItemRef, SimState, TerminalClass};
use crate::world::{Cell, CellKind, Color, Shape, TaskFamily, WorldError, WorldSpec};

/// Distance within which the room abstraction marks a thing as near.
pub const NEAR_RADIUS: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AbstractionKind {
    Grid,
    Room,
    RoomPos,
}

impl AbstractionKind {
    pub const ALL: [AbstractionKind; 3] =
        [AbstractionKind::Grid, AbstractionKind::Room, AbstractionKind::RoomPos];

    pub fn name(self) -> &'static str {
        match self {
            AbstractionKind::Grid => "grid",
            AbstractionKind::Room => "room",
            AbstractionKind::RoomPos => "room-pos",
        }
    }
}

impl fmt::Display for AbstractionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AbstractionKind {
    type Err = WorldError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AbstractionKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| WorldError::InvalidSpec(format!("unknown abstraction {s:?}")))
    }
}

/// Identity of a movable item: key colors and object shape/color pairs are
/// unique within a world.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ItemId {
    Key(Color),
    Object(Shape, Color),
}

impl ItemId {
    fn short(self) -> String {
        match self {
            ItemId::Key(c) => format!("K.{}", c.code()),
            ItemId::Object(Shape::Ball, c) => format!("B.{}", c.code()),
            ItemId::Object(Shape::Box, c) => format!("X.{}", c.code()),
        }
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ItemId::Key(c) => write!(f, "key {}", c.name()),
            ItemId::Object(s, c) => write!(f, "{} {}", s.name(), c.name()),
        }
    }
}

/// The item a [`SimState`] reference points at.
pub fn item_id(state: &SimState, item: ItemRef) -> ItemId {
    match item {
        ItemRef::Key(i) => ItemId::Key(state.keys[i].color),
        ItemRef::Object(i) => ItemId::Object(state.objects[i].shape, state.objects[i].color),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DoorStatus {
    Locked,
    Closed,
    Open,
}

impl DoorStatus {
    fn code(self) -> char {
        match self {
            DoorStatus::Locked => 'L',
            DoorStatus::Closed => 'C',
            DoorStatus::Open => 'O',
        }
    }
}

/// Things the room abstraction can be near or move toward.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NearTarget {
    Goal,
    Door(Cell),
    Item(ItemId),
}

impl fmt::Display for NearTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NearTarget::Goal => write!(f, "goal"),
            NearTarget::Door(c) => write!(f, "door {c}"),
            NearTarget::Item(id) => write!(f, "{id}"),
        }
    }
}

/// One edge of an abstract model. The declaration order defines the
/// deterministic tie-break used by the planner.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MacroAction {
    MoveTo(Cell),
    PickUp(ItemId),
    Drop,
    Unlock(Cell),
    Open(Cell),
    MoveNear(NearTarget),
    GoThroughDoor(Cell),
}

impl fmt::Display for MacroAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MacroAction::MoveTo(c) => write!(f, "move-to{c}"),
            MacroAction::PickUp(id) => write!(f, "pick-up({id})"),
            MacroAction::Drop => write!(f, "drop"),
            MacroAction::Unlock(c) => write!(f, "unlock{c}"),
            MacroAction::Open(c) => write!(f, "open{c}"),
            MacroAction::MoveNear(t) => write!(f, "move-near({t})"),
            MacroAction::GoThroughDoor(c) => write!(f, "go-through-door{c}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GridState {
    pub agent: Cell,
    /// Cells of items lying on the floor; held or consumed items are absent.
    pub items: BTreeMap<ItemId, Cell>,
    pub carried: Option<ItemId>,
    pub doors: BTreeMap<Cell, DoorStatus>,
    pub terminal: TerminalClass,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RoomState {
    pub agent_room: u32,
    pub near: BTreeSet<NearTarget>,
    /// Rooms of items lying on the floor; held or consumed items are absent.
    pub items: BTreeMap<ItemId, u32>,
    pub carried: Option<ItemId>,
    pub doors: BTreeMap<Cell, DoorStatus>,
    /// `room-pos` only: the delivery target's cell while it lies on the floor.
    pub target_cell: Option<Cell>,
    pub terminal: TerminalClass,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AbstractState {
    Grid(GridState),
    Room(RoomState),
}

impl AbstractState {
    pub fn terminal(&self) -> TerminalClass {
        match self {
            AbstractState::Grid(g) => g.terminal,
            AbstractState::Room(r) => r.terminal,
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.terminal() != TerminalClass::Nonterminal
    }

    pub fn carried(&self) -> Option<ItemId> {
        match self {
            AbstractState::Grid(g) => g.carried,
            AbstractState::Room(r) => r.carried,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AbstractionError {
    #[error("terminal abstract states have no successors")]
    TerminalStateExpansion,
}

/// Cell the agent is attributed to: its own cell, except inside a doorway,
/// where it maps to the neighbor on the agent's side of the door plane.
pub fn alias_agent_cell(spec: &WorldSpec, pos: [f64; 2]) -> Cell {
    let cell = spec.cell_of((pos[0], pos[1]));
    if !matches!(spec.kind_at(cell.col, cell.row), CellKind::Door { .. }) {
        return cell;
    }
    let (cx, cy) = cell.center(spec.cell_size);
    match sim::door_run_axis(spec, cell) {
        Axis::Y => {
            if pos[0] < cx {
                Cell::new(cell.col - 1, cell.row)
            } else {
                Cell::new(cell.col + 1, cell.row)
            }
        }
        Axis::X => {
            if pos[1] < cy {
                Cell::new(cell.col, cell.row - 1)
            } else {
                Cell::new(cell.col, cell.row + 1)
            }
        }
    }
}

struct RoomMap {
    width: i32,
    height: i32,
    ids: Vec<Option<u32>>,
    count: u32,
    /// First cell of each room in row-major order.
    canonical: Vec<Cell>,
    goal_rooms: BTreeSet<u32>,
}

impl RoomMap {
    fn build(spec: &WorldSpec) -> RoomMap {
        let (w, h) = (spec.width as i32, spec.height as i32);
        let in_room = |c: i32, r: i32| {
            !matches!(spec.kind_at(c, r), CellKind::Wall | CellKind::Door { .. })
        };
        let mut ids: Vec<Option<u32>> = vec![None; (w * h) as usize];
        let mut canonical = Vec::new();
        let mut count = 0u32;
        for row in 0..h {
            for col in 0..w {
                let idx = (row * w + col) as usize;
                if ids[idx].is_some() || !in_room(col, row) {
                    continue;
                }
                let room = count;
                count += 1;
                canonical.push(Cell::new(col, row));
                let mut queue = VecDeque::from([(col, row)]);
                ids[idx] = Some(room);
                while let Some((c, r)) = queue.pop_front() {
                    for (dc, dr) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
                        let (nc, nr) = (c + dc, r + dr);
                        if nc < 0 || nr < 0 || nc >= w || nr >= h || !in_room(nc, nr) {
                            continue;
                        }
                        let nidx = (nr * w + nc) as usize;
                        if ids[nidx].is_none() {
                            ids[nidx] = Some(room);
                            queue.push_back((nc, nr));
                        }
                    }
                }
            }
        }
        let goal_rooms = spec
            .goal_cells
            .iter()
            .filter_map(|g| ids[(g.row * w + g.col) as usize])
            .collect();
        RoomMap { width: w, height: h, ids, count, canonical, goal_rooms }
    }

    fn room_of(&self, cell: Cell) -> Option<u32> {
        if cell.col < 0 || cell.row < 0 || cell.col >= self.width || cell.row >= self.height {
            return None;
        }
        self.ids[(cell.row * self.width + cell.col) as usize]
    }
}

/// An abstraction bound to one world: the state map plus the macro successor
/// model the planner searches.
pub struct AbstractModel<'a> {
    pub spec: &'a WorldSpec,
    pub kind: AbstractionKind,
    rooms: RoomMap,
}

impl<'a> AbstractModel<'a> {
    pub fn new(spec: &'a WorldSpec, kind: AbstractionKind) -> AbstractModel<'a> {
        AbstractModel { spec, kind, rooms: RoomMap::build(spec) }
    }

    pub fn room_count(&self) -> u32 {
        self.rooms.count
    }

    pub fn room_of_cell(&self, cell: Cell) -> Option<u32> {
        self.rooms.room_of(cell)
    }

    fn target_id(&self) -> Option<ItemId> {
        self.spec.task.target_object.map(|(s, c)| ItemId::Object(s, c))
    }

    /// Image of a simulation state under this abstraction. The terminal field
    /// uses the simulator's exact success and failure predicate.
    pub fn phi(&self, state: &SimState) -> AbstractState {
        let terminal = sim::is_terminal_class(self.spec, state);
        match self.kind {
            AbstractionKind::Grid => AbstractState::Grid(self.phi_grid(state, terminal)),
            AbstractionKind::Room | AbstractionKind::RoomPos => {
                AbstractState::Room(self.phi_room(state, terminal))
            }
        }
    }

    fn floor_items<'s>(
        &self,
        state: &'s SimState,
    ) -> impl Iterator<Item = (ItemId, [f64; 2])> + 's {
        let carried = state.carried;
        state
            .keys
            .iter()
            .enumerate()
            .filter(move |(i, k)| k.present && carried != Some(ItemRef::Key(*i)))
            .map(|(_, k)| (ItemId::Key(k.color), k.pos))
            .chain(
                state
                    .objects
                    .iter()
                    .enumerate()
                    .filter(move |(i, _)| carried != Some(ItemRef::Object(*i)))
                    .map(|(_, o)| (ItemId::Object(o.shape, o.color), o.pos)),
            )
    }

    fn door_statuses(&self, state: &SimState) -> BTreeMap<Cell, DoorStatus> {
        state
            .doors
            .iter()
            .map(|d| {
                let status = if d.locked {
                    DoorStatus::Locked
                } else if d.open_fraction >= sim::DOOR_OPEN_FRACTION {
                    DoorStatus::Open
                } else {
                    DoorStatus::Closed
                };
                (d.cell, status)
            })
            .collect()
    }

    fn phi_grid(&self, state: &SimState, terminal: TerminalClass) -> GridState {
        GridState {
            agent: alias_agent_cell(self.spec, state.agent_pos),
            items: self
                .floor_items(state)
                .map(|(id, pos)| (id, self.spec.cell_of((pos[0], pos[1]))))
                .collect(),
            carried: state.carried.map(|c| item_id(state, c)),
            doors: self.door_statuses(state),
            terminal,
        }
    }

    fn room_near_cell(&self, cell: Cell) -> u32 {
        self.rooms
            .room_of(cell)
            .or_else(|| {
                [(-1, 0), (1, 0), (0, -1), (0, 1)].into_iter().find_map(|(dc, dr)| {
                    self.rooms.room_of(Cell::new(cell.col + dc, cell.row + dr))
                })
            })
            .unwrap_or(u32::MAX)
    }

    fn phi_room(&self, state: &SimState, terminal: TerminalClass) -> RoomState {
        let spec = self.spec;
        let apos = state.agent_pos;
        let dist = |p: [f64; 2]| ((p[0] - apos[0]).powi(2) + (p[1] - apos[1]).powi(2)).sqrt();
        let center = |c: Cell| {
            let (x, y) = c.center(spec.cell_size);
            [x, y]
        };

        let mut near = BTreeSet::new();
        for (id, pos) in self.floor_items(state) {
            if dist(pos) <= NEAR_RADIUS {
                near.insert(NearTarget::Item(id));
            }
        }
        for d in &state.doors {
            if dist(center(d.cell)) <= NEAR_RADIUS {
                near.insert(NearTarget::Door(d.cell));
            }
        }
        if spec.goal_cells.iter().any(|g| dist(center(*g)) <= NEAR_RADIUS) {
            near.insert(NearTarget::Goal);
        }

        let target_cell = if self.kind == AbstractionKind::RoomPos {
            self.target_id().and_then(|tid| {
                self.floor_items(state)
                    .find(|(id, _)| *id == tid)
                    .map(|(_, pos)| spec.cell_of((pos[0], pos[1])))
            })
        } else {
            None
        };

        RoomState {
            agent_room: self.room_near_cell(alias_agent_cell(spec, apos)),
            near,
            items: self
                .floor_items(state)
                .map(|(id, pos)| (id, self.room_near_cell(spec.cell_of((pos[0], pos[1])))))
                .collect(),
            carried: state.carried.map(|c| item_id(state, c)),
            doors: self.door_statuses(state),
            target_cell,
            terminal,
        }
    }

    /// Success and failure as visible at grid granularity.
    fn grid_class(&self, state: &GridState) -> TerminalClass {
        let goal = if self.spec.task.family == TaskFamily::ObjectDelivery {
            self.target_id()
                .and_then(|t| state.items.get(&t))
                .is_some_and(|c| self.spec.is_goal(*c))
        } else {
            self.spec.is_goal(state.agent)
        };
        if goal {
            TerminalClass::Goal
        } else if matches!(
            self.spec.kind_at(state.agent.col, state.agent.row),
            CellKind::Lava
        ) {
            TerminalClass::Failure
        } else {
            TerminalClass::Nonterminal
        }
    }

    /// Success as visible at room granularity: the agent's room contains a
    /// goal, or for delivery, the target sits in the goal's room (its exact
    /// cell under `room-pos`).
    fn room_class(&self, state: &RoomState) -> TerminalClass {
        let goal = if self.spec.task.family == TaskFamily::ObjectDelivery {
            match self.kind {
                AbstractionKind::RoomPos => {
                    state.target_cell.is_some_and(|c| self.spec.is_goal(c))
                }
                _ => self
                    .target_id()
                    .and_then(|t| state.items.get(&t))
                    .is_some_and(|room| self.rooms.goal_rooms.contains(room)),
            }
        } else {
            self.rooms.goal_rooms.contains(&state.agent_room)
        };
        if goal {
            TerminalClass::Goal
        } else {
            TerminalClass::Nonterminal
        }
    }

    /// All macro transitions out of a state, sorted by [`MacroAction`] order.
    /// Successor terminal fields come from the content rules; edges that do
    /// not change the state are dropped.
    pub fn successors(
        &self,
        state: &AbstractState,
    ) -> Result<Vec<(MacroAction, AbstractState)>, AbstractionError> {
        if state.is_terminal() {
            return Err(AbstractionError::TerminalStateExpansion);
        }
        let mut out = match state {
            AbstractState::Grid(g) => self
                .grid_successors(g)
                .into_iter()
                .map(|(m, s)| (m, AbstractState::Grid(s)))
                .collect::<Vec<_>>(),
            AbstractState::Room(r) => self
                .room_successors(r)
                .into_iter()
                .map(|(m, s)| (m, AbstractState::Room(s)))
                .collect(),
        };
        out.retain(|(_, s)| s != state);
        out.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(out)
    }

    fn door_color(&self, cell: Cell) -> Color {
        let idx = self.spec.door_index(cell).expect("door status for a spec door");
        self.spec.doors[idx].color
    }

    /// Items the planner may pick up: keys always, objects only when they are
    /// the delivery target. Distractors stay visible in states, so a real
    /// disturbance still lands on a plannable image, but the search never
    /// moves them; dropping anything already carried is always allowed so
    /// off-plan images recover.
    fn manipulable(&self, id: ItemId) -> bool {
        matches!(id, ItemId::Key(_)) || self.target_id() == Some(id)
    }

    fn grid_successors(&self, g: &GridState) -> Vec<(MacroAction, GridState)> {
        let spec = self.spec;
        let mut out = Vec::new();
        let mut push = |m: MacroAction, s: GridState| {
            let terminal = self.grid_class(&s);
            out.push((m, GridState { terminal, ..s }));
        };

        for (dc, dr) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
            let n = Cell::new(g.agent.col + dc, g.agent.row + dr);
            match spec.kind_at(n.col, n.row) {
                CellKind::Wall | CellKind::Lava => {}
                CellKind::Door { .. } => {
                    if g.doors.get(&n) == Some(&DoorStatus::Open) {
                        let beyond = Cell::new(n.col + dc, n.row + dr);
                        if !matches!(
                            spec.kind_at(beyond.col, beyond.row),
                            CellKind::Wall | CellKind::Lava | CellKind::Door { .. }
                        ) {
                            push(
                                MacroAction::MoveTo(beyond),
                                GridState { agent: beyond, ..g.clone() },
                            );
                        }
                    }
                }
                _ => push(MacroAction::MoveTo(n), GridState { agent: n, ..g.clone() }),
            }
        }

        if g.carried.is_none() {
            for (&id, &cell) in &g.items {
                if cell == g.agent && self.manipulable(id) {
                    let mut s = g.clone();
                    s.items.remove(&id);
                    s.carried = Some(id);
                    push(MacroAction::PickUp(id), s);
                }
            }
        } else if let Some(id) = g.carried {
            let mut s = g.clone();
            s.items.insert(id, g.agent);
            s.carried = None;
            push(MacroAction::Drop, s);
        }

        for (&cell, &status) in &g.doors {
            let adjacent =
                (cell.col - g.agent.col).abs() + (cell.row - g.agent.row).abs() == 1;
            if !adjacent {
                continue;
            }
            match status {
                DoorStatus::Locked => {
                    if g.carried == Some(ItemId::Key(self.door_color(cell))) {
                        let mut s = g.clone();
                        s.doors.insert(cell, DoorStatus::Closed);
                        s.carried = None;
                        push(MacroAction::Unlock(cell), s);
                    }
                }
                DoorStatus::Closed => {
                    let mut s = g.clone();
                    s.doors.insert(cell, DoorStatus::Open);
                    push(MacroAction::Open(cell), s);
                }
                DoorStatus::Open => {}
            }
        }
        out
    }

    /// The two cells a door connects, on its crossing axis.
    fn door_sides(&self, cell: Cell) -> [Cell; 2] {
        match sim::door_run_axis(self.spec, cell) {
            Axis::Y => [Cell::new(cell.col - 1, cell.row), Cell::new(cell.col + 1, cell.row)],
            Axis::X => [Cell::new(cell.col, cell.row - 1), Cell::new(cell.col, cell.row + 1)],
        }
    }

    fn goal_anchor(&self, room: u32) -> Option<Cell> {
        self.spec
            .goal_cells
            .iter()
            .copied()
            .find(|g| self.rooms.room_of(*g) == Some(room))
            .or_else(|| self.spec.goal_cells.first().copied())
    }

    fn room_successors(&self, r: &RoomState) -> Vec<(MacroAction, RoomState)> {
        let mut out = Vec::new();
        let mut push = |m: MacroAction, s: RoomState| {
            let terminal = self.room_class(&s);
            out.push((m, RoomState { terminal, ..s }));
        };

        for (&id, &room) in &r.items {
            if room == r.agent_room {
                let mut s = r.clone();
                s.near = BTreeSet::from([NearTarget::Item(id)]);
                push(MacroAction::MoveNear(NearTarget::Item(id)), s);
            }
        }
        for &cell in r.doors.keys() {
            let sides = self.door_sides(cell);
            if sides.iter().any(|c| self.rooms.room_of(*c) == Some(r.agent_room)) {
                let mut s = r.clone();
                s.near = BTreeSet::from([NearTarget::Door(cell)]);
                push(MacroAction::MoveNear(NearTarget::Door(cell)), s);
            }
        }
        if self.rooms.goal_rooms.contains(&r.agent_room) {
            let mut s = r.clone();
            s.near = BTreeSet::from([NearTarget::Goal]);
            push(MacroAction::MoveNear(NearTarget::Goal), s);
        }

        for &thing in &r.near {
            match thing {
                NearTarget::Item(id) => {
                    if r.carried.is_none() && r.items.contains_key(&id) && self.manipulable(id) {
                        let mut s = r.clone();
                        s.items.remove(&id);
                        s.near.remove(&NearTarget::Item(id));
                        s.carried = Some(id);
                        if self.kind == AbstractionKind::RoomPos
                            && self.target_id() == Some(id)
                        {
                            s.target_cell = None;
                        }
                        push(MacroAction::PickUp(id), s);
                    }
                }
                NearTarget::Door(cell) => match r.doors.get(&cell) {
                    Some(DoorStatus::Locked) => {
                        if r.carried == Some(ItemId::Key(self.door_color(cell))) {
                            let mut s = r.clone();
                            s.doors.insert(cell, DoorStatus::Closed);
                            s.carried = None;
                            push(MacroAction::Unlock(cell), s);
                        }
                    }
                    Some(DoorStatus::Closed) => {
                        let mut s = r.clone();
                        s.doors.insert(cell, DoorStatus::Open);
                        push(MacroAction::Open(cell), s);
                    }
                    Some(DoorStatus::Open) => {
                        let far = self
                            .door_sides(cell)
                            .into_iter()
                            .filter_map(|c| self.rooms.room_of(c))
                            .find(|room| *room != r.agent_room)
                            .unwrap_or(r.agent_room);
                        let mut s = r.clone();
                        s.agent_room = far;
                        s.near = BTreeSet::from([NearTarget::Door(cell)]);
                        push(MacroAction::GoThroughDoor(cell), s);
                    }
                    None => {}
                },
                NearTarget::Goal => {}
            }
        }

        if let Some(id) = r.carried {
            let mut s = r.clone();
            s.items.insert(id, r.agent_room);
            s.near.insert(NearTarget::Item(id));
            s.carried = None;
            if self.kind == AbstractionKind::RoomPos && self.target_id() == Some(id) {
                s.target_cell = if r.near.contains(&NearTarget::Goal) {
                    self.goal_anchor(r.agent_room)
                } else if (r.agent_room as usize) < self.rooms.canonical.len() {
                    Some(self.rooms.canonical[r.agent_room as usize])
                } else {
                    None
                };
            }
            push(MacroAction::Drop, s);
        }
        out
    }

    /// Stable textual identity of a state, used for deterministic tie-breaks
    /// and debug output.
    pub fn canonical_id(&self, state: &AbstractState) -> String {
        use fmt::Write;
        let mut s = String::new();
        let class = |t: TerminalClass| match t {
            TerminalClass::Nonterminal => 'N',
            TerminalClass::Goal => 'G',
            TerminalClass::Failure => 'F',
        };
        match state {
            AbstractState::Grid(g) => {
                write!(s, "G|a{}", g.agent).unwrap();
                write!(s, "|c:{}", g.carried.map_or("-".into(), |i| i.short())).unwrap();
                s.push_str("|i:");
                for (id, cell) in &g.items {
                    write!(s, "{}@{};", id.short(), cell).unwrap();
                }
                s.push_str("|d:");
                for (cell, st) in &g.doors {
                    write!(s, "{}{};", cell, st.code()).unwrap();
                }
                write!(s, "|t:{}", class(g.terminal)).unwrap();
            }
            AbstractState::Room(r) => {
                write!(s, "R|a:{}", r.agent_room).unwrap();
                s.push_str("|n:");
                for t in &r.near {
                    match t {
                        NearTarget::Goal => s.push_str("G;"),
                        NearTarget::Door(c) => write!(s, "D{c};").unwrap(),
                        NearTarget::Item(id) => write!(s, "{};", id.short()).unwrap(),
                    }
                }
                write!(s, "|c:{}", r.carried.map_or("-".into(), |i| i.short())).unwrap();
                s.push_str("|i:");
                for (id, room) in &r.items {
                    write!(s, "{}:{};", id.short(), room).unwrap();
                }
                s.push_str("|d:");
                for (cell, st) in &r.doors {
                    write!(s, "{}{};", cell, st.code()).unwrap();
                }
                if let Some(c) = r.target_cell {
                    write!(s, "|p:{c}").unwrap();
                }
                write!(s, "|t:{}", class(r.terminal)).unwrap();
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::reset;
    use crate::world::parse_map;

    const DOOR_KEY_6X6: &str = "\
.{rK}.W..\n\
...W..\n\
...{rD}..\n\
...W..\n\
...W..\n\
A..W.G";

    #[test]
    fn doorway_attribution_flips_at_the_plane() {
        let spec = parse_map(DOOR_KEY_6X6).unwrap();
        let model = AbstractModel::new(&spec, AbstractionKind::Grid);
        let mut state = reset(&spec);
        state.agent_pos = [3.4, 2.5];
        let AbstractState::Grid(left) = model.phi(&state) else { unreachable!() };
        state.agent_pos = [3.6, 2.5];
        let AbstractState::Grid(right) = model.phi(&state) else { unreachable!() };
        assert_eq!(left.agent, Cell::new(2, 2));
        assert_eq!(right.agent, Cell::new(4, 2));
        state.agent_pos = [1.2, 4.7];
        let AbstractState::Grid(plain) = model.phi(&state) else { unreachable!() };
        assert_eq!(plain.agent, Cell::new(1, 4));
    }

    #[test]
    fn grid_image_of_reset() {
        let spec = parse_map(DOOR_KEY_6X6).unwrap();
        let model = AbstractModel::new(&spec, AbstractionKind::Grid);
        let AbstractState::Grid(g) = model.phi(&reset(&spec)) else { unreachable!() };
        assert_eq!(g.agent, Cell::new(0, 5));
        assert_eq!(
            g.items,
            BTreeMap::from([(ItemId::Key(Color::Red), Cell::new(1, 0))])
        );
        assert_eq!(g.carried, None);
        assert_eq!(
            g.doors,
            BTreeMap::from([(Cell::new(3, 2), DoorStatus::Locked)])
        );
        assert_eq!(g.terminal, TerminalClass::Nonterminal);
    }

    #[test]
    fn grid_successors_hand_enumerated_through_a_door_corridor() {
        let spec = parse_map("A{rK}.{rD}G").unwrap();
        let model = AbstractModel::new(&spec, AbstractionKind::Grid);
        let key = ItemId::Key(Color::Red);
        let door = Cell::new(3, 0);
        let base = GridState {
            agent: Cell::new(0, 0),
            items: BTreeMap::from([(key, Cell::new(1, 0))]),
            carried: None,
            doors: BTreeMap::from([(door, DoorStatus::Locked)]),
            terminal: TerminalClass::Nonterminal,
        };

        let at = |s: &GridState| AbstractState::Grid(s.clone());
        let macros = |s: &GridState| {
            model
                .successors(&at(s))
                .unwrap()
                .into_iter()
                .map(|(m, _)| m)
                .collect::<Vec<_>>()
        };

        assert_eq!(macros(&base), vec![MacroAction::MoveTo(Cell::new(1, 0))]);

        let at_key = GridState { agent: Cell::new(1, 0), ..base.clone() };
        assert_eq!(
            macros(&at_key),
            vec![
                MacroAction::MoveTo(Cell::new(0, 0)),
                MacroAction::MoveTo(Cell::new(2, 0)),
                MacroAction::PickUp(key),
            ]
        );

        let carrying = GridState {
            agent: Cell::new(2, 0),
            items: BTreeMap::new(),
            carried: Some(key),
            ..base.clone()
        };
        assert_eq!(
            macros(&carrying),
            vec![
                MacroAction::MoveTo(Cell::new(1, 0)),
                MacroAction::Drop,
                MacroAction::Unlock(door),
            ]
        );

        let unlocked = GridState {
            carried: None,
            doors: BTreeMap::from([(door, DoorStatus::Closed)]),
            ..carrying.clone()
        };
        assert_eq!(
            macros(&unlocked),
            vec![MacroAction::MoveTo(Cell::new(1, 0)), MacroAction::Open(door)]
        );

        let open = GridState {
            doors: BTreeMap::from([(door, DoorStatus::Open)]),
            ..unlocked.clone()
        };
        let succ = model.successors(&at(&open)).unwrap();
        assert_eq!(
            succ.iter().map(|(m, _)| *m).collect::<Vec<_>>(),
            vec![
                MacroAction::MoveTo(Cell::new(1, 0)),
                MacroAction::MoveTo(Cell::new(4, 0)),
            ]
        );
        let through = &succ[1].1;
        assert_eq!(through.terminal(), TerminalClass::Goal);
    }

    #[test]
    fn rooms_flood_fill_row_major_and_include_lava() {
        let spec = parse_map(DOOR_KEY_6X6).unwrap();
        let model = AbstractModel::new(&spec, AbstractionKind::Room);
        assert_eq!(model.room_count(), 2);
        assert_eq!(model.room_of_cell(Cell::new(0, 0)), Some(0));
        assert_eq!(model.room_of_cell(Cell::new(2, 5)), Some(0));
        assert_eq!(model.room_of_cell(Cell::new(4, 0)), Some(1));
        assert_eq!(model.room_of_cell(Cell::new(5, 5)), Some(1));
        assert_eq!(model.room_of_cell(Cell::new(3, 0)), None, "wall");
        assert_eq!(model.room_of_cell(Cell::new(3, 2)), None, "door");

        let lava = parse_map("AL.G\n....").unwrap();
        let model = AbstractModel::new(&lava, AbstractionKind::Room);
        assert_eq!(model.room_count(), 1);
        assert_eq!(model.room_of_cell(Cell::new(1, 0)), Some(0));
    }

    #[test]
    fn near_relations_respect_the_radius() {
        let spec = parse_map(DOOR_KEY_6X6).unwrap();
        let model = AbstractModel::new(&spec, AbstractionKind::Room);
        let mut state = reset(&spec);

        state.agent_pos = [1.5, 1.2];
        let AbstractState::Room(r) = model.phi(&state) else { unreachable!() };
        assert_eq!(r.agent_room, 0);
        assert_eq!(
            r.near,
            BTreeSet::from([NearTarget::Item(ItemId::Key(Color::Red))])
        );

        state.agent_pos = [2.7, 2.5];
        let AbstractState::Room(r) = model.phi(&state) else { unreachable!() };
        assert_eq!(r.near, BTreeSet::from([NearTarget::Door(Cell::new(3, 2))]));

        state.agent_pos = [5.5, 4.6];
        let AbstractState::Room(r) = model.phi(&state) else { unreachable!() };
        assert_eq!(r.agent_room, 1);
        assert_eq!(r.near, BTreeSet::from([NearTarget::Goal]));
    }

    #[test]
    fn room_successors_hand_enumerated_for_the_split_world() {
        let spec = parse_map(DOOR_KEY_6X6).unwrap();
        let model = AbstractModel::new(&spec, AbstractionKind::Room);
        let key = ItemId::Key(Color::Red);
        let door = Cell::new(3, 2);

        let AbstractState::Room(start) = model.phi(&reset(&spec)) else { unreachable!() };
        let macros: Vec<MacroAction> = model
            .successors(&AbstractState::Room(start.clone()))
            .unwrap()
            .into_iter()
            .map(|(m, _)| m)
            .collect();
        assert_eq!(
            macros,
            vec![
                MacroAction::MoveNear(NearTarget::Door(door)),
                MacroAction::MoveNear(NearTarget::Item(key)),
            ]
        );

        let near_door_carrying = RoomState {
            agent_room: 0,
            near: BTreeSet::from([NearTarget::Door(door)]),
            items: BTreeMap::new(),
            carried: Some(key),
            doors: BTreeMap::from([(door, DoorStatus::Locked)]),
            target_cell: None,
            terminal: TerminalClass::Nonterminal,
        };
        let macros: Vec<MacroAction> = model
            .successors(&AbstractState::Room(near_door_carrying.clone()))
            .unwrap()
            .into_iter()
            .map(|(m, _)| m)
            .collect();
        assert_eq!(macros, vec![MacroAction::Drop, MacroAction::Unlock(door)]);

        let open = RoomState {
            carried: None,
            doors: BTreeMap::from([(door, DoorStatus::Open)]),
            ..near_door_carrying
        };
        let succ = model.successors(&AbstractState::Room(open)).unwrap();
        let (last_macro, crossed) = succ.last().unwrap();
        assert_eq!(*last_macro, MacroAction::GoThroughDoor(door));
        let AbstractState::Room(crossed) = crossed else { unreachable!() };
        assert_eq!(crossed.agent_room, 1);
        assert_eq!(crossed.terminal, TerminalClass::Goal, "goal room reached");
    }

    #[test]
    fn terminal_states_reject_expansion() {
        let spec = parse_map("A..G\n....").unwrap();
        let model = AbstractModel::new(&spec, AbstractionKind::Grid);
        let mut state = reset(&spec);
        state.agent_pos = [3.5, 0.5];
        let image = model.phi(&state);
        assert_eq!(image.terminal(), TerminalClass::Goal);
        assert_eq!(
            model.successors(&image),
            Err(AbstractionError::TerminalStateExpansion)
        );
    }

    #[test]
    fn room_pos_tracks_the_target_cell() {
        let spec = parse_map("AO.G\n....").unwrap();
        let model = AbstractModel::new(&spec, AbstractionKind::RoomPos);
        let state = reset(&spec);
        let AbstractState::Room(r) = model.phi(&state) else { unreachable!() };
        assert_eq!(r.target_cell, Some(Cell::new(1, 0)));

        let plain = AbstractModel::new(&spec, AbstractionKind::Room);
        let AbstractState::Room(r) = plain.phi(&state) else { unreachable!() };
        assert_eq!(r.target_cell, None);
    }

    #[test]
    fn room_pos_delivery_completes_by_dropping_at_the_goal() {
        let spec = parse_map("AO.G\n....").unwrap();
        let model = AbstractModel::new(&spec, AbstractionKind::RoomPos);
        let target = ItemId::Object(Shape::Ball, Color::Red);
        let carrying_near_goal = RoomState {
            agent_room: 0,
            near: BTreeSet::from([NearTarget::Goal]),
            items: BTreeMap::new(),
            carried: Some(target),
            doors: BTreeMap::new(),
            target_cell: None,
            terminal: TerminalClass::Nonterminal,
        };
        let succ = model
            .successors(&AbstractState::Room(carrying_near_goal))
            .unwrap();
        let (m, dropped) = &succ[0];
        assert_eq!(*m, MacroAction::Drop);
        let AbstractState::Room(dropped) = dropped else { unreachable!() };
        assert_eq!(dropped.target_cell, Some(Cell::new(3, 0)));
        assert_eq!(dropped.terminal, TerminalClass::Goal);

        let carrying_mid_room = RoomState {
            agent_room: 0,
            near: BTreeSet::new(),
            items: BTreeMap::new(),
            carried: Some(target),
            doors: BTreeMap::new(),
            target_cell: None,
            terminal: TerminalClass::Nonterminal,
        };
        let succ = model
            .successors(&AbstractState::Room(carrying_mid_room))
            .unwrap();
        let dropped = succ
            .iter()
            .find(|(m, _)| *m == MacroAction::Drop)
            .map(|(_, s)| s)
            .unwrap();
        let AbstractState::Room(dropped) = dropped else { unreachable!() };
        assert_eq!(dropped.target_cell, Some(Cell::new(0, 0)), "canonical room cell");
        assert_eq!(dropped.terminal, TerminalClass::Nonterminal);
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in AbstractionKind::ALL {
            assert_eq!(kind.name().parse::<AbstractionKind>().unwrap(), kind);
        }
        assert!("cells".parse::<AbstractionKind>().is_err());
    }
}

#[cfg(test)]
mod step_consistency {
    use super::*;
    use crate::sim::{reset, step};
    use crate::world::{generate_task, TaskFamily};
    use proptest::prelude::*;

    /// Breadth-first over macro edges, bounded by depth.
    fn reachable(
        model: &AbstractModel<'_>,
        from: &AbstractState,
        to: &AbstractState,
        depth: u32,
    ) -> bool {
        let mut frontier = vec![from.clone()];
        if from == to {
            return true;
        }
        for _ in 0..depth {
            let mut next = Vec::new();
            for s in &frontier {
                let Ok(succ) = model.successors(s) else { continue };
                for (_, t) in succ {
                    if t == *to {
                        return true;
                    }
                    if !t.is_terminal() {
                        next.push(t);
                    }
                }
            }
            frontier = next;
        }
        false
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        /// A single simulation step moves the grid image by at most a few
        /// macro edges (diagonal cell changes decompose into two moves, and a
        /// same-step unlock adds one more).
        #[test]
        fn one_sim_step_is_at_most_three_macro_edges(
            seed in 0u64..200,
            actions in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 120),
        ) {
            let spec = generate_task(TaskFamily::SimpleCrossing, 2, seed).unwrap();
            let model = AbstractModel::new(&spec, AbstractionKind::Grid);
            let mut state = reset(&spec);
            let mut image = model.phi(&state);
            for &(fx, fy) in &actions {
                if state.terminal.is_some() {
                    state = reset(&spec);
                    image = model.phi(&state);
                }
                step(&spec, &mut state, [fx, fy, -1.0]);
                let next = model.phi(&state);
                prop_assert!(
                    reachable(&model, &image, &next, 3),
                    "{} -/-> {}",
                    model.canonical_id(&image),
                    model.canonical_id(&next)
                );
                image = next;
            }
        }
    }
}
