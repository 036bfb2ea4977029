//! World specifications: grid layouts, task descriptors, the text map format,
//! and procedural task generation.
//!
//! A [`WorldSpec`] is a finished, validated description of one episode's arena:
//! a row-major grid of [`CellKind`]s plus the derived entity lists (goal cells,
//! object spawns, doors, key spawns) and the [`TaskDescriptor`] it was built
//! from. Cell `(col 0, row 0)` is the top-left corner; continuous positions map
//! to cells by `floor(pos / cell_size)`, so row indices grow downward.
//!
//! Out-of-bounds cells read as [`CellKind::Wall`], which makes the arena
//! boundary solid without storing a border.

mod generate;
mod map;

pub use generate::{generate_task, generate_world, training_and_eval_distributions};
pub use map::{parse_map, render_map};

use std::fmt;

/// Side length of one grid cell in meters.
pub const CELL_SIZE: f64 = 1.0;

/// Entity colors, in ordinal order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub enum Color {
    Red,
    Blue,
    Green,
    Yellow,
}

impl Color {
    /// All colors in ordinal order.
    pub const ALL: [Color; 4] = [Color::Red, Color::Blue, Color::Green, Color::Yellow];

    /// Stable index used in observations and canonical ids.
    pub fn ordinal(self) -> usize {
        match self {
            Color::Red => 0,
            Color::Blue => 1,
            Color::Green => 2,
            Color::Yellow => 3,
        }
    }

    /// Single-letter code used by the map format.
    pub fn code(self) -> char {
        match self {
            Color::Red => 'r',
            Color::Blue => 'b',
            Color::Green => 'g',
            Color::Yellow => 'y',
        }
    }

    pub fn from_code(c: char) -> Option<Color> {
        Color::ALL.into_iter().find(|col| col.code() == c)
    }

    pub fn name(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Blue => "blue",
            Color::Green => "green",
            Color::Yellow => "yellow",
        }
    }
}

/// Movable object shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub enum Shape {
    Ball,
    Box,
}

impl Shape {
    /// Stable index used in observations and canonical ids.
    pub fn ordinal(self) -> usize {
        match self {
            Shape::Ball => 0,
            Shape::Box => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Shape::Ball => "ball",
            Shape::Box => "box",
        }
    }
}

/// Grid cell coordinates; `col` grows rightward, `row` grows downward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub struct Cell {
    pub col: i32,
    pub row: i32,
}

impl Cell {
    pub fn new(col: i32, row: i32) -> Cell {
        Cell { col, row }
    }

    /// Continuous center of this cell.
    pub fn center(self, cell_size: f64) -> (f64, f64) {
        (
            (self.col as f64 + 0.5) * cell_size,
            (self.row as f64 + 0.5) * cell_size,
        )
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.col, self.row)
    }
}

/// Static content of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellKind {
    Empty,
    Wall,
    Lava,
    Goal,
    Door { color: Color, locked: bool },
    KeySpawn(Color),
    ObjectSpawn { shape: Shape, color: Color },
}

/// Task families the generator knows how to build.
///
/// `MultiGoal` is a uniform mixture family: each seed draws one of the four
/// navigation layouts (`Empty`, `HallwayChoice`, `RandomCorner`, and a 1-wall
/// `SimpleCrossing`) at the given arena scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub enum TaskFamily {
    UMaze,
    SimpleCrossing,
    LavaCrossing,
    DoorKey,
    ObjectDelivery,
    MultiGoal,
    Empty,
    HallwayChoice,
    RandomCorner,
}

impl TaskFamily {
    pub const ALL: [TaskFamily; 9] = [
        TaskFamily::UMaze,
        TaskFamily::SimpleCrossing,
        TaskFamily::LavaCrossing,
        TaskFamily::DoorKey,
        TaskFamily::ObjectDelivery,
        TaskFamily::MultiGoal,
        TaskFamily::Empty,
        TaskFamily::HallwayChoice,
        TaskFamily::RandomCorner,
    ];

    /// Stable index used by the observation one-hot encoding.
    pub fn ordinal(self) -> usize {
        TaskFamily::ALL.iter().position(|f| *f == self).unwrap()
    }

    /// Inclusive difficulty range accepted by [`generate_task`].
    ///
    /// Difficulty means arena scale for every family except the crossings,
    /// where it is the wall count (arena size then comes from
    /// [`TaskDescriptor::arena_scale`], default 9), and DoorKey, where it is
    /// the grid width.
    pub fn difficulty_range(self) -> (u32, u32) {
        match self {
            TaskFamily::UMaze | TaskFamily::ObjectDelivery => (2, 12),
            TaskFamily::SimpleCrossing | TaskFamily::LavaCrossing => (1, 3),
            TaskFamily::DoorKey => (6, 12),
            TaskFamily::MultiGoal | TaskFamily::HallwayChoice => (4, 12),
            TaskFamily::Empty | TaskFamily::RandomCorner => (2, 12),
        }
    }

    /// Kebab-case name used by the CLI and in report ids.
    pub fn name(self) -> &'static str {
        match self {
            TaskFamily::UMaze => "umaze",
            TaskFamily::SimpleCrossing => "simple-crossing",
            TaskFamily::LavaCrossing => "lava-crossing",
            TaskFamily::DoorKey => "door-key",
            TaskFamily::ObjectDelivery => "object-delivery",
            TaskFamily::MultiGoal => "multi-goal",
            TaskFamily::Empty => "empty",
            TaskFamily::HallwayChoice => "hallway-choice",
            TaskFamily::RandomCorner => "random-corner",
        }
    }
}

impl fmt::Display for TaskFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for TaskFamily {
    type Err = WorldError;

    fn from_str(s: &str) -> Result<TaskFamily, WorldError> {
        TaskFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| WorldError::UnknownFamily(s.to_string()))
    }
}

/// Everything needed to regenerate one task deterministically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct TaskDescriptor {
    pub family: TaskFamily,
    /// Family-specific size knob; see [`TaskFamily::difficulty_range`].
    pub difficulty: u32,
    /// Delivery target; present exactly when `family` is `ObjectDelivery`.
    pub target_object: Option<(Shape, Color)>,
    pub seed: u64,
    /// Arena side override for the crossing families (cells). `None` means the
    /// family default of 9. Ignored elsewhere, where difficulty already sets
    /// the scale.
    pub arena_scale: Option<u32>,
}

impl TaskDescriptor {
    pub fn new(family: TaskFamily, difficulty: u32, seed: u64) -> TaskDescriptor {
        TaskDescriptor { family, difficulty, target_object: None, seed, arena_scale: None }
    }

    /// Arena side length in cells implied by this descriptor.
    pub fn scale(&self) -> u32 {
        match self.family {
            TaskFamily::SimpleCrossing | TaskFamily::LavaCrossing => {
                self.arena_scale.unwrap_or(9)
            }
            TaskFamily::UMaze => self.difficulty + 2,
            _ => self.difficulty,
        }
    }

    /// Step budget before truncation: 80 control steps per cell of arena scale,
    /// so a straight-line cell traversal of roughly 10 steps leaves generous
    /// slack for detours.
    pub fn episode_limit(&self) -> u32 {
        match self.family {
            TaskFamily::SimpleCrossing | TaskFamily::LavaCrossing => 80 * self.scale(),
            _ => 80 * self.difficulty,
        }
    }

    /// Short id used in report rows, e.g. `simple-crossing-d2`.
    pub fn dist_id(&self) -> String {
        format!("{}-d{}", self.family, self.difficulty)
    }
}

/// An object spawn point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ObjectSpawn {
    pub shape: Shape,
    pub color: Color,
    pub cell: Cell,
}

/// A door and its initial lock state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DoorSpawn {
    pub cell: Cell,
    pub color: Color,
    pub locked: bool,
}

/// A key spawn point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct KeySpawn {
    pub color: Color,
    pub cell: Cell,
}

/// A validated world layout. Construct via [`WorldSpec::new`], [`parse_map`],
/// or [`generate_task`].
#[derive(Debug, Clone, PartialEq)]
pub struct WorldSpec {
    pub width: u32,
    pub height: u32,
    pub cell_size: f64,
    cells: Vec<CellKind>,
    pub agent_spawn: (f64, f64),
    /// Sorted, deduplicated goal cell set.
    pub goal_cells: Vec<Cell>,
    /// Object spawns in row-major grid order.
    pub objects: Vec<ObjectSpawn>,
    /// Doors in row-major grid order.
    pub doors: Vec<DoorSpawn>,
    /// Key spawns in row-major grid order.
    pub keys: Vec<KeySpawn>,
    pub task: TaskDescriptor,
    pub seed: u64,
}

impl WorldSpec {
    /// Validates the grid and derives the entity lists.
    ///
    /// Rejects empty grids, mismatched cell counts, missing goals, agent spawns
    /// outside the arena or inside Wall/Lava, a `target_object` that does not
    /// match exactly one spawned object (or is present for a family other than
    /// ObjectDelivery), and duplicate key colors or object identities (both
    /// must be unique so items can be addressed by identity).
    pub fn new(
        width: u32,
        height: u32,
        cells: Vec<CellKind>,
        agent_spawn: (f64, f64),
        task: TaskDescriptor,
        seed: u64,
    ) -> Result<WorldSpec, WorldError> {
        if width == 0 || height == 0 {
            return Err(WorldError::InvalidSpec("zero arena dimension".into()));
        }
        if cells.len() != (width * height) as usize {
            return Err(WorldError::InvalidSpec(format!(
                "cell count {} does not match {width}x{height}",
                cells.len()
            )));
        }
        let mut goal_cells = Vec::new();
        let mut objects = Vec::new();
        let mut doors = Vec::new();
        let mut keys = Vec::new();
        for row in 0..height as i32 {
            for col in 0..width as i32 {
                let cell = Cell { col, row };
                match cells[(row * width as i32 + col) as usize] {
                    CellKind::Goal => goal_cells.push(cell),
                    CellKind::Door { color, locked } => doors.push(DoorSpawn { cell, color, locked }),
                    CellKind::KeySpawn(color) => keys.push(KeySpawn { color, cell }),
                    CellKind::ObjectSpawn { shape, color } => {
                        objects.push(ObjectSpawn { shape, color, cell })
                    }
                    CellKind::Empty | CellKind::Wall | CellKind::Lava => {}
                }
            }
        }
        if goal_cells.is_empty() {
            return Err(WorldError::NoGoal);
        }
        for i in 1..keys.len() {
            if keys[..i].iter().any(|k| k.color == keys[i].color) {
                return Err(WorldError::DuplicateItem(format!("{:?} key", keys[i].color)));
            }
        }
        for i in 1..objects.len() {
            if objects[..i]
                .iter()
                .any(|o| (o.shape, o.color) == (objects[i].shape, objects[i].color))
            {
                return Err(WorldError::DuplicateItem(format!(
                    "{:?} {:?}",
                    objects[i].color, objects[i].shape
                )));
            }
        }
        match task.target_object {
            Some(target) => {
                if task.family != TaskFamily::ObjectDelivery {
                    return Err(WorldError::InvalidSpec(
                        "target object outside object-delivery".into(),
                    ));
                }
                if !objects.iter().any(|o| (o.shape, o.color) == target) {
                    return Err(WorldError::InvalidSpec("target object not spawned".into()));
                }
            }
            None => {
                if task.family == TaskFamily::ObjectDelivery {
                    return Err(WorldError::InvalidSpec(
                        "object-delivery without a target object".into(),
                    ));
                }
            }
        }
        let spec = WorldSpec {
            width,
            height,
            cell_size: CELL_SIZE,
            cells,
            agent_spawn,
            goal_cells,
            objects,
            doors,
            keys,
            task,
            seed,
        };
        let (ax, ay) = agent_spawn;
        if ax <= 0.0 || ay <= 0.0 || ax >= width as f64 * spec.cell_size || ay >= height as f64 * spec.cell_size
        {
            return Err(WorldError::InvalidSpec("agent spawn outside arena".into()));
        }
        let spawn_cell = spec.cell_of(agent_spawn);
        if matches!(spec.kind_at(spawn_cell.col, spawn_cell.row), CellKind::Wall | CellKind::Lava) {
            return Err(WorldError::InvalidSpec("agent spawn inside wall or lava".into()));
        }
        Ok(spec)
    }

    /// Cell kind at `(col, row)`; out-of-bounds coordinates read as Wall, so
    /// the arena boundary is solid.
    pub fn kind_at(&self, col: i32, row: i32) -> CellKind {
        if col < 0 || row < 0 || col >= self.width as i32 || row >= self.height as i32 {
            CellKind::Wall
        } else {
            self.cells[(row * self.width as i32 + col) as usize]
        }
    }

    /// Cell containing a continuous position.
    pub fn cell_of(&self, pos: (f64, f64)) -> Cell {
        Cell {
            col: (pos.0 / self.cell_size).floor() as i32,
            row: (pos.1 / self.cell_size).floor() as i32,
        }
    }

    pub fn is_goal(&self, cell: Cell) -> bool {
        matches!(self.kind_at(cell.col, cell.row), CellKind::Goal)
    }

    /// Structural equality: everything except the task descriptor and seed,
    /// which the text map format does not carry.
    pub fn same_structure(&self, other: &WorldSpec) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.cell_size == other.cell_size
            && self.cells == other.cells
            && self.agent_spawn == other.agent_spawn
    }

    /// Door index for a door at `cell`, if any.
    pub fn door_index(&self, cell: Cell) -> Option<usize> {
        self.doors.iter().position(|d| d.cell == cell)
    }
}

/// Errors from parsing, validation, and generation.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WorldError {
    #[error("map rows have unequal cell counts (first mismatch at row {0})")]
    RaggedRows(usize),
    #[error("unknown map token {token:?} at row {row}, column {col}")]
    UnknownChar { row: usize, col: usize, token: String },
    #[error("map has no agent spawn")]
    NoAgent,
    #[error("map has more than one agent spawn")]
    MultipleAgents,
    #[error("layout has no goal cell")]
    NoGoal,
    #[error("no path from the agent to a goal exists in the abstract model")]
    Unsolvable,
    #[error("map objects do not determine a unique delivery target")]
    AmbiguousTarget,
    #[error("duplicate item identity: {0}")]
    DuplicateItem(String),
    #[error("difficulty {difficulty} outside the {family} range")]
    DifficultyOutOfRange { family: TaskFamily, difficulty: u32 },
    #[error("gave up generating a solvable {family} layout after {attempts} attempts")]
    GenerationExhausted { family: TaskFamily, attempts: u32 },
    #[error("unknown suite {0:?}")]
    UnknownSuite(String),
    #[error("unknown task family {0:?}")]
    UnknownFamily(String),
    #[error("spec cannot be rendered as a text map: {0}")]
    Unrenderable(String),
    #[error("invalid world spec: {0}")]
    InvalidSpec(String),
}

/// One splitmix64 round; used to derive independent seeds from one seed.
pub(crate) fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn out_of_bounds_reads_as_wall() {
        let spec = WorldSpec::new(
            2,
            1,
            vec![CellKind::Empty, CellKind::Goal],
            (0.5, 0.5),
            TaskDescriptor::new(TaskFamily::SimpleCrossing, 2, 0),
            0,
        )
        .unwrap();
        assert_eq!(spec.kind_at(-1, 0), CellKind::Wall);
        assert_eq!(spec.kind_at(0, 1), CellKind::Wall);
        assert_eq!(spec.kind_at(2, 0), CellKind::Wall);
        assert_eq!(spec.kind_at(1, 0), CellKind::Goal);
    }

    #[test]
    fn rejects_goalless_and_bad_spawns() {
        let err = WorldSpec::new(
            1,
            1,
            vec![CellKind::Empty],
            (0.5, 0.5),
            TaskDescriptor::new(TaskFamily::Empty, 2, 0),
            0,
        )
        .unwrap_err();
        assert_eq!(err, WorldError::NoGoal);

        let err = WorldSpec::new(
            2,
            1,
            vec![CellKind::Wall, CellKind::Goal],
            (0.5, 0.5),
            TaskDescriptor::new(TaskFamily::Empty, 2, 0),
            0,
        )
        .unwrap_err();
        assert!(matches!(err, WorldError::InvalidSpec(_)));
    }

    #[test]
    fn duplicate_identities_rejected() {
        let err = WorldSpec::new(
            3,
            1,
            vec![
                CellKind::KeySpawn(Color::Red),
                CellKind::KeySpawn(Color::Red),
                CellKind::Goal,
            ],
            (0.5, 0.5),
            TaskDescriptor::new(TaskFamily::DoorKey, 6, 0),
            0,
        )
        .unwrap_err();
        assert!(matches!(err, WorldError::DuplicateItem(_)));
    }

    #[test]
    fn target_object_must_match_family() {
        let cells = vec![
            CellKind::ObjectSpawn { shape: Shape::Ball, color: Color::Red },
            CellKind::Empty,
            CellKind::Goal,
        ];
        let mut task = TaskDescriptor::new(TaskFamily::ObjectDelivery, 3, 0);
        let err = WorldSpec::new(3, 1, cells.clone(), (1.5, 0.5), task, 0).unwrap_err();
        assert!(matches!(err, WorldError::InvalidSpec(_)));

        task.target_object = Some((Shape::Ball, Color::Red));
        WorldSpec::new(3, 1, cells, (1.5, 0.5), task, 0).unwrap();
    }

    #[test]
    fn episode_limit_tracks_arena_scale() {
        let umaze = TaskDescriptor::new(TaskFamily::UMaze, 3, 0);
        assert_eq!(umaze.episode_limit(), 240);
        let crossing = TaskDescriptor::new(TaskFamily::SimpleCrossing, 2, 0);
        assert_eq!(crossing.episode_limit(), 720);
        let small = TaskDescriptor { arena_scale: Some(7), ..crossing };
        assert_eq!(small.episode_limit(), 560);
    }

    #[test]
    fn family_names_round_trip() {
        for family in TaskFamily::ALL {
            assert_eq!(family.name().parse::<TaskFamily>().unwrap(), family);
        }
        assert!("no-such-family".parse::<TaskFamily>().is_err());
    }
}
