//! Text map format.
//!
//! One cell per token, rows separated by newlines, every row the same cell
//! count. Single-character tokens:
//!
//! | token | cell |
//! |-------|------|
//! | `.` | empty |
//! | `W` | wall |
//! | `L` | lava |
//! | `G` | goal |
//! | `A` | empty cell holding the agent spawn (exactly one required) |
//! | `D` / `d` | locked / unlocked red door |
//! | `K` | red key spawn |
//! | `O` | red ball spawn |
//! | `X` | red box spawn |
//!
//! Non-red entities use a brace escape `{cT}` where `c` is a color code
//! (`r`, `b`, `g`, `y`) and `T` one of `D d K O X`, e.g. `{bD}` for a locked
//! blue door. Rendering always emits the bare token for red entities, so
//! rendering is canonical and `parse(render(spec))` reproduces the structure
//! exactly (spawns are cell-centered, so no continuous information is lost).

use super::{
    Cell, CellKind, Color, Shape, TaskDescriptor, TaskFamily, WorldError, WorldSpec,
};

/// Parses a text map into a validated spec and checks it is solvable.
///
/// The task descriptor is reconstructed heuristically since the format does
/// not carry one: doors or keys present means door-key, otherwise objects mean
/// object-delivery (the row-major first object becomes the target, which must
/// be unambiguous), otherwise lava means lava-crossing, otherwise
/// simple-crossing. Difficulty and arena scale are both set to the larger map
/// dimension so the episode budget tracks map size; the seed is zero.
pub fn parse_map(text: &str) -> Result<WorldSpec, WorldError> {
    let mut rows: Vec<Vec<CellKind>> = Vec::new();
    let mut agent: Option<Cell> = None;
    for (row_idx, line) in text.lines().enumerate() {
        if line.is_empty() && row_idx > 0 && text.lines().skip(row_idx).all(|l| l.is_empty()) {
            break;
        }
        let mut row = Vec::new();
        let mut chars = line.chars();
        loop {
            let Some(ch) = chars.next() else { break };
            let col_idx = row.len();
            let kind = match ch {
                '.' => CellKind::Empty,
                'W' => CellKind::Wall,
                'L' => CellKind::Lava,
                'G' => CellKind::Goal,
                'A' => {
                    if agent.is_some() {
                        return Err(WorldError::MultipleAgents);
                    }
                    agent = Some(Cell::new(col_idx as i32, row_idx as i32));
                    CellKind::Empty
                }
                'D' => CellKind::Door { color: Color::Red, locked: true },
                'd' => CellKind::Door { color: Color::Red, locked: false },
                'K' => CellKind::KeySpawn(Color::Red),
                'O' => CellKind::ObjectSpawn { shape: Shape::Ball, color: Color::Red },
                'X' => CellKind::ObjectSpawn { shape: Shape::Box, color: Color::Red },
                '{' => {
                    let color = chars.next();
                    let kind = chars.next();
                    let close = chars.next();
                    let escape = || {
                        let mut s = String::from('{');
                        s.extend(color);
                        s.extend(kind);
                        s.extend(close);
                        s
                    };
                    let (Some(color), Some(kind), Some('}')) = (color, kind, close) else {
                        return Err(WorldError::UnknownChar {
                            row: row_idx,
                            col: col_idx,
                            token: escape(),
                        });
                    };
                    let Some(color) = Color::from_code(color) else {
                        return Err(WorldError::UnknownChar {
                            row: row_idx,
                            col: col_idx,
                            token: escape(),
                        });
                    };
                    match kind {
                        'D' => CellKind::Door { color, locked: true },
                        'd' => CellKind::Door { color, locked: false },
                        'K' => CellKind::KeySpawn(color),
                        'O' => CellKind::ObjectSpawn { shape: Shape::Ball, color },
                        'X' => CellKind::ObjectSpawn { shape: Shape::Box, color },
                        _ => {
                            return Err(WorldError::UnknownChar {
                                row: row_idx,
                                col: col_idx,
                                token: escape(),
                            })
                        }
                    }
                }
                other => {
                    return Err(WorldError::UnknownChar {
                        row: row_idx,
                        col: col_idx,
                        token: other.to_string(),
                    })
                }
            };
            row.push(kind);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(WorldError::RaggedRows(row_idx));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() || rows[0].is_empty() {
        return Err(WorldError::InvalidSpec("empty map".into()));
    }
    let agent = agent.ok_or(WorldError::NoAgent)?;
    let width = rows[0].len() as u32;
    let height = rows.len() as u32;
    let cells: Vec<CellKind> = rows.into_iter().flatten().collect();

    let has = |pred: &dyn Fn(&CellKind) -> bool| cells.iter().any(pred);
    let family = if has(&|c| matches!(c, CellKind::Door { .. } | CellKind::KeySpawn(_))) {
        TaskFamily::DoorKey
    } else if has(&|c| matches!(c, CellKind::ObjectSpawn { .. })) {
        TaskFamily::ObjectDelivery
    } else if has(&|c| matches!(c, CellKind::Lava)) {
        TaskFamily::LavaCrossing
    } else {
        TaskFamily::SimpleCrossing
    };
    let dim = width.max(height);
    let target_object = if family == TaskFamily::ObjectDelivery {
        let first = cells
            .iter()
            .find_map(|c| match c {
                CellKind::ObjectSpawn { shape, color } => Some((*shape, *color)),
                _ => None,
            })
            .expect("family implies an object");
        let count = cells
            .iter()
            .filter(|c| matches!(c, CellKind::ObjectSpawn { shape, color } if (*shape, *color) == first))
            .count();
        if count != 1 {
            return Err(WorldError::AmbiguousTarget);
        }
        Some(first)
    } else {
        None
    };
    let task = TaskDescriptor {
        family,
        difficulty: dim,
        target_object,
        seed: 0,
        arena_scale: match family {
            TaskFamily::SimpleCrossing | TaskFamily::LavaCrossing => Some(dim),
            _ => None,
        },
    };
    let spec = WorldSpec::new(
        width,
        height,
        cells,
        agent.center(super::CELL_SIZE),
        task,
        0,
    )?;
    super::generate::check_solvable(&spec)?;
    Ok(spec)
}

/// Renders a spec back to map text (no trailing newline).
///
/// Fails when the spec is not expressible: the agent spawn must sit at the
/// center of an Empty cell, since the format has no way to write an offset
/// spawn or an agent sharing a cell with another entity.
pub fn render_map(spec: &WorldSpec) -> Result<String, WorldError> {
    let agent_cell = spec.cell_of(spec.agent_spawn);
    if spec.kind_at(agent_cell.col, agent_cell.row) != CellKind::Empty {
        return Err(WorldError::Unrenderable(
            "agent spawn cell is not empty".into(),
        ));
    }
    if spec.agent_spawn != agent_cell.center(spec.cell_size) {
        return Err(WorldError::Unrenderable(
            "agent spawn is not cell-centered".into(),
        ));
    }
    let mut out = String::new();
    for row in 0..spec.height as i32 {
        if row > 0 {
            out.push('\n');
        }
        for col in 0..spec.width as i32 {
            let cell = Cell::new(col, row);
            if cell == agent_cell {
                out.push('A');
                continue;
            }
            match spec.kind_at(col, row) {
                CellKind::Empty => out.push('.'),
                CellKind::Wall => out.push('W'),
                CellKind::Lava => out.push('L'),
                CellKind::Goal => out.push('G'),
                CellKind::Door { color: Color::Red, locked: true } => out.push('D'),
                CellKind::Door { color: Color::Red, locked: false } => out.push('d'),
                CellKind::KeySpawn(Color::Red) => out.push('K'),
                CellKind::ObjectSpawn { shape: Shape::Ball, color: Color::Red } => out.push('O'),
                CellKind::ObjectSpawn { shape: Shape::Box, color: Color::Red } => out.push('X'),
                CellKind::Door { color, locked } => {
                    out.push('{');
                    out.push(color.code());
                    out.push(if locked { 'D' } else { 'd' });
                    out.push('}');
                }
                CellKind::KeySpawn(color) => {
                    out.push('{');
                    out.push(color.code());
                    out.push('K');
                    out.push('}');
                }
                CellKind::ObjectSpawn { shape, color } => {
                    out.push('{');
                    out.push(color.code());
                    out.push(if shape == Shape::Ball { 'O' } else { 'X' });
                    out.push('}');
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const UMAZE_5X5: &str = "..G..\n.....\n.WWWW\n.....\n..A..";

    #[test]
    fn parses_minimal_map() {
        let spec = parse_map("AG").unwrap();
        assert_eq!((spec.width, spec.height), (2, 1));
        assert_eq!(spec.agent_spawn, (0.5, 0.5));
        assert_eq!(spec.goal_cells, vec![Cell::new(1, 0)]);
        assert_eq!(spec.task.family, TaskFamily::SimpleCrossing);
    }

    #[test]
    fn parses_umaze_fixture() {
        let spec = parse_map(UMAZE_5X5).unwrap();
        assert_eq!((spec.width, spec.height), (5, 5));
        assert_eq!(spec.agent_spawn, (2.5, 4.5));
        assert_eq!(spec.goal_cells, vec![Cell::new(2, 0)]);
        let walls = (0..5)
            .filter(|c| spec.kind_at(*c, 2) == CellKind::Wall)
            .count();
        assert_eq!(walls, 4);
    }

    #[test]
    fn parses_color_escapes() {
        let spec = parse_map("A{bD}G\nK{gK}{yX}").unwrap();
        assert_eq!(spec.doors.len(), 1);
        assert_eq!(spec.doors[0].color, Color::Blue);
        assert!(spec.doors[0].locked);
        assert_eq!(spec.keys.len(), 2);
        assert_eq!(spec.keys[0].color, Color::Red);
        assert_eq!(spec.keys[1].color, Color::Green);
        assert_eq!(spec.objects[0].shape, Shape::Box);
        assert_eq!(spec.objects[0].color, Color::Yellow);
        assert_eq!(spec.task.family, TaskFamily::DoorKey);
    }

    #[test]
    fn error_cases() {
        assert_eq!(parse_map("AG.\nGG").unwrap_err(), WorldError::RaggedRows(1));
        assert!(matches!(
            parse_map("A?G").unwrap_err(),
            WorldError::UnknownChar { row: 0, col: 1, .. }
        ));
        assert!(matches!(
            parse_map("A{qD}G").unwrap_err(),
            WorldError::UnknownChar { .. }
        ));
        assert!(matches!(
            parse_map("A{bD").unwrap_err(),
            WorldError::UnknownChar { .. }
        ));
        assert_eq!(parse_map("..G").unwrap_err(), WorldError::NoAgent);
        assert_eq!(parse_map("A.G\n..A").unwrap_err(), WorldError::MultipleAgents);
        assert_eq!(parse_map("A..").unwrap_err(), WorldError::NoGoal);
        assert_eq!(parse_map("AWG").unwrap_err(), WorldError::Unsolvable);
        assert_eq!(parse_map("ALG").unwrap_err(), WorldError::Unsolvable);
    }

    #[test]
    fn ambiguous_target_rejected() {
        let err = parse_map("AOG\nO..").unwrap_err();
        assert_eq!(err, WorldError::AmbiguousTarget);
    }

    #[test]
    fn render_round_trips_structure() {
        for text in [UMAZE_5X5, "AG", "A{bD}G\nK{gK}{yX}", "A.LW\n.DG."] {
            let spec = match parse_map(text) {
                Ok(s) => s,
                Err(WorldError::Unsolvable) => continue,
                Err(e) => panic!("{e}"),
            };
            let rendered = render_map(&spec).unwrap();
            let reparsed = parse_map(&rendered).unwrap();
            assert!(spec.same_structure(&reparsed), "structure drift for {text:?}");
            assert_eq!(spec.goal_cells, reparsed.goal_cells);
            assert_eq!(spec.objects, reparsed.objects);
            assert_eq!(spec.doors, reparsed.doors);
            assert_eq!(spec.keys, reparsed.keys);
        }
    }

    #[test]
    fn render_is_canonical_for_red() {
        let spec = parse_map("A{rK}{rD}G").unwrap();
        assert_eq!(render_map(&spec).unwrap(), "AKDG");
    }
}
