//! Shared helpers for integration tests: independent oracles kept deliberately
//! naive so they cannot share bugs with the code under test.

use gcrs::world::{Cell, CellKind, WorldSpec};

/// Breadth-first shortest path length, in cell moves, from `start` to the nearest
/// goal cell. Walks 4-neighborhoods over non-Wall, non-Lava cells only; doors are
/// treated as impassable. Returns `None` when no goal is reachable.
pub fn bfs_cell_distance(spec: &WorldSpec, start: Cell) -> Option<u32> {
    let w = spec.width as i32;
    let h = spec.height as i32;
    let idx = |c: Cell| (c.row * w + c.col) as usize;
    let passable = |c: Cell| {
        if c.col < 0 || c.row < 0 || c.col >= w || c.row >= h {
            return false;
        }
        !matches!(
            spec.kind_at(c.col, c.row),
            CellKind::Wall | CellKind::Lava | CellKind::Door { .. }
        )
    };
    if !passable(start) {
        return None;
    }
    let mut dist = vec![u32::MAX; (w * h) as usize];
    let mut queue = std::collections::VecDeque::new();
    dist[idx(start)] = 0;
    queue.push_back(start);
    while let Some(c) = queue.pop_front() {
        let d = dist[idx(c)];
        if matches!(spec.kind_at(c.col, c.row), CellKind::Goal) {
            return Some(d);
        }
        for (dc, dr) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
            let n = Cell { col: c.col + dc, row: c.row + dr };
            if passable(n) && dist[idx(n)] == u32::MAX {
                dist[idx(n)] = d + 1;
                queue.push_back(n);
            }
        }
    }
    None
}

/// Cell containing a continuous position.
pub fn cell_of(spec: &WorldSpec, pos: (f64, f64)) -> Cell {
    Cell {
        col: (pos.0 / spec.cell_size).floor() as i32,
        row: (pos.1 / spec.cell_size).floor() as i32,
    }
}
