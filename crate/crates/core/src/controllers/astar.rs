//! 8-connected grid path planning with the octile metric.
//!
//! Straight moves cost 1, diagonals √2; diagonal motion through a blocked
//! corner is not allowed. Ties in the open set break on lower f, then lower
//! h, then row-major cell order, which makes returned paths deterministic.

use crate::geom::{Circle, Rect, Vec2};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use thiserror::Error;

pub const SQRT_2: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlanError {
    #[error("no path from start to goal")]
    NoPath,
    #[error("cell ({0}, {1}) outside the grid")]
    OutOfBounds(usize, usize),
    #[error("start cell is blocked")]
    StartBlocked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub fn new(x: usize, y: usize) -> Self {
        Cell { x, y }
    }
}

/// Occupancy grid derived from zone and obstacle entities.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanGrid {
    pub cell_size: f64,
    pub width: usize,
    pub height: usize,
    pub origin: Vec2,
    blocked: Vec<bool>,
}

impl PlanGrid {
    pub fn new(width: usize, height: usize, cell_size: f64, origin: Vec2) -> Self {
        PlanGrid {
            cell_size,
            width,
            height,
            origin,
            blocked: vec![false; width * height],
        }
    }

    /// Covers `bounds` with cells and blocks every cell whose center lies
    /// within a circle inflated by half the cell diagonal, so that paths
    /// between free cell centers cannot clip the original circle.
    pub fn from_circles(bounds: Rect, cell_size: f64, circles: &[Circle]) -> Self {
        let width = (bounds.width() / cell_size).ceil().max(1.0) as usize;
        let height = (bounds.height() / cell_size).ceil().max(1.0) as usize;
        let mut grid = PlanGrid::new(width, height, cell_size, bounds.min);
        let inflation = cell_size * SQRT_2 * 0.5;
        for y in 0..height {
            for x in 0..width {
                let center = grid.cell_center(Cell::new(x, y));
                if circles
                    .iter()
                    .any(|c| center.dist(c.center) <= c.radius + inflation)
                {
                    grid.set_blocked(Cell::new(x, y), true);
                }
            }
        }
        grid
    }

    fn idx(&self, c: Cell) -> usize {
        c.y * self.width + c.x
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.x < self.width && c.y < self.height
    }

    pub fn is_blocked(&self, c: Cell) -> bool {
        self.blocked[self.idx(c)]
    }

    pub fn set_blocked(&mut self, c: Cell, blocked: bool) {
        let i = self.idx(c);
        self.blocked[i] = blocked;
    }

    pub fn cell_center(&self, c: Cell) -> Vec2 {
        Vec2::new(
            self.origin.x + (c.x as f64 + 0.5) * self.cell_size,
            self.origin.y + (c.y as f64 + 0.5) * self.cell_size,
        )
    }

    /// Cell containing a world point, if inside the grid.
    pub fn cell_of(&self, p: Vec2) -> Option<Cell> {
        let fx = (p.x - self.origin.x) / self.cell_size;
        let fy = (p.y - self.origin.y) / self.cell_size;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let c = Cell::new(fx as usize, fy as usize);
        self.in_bounds(c).then_some(c)
    }

    /// Unblocked 8-neighbors with step costs; diagonals require both
    /// adjacent orthogonal cells to be free.
    pub fn neighbors(&self, c: Cell) -> Vec<(Cell, f64)> {
        let mut out = Vec::with_capacity(8);
        let deltas: [(i64, i64); 8] = [
            (-1, -1),
            (0, -1),
            (1, -1),
            (-1, 0),
            (1, 0),
            (-1, 1),
            (0, 1),
            (1, 1),
        ];
        for (dx, dy) in deltas {
            let nx = c.x as i64 + dx;
            let ny = c.y as i64 + dy;
            if nx < 0 || ny < 0 {
                continue;
            }
            let n = Cell::new(nx as usize, ny as usize);
            if !self.in_bounds(n) || self.is_blocked(n) {
                continue;
            }
            if dx != 0 && dy != 0 {
                let side_a = Cell::new(n.x, c.y);
                let side_b = Cell::new(c.x, n.y);
                if self.is_blocked(side_a) || self.is_blocked(side_b) {
                    continue;
                }
                out.push((n, SQRT_2));
            } else {
                out.push((n, 1.0));
            }
        }
        out
    }
}

/// Octile distance heuristic (admissible for this movement model).
pub fn octile(a: Cell, b: Cell) -> f64 {
    let dx = a.x.abs_diff(b.x) as f64;
    let dy = a.y.abs_diff(b.y) as f64;
    let (lo, hi) = if dx < dy { (dx, dy) } else { (dy, dx) };
    (hi - lo) + SQRT_2 * lo
}

#[derive(PartialEq)]
struct OpenNode {
    f: f64,
    h: f64,
    idx: usize,
    cell: Cell,
}

impl Eq for OpenNode {}

impl Ord for OpenNode {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; invert to pop lowest (f, h, idx).
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.h.total_cmp(&self.h))
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for OpenNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A* shortest path; the returned path begins at `start`, ends at `goal`,
/// and visits no blocked cell.
pub fn plan_path_astar(grid: &PlanGrid, start: Cell, goal: Cell) -> Result<Vec<Cell>, PlanError> {
    if !grid.in_bounds(start) {
        return Err(PlanError::OutOfBounds(start.x, start.y));
    }
    if !grid.in_bounds(goal) {
        return Err(PlanError::OutOfBounds(goal.x, goal.y));
    }
    if grid.is_blocked(start) {
        return Err(PlanError::StartBlocked);
    }
    if grid.is_blocked(goal) {
        return Err(PlanError::NoPath);
    }
    if start == goal {
        return Ok(vec![start]);
    }

    let n = grid.width * grid.height;
    let mut g = vec![f64::INFINITY; n];
    let mut parent: Vec<Option<Cell>> = vec![None; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();

    g[grid.idx(start)] = 0.0;
    open.push(OpenNode {
        f: octile(start, goal),
        h: octile(start, goal),
        idx: grid.idx(start),
        cell: start,
    });

    while let Some(node) = open.pop() {
        let ci = grid.idx(node.cell);
        if closed[ci] {
            continue;
        }
        closed[ci] = true;
        if node.cell == goal {
            let mut path = vec![goal];
            let mut cur = goal;
            while let Some(p) = parent[grid.idx(cur)] {
                path.push(p);
                cur = p;
            }
            path.reverse();
            return Ok(path);
        }
        for (next, cost) in grid.neighbors(node.cell) {
            let ni = grid.idx(next);
            if closed[ni] {
                continue;
            }
            let tentative = g[ci] + cost;
            if tentative < g[ni] {
                g[ni] = tentative;
                parent[ni] = Some(node.cell);
                let h = octile(next, goal);
                open.push(OpenNode {
                    f: tentative + h,
                    h,
                    idx: ni,
                    cell: next,
                });
            }
        }
    }
    Err(PlanError::NoPath)
}

/// Total octile cost of a cell path.
pub fn path_cost(path: &[Cell]) -> f64 {
    path.windows(2)
        .map(|w| {
            let diag = w[0].x != w[1].x && w[0].y != w[1].y;
            if diag {
                SQRT_2
            } else {
                1.0
            }
        })
        .sum()
}
