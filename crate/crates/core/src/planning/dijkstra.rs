use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::ops::Add;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::grid::{Cell, OccupancyGrid};
use crate::error::{invalid, Result};

/// Exact path cost `axis + diagonal·√2`.
///
/// Keeping the two counts separate makes comparisons exact, so equal-cost
/// paths compare equal regardless of summation order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct GridCost {
    pub axis: u64,
    pub diagonal: u64,
}

impl GridCost {
    pub const ZERO: Self = Self { axis: 0, diagonal: 0 };
    pub const AXIS: Self = Self { axis: 1, diagonal: 0 };
    pub const DIAGONAL: Self = Self { axis: 0, diagonal: 1 };

    /// Cost in cell units.
    pub fn value(&self) -> f64 {
        self.axis as f64 + self.diagonal as f64 * std::f64::consts::SQRT_2
    }
}

impl Add for GridCost {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self {
            axis: self.axis + rhs.axis,
            diagonal: self.diagonal + rhs.diagonal,
        }
    }
}

impl Ord for GridCost {
    fn cmp(&self, other: &Self) -> Ordering {
        // sign of da + db·√2 without floating point
        let da = self.axis as i128 - other.axis as i128;
        let db = self.diagonal as i128 - other.diagonal as i128;
        match (da.signum(), db.signum()) {
            (0, 0) => Ordering::Equal,
            (a, b) if a >= 0 && b >= 0 => Ordering::Greater,
            (a, b) if a <= 0 && b <= 0 => Ordering::Less,
            (1, _) => (da * da).cmp(&(2 * db * db)),
            _ => (2 * db * db).cmp(&(da * da)),
        }
    }
}

impl PartialOrd for GridCost {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

/// Neighbors of `cell` reachable in one move, with move costs. Diagonal
/// moves need both adjacent axis cells free.
pub fn neighbors(grid: &OccupancyGrid, cell: Cell, connectivity: Connectivity) -> Vec<(Cell, GridCost)> {
    let step = |dx: i64, dy: i64| -> Option<Cell> {
        let x = cell.ix as i64 + dx;
        let y = cell.iy as i64 + dy;
        (x >= 0 && y >= 0).then(|| Cell::new(x as usize, y as usize)).filter(|c| grid.is_free(*c))
    };
    let mut out = Vec::with_capacity(8);
    for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
        if let Some(c) = step(dx, dy) {
            out.push((c, GridCost::AXIS));
        }
    }
    if connectivity == Connectivity::Eight {
        for (dx, dy) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
            if step(dx, 0).is_some() && step(0, dy).is_some() {
                if let Some(c) = step(dx, dy) {
                    out.push((c, GridCost::DIAGONAL));
                }
            }
        }
    }
    out
}

/// Cell-space result of a search.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPath {
    pub cells: Vec<Cell>,
    pub cost: GridCost,
}

impl GridPath {
    pub fn cost_m(&self, grid: &OccupancyGrid) -> f64 {
        self.cost.value() * grid.resolution()
    }

    pub fn to_path(&self, grid: &OccupancyGrid) -> Path {
        Path {
            waypoints: self.cells.iter().map(|c| grid.cell_center(*c)).collect(),
        }
    }
}

/// Ordered world-frame waypoints.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Path {
    pub waypoints: Vec<Vector2<f64>>,
}

impl Path {
    pub fn length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    /// Distance from `p` to the nearest point of the polyline.
    pub fn distance_to(&self, p: &Vector2<f64>) -> f64 {
        match self.waypoints.as_slice() {
            [] => f64::INFINITY,
            [only] => (p - only).norm(),
            pts => pts
                .windows(2)
                .map(|w| point_segment_distance(p, &w[0], &w[1]))
                .fold(f64::INFINITY, f64::min),
        }
    }
}

fn point_segment_distance(p: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Shortest path between two cells over free space.
///
/// `Ok(None)` means no path: start or goal occupied, or goal unreachable.
/// Among equal-cost frontier entries the lowest `(iy, ix)` pops first.
pub fn dijkstra(
    grid: &OccupancyGrid,
    start: Cell,
    goal: Cell,
    connectivity: Connectivity,
) -> Result<Option<GridPath>> {
    if !grid.contains(start) || !grid.contains(goal) {
        return Err(invalid(format!(
            "cells {start:?} / {goal:?} outside {}×{} grid",
            grid.width(),
            grid.height()
        )));
    }
    if grid.is_occupied(start) || grid.is_occupied(goal) {
        return Ok(None);
    }
    let w = grid.width();
    let idx = |c: Cell| c.iy * w + c.ix;
    let n = w * grid.height();
    let mut dist: Vec<Option<GridCost>> = vec![None; n];
    let mut parent: Vec<Option<Cell>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[idx(start)] = Some(GridCost::ZERO);
    heap.push(Reverse((GridCost::ZERO, start.iy, start.ix)));

    while let Some(Reverse((d, iy, ix))) = heap.pop() {
        let cell = Cell::new(ix, iy);
        if done[idx(cell)] {
            continue;
        }
        done[idx(cell)] = true;
        if cell == goal {
            break;
        }
        for (next, c) in neighbors(grid, cell, connectivity) {
            let nd = d + c;
            let j = idx(next);
            if !done[j] && dist[j].is_none_or(|old| nd < old) {
                dist[j] = Some(nd);
                parent[j] = Some(cell);
                heap.push(Reverse((nd, next.iy, next.ix)));
            }
        }
    }

    let Some(cost) = dist[idx(goal)] else {
        return Ok(None);
    };
    let mut cells = vec![goal];
    let mut cur = goal;
    while let Some(p) = parent[idx(cur)] {
        cells.push(p);
        cur = p;
    }
    cells.reverse();
    Ok(Some(GridPath { cells, cost }))
}

/// Piecewise-linear resampling with consecutive points at most `spacing_m`
/// apart. Each segment is split evenly; original waypoints are kept.
pub fn interpolate(path: &Path, spacing_m: f64) -> Result<Vec<Vector2<f64>>> {
    if path.is_empty() {
        return Err(invalid("cannot interpolate an empty path"));
    }
    if !(spacing_m.is_finite() && spacing_m > 0.0) {
        return Err(invalid("interpolation spacing must be positive"));
    }
    let mut out = vec![path.waypoints[0]];
    for w in path.waypoints.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = (b - a).norm();
        let pieces = ((len / spacing_m) - 1e-9).ceil().max(1.0) as usize;
        for k in 1..pieces {
            out.push(a + (b - a) * (k as f64 / pieces as f64));
        }
        out.push(b);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn free(n: usize) -> OccupancyGrid {
        OccupancyGrid::empty(0.1, Vector2::zeros(), n, n).unwrap()
    }

    #[test]
    fn cost_ordering_is_exact() {
        let c = |a, d| GridCost { axis: a, diagonal: d };
        assert!(c(3, 0) > c(0, 2)); // 3 > 2.828
        assert!(c(1, 1) < c(0, 2)); // 2.414 < 2.828
        assert!(c(7, 0) < c(0, 5)); // 7 < 7.07
        assert!(c(2, 2) == c(2, 2));
        assert!(c(0, 0) < c(0, 1));
    }

    #[test]
    fn start_equals_goal() {
        let g = free(5);
        let p = dijkstra(&g, Cell::new(2, 2), Cell::new(2, 2), Connectivity::Eight).unwrap().unwrap();
        assert_eq!(p.cells, vec![Cell::new(2, 2)]);
        assert_eq!(p.cost, GridCost::ZERO);
    }

    #[test]
    fn pure_diagonal() {
        let g = free(5);
        let p = dijkstra(&g, Cell::new(0, 0), Cell::new(4, 4), Connectivity::Eight).unwrap().unwrap();
        assert_eq!(p.cost, GridCost { axis: 0, diagonal: 4 });
        assert_relative_eq!(p.cost.value(), 4.0 * 2f64.sqrt());
        assert_eq!(p.cells.len(), 5);
    }

    #[test]
    fn four_connected_is_manhattan() {
        let g = free(5);
        let p = dijkstra(&g, Cell::new(0, 0), Cell::new(4, 4), Connectivity::Four).unwrap().unwrap();
        assert_eq!(p.cost, GridCost { axis: 8, diagonal: 0 });
    }

    #[test]
    fn occupied_endpoint_is_no_path() {
        let mut cells = vec![false; 25];
        cells[0] = true;
        let g = OccupancyGrid::from_cells(0.1, Vector2::zeros(), 5, 5, cells).unwrap();
        assert!(dijkstra(&g, Cell::new(0, 0), Cell::new(4, 4), Connectivity::Eight).unwrap().is_none());
        assert!(dijkstra(&g, Cell::new(4, 4), Cell::new(0, 0), Connectivity::Eight).unwrap().is_none());
    }

    #[test]
    fn out_of_bounds_is_error() {
        let g = free(5);
        assert!(dijkstra(&g, Cell::new(5, 0), Cell::new(0, 0), Connectivity::Eight).is_err());
    }

    #[test]
    fn no_corner_cutting() {
        // . #
        // # .
        let g = OccupancyGrid::from_cells(0.1, Vector2::zeros(), 2, 2, vec![false, true, true, false]).unwrap();
        assert!(dijkstra(&g, Cell::new(0, 0), Cell::new(1, 1), Connectivity::Eight).unwrap().is_none());
    }

    #[test]
    fn interpolate_unit_segment() {
        let path = Path {
            waypoints: vec![Vector2::new(0.0, 0.0), Vector2::new(1.0, 0.0)],
        };
        let pts = interpolate(&path, 0.25).unwrap();
        assert_eq!(pts.len(), 5);
        for (k, p) in pts.iter().enumerate() {
            assert_relative_eq!(p.x, 0.25 * k as f64, epsilon = 1e-12);
        }
        assert_eq!(*pts.last().unwrap(), Vector2::new(1.0, 0.0));
    }

    #[test]
    fn interpolate_single_waypoint() {
        let path = Path {
            waypoints: vec![Vector2::new(0.3, 0.4)],
        };
        assert_eq!(interpolate(&path, 0.1).unwrap(), path.waypoints);
        assert!(interpolate(&Path::default(), 0.1).is_err());
        assert!(interpolate(&path, 0.0).is_err());
    }

    #[test]
    fn polyline_distance() {
        let path = Path {
            waypoints: vec![Vector2::new(0.0, 0.0), Vector2::new(2.0, 0.0), Vector2::new(2.0, 2.0)],
        };
        assert_relative_eq!(path.distance_to(&Vector2::new(1.0, 0.5)), 0.5);
        assert_relative_eq!(path.distance_to(&Vector2::new(3.0, 1.0)), 1.0);
        assert_relative_eq!(path.distance_to(&Vector2::new(-3.0, 4.0)), 5.0);
        assert_relative_eq!(path.length(), 4.0);
    }
}
