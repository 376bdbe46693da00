//! Built-in environments as wall point clouds.

use nalgebra::{Vector2, Vector3};

use crate::error::Result;
use crate::planning::{build_grid, read_grid, Bounds, OccupancyGrid};

use super::config::{MapSection, MapSource, PlanningSection, ScenarioConfig};

/// Sample heights of every wall; the lowest and highest fall outside the
/// default height band and exercise the floor/ceiling filter.
const WALL_HEIGHTS: [f64; 5] = [0.05, 0.6, 1.2, 1.8, 2.4];
const WALL_SAMPLE_M: f64 = 0.05;

/// Side length of the built-in maze.
pub const MAZE_SIZE_M: f64 = 12.0;
/// Mission start and goal in the built-in maze.
pub const MAZE_START: [f64; 2] = [1.5, 1.5];
pub const MAZE_GOAL: [f64; 2] = [7.2, 1.2];
/// Open areas of the maze that make good landing zones.
pub const MAZE_LANDING_ZONES: [[f64; 2]; 5] = [[1.5, 6.0], [6.0, 5.5], [10.5, 2.0], [10.5, 6.5], [2.5, 10.5]];

/// Interior maze walls as `(x0, y0, x1, y1)` segments; the outer boundary is added separately.
const MAZE_WALLS: [(f64, f64, f64, f64); 7] = [
    (4.0, 0.0, 4.0, 6.0),
    (0.0, 8.0, 9.0, 8.0),
    (8.0, 0.0, 8.0, 5.0),
    (0.0, 4.0, 2.6, 4.0),
    (5.5, 8.0, 5.5, 10.5),
    (9.0, 10.0, 12.0, 10.0),
    (6.0, 2.5, 8.0, 2.5),
];

fn boundary(size: f64) -> [(f64, f64, f64, f64); 4] {
    [
        (0.0, 0.0, size, 0.0),
        (size, 0.0, size, size),
        (size, size, 0.0, size),
        (0.0, size, 0.0, 0.0),
    ]
}

fn wall_points(segments: &[(f64, f64, f64, f64)]) -> Vec<Vector3<f64>> {
    let mut points = Vec::new();
    for &(x0, y0, x1, y1) in segments {
        let a = Vector2::new(x0, y0);
        let b = Vector2::new(x1, y1);
        let n = ((b - a).norm() / WALL_SAMPLE_M).ceil().max(1.0) as usize;
        for k in 0..=n {
            let p = a + (b - a) * (k as f64 / n as f64);
            for z in WALL_HEIGHTS {
                points.push(Vector3::new(p.x, p.y, z));
            }
        }
    }
    points
}

/// Point cloud of the 12 m × 12 m maze.
pub fn maze_points() -> Vec<Vector3<f64>> {
    let mut segments = boundary(MAZE_SIZE_M).to_vec();
    segments.extend(MAZE_WALLS);
    wall_points(&segments)
}

/// Point cloud of an empty walled square.
pub fn arena_points(size: f64) -> Vec<Vector3<f64>> {
    wall_points(&boundary(size))
}

fn grid_from_points(points: &[Vector3<f64>], size: f64, planning: &PlanningSection) -> Result<OccupancyGrid> {
    build_grid(
        points,
        planning.resolution_m,
        (planning.z_band[0], planning.z_band[1]),
        &Bounds::new(0.0, 0.0, size, size),
    )
}

/// Raw (uninflated) occupancy grid of the configured map.
pub fn load_map(map: &MapSection, planning: &PlanningSection, cfg: &ScenarioConfig) -> Result<OccupancyGrid> {
    match map.source {
        MapSource::Maze => grid_from_points(&maze_points(), MAZE_SIZE_M, planning),
        MapSource::Arena => grid_from_points(&arena_points(map.size_m), map.size_m, planning),
        MapSource::GridFile => {
            let path = map.path.as_deref().expect("validated: grid_file has a path");
            read_grid(&cfg.resolve(path))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planning::{dijkstra, inflate, Connectivity};

    #[test]
    fn maze_route_has_expected_scale() {
        let raw = grid_from_points(&maze_points(), MAZE_SIZE_M, &PlanningSection::default()).unwrap();
        assert_eq!((raw.width(), raw.height()), (120, 120));
        let grid = inflate(&raw, 0.25);
        let start = grid.world_to_cell(&Vector2::from(MAZE_START)).unwrap();
        let goal = grid.world_to_cell(&Vector2::from(MAZE_GOAL)).unwrap();
        let path = dijkstra(&grid, start, goal, Connectivity::Eight).unwrap().unwrap();
        let len = path.cost_m(&grid);
        assert!((12.0..14.0).contains(&len), "maze route {len} m");
        for z in MAZE_LANDING_ZONES {
            assert!(grid.is_free(grid.world_to_cell(&Vector2::from(z)).unwrap()), "{z:?}");
        }
    }

    #[test]
    fn points_outside_band_ignored() {
        let pts: Vec<_> = arena_points(4.0).into_iter().filter(|p| p.z < 0.1 || p.z > 2.0).collect();
        let grid = grid_from_points(&pts, 4.0, &PlanningSection::default()).unwrap();
        assert_eq!(grid.occupied_count(), 0);
    }
}
