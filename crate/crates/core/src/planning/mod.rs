//! Occupancy grids, shortest paths and landing routes.
//!
//! Map points are projected into a [`OccupancyGrid`], obstacles are grown by
//! the vehicle radius with [`inflate`], and [`dijkstra`] searches the free
//! cells. Emergency landing picks a zone from [`LandingZones`] and descends
//! along a [`DescentProfile`].
//!
//! ```
//! use nalgebra::Vector2;
//! use quadsim::planning::{dijkstra, Cell, Connectivity, OccupancyGrid};
//!
//! let grid = OccupancyGrid::empty(0.1, Vector2::zeros(), 5, 5).unwrap();
//! let path = dijkstra(&grid, Cell::new(0, 0), Cell::new(4, 4), Connectivity::Eight)
//!     .unwrap()
//!     .unwrap();
//! assert!((path.cost.value() - 4.0 * 2f64.sqrt()).abs() < 1e-12);
//! ```

mod dijkstra;
mod grid;
mod landing;

use std::path::Path as FsPath;

pub use dijkstra::{dijkstra, interpolate, neighbors, Connectivity, GridCost, GridPath, Path};
pub use grid::{build_grid, format_grid, inflate, parse_grid, read_grid, write_grid, Bounds, Cell, OccupancyGrid};
pub use landing::{descent_setpoints, nearest_zone, zones_by_distance, DescentProfile, LandingZones};

/// Writes `x,y` rows with a header line.
pub fn write_path_csv(waypoints: &[nalgebra::Vector2<f64>], path: &FsPath, comment: Option<&str>) -> crate::Result<()> {
    use std::fmt::Write as _;
    let mut s = String::new();
    if let Some(c) = comment {
        for line in c.lines() {
            let _ = writeln!(s, "# {line}");
        }
    }
    s.push_str("x,y\n");
    for p in waypoints {
        let _ = writeln!(s, "{},{}", p.x, p.y);
    }
    std::fs::write(path, s)?;
    Ok(())
}
