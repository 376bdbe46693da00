use std::fmt::Write as _;
use std::path::Path as FsPath;

use nalgebra::{Vector2, Vector3};

use crate::error::{invalid, Error, Result};

/// Grid cell index; `ix` counts columns along x, `iy` rows along y.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub ix: usize,
    pub iy: usize,
}

impl Cell {
    pub fn new(ix: usize, iy: usize) -> Self {
        Self { ix, iy }
    }
}

/// Axis-aligned world rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: Vector2<f64>,
    pub max: Vector2<f64>,
}

impl Bounds {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Self {
            min: Vector2::new(min_x, min_y),
            max: Vector2::new(max_x, max_y),
        }
    }
}

/// Planar free/occupied map; immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    resolution: f64,
    origin: Vector2<f64>,
    width: usize,
    height: usize,
    occupied: Vec<bool>,
}

fn cells_along(extent: f64, resolution: f64) -> usize {
    // tolerate extents that are an integer multiple of the resolution up to round-off
    ((extent / resolution) - 1e-9).ceil().max(1.0) as usize
}

impl OccupancyGrid {
    /// An all-free grid.
    pub fn empty(resolution: f64, origin: Vector2<f64>, width: usize, height: usize) -> Result<Self> {
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(invalid("grid resolution must be positive"));
        }
        if width == 0 || height == 0 {
            return Err(invalid("grid must have at least one cell"));
        }
        Ok(Self {
            resolution,
            origin,
            width,
            height,
            occupied: vec![false; width * height],
        })
    }

    pub fn from_cells(
        resolution: f64,
        origin: Vector2<f64>,
        width: usize,
        height: usize,
        occupied: Vec<bool>,
    ) -> Result<Self> {
        let mut g = Self::empty(resolution, origin, width, height)?;
        if occupied.len() != width * height {
            return Err(Error::Dimension {
                expected: width * height,
                got: occupied.len(),
            });
        }
        g.occupied = occupied;
        Ok(g)
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }
    pub fn origin(&self) -> Vector2<f64> {
        self.origin
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.ix < self.width && cell.iy < self.height
    }

    fn index(&self, cell: Cell) -> usize {
        cell.iy * self.width + cell.ix
    }

    /// Out-of-bounds cells count as occupied.
    pub fn is_occupied(&self, cell: Cell) -> bool {
        !self.contains(cell) || self.occupied[self.index(cell)]
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        !self.is_occupied(cell)
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.iter().filter(|o| **o).count()
    }

    pub fn cells(&self) -> impl Iterator<Item = (Cell, bool)> + '_ {
        (0..self.height).flat_map(move |iy| {
            (0..self.width).map(move |ix| {
                let c = Cell::new(ix, iy);
                (c, self.occupied[self.index(c)])
            })
        })
    }

    /// Cell containing a world point, if inside the grid.
    pub fn world_to_cell(&self, p: &Vector2<f64>) -> Option<Cell> {
        let fx = ((p.x - self.origin.x) / self.resolution).floor();
        let fy = ((p.y - self.origin.y) / self.resolution).floor();
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let c = Cell::new(fx as usize, fy as usize);
        self.contains(c).then_some(c)
    }

    pub fn cell_center(&self, cell: Cell) -> Vector2<f64> {
        self.origin + Vector2::new(cell.ix as f64 + 0.5, cell.iy as f64 + 0.5) * self.resolution
    }

    /// Free cell nearest (by center distance) to `cell`, searching outwards
    /// up to `max_ring` rings. Ties go to the lowest `(iy, ix)`.
    pub fn nearest_free(&self, cell: Cell, max_ring: usize) -> Option<Cell> {
        if self.is_free(cell) {
            return Some(cell);
        }
        let mut best: Option<(i64, Cell)> = None;
        let (cx, cy) = (cell.ix as i64, cell.iy as i64);
        for ring in 1..=max_ring as i64 {
            for dy in -ring..=ring {
                for dx in -ring..=ring {
                    if dx.abs().max(dy.abs()) != ring {
                        continue;
                    }
                    let (x, y) = (cx + dx, cy + dy);
                    if x < 0 || y < 0 {
                        continue;
                    }
                    let c = Cell::new(x as usize, y as usize);
                    if self.is_free(c) {
                        let d = dx * dx + dy * dy;
                        let better = match best {
                            None => true,
                            Some((bd, bc)) => d < bd || (d == bd && (c.iy, c.ix) < (bc.iy, bc.ix)),
                        };
                        if better {
                            best = Some((d, c));
                        }
                    }
                }
            }
            // a closer cell cannot appear beyond ring r·√2
            if let Some((d, c)) = best {
                if (ring * ring) as f64 * 2.0 >= d as f64 {
                    return Some(c);
                }
            }
        }
        best.map(|(_, c)| c)
    }

    fn with_cells(&self, occupied: Vec<bool>) -> Self {
        Self {
            occupied,
            ..self.clone()
        }
    }
}

/// Projects map points onto the ground plane: a cell is occupied iff at
/// least one point inside `bounds` with `z ∈ [z_min, z_max]` falls in it.
pub fn build_grid(
    points: &[Vector3<f64>],
    resolution: f64,
    z_band: (f64, f64),
    bounds: &Bounds,
) -> Result<OccupancyGrid> {
    if !(resolution.is_finite() && resolution > 0.0) {
        return Err(invalid("grid resolution must be positive"));
    }
    let extent = bounds.max - bounds.min;
    if !(extent.x > 0.0 && extent.y > 0.0) {
        return Err(invalid("grid bounds are empty"));
    }
    let width = cells_along(extent.x, resolution);
    let height = cells_along(extent.y, resolution);
    let mut grid = OccupancyGrid::empty(resolution, bounds.min, width, height)?;
    for p in points {
        if p.z < z_band.0 || p.z > z_band.1 {
            continue;
        }
        if p.x < bounds.min.x || p.x > bounds.max.x || p.y < bounds.min.y || p.y > bounds.max.y {
            continue;
        }
        let fx = ((p.x - bounds.min.x) / resolution).floor() as usize;
        let fy = ((p.y - bounds.min.y) / resolution).floor() as usize;
        let c = Cell::new(fx.min(width - 1), fy.min(height - 1));
        let i = grid.index(c);
        grid.occupied[i] = true;
    }
    Ok(grid)
}

/// Marks every cell whose center lies within `radius_m` of an occupied
/// cell center. Radius zero returns an identical grid.
pub fn inflate(grid: &OccupancyGrid, radius_m: f64) -> OccupancyGrid {
    let r_cells = radius_m / grid.resolution;
    let reach = r_cells.floor() as i64;
    let r2 = r_cells * r_cells + 1e-9;
    let offsets: Vec<(i64, i64)> = (-reach..=reach)
        .flat_map(|dy| (-reach..=reach).map(move |dx| (dx, dy)))
        .filter(|&(dx, dy)| ((dx * dx + dy * dy) as f64) <= r2)
        .collect();
    let mut out = grid.occupied.clone();
    let (w, h) = (grid.width as i64, grid.height as i64);
    for (cell, occ) in grid.cells() {
        if !occ {
            continue;
        }
        for &(dx, dy) in &offsets {
            let (x, y) = (cell.ix as i64 + dx, cell.iy as i64 + dy);
            if x >= 0 && y >= 0 && x < w && y < h {
                out[(y * w + x) as usize] = true;
            }
        }
    }
    grid.with_cells(out)
}

/// Text encoding of a grid:
///
/// ```text
/// # optional comment lines, '#' followed by a space
/// resolution 0.1
/// origin 0.0 0.0
/// width 4
/// height 2
/// ..#.
/// ....
/// ```
///
/// Cell lines are row-major, first line `iy = 0`, `#` occupied, `.` free.
pub fn format_grid(grid: &OccupancyGrid, comment: Option<&str>) -> String {
    let mut s = String::new();
    if let Some(c) = comment {
        for line in c.lines() {
            let _ = writeln!(s, "# {line}");
        }
    }
    let _ = writeln!(s, "resolution {}", grid.resolution);
    let _ = writeln!(s, "origin {} {}", grid.origin.x, grid.origin.y);
    let _ = writeln!(s, "width {}", grid.width);
    let _ = writeln!(s, "height {}", grid.height);
    for iy in 0..grid.height {
        for ix in 0..grid.width {
            s.push(if grid.occupied[iy * grid.width + ix] { '#' } else { '.' });
        }
        s.push('\n');
    }
    s
}

pub fn parse_grid(text: &str) -> std::result::Result<OccupancyGrid, String> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end()))
        .filter(|(_, l)| !(l.is_empty() || l.starts_with("# ")));
    let mut header = |key: &str| -> std::result::Result<(usize, Vec<String>), String> {
        let (n, line) = lines.next().ok_or_else(|| format!("missing `{key}` header"))?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(format!("line {n}: expected `{key}`"));
        }
        Ok((n, parts.map(str::to_owned).collect()))
    };
    let num = |n: usize, v: &[String], i: usize| -> std::result::Result<f64, String> {
        v.get(i)
            .ok_or_else(|| format!("line {n}: missing value"))?
            .parse::<f64>()
            .map_err(|e| format!("line {n}: {e}"))
    };
    let (n, v) = header("resolution")?;
    let resolution = num(n, &v, 0)?;
    let (n, v) = header("origin")?;
    let origin = Vector2::new(num(n, &v, 0)?, num(n, &v, 1)?);
    let (n, v) = header("width")?;
    let width = v
        .first()
        .and_then(|s| s.parse::<usize>().ok())
        .ok_or_else(|| format!("line {n}: bad width"))?;
    let (n, v) = header("height")?;
    let height = v
        .first()
        .and_then(|s| s.parse::<usize>().ok())
        .ok_or_else(|| format!("line {n}: bad height"))?;

    let mut occupied = Vec::with_capacity(width * height);
    let mut rows = 0;
    for (n, line) in lines {
        if line.chars().count() != width {
            return Err(format!("line {n}: expected {width} cells, found {}", line.chars().count()));
        }
        for ch in line.chars() {
            occupied.push(match ch {
                '#' => true,
                '.' => false,
                other => return Err(format!("line {n}: unexpected cell character {other:?}")),
            });
        }
        rows += 1;
    }
    if rows != height {
        return Err(format!("expected {height} cell rows, found {rows}"));
    }
    OccupancyGrid::from_cells(resolution, origin, width, height, occupied).map_err(|e| e.to_string())
}

pub fn read_grid(path: &FsPath) -> Result<OccupancyGrid> {
    let text = std::fs::read_to_string(path)?;
    parse_grid(&text).map_err(|message| Error::Format {
        path: path.to_owned(),
        message,
    })
}

pub fn write_grid(grid: &OccupancyGrid, path: &FsPath, comment: Option<&str>) -> Result<()> {
    std::fs::write(path, format_grid(grid, comment))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_bounds() -> Bounds {
        Bounds::new(0.0, 0.0, 1.0, 1.0)
    }

    #[test]
    fn no_points_all_free() {
        let g = build_grid(&[], 0.1, (0.0, 2.0), &unit_bounds()).unwrap();
        assert_eq!((g.width(), g.height()), (10, 10));
        assert_eq!(g.occupied_count(), 0);
    }

    #[test]
    fn single_point_projects_to_its_cell() {
        let g = build_grid(&[Vector3::new(0.55, 0.23, 1.0)], 0.1, (0.0, 2.0), &unit_bounds()).unwrap();
        assert_eq!(g.occupied_count(), 1);
        assert!(g.is_occupied(Cell::new(5, 2)));
    }

    #[test]
    fn points_outside_band_ignored() {
        let g = build_grid(&[Vector3::new(0.55, 0.23, 2.5)], 0.1, (0.0, 2.0), &unit_bounds()).unwrap();
        assert_eq!(g.occupied_count(), 0);
    }

    #[test]
    fn rejects_degenerate_bounds() {
        assert!(build_grid(&[], 0.1, (0.0, 2.0), &Bounds::new(0.0, 0.0, 0.0, 1.0)).is_err());
        assert!(build_grid(&[], 0.0, (0.0, 2.0), &unit_bounds()).is_err());
    }

    fn single_obstacle(n: usize) -> OccupancyGrid {
        let mut g = OccupancyGrid::empty(0.1, Vector2::zeros(), n, n).unwrap();
        let c = g.index(Cell::new(n / 2, n / 2));
        g.occupied[c] = true;
        g
    }

    fn brute_force_inflate(grid: &OccupancyGrid, radius: f64) -> Vec<bool> {
        let occupied: Vec<_> = grid.cells().filter(|(_, o)| *o).map(|(c, _)| grid.cell_center(c)).collect();
        grid.cells()
            .map(|(c, _)| {
                let p = grid.cell_center(c);
                occupied.iter().any(|q| (p - q).norm() <= radius + 1e-9)
            })
            .collect()
    }

    #[test]
    fn inflation_counts() {
        let g = single_obstacle(11);
        assert_eq!(inflate(&g, 0.0), g);
        // cells within 1.5 cells of center: the 3×3 block
        assert_eq!(inflate(&g, 0.15).occupied_count(), 9);
        // radius 2 adds the four cells two steps away along the axes
        assert_eq!(inflate(&g, 0.2).occupied_count(), 13);
        for r in [0.05, 0.15, 0.25, 0.33, 0.5] {
            assert_eq!(inflate(&g, r).occupied, brute_force_inflate(&g, r), "radius {r}");
        }
    }

    #[test]
    fn nearest_free_cell() {
        let g = inflate(&single_obstacle(11), 0.15);
        assert_eq!(g.nearest_free(Cell::new(1, 1), 3), Some(Cell::new(1, 1)));
        let c = g.nearest_free(Cell::new(5, 5), 5).unwrap();
        assert!(g.is_free(c));
        assert_eq!(c, Cell::new(5, 3));
    }

    #[test]
    fn world_cell_mapping() {
        let g = OccupancyGrid::empty(0.5, Vector2::new(-1.0, 2.0), 4, 4).unwrap();
        assert_eq!(g.world_to_cell(&Vector2::new(-0.9, 2.1)), Some(Cell::new(0, 0)));
        assert_eq!(g.world_to_cell(&Vector2::new(0.9, 3.9)), Some(Cell::new(3, 3)));
        assert_eq!(g.world_to_cell(&Vector2::new(1.1, 3.0)), None);
        assert_eq!(g.cell_center(Cell::new(1, 0)), Vector2::new(-0.25, 2.25));
    }

    #[test]
    fn grid_text_round_trip() {
        let g = inflate(&single_obstacle(7), 0.1);
        let text = format_grid(&g, Some("test grid"));
        assert!(text.starts_with("# test grid\n"));
        assert_eq!(parse_grid(&text).unwrap(), g);
    }

    #[test]
    fn grid_parse_errors_name_the_line() {
        let err = parse_grid("resolution 0.1\norigin 0 0\nwidth 3\nheight 1\n.x.\n").unwrap_err();
        assert!(err.contains("line 5"), "{err}");
        let err = parse_grid("resolution 0.1\norigin 0 0\nwidth 3\nheight 2\n...\n").unwrap_err();
        assert!(err.contains("rows"), "{err}");
    }
}
