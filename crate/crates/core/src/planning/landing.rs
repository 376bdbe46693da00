use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::grid::OccupancyGrid;
use crate::error::{invalid, Result};

/// Candidate touchdown points in world coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LandingZones {
    zones: Vec<Vector2<f64>>,
}

impl LandingZones {
    pub fn new(zones: Vec<Vector2<f64>>) -> Result<Self> {
        if zones.is_empty() {
            return Err(invalid("at least one landing zone is required"));
        }
        if zones.iter().any(|z| !(z.x.is_finite() && z.y.is_finite())) {
            return Err(invalid("landing zones must be finite"));
        }
        Ok(Self { zones })
    }

    /// Rejects zones that fall outside the grid or on an occupied cell.
    pub fn validated_on(self, grid: &OccupancyGrid) -> Result<Self> {
        for (i, z) in self.zones.iter().enumerate() {
            match grid.world_to_cell(z) {
                Some(c) if grid.is_free(c) => {}
                _ => return Err(invalid(format!("landing zone {i} at ({}, {}) is not in free space", z.x, z.y))),
            }
        }
        Ok(self)
    }

    pub fn as_slice(&self) -> &[Vector2<f64>] {
        &self.zones
    }

    pub fn len(&self) -> usize {
        self.zones.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Zones greedily picked from free cells with at least `clearance_m` of
    /// free space around them, no two closer than `clearance_m`.
    pub fn detect(grid: &OccupancyGrid, clearance_m: f64) -> Option<Self> {
        let zones = detect_zones(grid, clearance_m);
        (!zones.is_empty()).then_some(Self { zones })
    }

    /// Predefined zones first, detected zones appended after them.
    pub fn merged(predefined: Option<Self>, detected: Option<Self>) -> Option<Self> {
        match (predefined, detected) {
            (Some(mut p), Some(d)) => {
                p.zones.extend(d.zones);
                Some(p)
            }
            (p, d) => p.or(d),
        }
    }
}

/// Index and distance of the closest zone; ties go to the lowest index.
pub fn nearest_zone(current: &Vector2<f64>, zones: &LandingZones) -> (usize, f64) {
    zones_by_distance(current, zones)[0]
}

/// All zones ordered by Euclidean distance, stable in index on ties.
pub fn zones_by_distance(current: &Vector2<f64>, zones: &LandingZones) -> Vec<(usize, f64)> {
    let mut order: Vec<(usize, f64)> = zones
        .zones
        .iter()
        .enumerate()
        .map(|(i, z)| (i, (z - current).norm()))
        .collect();
    order.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    order
}

fn detect_zones(grid: &OccupancyGrid, clearance_m: f64) -> Vec<Vector2<f64>> {
    let r = clearance_m / grid.resolution();
    let reach = r.ceil() as i64;
    let offsets: Vec<(i64, i64)> = (-reach..=reach)
        .flat_map(|dy| (-reach..=reach).map(move |dx| (dx, dy)))
        .filter(|&(dx, dy)| ((dx * dx + dy * dy) as f64) <= r * r + 1e-9)
        .collect();
    let mut picked: Vec<Vector2<f64>> = Vec::new();
    for (cell, occ) in grid.cells() {
        if occ {
            continue;
        }
        let clear = offsets.iter().all(|&(dx, dy)| {
            let (x, y) = (cell.ix as i64 + dx, cell.iy as i64 + dy);
            x >= 0 && y >= 0 && grid.is_free(super::Cell::new(x as usize, y as usize))
        });
        if !clear {
            continue;
        }
        let p = grid.cell_center(cell);
        if picked.iter().all(|q| (p - q).norm() >= clearance_m) {
            picked.push(p);
        }
    }
    picked
}

/// Constant-rate vertical descent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescentProfile {
    pub z0: f64,
    pub v_desc: f64,
    pub dt: f64,
}

impl DescentProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.z0.is_finite() && self.z0 >= 0.0) {
            return Err(invalid("descent start altitude must be non-negative"));
        }
        if !(self.v_desc.is_finite() && self.v_desc > 0.0) {
            return Err(invalid("descent speed must be positive"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(invalid("descent sample period must be positive"));
        }
        Ok(())
    }

    /// Altitude setpoint at time `t` after descent start.
    pub fn altitude_at(&self, t: f64) -> f64 {
        (self.z0 - self.v_desc * t).max(0.0)
    }
}

/// Samples `z(k·dt) = max(0, z0 − v·k·dt)` for `k = 0..=N`, where `N` is the
/// first index reaching zero.
pub fn descent_setpoints(profile: &DescentProfile) -> Result<Vec<f64>> {
    profile.validate()?;
    let steps = ((profile.z0 / (profile.v_desc * profile.dt)) - 1e-9).ceil().max(0.0) as usize;
    Ok((0..=steps)
        .map(|k| if k == steps { 0.0 } else { profile.altitude_at(k as f64 * profile.dt) })
        .collect())
}
