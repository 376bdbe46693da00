//! Rotor fault detection, identification and the failsafe adapter.
//!
//! Detection runs at a fixed monitor rate. Two rules feed a latching flag:
//!
//! 1. A rotor commanded near saturation whose torque axis shows a large
//!    shortfall between measured and model-predicted angular acceleration.
//!    The shortfall must persist for several consecutive monitor ticks.
//! 2. With rpm feedback, a rotor spinning at (near) zero speed while it is
//!    commanded on is confirmed failed on the spot.
//!
//! Rule 1 attribution, with residual `r = measured − expected`:
//!
//! | rotor | axis | healthy torque sign | fault signature |
//! |-------|------|---------------------|-----------------|
//! | 1     | θ    | −                   | `r_θ > ε`       |
//! | 2     | φ    | +                   | `r_φ < −ε`      |
//! | 3     | θ    | +                   | `r_θ < −ε`      |
//! | 4     | φ    | −                   | `r_φ > ε`       |
//!
//! Two rotors share each axis with opposite signs, so the sign of the
//! residual and the saturation condition together pick one suspect.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::{angular_acceleration, mix_forces, FaultMask, MotorCommand, QuadParams, RigidBodyState, Wrench};
use crate::error::{invalid, Result};
use crate::estimation::Pose;
use crate::planning::{
    descent_setpoints, dijkstra, interpolate, zones_by_distance, Connectivity, DescentProfile, GridPath,
    LandingZones, OccupancyGrid, Path,
};

/// `(axis index, healthy torque sign)` per rotor.
const ROTOR_AXIS: [(usize, f64); 4] = [(1, -1.0), (0, 1.0), (1, 1.0), (0, -1.0)];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FdiConfig {
    /// Fraction of `cmd_max` above which a command counts as high.
    pub pwm_saturation_frac: f64,
    /// Angular-acceleration shortfall threshold, rad/s².
    pub rate_mismatch_eps: f64,
    pub persistence_samples: u32,
    pub monitor_rate_hz: f64,
    pub rpm_feedback_enabled: bool,
    pub rpm_zero_eps: f64,
}

impl Default for FdiConfig {
    fn default() -> Self {
        Self {
            pwm_saturation_frac: 0.9,
            rate_mismatch_eps: 2.0,
            persistence_samples: 12,
            monitor_rate_hz: 10.0,
            rpm_feedback_enabled: false,
            rpm_zero_eps: 0.05,
        }
    }
}

impl FdiConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pwm_saturation_frac > 0.0 && self.pwm_saturation_frac <= 1.0) {
            return Err(invalid("pwm_saturation_frac must lie in (0, 1]"));
        }
        if !(self.rate_mismatch_eps > 0.0 && self.rpm_zero_eps > 0.0) {
            return Err(invalid("FDI thresholds must be positive"));
        }
        if self.persistence_samples == 0 {
            return Err(invalid("persistence_samples must be at least 1"));
        }
        if !(self.monitor_rate_hz.is_finite() && self.monitor_rate_hz > 0.0) {
            return Err(invalid("monitor_rate_hz must be positive"));
        }
        Ok(())
    }

    pub fn monitor_period_s(&self) -> f64 {
        1.0 / self.monitor_rate_hz
    }
}

/// What the monitor sees at one tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdiObservation {
    /// Command applied over the last monitor window.
    pub commanded: MotorCommand,
    pub measured_rates: Vector3<f64>,
    /// Rates one monitor tick earlier.
    pub measured_rate_prev: Vector3<f64>,
    pub rpm: Option<[f64; 4]>,
}

/// Latching detector state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FdiStatus {
    pub fault_flag: bool,
    /// 1-based rotor index.
    pub suspected_rotor: Option<usize>,
    pub detection_time_s: Option<f64>,
    pub consecutive_hits: [u32; 4],
}

/// Angular acceleration the healthy model expects for `cmd` at `state`'s rates.
pub fn predict_angular_accel(cmd: &MotorCommand, state: &RigidBodyState, params: &QuadParams) -> Vector3<f64> {
    let w = mix_forces(cmd, &FaultMask::healthy(), params);
    angular_acceleration(&state.attitude_rate, &w.torques, params)
}

/// Expected change of the attitude rates over `dt`.
pub fn predict_rate_change(
    cmd: &MotorCommand,
    state: &RigidBodyState,
    params: &QuadParams,
    dt: f64,
) -> Result<Vector3<f64>> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(invalid("prediction interval must be positive"));
    }
    Ok(predict_angular_accel(cmd, state, params) * dt)
}

/// Advances the detector by one monitor tick at time `t`.
pub fn fdi_step(obs: &FdiObservation, cfg: &FdiConfig, status: &FdiStatus, t: f64, params: &QuadParams) -> FdiStatus {
    if status.fault_flag {
        return *status;
    }
    let mut next = *status;
    let u = obs.commanded.values();

    if cfg.rpm_feedback_enabled {
        if let Some(rpm) = obs.rpm {
            if let Some(i) = (0..4).find(|&i| u[i] > 0.0 && rpm[i] <= cfg.rpm_zero_eps) {
                next.fault_flag = true;
                next.suspected_rotor = Some(i + 1);
                next.detection_time_s = Some(t);
                return next;
            }
        }
    }

    let dt = cfg.monitor_period_s();
    let prev = RigidBodyState {
        attitude_rate: obs.measured_rate_prev,
        ..Default::default()
    };
    let expected = predict_angular_accel(&obs.commanded, &prev, params);
    let residual = (obs.measured_rates - obs.measured_rate_prev) / dt - expected;
    let high = cfg.pwm_saturation_frac * params.cmd_max;
    for (i, &(axis, sign)) in ROTOR_AXIS.iter().enumerate() {
        let hit = u[i] >= high && sign * residual[axis] < -cfg.rate_mismatch_eps;
        next.consecutive_hits[i] = if hit { status.consecutive_hits[i] + 1 } else { 0 };
    }
    // most persistent wins, lowest index on ties
    let (best, hits) = next
        .consecutive_hits
        .iter()
        .enumerate()
        .fold((0, 0), |acc, (i, &h)| if h > acc.1 { (i, h) } else { acc });
    if hits >= cfg.persistence_samples {
        next.fault_flag = true;
        next.suspected_rotor = Some(best + 1);
        next.detection_time_s = Some(t);
    }
    next
}

/// Zeroes the suspected rotor and re-clips the rest.
pub fn failsafe_clip(cmd: &MotorCommand, suspected_rotor: usize, params: &QuadParams) -> Result<MotorCommand> {
    if !(1..=4).contains(&suspected_rotor) {
        return Err(invalid(format!("rotor index {suspected_rotor} outside 1..=4")));
    }
    let mut u = cmd.values();
    u[suspected_rotor - 1] = 0.0;
    Ok(MotorCommand::clamped(u, params.cmd_max))
}

/// Allocates thrust and roll/pitch torque over the three working rotors,
/// leaving yaw free, then applies [`failsafe_clip`].
///
/// The rotor opposite the failed one alone sets torque on the shared axis,
/// which can therefore only be driven in one direction. The remaining pair
/// splits the rest of the thrust and the other axis torque.
pub fn failsafe_allocate(wrench: &Wrench, suspected_rotor: usize, params: &QuadParams) -> Result<MotorCommand> {
    if !(1..=4).contains(&suspected_rotor) {
        return Err(invalid(format!("rotor index {suspected_rotor} outside 1..=4")));
    }
    let lk = params.arm_length_m * params.thrust_coeff;
    let (axis, sign) = ROTOR_AXIS[suspected_rotor - 1];
    let opposite = (suspected_rotor + 1) % 4 + 1;
    let mut u = [0.0; 4];
    u[opposite - 1] = (sign * -wrench.torques[axis] / lk).clamp(0.0, params.cmd_max);

    // other axis: rotor with negative sign first
    let (neg, pos) = if axis == 0 { (1, 3) } else { (4, 2) };
    let other = 1 - axis;
    let sum = (wrench.thrust / params.thrust_coeff - u[opposite - 1]).max(0.0);
    let diff = wrench.torques[other] / lk;
    let mut lo = 0.5 * (sum - diff);
    let mut hi = 0.5 * (sum + diff);
    // keep the torque difference when one side leaves the box
    for _ in 0..2 {
        if lo < 0.0 {
            hi -= lo;
            lo = 0.0;
        }
        if hi < 0.0 {
            lo -= hi;
            hi = 0.0;
        }
        if lo > params.cmd_max {
            hi -= lo - params.cmd_max;
            lo = params.cmd_max;
        }
        if hi > params.cmd_max {
            lo -= hi - params.cmd_max;
            hi = params.cmd_max;
        }
    }
    u[neg - 1] = lo;
    u[pos - 1] = hi;
    failsafe_clip(&MotorCommand::clamped(u, params.cmd_max), suspected_rotor, params)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmergencyConfig {
    pub v_desc: f64,
    pub waypoint_spacing_m: f64,
    pub descent_dt: f64,
    pub connectivity: Connectivity,
    /// How far (in cells) an occupied start cell may be moved to free space.
    pub start_snap_cells: usize,
}

impl Default for EmergencyConfig {
    fn default() -> Self {
        Self {
            v_desc: 0.5,
            waypoint_spacing_m: 0.1,
            descent_dt: 0.1,
            connectivity: Connectivity::Eight,
            start_snap_cells: 5,
        }
    }
}

/// Route to a landing zone plus the vertical descent at its end.
#[derive(Debug, Clone, PartialEq)]
pub struct EmergencyPlan {
    /// Zone index, or `None` when descending in place.
    pub zone_index: Option<usize>,
    pub target: Vector2<f64>,
    /// Densified route from the current position to the target.
    pub route: Vec<Vector2<f64>>,
    pub grid_path: Option<GridPath>,
    pub descent: DescentProfile,
    pub altitude_setpoints: Vec<f64>,
    pub descend_in_place: bool,
    /// Zones that were tried before one turned out reachable.
    pub unreachable_zones: Vec<usize>,
}

/// Reroutes to the nearest reachable landing zone.
///
/// Zones are tried in Euclidean order; the first one with a grid path
/// wins. If none is reachable the plan descends at the current position.
pub fn engage_failsafe(
    current: &Pose,
    zones: &LandingZones,
    grid: &OccupancyGrid,
    cfg: &EmergencyConfig,
) -> Result<EmergencyPlan> {
    let here = current.translation.xy();
    let descent = DescentProfile {
        z0: current.translation.z.max(0.0),
        v_desc: cfg.v_desc,
        dt: cfg.descent_dt,
    };
    let altitude_setpoints = descent_setpoints(&descent)?;
    let mut unreachable_zones = Vec::new();

    let start = grid
        .world_to_cell(&here)
        .and_then(|c| grid.nearest_free(c, cfg.start_snap_cells));
    if let Some(start) = start {
        for (index, _) in zones_by_distance(&here, zones) {
            let zone = zones.as_slice()[index];
            let Some(goal) = grid.world_to_cell(&zone) else {
                unreachable_zones.push(index);
                continue;
            };
            match dijkstra(grid, start, goal, cfg.connectivity)? {
                Some(gp) => {
                    let mut waypoints = vec![here];
                    let cells = gp.to_path(grid).waypoints;
                    // skip the start cell center, the vehicle is already there
                    waypoints.extend(cells.iter().skip(1).copied());
                    if waypoints.len() > 1 {
                        waypoints.pop();
                    }
                    if zone != here {
                        waypoints.push(zone);
                    }
                    let route = interpolate(&Path { waypoints }, cfg.waypoint_spacing_m)?;
                    return Ok(EmergencyPlan {
                        zone_index: Some(index),
                        target: zone,
                        route,
                        grid_path: Some(gp),
                        descent,
                        altitude_setpoints,
                        descend_in_place: false,
                        unreachable_zones,
                    });
                }
                None => unreachable_zones.push(index),
            }
        }
    } else {
        unreachable_zones.extend(0..zones.len());
    }
    Ok(EmergencyPlan {
        zone_index: None,
        target: here,
        route: vec![here],
        grid_path: None,
        descent,
        altitude_setpoints,
        descend_in_place: true,
        unreachable_zones,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{derivatives, inverse_mix};
    use approx::assert_relative_eq;
    use nalgebra::Rotation3;

    fn p() -> QuadParams {
        QuadParams::default()
    }

    fn cmd(u: [f64; 4]) -> MotorCommand {
        MotorCommand::new(u, 2.0).unwrap()
    }

    #[test]
    fn prediction_cases() {
        let hover = cmd([0.8; 4]);
        assert_eq!(predict_angular_accel(&hover, &RigidBodyState::default(), &p()), Vector3::zeros());
        let a = predict_angular_accel(&cmd([0.8, 1.0, 0.8, 0.6]), &RigidBodyState::default(), &p());
        assert!(a.x > 0.0);
        assert!(predict_rate_change(&hover, &RigidBodyState::default(), &p(), 0.0).is_err());
    }

    #[test]
    fn prediction_matches_dynamics() {
        let state = RigidBodyState {
            attitude: Vector3::new(0.1, -0.05, 0.3),
            attitude_rate: Vector3::new(0.4, -0.7, 1.1),
            ..Default::default()
        };
        let c = cmd([0.7, 1.2, 0.9, 0.5]);
        let want = derivatives(&state, &mix_forces(&c, &FaultMask::healthy(), &p()), &p());
        let got = predict_angular_accel(&c, &state, &p());
        for i in 0..3 {
            assert_eq!(got[i], want[9 + i]);
        }
    }

    fn obs(u: [f64; 4], prev: Vector3<f64>, now: Vector3<f64>) -> FdiObservation {
        FdiObservation {
            commanded: cmd(u),
            measured_rates: now,
            measured_rate_prev: prev,
            rpm: None,
        }
    }

    #[test]
    fn consistent_measurements_never_hit() {
        let cfg = FdiConfig::default();
        let u = [1.9, 1.9, 1.9, 1.9];
        let mut s = FdiStatus::default();
        for k in 0..100 {
            s = fdi_step(&obs(u, Vector3::zeros(), Vector3::zeros()), &cfg, &s, k as f64 * 0.1, &p());
        }
        assert!(!s.fault_flag);
        assert_eq!(s.consecutive_hits, [0; 4]);
    }

    /// Rotor 2 commanded high but the roll rate falls.
    fn rotor2_signature() -> FdiObservation {
        obs([0.8, 2.0, 0.8, 0.2], Vector3::zeros(), Vector3::new(-0.5, 0.0, 0.0))
    }

    #[test]
    fn persistence_then_latch() {
        let cfg = FdiConfig {
            persistence_samples: 10,
            ..Default::default()
        };
        let mut s = FdiStatus::default();
        for k in 1..=9 {
            s = fdi_step(&rotor2_signature(), &cfg, &s, k as f64 * 0.1, &p());
            assert!(!s.fault_flag);
        }
        assert_eq!(s.consecutive_hits[1], 9);
        s = fdi_step(&rotor2_signature(), &cfg, &s, 1.0, &p());
        assert!(s.fault_flag);
        assert_eq!(s.suspected_rotor, Some(2));
        assert_eq!(s.detection_time_s, Some(1.0));
        let after = fdi_step(&obs([0.8; 4], Vector3::zeros(), Vector3::zeros()), &cfg, &s, 1.1, &p());
        assert_eq!(after, s);
    }

    #[test]
    fn interruption_resets_counter() {
        let cfg = FdiConfig::default();
        let mut s = FdiStatus::default();
        for _ in 0..5 {
            s = fdi_step(&rotor2_signature(), &cfg, &s, 0.0, &p());
        }
        s = fdi_step(&obs([0.8; 4], Vector3::zeros(), Vector3::zeros()), &cfg, &s, 0.0, &p());
        assert_eq!(s.consecutive_hits, [0; 4]);
    }

    #[test]
    fn attribution_table() {
        // each rotor dead while commanded high: its torque is missing
        let params = p();
        let cfg = FdiConfig {
            persistence_samples: 1,
            ..Default::default()
        };
        for rotor in 1..=4 {
            let mut u = [0.8; 4];
            u[rotor - 1] = 2.0;
            let c = cmd(u);
            let actual = mix_forces(&c, &FaultMask::rotor_failed(rotor).unwrap(), &params);
            let accel = angular_acceleration(&Vector3::zeros(), &actual.torques, &params);
            let o = FdiObservation {
                commanded: c,
                measured_rates: accel * 0.1,
                measured_rate_prev: Vector3::zeros(),
                rpm: None,
            };
            let s = fdi_step(&o, &cfg, &FdiStatus::default(), 0.1, &params);
            assert_eq!(s.suspected_rotor, Some(rotor), "rotor {rotor}");
        }
    }

    #[test]
    fn rpm_shortcut() {
        let cfg = FdiConfig {
            rpm_feedback_enabled: true,
            ..Default::default()
        };
        let mut o = obs([0.8; 4], Vector3::zeros(), Vector3::zeros());
        o.rpm = Some([0.9, 0.0, 0.9, 0.9]);
        let s = fdi_step(&o, &cfg, &FdiStatus::default(), 50.1, &p());
        assert!(s.fault_flag);
        assert_eq!(s.suspected_rotor, Some(2));
        assert_eq!(s.detection_time_s, Some(50.1));
    }

    #[test]
    fn clip_cases() {
        let c = cmd([0.8; 4]);
        assert_eq!(failsafe_clip(&c, 2, &p()).unwrap().values(), [0.8, 0.0, 0.8, 0.8]);
        let once = failsafe_clip(&c, 2, &p()).unwrap();
        assert_eq!(failsafe_clip(&once, 2, &p()).unwrap(), once);
        assert!(failsafe_clip(&c, 0, &p()).is_err());
    }

    #[test]
    fn three_rotor_allocation_is_exact_when_feasible() {
        let params = p();
        for rotor in 1..=4 {
            let (axis, sign) = ROTOR_AXIS[rotor - 1];
            let mut torques = Vector3::new(0.0, 0.0, 0.0);
            // torque the opposite rotor can produce
            torques[axis] = -sign * 0.1;
            torques[1 - axis] = 0.15;
            let w = Wrench::new(params.weight(), torques);
            let u = failsafe_allocate(&w, rotor, &params).unwrap();
            assert_eq!(u.rotor(rotor), 0.0);
            let got = mix_forces(&u, &FaultMask::rotor_failed(rotor).unwrap(), &params);
            assert_relative_eq!(got.thrust, w.thrust, epsilon = 1e-12);
            assert_relative_eq!(got.torques.x, w.torques.x, epsilon = 1e-12);
            assert_relative_eq!(got.torques.y, w.torques.y, epsilon = 1e-12);
        }
    }

    #[test]
    fn three_rotor_allocation_one_sided_axis() {
        let params = p();
        let w = Wrench::new(params.weight(), Vector3::new(0.2, 0.0, 0.0));
        let u = failsafe_allocate(&w, 2, &params).unwrap();
        assert_eq!(u.rotor(4), 0.0);
        let healthy = inverse_mix(&w, &params).command;
        assert!(healthy.rotor(2) > 0.0);
    }

    fn pose_at(x: f64, y: f64, z: f64) -> Pose {
        Pose {
            rotation: Rotation3::identity(),
            translation: Vector3::new(x, y, z),
        }
    }

    #[test]
    fn fault_above_zone_is_immediate_descent() {
        let grid = OccupancyGrid::empty(0.1, Vector2::zeros(), 30, 30).unwrap();
        let zones = LandingZones::new(vec![Vector2::new(1.55, 1.55)]).unwrap();
        let plan = engage_failsafe(&pose_at(1.55, 1.55, 2.0), &zones, &grid, &EmergencyConfig::default()).unwrap();
        assert_eq!(plan.zone_index, Some(0));
        assert_eq!(plan.route, vec![Vector2::new(1.55, 1.55)]);
        assert_eq!(plan.altitude_setpoints.len(), 41);
        assert!(!plan.descend_in_place);
    }

    #[test]
    fn blocked_nearest_zone_falls_back() {
        // zone 0 enclosed by a ring of walls, zone 1 open
        let mut cells = vec![false; 30 * 30];
        for i in 0..30 * 30 {
            let (x, y) = ((i % 30) as i64, (i / 30) as i64);
            if (x - 5).abs().max((y - 5).abs()) == 3 {
                cells[i] = true;
            }
        }
        let grid = OccupancyGrid::from_cells(0.1, Vector2::zeros(), 30, 30, cells).unwrap();
        let zones = LandingZones::new(vec![Vector2::new(0.55, 0.55), Vector2::new(2.55, 2.55)]).unwrap();
        let plan = engage_failsafe(&pose_at(1.05, 1.05, 2.0), &zones, &grid, &EmergencyConfig::default()).unwrap();
        assert_eq!(plan.zone_index, Some(1));
        assert_eq!(plan.unreachable_zones, vec![0]);
        assert_eq!(*plan.route.last().unwrap(), Vector2::new(2.55, 2.55));
        for w in plan.route.windows(2) {
            assert!((w[1] - w[0]).norm() <= 0.1 + 1e-9);
        }
    }

    #[test]
    fn all_zones_blocked_descends_in_place() {
        let mut cells = vec![false; 20 * 20];
        for x in 0..20 {
            cells[10 * 20 + x] = true;
        }
        let grid = OccupancyGrid::from_cells(0.1, Vector2::zeros(), 20, 20, cells).unwrap();
        let zones = LandingZones::new(vec![Vector2::new(0.55, 1.55)]).unwrap();
        let plan = engage_failsafe(&pose_at(0.55, 0.35, 1.0), &zones, &grid, &EmergencyConfig::default()).unwrap();
        assert!(plan.descend_in_place);
        assert_eq!(plan.zone_index, None);
        assert_eq!(plan.target, Vector2::new(0.55, 0.35));
    }
}
