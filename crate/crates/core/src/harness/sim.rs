//! Closed-loop scenario runs.
//!
//! One run is a single integer-tick loop at 1 kHz:
//!
//! | every      | what                                                  |
//! |------------|-------------------------------------------------------|
//! | 1 ms       | dynamics step, attitude law, motor allocation         |
//! | 10 ms      | position and altitude loops, trace record             |
//! | 100 ms     | pose estimate (default rate), FDI monitor             |
//! | 1 s        | mission replanning from the estimated pose            |
//!
//! The position estimate is a complementary filter: it is propagated with
//! the measured velocity every step and pulled towards each pose sample.

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::{
    altitude_pid, horizontal_acceleration, solve_spin_lqr, spin_tilt_attitude, tilt_for_acceleration,
    AttitudeController, AxisMemory, ControllerKind, SpinGain, StepMetrics,
};
use crate::dynamics::{
    integrate_wrench, inverse_mix_yaw_last, mix_forces, FaultMask, MotorCommand, RigidBodyState, Wrench,
};
use crate::error::{invalid, Error, Result};
use crate::estimation::{sample_pose, EstimatorState, Pose};
use crate::fdi::{engage_failsafe, failsafe_allocate, fdi_step, EmergencyPlan, FdiObservation, FdiStatus};
use crate::planning::{dijkstra, inflate, interpolate, Connectivity, LandingZones, OccupancyGrid, Path};

use super::config::{ScenarioConfig, ScenarioKind, INTEGRATION_DT_S, STEPS_PER_CONTROL_TICK};
use super::maps::load_map;
use super::step::step_response_experiment;

/// Reference acceleration limit of the path follower, m/s².
const FOLLOW_ACCEL: f64 = 0.5;
/// The reference stops advancing when it leads the estimate by more than this.
const MAX_LEAD_M: f64 = 1.0;
/// Descent starts at most this long after the emergency route ends.
const ARRIVAL_TIMEOUT_S: f64 = 2.0;
/// Descent waits until altitude is within this band of the hold level and
/// barely moving, or until the settle timeout expires.
const SETTLE_BAND_M: f64 = 0.05;
const SETTLE_RATE_M_S: f64 = 0.1;
const SETTLE_TIMEOUT_S: f64 = 5.0;
/// Touchdown limits for a successful recovery.
pub const RECOVERY_MAX_OFFSET_M: f64 = 1.2;
pub const RECOVERY_MAX_TILT_RAD: f64 = std::f64::consts::FRAC_PI_3;
pub const RECOVERY_MAX_IMPACT_M_S: f64 = 2.0;
/// Seed offset of the fault-time jitter stream.
/// Torque weight multiplier on the failed rotor's axis in the spin LQR.
const FAILED_AXIS_R_SCALE: f64 = 1000.0;

const FAULT_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlightMode {
    Mission,
    Failsafe,
    Landed,
}

impl FlightMode {
    pub fn label(&self) -> &'static str {
        match self {
            FlightMode::Mission => "mission",
            FlightMode::Failsafe => "failsafe",
            FlightMode::Landed => "landed",
        }
    }
}

/// One control tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub state: RigidBodyState,
    /// Fused position estimate.
    pub estimate: Vector3<f64>,
    pub position_setpoint: Vector3<f64>,
    /// Roll and pitch setpoint of the most recent inner-loop step.
    pub tilt_setpoint: (f64, f64),
    pub command: MotorCommand,
    pub fault_flag: bool,
    pub suspected_rotor: Option<usize>,
    pub mode: FlightMode,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    /// Mission route planned at start-up.
    pub mission_plan: Vec<Vector2<f64>>,
    pub emergency_route: Option<Vec<Vector2<f64>>>,
    /// Times at which the estimator emitted a pose.
    pub estimator_times: Vec<f64>,
    /// Times at which the fault monitor ran.
    pub fdi_times: Vec<f64>,
}

/// Scalar outcome of a run. Optional fields are present only when they
/// apply to the scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub scenario: ScenarioKind,
    pub controller: ControllerKind,
    pub seed: u64,
    pub config_hash: String,
    pub fault_injection_time_s: Option<f64>,
    pub detection_time_s: Option<f64>,
    /// Detection time minus injection time.
    pub detection_latency_s: Option<f64>,
    pub suspected_rotor: Option<usize>,
    /// The monitor fired with no fault present.
    pub false_positive: bool,
    pub path_deviation_avg_m: Option<f64>,
    pub path_deviation_max_m: Option<f64>,
    pub touchdown_offset_m: Option<f64>,
    pub navigation_success: bool,
    pub relocalization_events: u32,
    pub landing_zone: Option<usize>,
    pub descend_in_place: bool,
    /// RMS of true altitude against the descent ramp.
    pub descent_rms_m: Option<f64>,
    pub impact_speed_m_s: Option<f64>,
    pub touchdown_tilt_rad: Option<f64>,
    pub touchdown_time_s: Option<f64>,
    pub recovery_success: Option<bool>,
    pub step_metrics: Option<StepMetrics>,
}

impl RunMetrics {
    fn empty(cfg: &ScenarioConfig) -> Self {
        Self {
            scenario: cfg.scenario.kind,
            controller: cfg.scenario.controller,
            seed: cfg.seed,
            config_hash: cfg.hash(),
            fault_injection_time_s: None,
            detection_time_s: None,
            detection_latency_s: None,
            suspected_rotor: None,
            false_positive: false,
            path_deviation_avg_m: None,
            path_deviation_max_m: None,
            touchdown_offset_m: None,
            navigation_success: false,
            relocalization_events: 0,
            landing_zone: None,
            descend_in_place: false,
            descent_rms_m: None,
            impact_speed_m_s: None,
            touchdown_tilt_rad: None,
            touchdown_time_s: None,
            recovery_success: None,
            step_metrics: None,
        }
    }
}

/// Arc-length reference along a polyline with a trapezoidal speed profile.
#[derive(Debug, Clone)]
struct Follower {
    points: Vec<Vector2<f64>>,
    cumulative: Vec<f64>,
    s: f64,
    speed: f64,
}

impl Follower {
    fn new(points: Vec<Vector2<f64>>, speed: f64) -> Self {
        let mut cumulative = vec![0.0];
        for w in points.windows(2) {
            cumulative.push(cumulative.last().unwrap() + (w[1] - w[0]).norm());
        }
        Self {
            points,
            cumulative,
            s: 0.0,
            speed,
        }
    }

    fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    fn remaining(&self) -> f64 {
        (self.length() - self.s).max(0.0)
    }

    fn at_end(&self) -> bool {
        self.remaining() <= 1e-9
    }

    /// Point and unit tangent at arc length `s`.
    fn sample(&self, s: f64) -> (Vector2<f64>, Vector2<f64>) {
        if self.points.len() < 2 {
            return (self.points[0], Vector2::zeros());
        }
        let s = s.clamp(0.0, self.length());
        let i = match self.cumulative.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => i.min(self.points.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.points.len() - 2),
        };
        let seg = self.points[i + 1] - self.points[i];
        let len = seg.norm();
        if len == 0.0 {
            return (self.points[i], Vector2::zeros());
        }
        let tangent = seg / len;
        (self.points[i] + tangent * (s - self.cumulative[i]), tangent)
    }

    /// Arc length of the point of the polyline closest to `p`.
    fn project(&self, p: &Vector2<f64>) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        for (i, w) in self.points.windows(2).enumerate() {
            let ab = w[1] - w[0];
            let len2 = ab.norm_squared();
            let t = if len2 > 0.0 { ((p - w[0]).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
            let d = (p - (w[0] + ab * t)).norm();
            if d < best.0 {
                best = (d, self.cumulative[i] + t * len2.sqrt());
            }
        }
        best.1
    }

    /// Moves the reference one control tick and returns position and velocity.
    fn advance(&mut self, estimate: &Vector2<f64>, current_speed: &mut f64, dt: f64) -> (Vector2<f64>, Vector2<f64>) {
        let (here, _) = self.sample(self.s);
        let stalled = (here - estimate).norm() > MAX_LEAD_M;
        let braking = (2.0 * FOLLOW_ACCEL * self.remaining()).sqrt();
        let target = if stalled { 0.0 } else { self.speed.min(braking) };
        *current_speed = if target > *current_speed {
            (*current_speed + FOLLOW_ACCEL * dt).min(target)
        } else {
            target
        };
        self.s = (self.s + *current_speed * dt).min(self.length());
        let (point, tangent) = self.sample(self.s);
        let v = if self.at_end() { Vector2::zeros() } else { tangent * *current_speed };
        (point, v)
    }
}

/// Route from `from` to `to` over `grid`: the current position, the cell
/// centers between, then the exact target, densified to `spacing`.
fn plan_route(
    grid: &OccupancyGrid,
    from: &Vector2<f64>,
    to: &Vector2<f64>,
    connectivity: Connectivity,
    spacing: f64,
    snap: usize,
) -> Result<Option<Vec<Vector2<f64>>>> {
    let Some(start) = grid.world_to_cell(from).and_then(|c| grid.nearest_free(c, snap)) else {
        return Ok(None);
    };
    let Some(goal) = grid.world_to_cell(to) else {
        return Ok(None);
    };
    let Some(gp) = dijkstra(grid, start, goal, connectivity)? else {
        return Ok(None);
    };
    let mut waypoints = vec![*from];
    waypoints.extend(gp.to_path(grid).waypoints.into_iter().skip(1));
    if waypoints.len() > 1 {
        waypoints.pop();
    }
    if waypoints.last() != Some(to) {
        waypoints.push(*to);
    }
    Ok(Some(interpolate(&Path { waypoints }, spacing)?))
}

/// Everything that stays fixed during a run.
struct Setup {
    grid: OccupancyGrid,
    zones: Option<LandingZones>,
    goals: Vec<Vector2<f64>>,
    mission_plan: Vec<Vector2<f64>>,
    first_leg: Vec<Vector2<f64>>,
    fault: Option<(u64, usize)>,
}

fn prepare(cfg: &ScenarioConfig) -> Result<Setup> {
    let raw = load_map(&cfg.map, &cfg.planning, cfg)?;
    let grid = inflate(&raw, cfg.planning.inflation_radius_m);
    let predefined = if cfg.map.landing_zones.is_empty() {
        None
    } else {
        let zones = cfg.map.landing_zones.iter().map(|z| Vector2::new(z[0], z[1])).collect();
        Some(LandingZones::new(zones)?.validated_on(&grid)?)
    };
    let detected = cfg
        .map
        .zone_detection_clearance_m
        .and_then(|c| LandingZones::detect(&grid, c));
    let zones = LandingZones::merged(predefined, detected);

    let waypoints = cfg.waypoints();
    let p = &cfg.planning;
    let mut mission_plan = vec![waypoints[0]];
    let mut first_leg = vec![waypoints[0]];
    for (k, pair) in waypoints.windows(2).enumerate() {
        let leg = plan_route(&grid, &pair[0], &pair[1], p.connectivity, p.waypoint_spacing_m, p.start_snap_cells)?
            .ok_or_else(|| invalid(format!("no path from waypoint {k} to waypoint {}", k + 1)))?;
        if k == 0 {
            first_leg = leg.clone();
        }
        mission_plan.extend(leg.into_iter().skip(1));
    }

    let fault = match &cfg.fault {
        None => None,
        Some(f) => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ FAULT_STREAM);
            let jitter = if f.jitter_s > 0.0 { rng.random_range(-f.jitter_s..=f.jitter_s) } else { 0.0 };
            let tick = ((f.time_s + jitter) / INTEGRATION_DT_S).round() as u64;
            Some((tick, f.rotor))
        }
    };
    Ok(Setup {
        grid,
        zones,
        goals: waypoints[1..].to_vec(),
        mission_plan,
        first_leg,
        fault,
    })
}

/// Failsafe progress after the emergency plan is in place.
struct Emergency {
    plan: EmergencyPlan,
    follower: Follower,
    speed: f64,
    rotor: usize,
    hold_altitude: f64,
    route_end_s: Option<f64>,
    descent_start_s: Option<f64>,
    gain: SpinGain,
}

/// Runs one scenario to completion or touchdown.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<(RunMetrics, RunTrace)> {
    cfg.validate()?;
    if cfg.scenario.kind == ScenarioKind::StepResponse {
        return run_step_scenario(cfg);
    }
    let params = &cfg.dynamics;
    let setup = prepare(cfg)?;
    let dt = INTEGRATION_DT_S;
    let control_dt = dt * STEPS_PER_CONTROL_TICK as f64;
    let total_ticks = (cfg.scenario.duration_s / dt).round() as u64;
    let fdi_period = cfg.fdi_period_steps();
    let replan_period = cfg.replan_period_steps();
    let estimator_period = ((1.0 / cfg.estimation.output_rate_hz) / dt).round().max(1.0) as u64;
    let outer = &cfg.control.outer;
    let alpha = cfg.scenario.pose_fusion_gain;
    let cruise_z = cfg.scenario.cruise_altitude_m;
    let emergency_cfg = cfg.planning.emergency();

    let start = cfg.waypoints()[0];
    let mut state = RigidBodyState::hovering_at(Vector3::new(start.x, start.y, cruise_z));
    let mut estimate = state.position;
    let mut estimator = EstimatorState::new(cfg.seed, &cfg.estimation);
    let mut attitude = AttitudeController::new(cfg.scenario.controller, &cfg.control.attitude(), params)?;
    let mut fault_mask = FaultMask::healthy();
    let mut fdi = FdiStatus::default();
    let mut mode = FlightMode::Mission;

    let mut goal_index = 0usize;
    let mut follower = Follower::new(setup.first_leg.clone(), cfg.scenario.cruise_speed_m_s);
    let mut ref_speed = 0.0;
    let mut emergency: Option<Emergency> = None;

    let mut altitude_memory = AxisMemory::default();
    let mut thrust = params.weight();
    let mut accel_des = Vector2::zeros();
    let mut position_ref = state.position;
    let mut tilt;
    let mut command = MotorCommand::uniform(params.hover_command(), params.cmd_max)?;

    let mut window_sum = [0.0; 4];
    let mut window_len = 0u32;
    let mut rate_prev = state.attitude_rate;

    let mut metrics = RunMetrics::empty(cfg);
    let mut trace = RunTrace {
        mission_plan: setup.mission_plan.clone(),
        ..Default::default()
    };
    let mission_path = Path {
        waypoints: setup.mission_plan.clone(),
    };
    let mut deviation_sum = 0.0;
    let mut deviation_max: f64 = 0.0;
    let mut deviation_n = 0usize;
    let mut descent_sq = 0.0;
    let mut descent_n = 0usize;
    let mut reached_zone = false;

    for k in 0..total_ticks {
        let t = k as f64 * dt;

        if let Some((tick, rotor)) = setup.fault {
            if k == tick {
                fault_mask = FaultMask::rotor_failed(rotor)?;
                metrics.fault_injection_time_s = Some(t);
            }
        }

        if k % estimator_period == 0 {
            if let Some(sample) = sample_pose(&state, &cfg.estimation, &mut estimator, t) {
                estimate += (sample.pose.translation - estimate) * alpha;
                trace.estimator_times.push(t);
            }
        }

        if k > 0 && k % fdi_period == 0 && mode == FlightMode::Mission {
            let n = window_len.max(1) as f64;
            let obs = FdiObservation {
                commanded: MotorCommand::clamped(window_sum.map(|s| s / n), params.cmd_max),
                measured_rates: state.attitude_rate,
                measured_rate_prev: rate_prev,
                rpm: cfg
                    .fdi
                    .rpm_feedback_enabled
                    .then(|| [0, 1, 2, 3].map(|i| command.values()[i] * fault_mask.effectiveness()[i])),
            };
            fdi = fdi_step(&obs, &cfg.fdi, &fdi, t, params);
            trace.fdi_times.push(t);
            if fdi.fault_flag {
                mode = FlightMode::Failsafe;
                let rotor = fdi.suspected_rotor.expect("flag implies suspect");
                let pose = Pose {
                    translation: estimate,
                    ..Pose::from_state(&state)
                };
                let plan = match &setup.zones {
                    Some(zones) => engage_failsafe(&pose, zones, &setup.grid, &emergency_cfg)?,
                    None => descend_in_place_plan(&pose, &emergency_cfg)?,
                };
                let gain = failsafe_gain(params, &cfg.control.lqr, state.attitude_rate.z, rotor, None)?;
                altitude_memory = AxisMemory::default();
                emergency = Some(Emergency {
                    follower: Follower::new(plan.route.clone(), cfg.scenario.emergency_speed_m_s),
                    speed: 0.0,
                    rotor,
                    hold_altitude: plan.descent.z0,
                    route_end_s: None,
                    descent_start_s: None,
                    gain,
                    plan,
                });
                trace.emergency_route = emergency.as_ref().map(|e| e.plan.route.clone());
            }
        }
        if k % fdi_period == 0 {
            rate_prev = state.attitude_rate;
            window_sum = [0.0; 4];
            window_len = 0;
        }

        if k > 0 && k % replan_period == 0 && mode == FlightMode::Mission {
            let p = &cfg.planning;
            let goal = setup.goals.get(goal_index).copied().unwrap_or(start);
            if let Some(route) = plan_route(
                &setup.grid,
                &estimate.xy(),
                &goal,
                p.connectivity,
                p.waypoint_spacing_m,
                p.start_snap_cells,
            )? {
                let (carrot, _) = follower.sample(follower.s);
                let mut next = Follower::new(route, cfg.scenario.cruise_speed_m_s);
                next.s = next.project(&carrot);
                follower = next;
            }
        }

        let control_tick = k % STEPS_PER_CONTROL_TICK == 0;
        if control_tick {
            let est_xy = estimate.xy();
            let (xy_ref, v_ref, z_ref, vz_ref, gains) = match emergency.as_mut() {
                None => {
                    let (p, v) = follower.advance(&est_xy, &mut ref_speed, control_dt);
                    if follower.at_end() && goal_index + 1 < setup.goals.len() {
                        let goal = setup.goals[goal_index];
                        if (state.position.xy() - goal).norm() <= cfg.scenario.arrival_tolerance_m {
                            goal_index += 1;
                            let p = &cfg.planning;
                            if let Some(route) = plan_route(
                                &setup.grid,
                                &est_xy,
                                &setup.goals[goal_index],
                                p.connectivity,
                                p.waypoint_spacing_m,
                                p.start_snap_cells,
                            )? {
                                follower = Follower::new(route, cfg.scenario.cruise_speed_m_s);
                                ref_speed = 0.0;
                            }
                        }
                    }
                    (p, v, cruise_z, 0.0, (outer.kp_xy, outer.kd_xy))
                }
                Some(em) => {
                    let (p, v) = em.follower.advance(&est_xy, &mut em.speed, control_dt);
                    if em.follower.at_end() && em.route_end_s.is_none() {
                        em.route_end_s = Some(t);
                    }
                    if let (Some(end), None) = (em.route_end_s, em.descent_start_s) {
                        let close = (est_xy - em.plan.target).norm() <= cfg.scenario.arrival_tolerance_m;
                        let settled = (estimate.z - em.hold_altitude).abs() <= SETTLE_BAND_M
                            && state.velocity.z.abs() <= SETTLE_RATE_M_S;
                        let waited = t - end;
                        if (close || waited >= ARRIVAL_TIMEOUT_S) && (settled || waited >= SETTLE_TIMEOUT_S) {
                            em.descent_start_s = Some(t);
                        }
                    }
                    let (z, vz) = match em.descent_start_s {
                        // the ramp continues below ground so contact happens at descent speed
                        Some(t0) => (em.hold_altitude - em.plan.descent.v_desc * (t - t0), -em.plan.descent.v_desc),
                        None => (em.hold_altitude, 0.0),
                    };
                    if let Ok(g) = failsafe_gain(params, &cfg.control.lqr, state.attitude_rate.z, em.rotor, Some(&em.gain)) {
                        em.gain = g;
                    }
                    (p, v, z, vz, (outer.failsafe_kp_xy, outer.failsafe_kd_xy))
                }
            };
            let gains_now = crate::control::OuterLoopGains {
                kp_xy: gains.0,
                kd_xy: gains.1,
                ..*outer
            };
            let pos_err = Vector3::new(xy_ref.x - estimate.x, xy_ref.y - estimate.y, 0.0);
            let vel_err = Vector3::new(v_ref.x - state.velocity.x, v_ref.y - state.velocity.y, 0.0);
            accel_des = horizontal_acceleration(&pos_err, &vel_err, &gains_now);
            let (t_raw, mem) = altitude_pid(
                z_ref - estimate.z,
                vz_ref - state.velocity.z,
                control_dt,
                &outer.altitude,
                &altitude_memory,
                params,
            );
            // conditional integration: a motor at its limit cannot act on more integral
            let saturated = command.values().iter().any(|&u| u >= params.cmd_max - 1e-9);
            altitude_memory = if saturated {
                AxisMemory {
                    integral: altitude_memory.integral,
                    ..mem
                }
            } else {
                mem
            };
            let tilt_cos = (state.attitude.x.cos() * state.attitude.y.cos()).max(0.5);
            thrust = (t_raw / tilt_cos).clamp(0.0, params.max_thrust());
            position_ref = Vector3::new(xy_ref.x, xy_ref.y, z_ref.max(0.0));

            if mode != FlightMode::Mission {
                if let Some(em) = &emergency {
                    if (state.position.xy() - em.plan.target).norm() <= cfg.scenario.arrival_tolerance_m {
                        reached_zone = true;
                    }
                    if let Some(t0) = em.descent_start_s {
                        let ramp = em.plan.descent.altitude_at(t - t0);
                        descent_sq += (state.position.z - ramp).powi(2);
                        descent_n += 1;
                    }
                }
            }
            let deviation = match (&emergency, mode) {
                (Some(em), FlightMode::Failsafe) => Path {
                    waypoints: em.plan.route.clone(),
                }
                .distance_to(&state.position.xy()),
                _ => mission_path.distance_to(&state.position.xy()),
            };
            deviation_sum += deviation;
            deviation_max = deviation_max.max(deviation);
            deviation_n += 1;
        }

        // inner loop
        let thrust_for_tilt = thrust.max(0.1 * params.weight());
        tilt = tilt_for_acceleration(&accel_des, state.attitude.z, thrust_for_tilt, outer.tilt_limit_rad, params);
        command = match &emergency {
            None => {
                let setpoint = Vector3::new(tilt.0, tilt.1, 0.0);
                let torques = attitude.torques(&state, &setpoint, dt, params);
                inverse_mix_yaw_last(&Wrench::new(thrust, torques), params).command
            }
            Some(em) => {
                let (tp, tq) = spin_tilt_attitude(&state, tilt, &em.gain, params);
                failsafe_allocate(&Wrench::new(thrust, Vector3::new(tp, tq, 0.0)), em.rotor, params)?
            }
        };
        for (s, u) in window_sum.iter_mut().zip(command.values()) {
            *s += u;
        }
        window_len += 1;

        if control_tick {
            trace.records.push(TraceRecord {
                t,
                state,
                estimate,
                position_setpoint: position_ref,
                tilt_setpoint: tilt,
                command,
                fault_flag: fdi.fault_flag,
                suspected_rotor: fdi.suspected_rotor,
                mode,
            });
        }

        let impact_velocity = state.velocity;
        let wrench = mix_forces(&command, &fault_mask, params);
        let result = integrate_wrench(&state, &wrench, dt, params, false);
        if !result.state.is_finite() {
            return Err(Error::Divergence { time_s: t });
        }
        state = result.state;
        estimate += state.velocity * dt;
        if result.touchdown {
            let t_land = t + dt;
            let failsafe_landing = mode == FlightMode::Failsafe;
            mode = FlightMode::Landed;
            trace.records.push(TraceRecord {
                t: t_land,
                state,
                estimate,
                position_setpoint: position_ref,
                tilt_setpoint: tilt,
                command,
                fault_flag: fdi.fault_flag,
                suspected_rotor: fdi.suspected_rotor,
                mode,
            });
            metrics.touchdown_time_s = Some(t_land);
            metrics.impact_speed_m_s = Some(impact_velocity.z.abs());
            metrics.touchdown_tilt_rad = Some(state.attitude.x.abs().max(state.attitude.y.abs()));
            if failsafe_landing {
                let em = emergency.as_ref().expect("failsafe has a plan");
                metrics.touchdown_offset_m = Some((state.position.xy() - em.plan.target).norm());
            }
            break;
        }
    }

    let _ = mode;
    metrics.relocalization_events = estimator.relocalization_count;
    metrics.detection_time_s = fdi.detection_time_s;
    metrics.suspected_rotor = fdi.suspected_rotor;
    metrics.detection_latency_s = match (fdi.detection_time_s, metrics.fault_injection_time_s) {
        (Some(d), Some(i)) if d >= i => Some(d - i),
        _ => None,
    };
    metrics.false_positive = match (fdi.detection_time_s, metrics.fault_injection_time_s) {
        (Some(_), None) => true,
        (Some(d), Some(i)) => d < i,
        (None, _) => false,
    };
    if deviation_n > 0 {
        metrics.path_deviation_avg_m = Some(deviation_sum / deviation_n as f64);
        metrics.path_deviation_max_m = Some(deviation_max);
    }
    if descent_n > 0 {
        metrics.descent_rms_m = Some((descent_sq / descent_n as f64).sqrt());
    }
    if let Some(em) = &emergency {
        metrics.landing_zone = em.plan.zone_index;
        metrics.descend_in_place = em.plan.descend_in_place;
        metrics.navigation_success = reached_zone;
    } else if let Some(goal) = setup.goals.last() {
        metrics.navigation_success = goal_index + 1 == setup.goals.len()
            && trace
                .records
                .iter()
                .any(|r| (r.state.position.xy() - goal).norm() <= cfg.scenario.arrival_tolerance_m);
    } else {
        metrics.navigation_success = trace
            .records
            .iter()
            .all(|r| (r.state.position.xy() - start).norm() <= cfg.scenario.arrival_tolerance_m);
    }
    if metrics.fault_injection_time_s.is_some() {
        metrics.recovery_success = Some(match (metrics.touchdown_offset_m, metrics.impact_speed_m_s) {
            (Some(offset), Some(impact)) => {
                offset <= RECOVERY_MAX_OFFSET_M
                    && impact <= RECOVERY_MAX_IMPACT_M_S
                    && metrics.touchdown_tilt_rad.is_some_and(|a| a < RECOVERY_MAX_TILT_RAD)
            }
            _ => false,
        });
    }
    Ok((metrics, trace))
}

/// Spin gain for a failed `rotor`. Its axis can only be pushed one way,
/// by the opposite rotor, so that torque is made expensive and the gain
/// levels the vehicle mostly through the other axis and the spin coupling.
fn failsafe_gain(
    params: &crate::dynamics::QuadParams,
    weights: &crate::control::LqrWeights,
    yaw_rate: f64,
    rotor: usize,
    warm: Option<&SpinGain>,
) -> Result<SpinGain> {
    let mut w = *weights;
    let failed_axis = if rotor % 2 == 0 { 0 } else { 1 };
    w.r_diag[failed_axis] *= FAILED_AXIS_R_SCALE;
    solve_spin_lqr(params, &w, yaw_rate, warm)
}

fn descend_in_place_plan(pose: &Pose, cfg: &crate::fdi::EmergencyConfig) -> Result<EmergencyPlan> {
    let here = pose.translation.xy();
    let descent = crate::planning::DescentProfile {
        z0: pose.translation.z.max(0.0),
        v_desc: cfg.v_desc,
        dt: cfg.descent_dt,
    };
    Ok(EmergencyPlan {
        zone_index: None,
        target: here,
        route: vec![here],
        grid_path: None,
        altitude_setpoints: crate::planning::descent_setpoints(&descent)?,
        descent,
        descend_in_place: true,
        unreachable_zones: Vec::new(),
    })
}

fn run_step_scenario(cfg: &ScenarioConfig) -> Result<(RunMetrics, RunTrace)> {
    let run = step_response_experiment(cfg.scenario.controller, cfg)?;
    let mut metrics = RunMetrics::empty(cfg);
    metrics.step_metrics = Some(run.metrics);
    let records = run
        .samples
        .iter()
        .step_by(STEPS_PER_CONTROL_TICK as usize)
        .map(|s| TraceRecord {
            t: s.t,
            state: s.state,
            estimate: s.state.position,
            position_setpoint: s.state.position,
            tilt_setpoint: (run.step_rad, 0.0),
            command: s.command,
            fault_flag: false,
            suspected_rotor: None,
            mode: FlightMode::Mission,
        })
        .collect();
    Ok((
        metrics,
        RunTrace {
            records,
            ..Default::default()
        },
    ))
}
