//! Rigid-body quadrotor plant.
//!
//! The vehicle is modelled with Euler angles `(φ, θ, ψ)` whose rates are
//! integrated directly, translational forces expressed in the world frame and
//! a four-rotor mixer:
//!
//! ```text
//! T  = k_f (u1 + u2 + u3 + u4)
//! τφ = l k_f (u2 − u4)
//! τθ = l k_f (u3 − u1)
//! τψ = k_m (u1 − u2 + u3 − u4)
//! ```
//!
//! Motor commands `u_i` are dimensionless; `k_f` converts them to newtons.
//! Rotor faults scale each command by an effectiveness factor before mixing.

use nalgebra::{SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// 12-element state derivative `(ṗ, v̇, η̇, η̈)`.
pub type StateDerivative = SVector<f64, 12>;

/// Physical description of the vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadParams {
    pub mass_kg: f64,
    /// Principal moments `(Ix, Iy, Iz)` in kg·m².
    pub inertia_diag: [f64; 3],
    pub arm_length_m: f64,
    /// Newtons per unit command.
    pub thrust_coeff: f64,
    /// N·m per unit command.
    pub torque_coeff: f64,
    pub gravity: f64,
    /// Upper bound of each motor command.
    pub cmd_max: f64,
}

impl Default for QuadParams {
    fn default() -> Self {
        Self {
            mass_kg: 1.0,
            inertia_diag: [0.01, 0.01, 0.02],
            arm_length_m: 0.2,
            thrust_coeff: 3.0,
            torque_coeff: 0.05,
            gravity: 9.81,
            cmd_max: 2.0,
        }
    }
}

impl QuadParams {
    pub fn validate(&self) -> Result<()> {
        let scalars = [
            ("mass_kg", self.mass_kg),
            ("arm_length_m", self.arm_length_m),
            ("thrust_coeff", self.thrust_coeff),
            ("torque_coeff", self.torque_coeff),
            ("gravity", self.gravity),
            ("cmd_max", self.cmd_max),
            ("inertia_diag[0]", self.inertia_diag[0]),
            ("inertia_diag[1]", self.inertia_diag[1]),
            ("inertia_diag[2]", self.inertia_diag[2]),
        ];
        for (name, v) in scalars {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("{name} must be finite and positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn weight(&self) -> f64 {
        self.mass_kg * self.gravity
    }

    /// Thrust produced with every motor at `cmd_max`.
    pub fn max_thrust(&self) -> f64 {
        4.0 * self.thrust_coeff * self.cmd_max
    }

    /// Per-motor command that balances gravity with all four rotors healthy.
    pub fn hover_command(&self) -> f64 {
        self.weight() / (4.0 * self.thrust_coeff)
    }
}

/// Position, velocity, attitude and attitude rate of the airframe.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RigidBodyState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// Roll, pitch, yaw in radians, each wrapped to (−π, π].
    pub attitude: Vector3<f64>,
    pub attitude_rate: Vector3<f64>,
}

impl RigidBodyState {
    pub fn hovering_at(position: Vector3<f64>) -> Self {
        Self {
            position,
            ..Self::default()
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite())
    }

    pub fn to_vector(&self) -> SVector<f64, 12> {
        let mut v = SVector::<f64, 12>::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&self.position);
        v.fixed_rows_mut::<3>(3).copy_from(&self.velocity);
        v.fixed_rows_mut::<3>(6).copy_from(&self.attitude);
        v.fixed_rows_mut::<3>(9).copy_from(&self.attitude_rate);
        v
    }

    pub fn from_vector(v: &SVector<f64, 12>) -> Self {
        Self {
            position: v.fixed_rows::<3>(0).into_owned(),
            velocity: v.fixed_rows::<3>(3).into_owned(),
            attitude: v.fixed_rows::<3>(6).into_owned(),
            attitude_rate: v.fixed_rows::<3>(9).into_owned(),
        }
    }
}

/// Wraps an angle to (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    if a > -PI && a <= PI {
        return a;
    }
    let w = a - 2.0 * PI * ((a + PI) / (2.0 * PI)).floor();
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

/// Four motor commands, each in `[0, cmd_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MotorCommand {
    u: [f64; 4],
}

impl MotorCommand {
    pub fn new(u: [f64; 4], cmd_max: f64) -> Result<Self> {
        if u.iter().any(|&v| !(v.is_finite() && (0.0..=cmd_max).contains(&v))) {
            return Err(invalid(format!("motor command {u:?} outside [0, {cmd_max}]")));
        }
        Ok(Self { u })
    }

    /// Clamps every component into `[0, cmd_max]`; NaN maps to 0.
    pub fn clamped(u: [f64; 4], cmd_max: f64) -> Self {
        Self {
            u: u.map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, cmd_max) }),
        }
    }

    pub fn uniform(c: f64, cmd_max: f64) -> Result<Self> {
        Self::new([c; 4], cmd_max)
    }

    pub fn values(&self) -> [f64; 4] {
        self.u
    }

    /// Rotor `i`, 1-based.
    pub fn rotor(&self, i: usize) -> f64 {
        self.u[i - 1]
    }
}

/// Per-rotor effectiveness in `[0, 1]`; 1 is healthy, 0 is a dead rotor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultMask {
    effectiveness: [f64; 4],
}

impl Default for FaultMask {
    fn default() -> Self {
        Self::healthy()
    }
}

impl FaultMask {
    pub fn healthy() -> Self {
        Self {
            effectiveness: [1.0; 4],
        }
    }

    pub fn new(effectiveness: [f64; 4]) -> Result<Self> {
        if effectiveness.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return Err(invalid(format!("effectiveness {effectiveness:?} outside [0, 1]")));
        }
        Ok(Self { effectiveness })
    }

    /// Complete loss of rotor `rotor` (1-based).
    pub fn rotor_failed(rotor: usize) -> Result<Self> {
        if !(1..=4).contains(&rotor) {
            return Err(invalid(format!("rotor index {rotor} outside 1..=4")));
        }
        let mut effectiveness = [1.0; 4];
        effectiveness[rotor - 1] = 0.0;
        Ok(Self { effectiveness })
    }

    pub fn effectiveness(&self) -> [f64; 4] {
        self.effectiveness
    }

    pub fn is_healthy(&self) -> bool {
        self.effectiveness == [1.0; 4]
    }
}

/// Collective thrust and body torques.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Wrench {
    pub thrust: f64,
    pub torques: Vector3<f64>,
}

impl Wrench {
    pub fn new(thrust: f64, torques: Vector3<f64>) -> Self {
        Self { thrust, torques }
    }
}

/// Forward mixer: motor commands (after fault effectiveness) to wrench.
pub fn mix_forces(cmd: &MotorCommand, fault: &FaultMask, params: &QuadParams) -> Wrench {
    let e = fault.effectiveness;
    let [u1, u2, u3, u4] = [
        cmd.u[0] * e[0],
        cmd.u[1] * e[1],
        cmd.u[2] * e[2],
        cmd.u[3] * e[3],
    ];
    let lk = params.arm_length_m * params.thrust_coeff;
    Wrench {
        thrust: params.thrust_coeff * (u1 + u2 + u3 + u4),
        torques: Vector3::new(
            lk * (u2 - u4),
            lk * (u3 - u1),
            params.torque_coeff * (u1 - u2 + u3 - u4),
        ),
    }
}

/// Result of motor allocation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Allocation {
    pub command: MotorCommand,
    /// At least one motor was clipped into `[0, cmd_max]`.
    pub saturated: bool,
}

fn inverse_mix_raw(wrench: &Wrench, params: &QuadParams) -> [f64; 4] {
    let s = wrench.thrust / params.thrust_coeff;
    let a = wrench.torques.x / (params.arm_length_m * params.thrust_coeff);
    let b = wrench.torques.y / (params.arm_length_m * params.thrust_coeff);
    let c = wrench.torques.z / params.torque_coeff;
    // u1 + u3 = (s + c)/2, u2 + u4 = (s − c)/2, u2 − u4 = a, u3 − u1 = b
    let odd = 0.5 * (s + c);
    let even = 0.5 * (s - c);
    [
        0.5 * (odd - b),
        0.5 * (even + a),
        0.5 * (odd + b),
        0.5 * (even - a),
    ]
}

/// Inverts the mixer for a healthy airframe and clips into the command box.
pub fn inverse_mix(wrench: &Wrench, params: &QuadParams) -> Allocation {
    let raw = inverse_mix_raw(wrench, params);
    let command = MotorCommand::clamped(raw, params.cmd_max);
    let saturated = raw.iter().zip(command.u.iter()).any(|(r, c)| r != c);
    Allocation { command, saturated }
}

/// Allocation that gives up yaw torque first.
///
/// Thrust, roll and pitch are allocated exactly; the yaw torque is scaled
/// by the largest factor in `[0, 1]` that keeps every motor inside the box.
/// If even zero yaw does not fit, the yaw-free command is clipped.
pub fn inverse_mix_yaw_last(wrench: &Wrench, params: &QuadParams) -> Allocation {
    let base = inverse_mix_raw(&Wrench::new(wrench.thrust, Vector3::new(wrench.torques.x, wrench.torques.y, 0.0)), params);
    let c = 0.25 * wrench.torques.z / params.torque_coeff;
    let dir = [c, -c, c, -c];
    let fits = base.iter().all(|u| (0.0..=params.cmd_max).contains(u));
    if !fits {
        let command = MotorCommand::clamped(base, params.cmd_max);
        return Allocation {
            command,
            saturated: true,
        };
    }
    let mut scale: f64 = 1.0;
    for (u, d) in base.iter().zip(dir) {
        if d > 0.0 {
            scale = scale.min((params.cmd_max - u) / d);
        } else if d < 0.0 {
            scale = scale.min(-u / d);
        }
    }
    let scale = scale.clamp(0.0, 1.0);
    let raw = [0, 1, 2, 3].map(|i| base[i] + scale * dir[i]);
    Allocation {
        command: MotorCommand::clamped(raw, params.cmd_max),
        saturated: scale < 1.0,
    }
}

/// Angular accelerations from the Euler equations at the given rates.
pub fn angular_acceleration(rates: &Vector3<f64>, torques: &Vector3<f64>, params: &QuadParams) -> Vector3<f64> {
    let [ix, iy, iz] = params.inertia_diag;
    let (p, q, r) = (rates.x, rates.y, rates.z);
    Vector3::new(
        (torques.x - (iy - iz) * q * r) / ix,
        (torques.y - (iz - ix) * p * r) / iy,
        (torques.z - (ix - iy) * p * q) / iz,
    )
}

/// World-frame translational acceleration for a given thrust and attitude.
pub fn translational_acceleration(attitude: &Vector3<f64>, thrust: f64, params: &QuadParams) -> Vector3<f64> {
    let (sphi, cphi) = attitude.x.sin_cos();
    let (sth, cth) = attitude.y.sin_cos();
    let (spsi, cpsi) = attitude.z.sin_cos();
    let m = params.mass_kg;
    Vector3::new(
        -thrust * (cphi * sth * cpsi + sphi * spsi) / m,
        -thrust * (cphi * sth * spsi - sphi * cpsi) / m,
        thrust * cphi * cth / m - params.gravity,
    )
}

/// Time derivative of the 12-element state under a constant wrench.
pub fn derivatives(state: &RigidBodyState, wrench: &Wrench, params: &QuadParams) -> StateDerivative {
    let acc = translational_acceleration(&state.attitude, wrench.thrust, params);
    let alpha = angular_acceleration(&state.attitude_rate, &wrench.torques, params);
    let mut d = StateDerivative::zeros();
    d.fixed_rows_mut::<3>(0).copy_from(&state.velocity);
    d.fixed_rows_mut::<3>(3).copy_from(&acc);
    d.fixed_rows_mut::<3>(6).copy_from(&state.attitude_rate);
    d.fixed_rows_mut::<3>(9).copy_from(&alpha);
    d
}

/// Outcome of one integration step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub state: RigidBodyState,
    /// The vehicle reached the ground plane during this step.
    pub touchdown: bool,
}

/// Largest integration step accepted by [`step`].
pub const MAX_STEP_S: f64 = 0.01;

/// One classical RK4 step with the command held constant.
pub fn step(
    state: &RigidBodyState,
    cmd: &MotorCommand,
    fault: &FaultMask,
    dt: f64,
    params: &QuadParams,
) -> Result<StepResult> {
    if !(dt > 0.0 && dt <= MAX_STEP_S) {
        return Err(invalid(format!("dt = {dt} outside (0, {MAX_STEP_S}]")));
    }
    if !state.is_finite() {
        return Err(Error::Divergence { time_s: f64::NAN });
    }
    let wrench = mix_forces(cmd, fault, params);
    Ok(integrate_wrench(state, &wrench, dt, params, false))
}

/// RK4 step under a fixed wrench; `frozen_translation` zeroes the
/// translational derivative (attitude-only experiments).
pub(crate) fn integrate_wrench(
    state: &RigidBodyState,
    wrench: &Wrench,
    dt: f64,
    params: &QuadParams,
    frozen_translation: bool,
) -> StepResult {
    let f = |x: &SVector<f64, 12>| {
        let mut d = derivatives(&RigidBodyState::from_vector(x), wrench, params);
        if frozen_translation {
            d.fixed_rows_mut::<6>(0).fill(0.0);
        }
        d
    };
    let x0 = state.to_vector();
    let k1 = f(&x0);
    let k2 = f(&(x0 + k1 * (0.5 * dt)));
    let k3 = f(&(x0 + k2 * (0.5 * dt)));
    let k4 = f(&(x0 + k3 * dt));
    let x1 = x0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);

    let mut next = RigidBodyState::from_vector(&x1);
    next.attitude = next.attitude.map(wrap_angle);
    let mut touchdown = false;
    if !frozen_translation && next.position.z < 0.0 {
        next.position.z = 0.0;
        next.velocity = Vector3::zeros();
        touchdown = true;
    }
    StepResult {
        state: next,
        touchdown,
    }
}
