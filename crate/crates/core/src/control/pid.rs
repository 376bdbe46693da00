use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dynamics::QuadParams;

/// Per-axis PID gains for roll, pitch and yaw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PidGains {
    pub kp: [f64; 3],
    pub ki: [f64; 3],
    pub kd: [f64; 3],
    /// Symmetric clamp on each integrator state.
    pub integral_limit: f64,
}

impl Default for PidGains {
    /// Manually tuned attitude gains (roll, pitch, yaw).
    fn default() -> Self {
        Self {
            kp: [2.5, 2.5, 1.8],
            ki: [0.3, 0.3, 0.2],
            kd: [0.6, 0.6, 0.4],
            integral_limit: 1.0,
        }
    }
}

impl PidGains {
    pub fn validate(&self) -> crate::Result<()> {
        let all = self.kp.iter().chain(&self.ki).chain(&self.kd);
        if all.clone().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(crate::error::invalid("PID gains must be finite and non-negative"));
        }
        if !(self.integral_limit > 0.0) {
            return Err(crate::error::invalid("integral_limit must be positive"));
        }
        Ok(())
    }
}

/// Integrator state and previous error for the three attitude axes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PidMemory {
    pub integral: [f64; 3],
    pub prev_error: Option<[f64; 3]>,
}

/// Attitude PID with trapezoidal integration, clamp anti-windup and a
/// backward-difference derivative. The first call after a reset has no
/// derivative term.
pub fn pid_attitude(
    error: &Vector3<f64>,
    dt: f64,
    gains: &PidGains,
    memory: &PidMemory,
) -> (Vector3<f64>, PidMemory) {
    debug_assert!(dt > 0.0);
    let prev = memory.prev_error.unwrap_or([error.x, error.y, error.z]);
    let mut next = *memory;
    let mut out = Vector3::zeros();
    for i in 0..3 {
        let e = error[i];
        let integral = (memory.integral[i] + 0.5 * (e + prev[i]) * dt)
            .clamp(-gains.integral_limit, gains.integral_limit);
        next.integral[i] = integral;
        let de = (e - prev[i]) / dt;
        out[i] = gains.kp[i] * e + gains.ki[i] * integral + gains.kd[i] * de;
    }
    next.prev_error = Some([error.x, error.y, error.z]);
    (out, next)
}

/// Scalar PID gains for the altitude channel (output in newtons).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AltitudeGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub integral_limit: f64,
}

impl Default for AltitudeGains {
    fn default() -> Self {
        Self {
            kp: 12.0,
            ki: 4.0,
            kd: 7.0,
            integral_limit: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AxisMemory {
    pub integral: f64,
    pub prev_error: Option<f64>,
}

/// Collective thrust from gravity feed-forward plus PID on altitude error,
/// clipped to what four motors can deliver.
///
/// The derivative term acts on `z_rate_error` (reference minus measured
/// climb rate) rather than differencing the position error, so steps in the
/// reference or in the position estimate do not produce thrust spikes.
pub fn altitude_pid(
    z_error: f64,
    z_rate_error: f64,
    dt: f64,
    gains: &AltitudeGains,
    memory: &AxisMemory,
    params: &QuadParams,
) -> (f64, AxisMemory) {
    debug_assert!(dt > 0.0);
    let prev = memory.prev_error.unwrap_or(z_error);
    let integral = (memory.integral + 0.5 * (z_error + prev) * dt)
        .clamp(-gains.integral_limit, gains.integral_limit);
    let correction = gains.kp * z_error + gains.ki * integral + gains.kd * z_rate_error;
    let thrust = (params.weight() + correction).clamp(0.0, params.max_thrust());
    (
        thrust,
        AxisMemory {
            integral,
            prev_error: Some(z_error),
        },
    )
}
