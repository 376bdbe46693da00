use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::pid::AltitudeGains;
use crate::dynamics::QuadParams;

/// Position-loop gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OuterLoopGains {
    pub kp_xy: f64,
    pub kd_xy: f64,
    /// Softer position gains used after a rotor failure.
    pub failsafe_kp_xy: f64,
    pub failsafe_kd_xy: f64,
    pub altitude: AltitudeGains,
    /// Largest commanded roll or pitch, in `(0, π/4]`.
    pub tilt_limit_rad: f64,
}

impl Default for OuterLoopGains {
    fn default() -> Self {
        Self {
            kp_xy: 1.6,
            kd_xy: 2.0,
            failsafe_kp_xy: 1.0,
            failsafe_kd_xy: 1.5,
            altitude: AltitudeGains::default(),
            tilt_limit_rad: 20f64.to_radians(),
        }
    }
}

impl OuterLoopGains {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.tilt_limit_rad > 0.0 && self.tilt_limit_rad <= std::f64::consts::FRAC_PI_4) {
            return Err(crate::error::invalid("tilt_limit_rad must lie in (0, π/4]"));
        }
        if [self.kp_xy, self.kd_xy, self.failsafe_kp_xy, self.failsafe_kd_xy].iter().any(|g| !(*g >= 0.0)) {
            return Err(crate::error::invalid("outer-loop gains must be non-negative"));
        }
        Ok(())
    }
}

/// Desired world-frame horizontal acceleration from position and velocity error.
pub fn horizontal_acceleration(
    position_error: &Vector3<f64>,
    velocity_error: &Vector3<f64>,
    gains: &OuterLoopGains,
) -> Vector2<f64> {
    Vector2::new(
        gains.kp_xy * position_error.x + gains.kd_xy * velocity_error.x,
        gains.kp_xy * position_error.y + gains.kd_xy * velocity_error.y,
    )
}

/// Roll/pitch that produce world acceleration `accel` at heading `yaw`.
///
/// The demand is rotated into the heading frame and inverted through the
/// small-angle model `ẍ ≈ −(T/m)θ`, `ÿ ≈ (T/m)φ`.
pub fn tilt_for_acceleration(
    accel: &Vector2<f64>,
    yaw: f64,
    thrust: f64,
    tilt_limit_rad: f64,
    params: &QuadParams,
) -> (f64, f64) {
    debug_assert!(thrust > 0.0);
    let (s, c) = yaw.sin_cos();
    let forward = c * accel.x + s * accel.y;
    let left = -s * accel.x + c * accel.y;
    let scale = params.mass_kg / thrust;
    let phi = (scale * left).clamp(-tilt_limit_rad, tilt_limit_rad);
    let theta = (-scale * forward).clamp(-tilt_limit_rad, tilt_limit_rad);
    (phi, theta)
}

/// PD on horizontal position error, returning `(φ_cmd, θ_cmd)`.
pub fn outer_loop_pd(
    position_error: &Vector3<f64>,
    velocity_error: &Vector3<f64>,
    yaw: f64,
    thrust: f64,
    gains: &OuterLoopGains,
    params: &QuadParams,
) -> (f64, f64) {
    let accel = horizontal_acceleration(position_error, velocity_error, gains);
    tilt_for_acceleration(&accel, yaw, thrust, gains.tilt_limit_rad, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn run(e: Vector3<f64>, yaw: f64) -> (f64, f64) {
        let p = QuadParams::default();
        outer_loop_pd(&e, &Vector3::zeros(), yaw, p.weight(), &OuterLoopGains::default(), &p)
    }

    #[test]
    fn zero_error_level() {
        assert_eq!(run(Vector3::zeros(), 0.3), (0.0, 0.0));
    }

    #[test]
    fn forward_error_pitches_nose_down() {
        let (phi, theta) = run(Vector3::new(0.5, 0.0, 0.0), 0.0);
        assert!(theta < 0.0);
        assert_relative_eq!(phi, 0.0);
        let (phi, _) = run(Vector3::new(0.0, 0.5, 0.0), 0.0);
        assert!(phi > 0.0);
    }

    #[test]
    fn heading_rotates_commands() {
        // facing +y, an x error is a rightward error
        let (phi, theta) = run(Vector3::new(0.2, 0.0, 0.0), std::f64::consts::FRAC_PI_2);
        assert!(phi < 0.0);
        assert!(theta.abs() < 1e-12);
    }

    #[test]
    fn saturates_at_tilt_limit() {
        let lim = OuterLoopGains::default().tilt_limit_rad;
        let (phi, theta) = run(Vector3::new(100.0, -100.0, 0.0), 0.0);
        assert_eq!(theta, -lim);
        assert_eq!(phi, -lim);
    }

    #[test]
    fn commanded_tilt_produces_requested_acceleration() {
        use crate::dynamics::translational_acceleration;
        let p = QuadParams::default();
        let g = OuterLoopGains::default();
        let e = Vector3::new(0.03, -0.02, 0.0);
        let yaw = 0.7;
        let (phi, theta) = outer_loop_pd(&e, &Vector3::zeros(), yaw, p.weight(), &g, &p);
        let acc = translational_acceleration(&Vector3::new(phi, theta, yaw), p.weight(), &p);
        assert_relative_eq!(acc.x, g.kp_xy * e.x, max_relative = 1e-3);
        assert_relative_eq!(acc.y, g.kp_xy * e.y, max_relative = 1e-3);
    }
}
