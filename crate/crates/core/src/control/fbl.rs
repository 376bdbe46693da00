use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dynamics::{wrap_angle, QuadParams, RigidBodyState};

/// PD gains on the linearized angular-acceleration channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdGains {
    pub kp: [f64; 3],
    pub kd: [f64; 3],
}

impl Default for PdGains {
    fn default() -> Self {
        Self {
            kp: [30.0; 3],
            kd: [8.0; 3],
        }
    }
}

/// Feedback-linearizing attitude law.
///
/// A PD law sets the desired angular acceleration, then each torque adds
/// back the gyroscopic coupling so the closed loop is a decoupled double
/// integrator:
///
/// ```text
/// τφ = Ix φ̈_des + (Iy − Iz) θ̇ ψ̇
/// τθ = Iy θ̈_des + (Iz − Ix) φ̇ ψ̇
/// τψ = Iz ψ̈_des + (Ix − Iy) φ̇ θ̇
/// ```
///
/// The setpoint is constant between calls, so the error rate is `−η̇`.
pub fn fbl_pd_attitude(
    state: &RigidBodyState,
    setpoint: &Vector3<f64>,
    gains: &PdGains,
    params: &QuadParams,
) -> Vector3<f64> {
    let [ix, iy, iz] = params.inertia_diag;
    let w = state.attitude_rate;
    let mut accel = Vector3::zeros();
    for i in 0..3 {
        let e = wrap_angle(setpoint[i] - state.attitude[i]);
        accel[i] = gains.kp[i] * e - gains.kd[i] * w[i];
    }
    Vector3::new(
        ix * accel.x + (iy - iz) * w.y * w.z,
        iy * accel.y + (iz - ix) * w.x * w.z,
        iz * accel.z + (ix - iy) * w.x * w.y,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{angular_acceleration, QuadParams};
    use approx::assert_relative_eq;

    #[test]
    fn at_rest_on_setpoint_no_torque() {
        let t = fbl_pd_attitude(
            &RigidBodyState::default(),
            &Vector3::zeros(),
            &PdGains::default(),
            &QuadParams::default(),
        );
        assert_eq!(t, Vector3::zeros());
    }

    #[test]
    fn pure_cancellation_term() {
        let params = QuadParams::default();
        let state = RigidBodyState {
            attitude_rate: Vector3::new(0.0, 1.0, 1.0),
            ..Default::default()
        };
        let gains = PdGains {
            kp: [30.0; 3],
            kd: [0.0; 3],
        };
        let t = fbl_pd_attitude(&state, &Vector3::zeros(), &gains, &params);
        let [ix, iy, iz] = params.inertia_diag;
        assert_relative_eq!(t.x, (iy - iz) * 1.0 * 1.0);
        let _ = ix;
    }

    #[test]
    fn five_degree_roll_error() {
        let params = QuadParams::default();
        let e = 0.0873;
        let t = fbl_pd_attitude(
            &RigidBodyState::default(),
            &Vector3::new(e, 0.0, 0.0),
            &PdGains::default(),
            &params,
        );
        assert_relative_eq!(t.x, 0.01 * 30.0 * e, epsilon = 1e-15);
    }

    #[test]
    fn closed_loop_is_linear() {
        // resulting angular acceleration equals the PD demand exactly
        let params = QuadParams::default();
        let gains = PdGains::default();
        let state = RigidBodyState {
            attitude: Vector3::new(0.02, -0.03, 0.1),
            attitude_rate: Vector3::new(0.7, -1.3, 2.1),
            ..Default::default()
        };
        let sp = Vector3::new(0.05, 0.01, -0.2);
        let tau = fbl_pd_attitude(&state, &sp, &gains, &params);
        let alpha = angular_acceleration(&state.attitude_rate, &tau, &params);
        for i in 0..3 {
            let want = gains.kp[i] * (sp[i] - state.attitude[i]) - gains.kd[i] * state.attitude_rate[i];
            assert_relative_eq!(alpha[i], want, epsilon = 1e-9);
        }
    }
}
