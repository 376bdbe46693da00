//! Attitude and position control laws.
//!
//! Three inner-loop attitude laws share one signature shape: measured
//! state and attitude setpoint in, body torques out.
//!
//! - [`pid_attitude`]: per-axis PID on attitude error.
//! - [`fbl_pd_attitude`]: PD on angular acceleration with exact
//!   cancellation of the gyroscopic coupling.
//! - [`lqr_attitude`]: state feedback from the hover LQR design.
//!
//! The outer loop turns position error into roll/pitch setpoints and a
//! separate PID closes altitude.

mod fbl;
mod lqr;
mod metrics;
mod outer;
mod pid;

pub use fbl::{fbl_pd_attitude, PdGains};
pub use lqr::{
    care_residual, linearize_hover, linearize_spinning, lqr_attitude, regulation_error, solve_care, solve_lqr,
    solve_spin_lqr, spin_tilt_attitude, CareSolution, GainMatrix, LinearModel, LqrSolution, LqrWeights, SpinGain,
    HURWITZ_MARGIN, RESIDUAL_TOL,
};
pub use metrics::{step_metrics, MetricsConfig, StepMetrics};
pub use outer::{horizontal_acceleration, outer_loop_pd, tilt_for_acceleration, OuterLoopGains};
pub use pid::{altitude_pid, pid_attitude, AltitudeGains, AxisMemory, PidGains, PidMemory};

use serde::{Deserialize, Serialize};

/// Which inner attitude law closes the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Pid,
    FblPd,
    Lqr,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 3] = [ControllerKind::Pid, ControllerKind::FblPd, ControllerKind::Lqr];

    pub fn label(&self) -> &'static str {
        match self {
            ControllerKind::Pid => "PID",
            ControllerKind::FblPd => "FBL+PD",
            ControllerKind::Lqr => "LQR",
        }
    }
}

/// Gain blocks for all three attitude laws.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttitudeGains {
    pub pid: PidGains,
    pub fbl: PdGains,
    pub lqr: LqrWeights,
}

/// Stateful wrapper that owns whichever law is active and its memory.
#[derive(Debug, Clone)]
pub enum AttitudeController {
    Pid { gains: PidGains, memory: PidMemory },
    FblPd { gains: PdGains },
    Lqr { gain: GainMatrix },
}

impl AttitudeController {
    pub fn new(
        kind: ControllerKind,
        gains: &AttitudeGains,
        params: &crate::dynamics::QuadParams,
    ) -> crate::Result<Self> {
        Ok(match kind {
            ControllerKind::Pid => {
                gains.pid.validate()?;
                AttitudeController::Pid {
                    gains: gains.pid,
                    memory: PidMemory::default(),
                }
            }
            ControllerKind::FblPd => AttitudeController::FblPd { gains: gains.fbl },
            ControllerKind::Lqr => AttitudeController::Lqr {
                gain: solve_lqr(&linearize_hover(params), &gains.lqr)?.gain,
            },
        })
    }

    pub fn kind(&self) -> ControllerKind {
        match self {
            AttitudeController::Pid { .. } => ControllerKind::Pid,
            AttitudeController::FblPd { .. } => ControllerKind::FblPd,
            AttitudeController::Lqr { .. } => ControllerKind::Lqr,
        }
    }

    /// Body torques for the current state; `dt` is the time since the last call.
    pub fn torques(
        &mut self,
        state: &crate::dynamics::RigidBodyState,
        setpoint: &nalgebra::Vector3<f64>,
        dt: f64,
        params: &crate::dynamics::QuadParams,
    ) -> nalgebra::Vector3<f64> {
        match self {
            AttitudeController::Pid { gains, memory } => {
                let error = nalgebra::Vector3::from_fn(|i, _| {
                    crate::dynamics::wrap_angle(setpoint[i] - state.attitude[i])
                });
                let (out, next) = pid_attitude(&error, dt, gains, memory);
                *memory = next;
                out
            }
            AttitudeController::FblPd { gains } => fbl_pd_attitude(state, setpoint, gains, params),
            AttitudeController::Lqr { gain } => lqr_attitude(state, setpoint, gain),
        }
    }
}
