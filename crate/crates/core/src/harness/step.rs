//! Attitude step-response comparison.

use nalgebra::Vector3;

use crate::control::{step_metrics, AttitudeController, ControllerKind, StepMetrics};
use crate::dynamics::{integrate_wrench, MotorCommand, RigidBodyState, Wrench};
use crate::error::{Error, Result};

use super::config::{ScenarioConfig, INTEGRATION_DT_S};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSample {
    pub t: f64,
    pub state: RigidBodyState,
    /// Motor command equivalent of the applied wrench, for the trace only.
    pub command: MotorCommand,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRun {
    pub controller: ControllerKind,
    pub step_rad: f64,
    pub metrics: StepMetrics,
    pub samples: Vec<StepSample>,
}

/// Roll step with translation frozen and the attitude law closed every
/// integration step. Torques reach the body directly, without motor limits,
/// so the comparison reflects the control laws rather than the mixer.
pub fn step_response_experiment(kind: ControllerKind, cfg: &ScenarioConfig) -> Result<StepRun> {
    let params = &cfg.dynamics;
    params.validate()?;
    let sr = &cfg.step_response;
    let step_rad = sr.step_deg.to_radians();
    let setpoint = Vector3::new(step_rad, 0.0, 0.0);
    let mut controller = AttitudeController::new(kind, &cfg.control.attitude(), params)?;
    let dt = INTEGRATION_DT_S;
    let n = (sr.duration_s / dt).round() as usize;
    let mut state = RigidBodyState::hovering_at(Vector3::new(0.0, 0.0, 1.0));
    let mut samples = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let t = k as f64 * dt;
        let torques = controller.torques(&state, &setpoint, dt, params);
        let wrench = Wrench::new(params.weight(), torques);
        let command = crate::dynamics::inverse_mix(&wrench, params).command;
        samples.push(StepSample { t, state, command });
        if k == n {
            break;
        }
        state = integrate_wrench(&state, &wrench, dt, params, true).state;
        if !state.is_finite() {
            return Err(Error::Divergence { time_s: t });
        }
    }
    let roll: Vec<(f64, f64)> = samples.iter().map(|s| (s.t, s.state.attitude.x)).collect();
    let metrics = step_metrics(&roll, step_rad, &sr.metrics)?;
    Ok(StepRun {
        controller: kind,
        step_rad,
        metrics,
        samples,
    })
}

/// One run per attitude law, in [`ControllerKind::ALL`] order.
pub fn step_response_table(cfg: &ScenarioConfig) -> Result<Vec<StepRun>> {
    ControllerKind::ALL.iter().map(|&k| step_response_experiment(k, cfg)).collect()
}
