//! Pose source standing in for a visual-inertial SLAM front end.
//!
//! Poses are emitted at a fixed rate. Each emission carries white position
//! and attitude noise on top of a random-walk drift; at every loop closure
//! the drift is reset and the relocalization counter incremented.

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::RigidBodyState;
use crate::error::{invalid, Result};

/// Slack for comparing emission times built from decimal tick periods.
const TIME_EPS: f64 = 1e-9;

/// Rigid-body pose in SE(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Rotation3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    /// Ground-truth pose of a state, rotation `Rz(ψ) Ry(θ) Rx(φ)`.
    pub fn from_state(state: &RigidBodyState) -> Self {
        let a = state.attitude;
        Self {
            rotation: Rotation3::from_euler_angles(a.x, a.y, a.z),
            translation: state.position,
        }
    }

    /// Roll, pitch, yaw of the rotation.
    pub fn euler_angles(&self) -> Vector3<f64> {
        let (r, p, y) = self.rotation.euler_angles();
        Vector3::new(r, p, y)
    }

    /// Largest entry of `RᵀR − I`.
    pub fn orthonormality_error(&self) -> f64 {
        let m = self.rotation.matrix();
        (m.transpose() * m - Matrix3::identity()).abs().max()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoseNoiseModel {
    pub sigma_pos_m: f64,
    pub sigma_att_rad: f64,
    /// Random-walk intensity in m/√s per axis.
    pub drift_rate_m_per_s: f64,
    /// Seconds between loop closures; `inf` disables them.
    pub loop_closure_period_s: f64,
    /// Uniform jitter added to each closure interval, ± this many seconds.
    pub loop_closure_jitter_s: f64,
    pub output_rate_hz: f64,
}

impl Default for PoseNoiseModel {
    fn default() -> Self {
        Self {
            sigma_pos_m: 0.02,
            sigma_att_rad: 0.01,
            drift_rate_m_per_s: 0.01,
            loop_closure_period_s: 15.0,
            loop_closure_jitter_s: 0.0,
            output_rate_hz: 10.0,
        }
    }
}

impl PoseNoiseModel {
    /// No noise, no drift, no closures.
    pub fn noiseless() -> Self {
        Self {
            sigma_pos_m: 0.0,
            sigma_att_rad: 0.0,
            drift_rate_m_per_s: 0.0,
            loop_closure_period_s: f64::INFINITY,
            loop_closure_jitter_s: 0.0,
            output_rate_hz: 10.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            self.sigma_pos_m,
            self.sigma_att_rad,
            self.drift_rate_m_per_s,
            self.loop_closure_jitter_s,
        ];
        if nonneg.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(invalid("estimator noise parameters must be finite and non-negative"));
        }
        if !(self.loop_closure_period_s > 0.0) {
            return Err(invalid("loop_closure_period_s must be positive"));
        }
        if self.loop_closure_jitter_s >= self.loop_closure_period_s {
            return Err(invalid("loop closure jitter must be smaller than the period"));
        }
        if !(self.output_rate_hz.is_finite() && self.output_rate_hz > 0.0) {
            return Err(invalid("output_rate_hz must be positive"));
        }
        Ok(())
    }
}

/// Mutable estimator state; seeded and fully deterministic.
#[derive(Debug, Clone)]
pub struct EstimatorState {
    pub accumulated_drift: Vector3<f64>,
    pub last_emit_time: Option<f64>,
    pub next_closure_time: f64,
    pub relocalization_count: u32,
    rng: ChaCha8Rng,
}

impl EstimatorState {
    pub fn new(seed: u64, model: &PoseNoiseModel) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let next_closure_time = next_interval(model, &mut rng);
        Self {
            accumulated_drift: Vector3::zeros(),
            last_emit_time: None,
            next_closure_time,
            relocalization_count: 0,
            rng,
        }
    }
}

fn next_interval(model: &PoseNoiseModel, rng: &mut ChaCha8Rng) -> f64 {
    let jitter = if model.loop_closure_jitter_s > 0.0 {
        rng.random_range(-model.loop_closure_jitter_s..=model.loop_closure_jitter_s)
    } else {
        0.0
    };
    model.loop_closure_period_s + jitter
}

fn gaussian3(rng: &mut ChaCha8Rng, sigma: f64) -> Vector3<f64> {
    let x: f64 = rng.sample(StandardNormal);
    let y: f64 = rng.sample(StandardNormal);
    let z: f64 = rng.sample(StandardNormal);
    Vector3::new(x, y, z) * sigma
}

/// One emitted pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSample {
    pub time_s: f64,
    pub pose: Pose,
    /// A loop closure reset the drift at this emission.
    pub relocalized: bool,
}

/// Emits a noisy pose if one is due at time `t`, otherwise `None`.
pub fn sample_pose(
    truth: &RigidBodyState,
    model: &PoseNoiseModel,
    est: &mut EstimatorState,
    t: f64,
) -> Option<PoseSample> {
    let period = 1.0 / model.output_rate_hz;
    let elapsed = match est.last_emit_time {
        None => 0.0,
        Some(last) => {
            if t - last < period - TIME_EPS {
                return None;
            }
            t - last
        }
    };
    est.last_emit_time = Some(t);

    // every emission draws the same number of variates, keeping streams aligned
    let walk = gaussian3(&mut est.rng, model.drift_rate_m_per_s * elapsed.sqrt());
    let pos_noise = gaussian3(&mut est.rng, model.sigma_pos_m);
    let att_noise = gaussian3(&mut est.rng, model.sigma_att_rad);

    est.accumulated_drift += walk;
    let mut relocalized = false;
    if t >= est.next_closure_time - TIME_EPS {
        est.accumulated_drift = Vector3::zeros();
        est.relocalization_count += 1;
        est.next_closure_time += next_interval(model, &mut est.rng);
        relocalized = true;
    }

    let truth_pose = Pose::from_state(truth);
    let rotation = if model.sigma_att_rad > 0.0 {
        let mut r = truth_pose.rotation * Rotation3::new(att_noise);
        r.renormalize();
        r
    } else {
        truth_pose.rotation
    };
    Some(PoseSample {
        time_s: t,
        pose: Pose {
            rotation,
            translation: truth.position + est.accumulated_drift + pos_noise,
        },
        relocalized,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moving_truth(t: f64) -> RigidBodyState {
        RigidBodyState {
            position: Vector3::new(0.5 * t, (0.3 * t).sin(), 1.0),
            attitude: Vector3::new(0.05 * (t).sin(), -0.02, 0.4 * t).map(crate::dynamics::wrap_angle),
            ..Default::default()
        }
    }

    #[test]
    fn noiseless_model_is_identity() {
        let model = PoseNoiseModel::noiseless();
        let mut est = EstimatorState::new(3, &model);
        for k in 0..100 {
            let t = k as f64 * 0.1;
            let truth = moving_truth(t);
            let s = sample_pose(&truth, &model, &mut est, t).expect("due");
            assert_eq!(s.pose, Pose::from_state(&truth));
        }
    }

    #[test]
    fn emits_at_output_rate() {
        let model = PoseNoiseModel::default();
        let mut est = EstimatorState::new(1, &model);
        let count = (0..1000)
            .filter(|k| sample_pose(&moving_truth(0.0), &model, &mut est, *k as f64 * 0.01).is_some())
            .count();
        assert_eq!(count, 100);
    }

    #[test]
    fn loop_closures_over_thirty_seconds() {
        let model = PoseNoiseModel::default();
        let mut est = EstimatorState::new(9, &model);
        for k in 0..=300 {
            let t = k as f64 * 0.1;
            sample_pose(&moving_truth(t), &model, &mut est, t);
        }
        assert_eq!(est.relocalization_count, 2);
    }

    #[test]
    fn rotations_stay_orthonormal() {
        let model = PoseNoiseModel {
            sigma_att_rad: 0.2,
            ..PoseNoiseModel::default()
        };
        let mut est = EstimatorState::new(5, &model);
        for k in 0..500 {
            let t = k as f64 * 0.1;
            let s = sample_pose(&moving_truth(t), &model, &mut est, t).unwrap();
            assert!(s.pose.orthonormality_error() < 1e-9);
            assert!((s.pose.rotation.matrix().determinant() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn seeded_streams_are_bit_identical() {
        let model = PoseNoiseModel {
            loop_closure_jitter_s: 2.0,
            ..PoseNoiseModel::default()
        };
        let run = |seed| {
            let mut est = EstimatorState::new(seed, &model);
            (0..400)
                .filter_map(|k| {
                    let t = k as f64 * 0.1;
                    sample_pose(&moving_truth(t), &model, &mut est, t)
                })
                .map(|s| s.pose.translation)
                .collect::<Vec<_>>()
        };
        assert_eq!(run(11), run(11));
        assert_ne!(run(11), run(12));
    }

    #[test]
    fn drift_follows_random_walk_law() {
        // E‖d(t)‖² = 3 q² t for a 3-axis Wiener process of intensity q
        let model = PoseNoiseModel {
            sigma_pos_m: 0.0,
            sigma_att_rad: 0.0,
            drift_rate_m_per_s: 0.05,
            loop_closure_period_s: f64::INFINITY,
            ..PoseNoiseModel::default()
        };
        let checkpoints = [50usize, 200, 800];
        let mut sums = [0.0; 3];
        let seeds = 1000;
        for seed in 0..seeds {
            let mut est = EstimatorState::new(seed, &model);
            for k in 0..=800 {
                let t = k as f64 * 0.1;
                sample_pose(&RigidBodyState::default(), &model, &mut est, t);
                if let Some(i) = checkpoints.iter().position(|&c| c == k) {
                    sums[i] += est.accumulated_drift.norm_squared();
                }
            }
        }
        for (i, &c) in checkpoints.iter().enumerate() {
            let t = c as f64 * 0.1;
            let expected = 3.0 * model.drift_rate_m_per_s.powi(2) * t;
            let mean = sums[i] / seeds as f64;
            assert!((mean / expected - 1.0).abs() < 0.12, "t={t} mean={mean} expected={expected}");
        }
    }

    #[test]
    fn post_closure_error_is_noise_only() {
        let model = PoseNoiseModel {
            drift_rate_m_per_s: 0.2,
            loop_closure_period_s: 1.0,
            ..PoseNoiseModel::default()
        };
        let mut within = 0;
        let mut total = 0;
        for seed in 0..200 {
            let mut est = EstimatorState::new(seed, &model);
            for k in 0..=100 {
                let t = k as f64 * 0.1;
                let truth = moving_truth(t);
                if let Some(s) = sample_pose(&truth, &model, &mut est, t) {
                    if s.relocalized {
                        total += 1;
                        if (s.pose.translation - truth.position).norm() <= 5.0 * model.sigma_pos_m {
                            within += 1;
                        }
                    }
                }
            }
        }
        assert!(total >= 1000);
        assert!(within as f64 / total as f64 >= 0.999, "{within}/{total}");
    }

    #[test]
    fn rejects_bad_models() {
        let mut m = PoseNoiseModel::default();
        m.output_rate_hz = 0.0;
        assert!(m.validate().is_err());
        let mut m = PoseNoiseModel::default();
        m.sigma_pos_m = -1.0;
        assert!(m.validate().is_err());
        assert!(PoseNoiseModel::noiseless().validate().is_ok());
    }
}
