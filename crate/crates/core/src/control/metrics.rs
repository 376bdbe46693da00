use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Rise/settling conventions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub rise_low: f64,
    pub rise_high: f64,
    /// Settling band as a fraction of the target.
    pub settling_band: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            rise_low: 0.1,
            rise_high: 0.9,
            settling_band: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub rise_time_s: f64,
    pub overshoot_pct: f64,
    /// `None` when the trace ends outside the settling band.
    pub settling_time_s: Option<f64>,
}

impl StepMetrics {
    pub fn settled(&self) -> bool {
        self.settling_time_s.is_some()
    }
}

fn crossing_time(trace: &[(f64, f64)], level: f64) -> Option<f64> {
    let idx = trace.iter().position(|&(_, v)| v >= level)?;
    if idx == 0 {
        return Some(trace[0].0);
    }
    let (t0, v0) = trace[idx - 1];
    let (t1, v1) = trace[idx];
    Some(t0 + (level - v0) / (v1 - v0) * (t1 - t0))
}

/// Rise time, overshoot and settling time of a step response.
///
/// Values are normalized by `target`, so negative steps work the same way.
/// Crossings are linearly interpolated between samples.
pub fn step_metrics(trace: &[(f64, f64)], target: f64, cfg: &MetricsConfig) -> Result<StepMetrics> {
    if trace.len() < 2 {
        return Err(invalid("step trace needs at least two samples"));
    }
    if target == 0.0 || !target.is_finite() {
        return Err(invalid("step target must be finite and non-zero"));
    }
    let norm: Vec<(f64, f64)> = trace.iter().map(|&(t, v)| (t, v / target)).collect();

    let rise_time_s = match (crossing_time(&norm, cfg.rise_low), crossing_time(&norm, cfg.rise_high)) {
        (Some(lo), Some(hi)) => hi - lo,
        _ => f64::INFINITY,
    };
    let peak = norm.iter().map(|&(_, v)| v).fold(f64::NEG_INFINITY, f64::max);
    let overshoot_pct = ((peak - 1.0) * 100.0).max(0.0);

    let band = cfg.settling_band;
    let outside = |v: f64| (v - 1.0).abs() > band;
    let settling_time_s = match norm.iter().rposition(|&(_, v)| outside(v)) {
        None => Some(norm[0].0),
        Some(i) if i + 1 == norm.len() => None,
        Some(i) => {
            let (t0, v0) = norm[i];
            let (t1, v1) = norm[i + 1];
            let edge = if v0 > 1.0 { 1.0 + band } else { 1.0 - band };
            Some(t0 + (edge - v0) / (v1 - v0) * (t1 - t0))
        }
    };
    Ok(StepMetrics {
        rise_time_s,
        overshoot_pct,
        settling_time_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sampled(f: impl Fn(f64) -> f64, dt: f64, duration: f64) -> Vec<(f64, f64)> {
        let n = (duration / dt).round() as usize;
        (0..=n).map(|k| (k as f64 * dt, f(k as f64 * dt))).collect()
    }

    #[test]
    fn ideal_step() {
        let tr = sampled(|_| 2.0, 0.01, 5.0);
        let m = step_metrics(&tr, 2.0, &MetricsConfig::default()).unwrap();
        assert_eq!(m.rise_time_s, 0.0);
        assert_eq!(m.overshoot_pct, 0.0);
        assert_eq!(m.settling_time_s, Some(0.0));
    }

    #[test]
    fn first_order_rise_is_ln9_tau() {
        let tau = 1.0;
        let tr = sampled(|t| 1.0 - (-t / tau).exp(), 0.001, 10.0);
        let m = step_metrics(&tr, 1.0, &MetricsConfig::default()).unwrap();
        assert_relative_eq!(m.rise_time_s, 9f64.ln() * tau, epsilon = 1e-6);
        assert_eq!(m.overshoot_pct, 0.0);
        // settles when e^(−t) = 0.02
        assert_relative_eq!(m.settling_time_s.unwrap(), -(0.02f64.ln()), epsilon = 1e-5);
    }

    #[test]
    fn underdamped_overshoot() {
        let zeta: f64 = 0.5;
        let wn = 4.0;
        let wd = wn * (1.0 - zeta * zeta).sqrt();
        let phase = (1.0 - zeta * zeta).sqrt().atan2(zeta);
        let y = |t: f64| 1.0 - (-zeta * wn * t).exp() * (wd * t + phase).sin() / (1.0 - zeta * zeta).sqrt();
        let tr = sampled(y, 0.0005, 8.0);
        let m = step_metrics(&tr, 1.0, &MetricsConfig::default()).unwrap();
        let want = 100.0 * (-zeta * std::f64::consts::PI / (1.0 - zeta * zeta).sqrt()).exp();
        assert_relative_eq!(m.overshoot_pct, want, epsilon = 1e-3);
        assert!(m.settling_time_s.unwrap() >= m.rise_time_s);
    }

    #[test]
    fn negative_target_normalizes() {
        let tr = sampled(|t| -(1.0 - (-t).exp()), 0.001, 10.0);
        let m = step_metrics(&tr, -1.0, &MetricsConfig::default()).unwrap();
        assert_relative_eq!(m.rise_time_s, 9f64.ln(), epsilon = 1e-6);
    }

    #[test]
    fn oscillation_never_settles() {
        let tr = sampled(|t| 1.0 + 0.5 * (10.0 * t).sin(), 0.001, 5.0);
        let m = step_metrics(&tr, 1.0, &MetricsConfig::default()).unwrap();
        assert!(m.settling_time_s.is_none() || m.settling_time_s.unwrap() > 4.5);
        let tr = sampled(|t| if t < 4.999 { 1.0 } else { 2.0 }, 0.001, 5.0);
        assert!(step_metrics(&tr, 1.0, &MetricsConfig::default()).unwrap().settling_time_s.is_none());
    }

    #[test]
    fn zero_target_rejected() {
        assert!(step_metrics(&[(0.0, 0.0), (1.0, 0.0)], 0.0, &MetricsConfig::default()).is_err());
    }
}
