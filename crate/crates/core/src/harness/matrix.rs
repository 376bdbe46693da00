//! Fault-detection matrix: every fault scenario across seeds, plus the
//! same scenarios flown without a fault for the false-positive count.

use std::path::{Path as FsPath, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};

use super::config::{load_config, ScenarioConfig};
use super::sim::{run_scenario, RunMetrics};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixConfig {
    /// Scenario files, relative to the matrix file. Each must define a fault.
    pub scenarios: Vec<PathBuf>,
    pub seeds: Vec<u64>,
    /// Length of the fault-free copies of each scenario.
    #[serde(default = "default_nominal_duration")]
    pub nominal_duration_s: f64,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn default_nominal_duration() -> f64 {
    60.0
}

impl MatrixConfig {
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(toml::to_string(self).unwrap_or_default().as_bytes()))
    }
}

pub fn load_matrix_config(path: &FsPath) -> Result<MatrixConfig> {
    let text = std::fs::read_to_string(path)?;
    let mut cfg: MatrixConfig = toml::from_str(&text).map_err(|e| Error::Format {
        path: path.to_owned(),
        message: e.to_string(),
    })?;
    if cfg.scenarios.is_empty() || cfg.seeds.is_empty() {
        return Err(invalid("matrix needs at least one scenario and one seed"));
    }
    if !(cfg.nominal_duration_s > 0.0) {
        return Err(invalid("nominal_duration_s must be positive"));
    }
    cfg.base_dir = path.parent().map(FsPath::to_owned);
    Ok(cfg)
}

/// Scenario configs named by the matrix, in order.
pub fn matrix_scenarios(cfg: &MatrixConfig) -> Result<Vec<ScenarioConfig>> {
    cfg.scenarios
        .iter()
        .map(|p| {
            let path = match &cfg.base_dir {
                Some(dir) if p.is_relative() => dir.join(p),
                _ => p.clone(),
            };
            let sc = load_config(&path)?;
            if sc.fault.is_none() {
                return Err(invalid(format!("{} defines no fault", path.display())));
            }
            Ok(sc)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixRun {
    pub scenario: String,
    pub faulted: bool,
    pub injected_rotor: Option<usize>,
    pub metrics: RunMetrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatrixSummary {
    pub fault_runs: usize,
    pub detected: usize,
    pub max_detection_latency_s: Option<f64>,
    pub correct_rotor: usize,
    pub nominal_runs: usize,
    pub false_positives: usize,
    pub max_touchdown_offset_m: Option<f64>,
    pub recoveries: usize,
}

fn max_opt(acc: Option<f64>, v: Option<f64>) -> Option<f64> {
    match (acc, v) {
        (Some(a), Some(b)) => Some(a.max(b)),
        (a, b) => a.or(b),
    }
}

pub fn summarize(runs: &[MatrixRun]) -> MatrixSummary {
    let mut s = MatrixSummary {
        fault_runs: 0,
        detected: 0,
        max_detection_latency_s: None,
        correct_rotor: 0,
        nominal_runs: 0,
        false_positives: 0,
        max_touchdown_offset_m: None,
        recoveries: 0,
    };
    for r in runs {
        let m = &r.metrics;
        if m.false_positive {
            s.false_positives += 1;
        }
        if !r.faulted {
            s.nominal_runs += 1;
            continue;
        }
        s.fault_runs += 1;
        if m.detection_latency_s.is_some() {
            s.detected += 1;
        }
        s.max_detection_latency_s = max_opt(s.max_detection_latency_s, m.detection_latency_s);
        if m.suspected_rotor.is_some() && m.suspected_rotor == r.injected_rotor {
            s.correct_rotor += 1;
        }
        s.max_touchdown_offset_m = max_opt(s.max_touchdown_offset_m, m.touchdown_offset_m);
        if m.recovery_success == Some(true) {
            s.recoveries += 1;
        }
    }
    s
}

/// Applies `f` to every item on scoped worker threads; output order
/// matches input order.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(items.len().max(1));
    let chunk = items.len().div_ceil(workers).max(1);
    std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| scope.spawn(|| part.iter().map(&f).collect::<Vec<R>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

/// Every scenario × seed with its fault, then without.
pub fn run_fdi_matrix(cfg: &MatrixConfig) -> Result<(Vec<MatrixRun>, MatrixSummary)> {
    let scenarios = matrix_scenarios(cfg)?;
    let mut jobs: Vec<(String, bool, ScenarioConfig)> = Vec::new();
    for faulted in [true, false] {
        for sc in &scenarios {
            for &seed in &cfg.seeds {
                let mut c = sc.clone();
                c.seed = seed;
                if !faulted {
                    c.fault = None;
                    c.scenario.duration_s = cfg.nominal_duration_s;
                }
                jobs.push((sc.scenario.kind.label().to_owned(), faulted, c));
            }
        }
    }
    let results = parallel_map(&jobs, |(_, _, c)| run_scenario(c).map(|(m, _)| m));
    let mut runs = Vec::with_capacity(jobs.len());
    for ((scenario, faulted, c), res) in jobs.iter().zip(results) {
        let metrics = res.map_err(|e| invalid(format!("{scenario} seed {}: {e}", c.seed)))?;
        runs.push(MatrixRun {
            scenario: scenario.clone(),
            faulted: *faulted,
            injected_rotor: c.fault.map(|f| f.rotor),
            metrics,
        });
    }
    let summary = summarize(&runs);
    Ok((runs, summary))
}
