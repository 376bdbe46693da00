use std::path::PathBuf;
use std::process::Command;

use quadsim::control::ControllerKind;
use quadsim::estimation::PoseNoiseModel;
use quadsim::harness::{
    export_metrics, load_config, load_metrics, parse_config, run_scenario, step_response_experiment, FlightMode,
    RunTrace, ScenarioConfig,
};

fn config(name: &str) -> ScenarioConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    load_config(&path).unwrap()
}

fn per_second(times: &[f64], seconds: usize) -> Vec<usize> {
    let mut bins = vec![0; seconds];
    for &t in times {
        let b = (t + 1e-9).floor() as usize;
        if b < seconds {
            bins[b] += 1;
        }
    }
    bins
}

#[test]
fn rate_contract() {
    let mut cfg = config("maze.toml");
    cfg.scenario.duration_s = 5.0;
    let (_, trace) = run_scenario(&cfg).unwrap();
    let control: Vec<f64> = trace.records.iter().map(|r| r.t).collect();
    assert_eq!(per_second(&control, 5), vec![100; 5]);
    assert_eq!(per_second(&trace.estimator_times, 5), vec![10; 5]);
    // the monitor first runs after one full window
    let shifted: Vec<f64> = trace.fdi_times.iter().map(|t| t - 0.1).collect();
    assert_eq!(per_second(&shifted, 4), vec![10; 4]);
    assert!(control.windows(2).all(|w| w[1] > w[0]));
}

fn mode_rank(m: FlightMode) -> u8 {
    match m {
        FlightMode::Mission => 0,
        FlightMode::Failsafe => 1,
        FlightMode::Landed => 2,
    }
}

#[test]
fn faulted_run_moves_forward_through_modes() {
    let (metrics, trace) = run_scenario(&config("straight_line.toml")).unwrap();
    let ranks: Vec<u8> = trace.records.iter().map(|r| mode_rank(r.mode)).collect();
    assert!(ranks.windows(2).all(|w| w[1] >= w[0]));
    assert_eq!(trace.records.last().unwrap().mode, FlightMode::Landed);
    assert!(metrics.detection_time_s.is_some());
    assert!(metrics.touchdown_offset_m.is_some());
    assert!(metrics.step_metrics.is_none());
    assert!(trace.emergency_route.is_some());
}

#[test]
fn nominal_run_has_no_landing_metrics() {
    let mut cfg = config("straight_line.toml");
    cfg.fault = None;
    let (metrics, trace) = run_scenario(&cfg).unwrap();
    assert!(trace.records.iter().all(|r| r.mode == FlightMode::Mission));
    assert!(metrics.detection_time_s.is_none());
    assert!(metrics.touchdown_offset_m.is_none());
    assert!(metrics.descent_rms_m.is_none());
    assert!(!metrics.false_positive);
    assert!(metrics.navigation_success);
}

#[test]
fn noiseless_straight_line_tracks_plan() {
    let mut cfg = config("straight_line.toml");
    cfg.fault = None;
    cfg.estimation = PoseNoiseModel::noiseless();
    cfg.scenario.controller = ControllerKind::Lqr;
    let (metrics, _) = run_scenario(&cfg).unwrap();
    let avg = metrics.path_deviation_avg_m.unwrap();
    assert!(avg < 0.1, "average deviation {avg}");
    assert_eq!(metrics.relocalization_events, 0);
}

#[test]
fn step_scenario_reports_only_step_metrics() {
    let (metrics, trace) = run_scenario(&config("step_response.toml")).unwrap();
    assert!(metrics.step_metrics.is_some());
    assert!(metrics.path_deviation_avg_m.is_none());
    assert!(metrics.touchdown_offset_m.is_none());
    // control ticks at 0, 0.01, ..., 6.0
    assert_eq!(trace.records.len(), 601);
}

#[test]
fn identical_seeds_identical_traces() {
    let mut cfg = config("hover_fault.toml");
    cfg.seed = 7;
    let a: RunTrace = run_scenario(&cfg).unwrap().1;
    let b: RunTrace = run_scenario(&cfg).unwrap().1;
    assert_eq!(a, b);
    cfg.seed = 8;
    let c = run_scenario(&cfg).unwrap().1;
    assert_ne!(a, c);
}

#[test]
fn metrics_json_round_trip() {
    let (metrics, _) = run_scenario(&config("turning.toml")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("metrics.json");
    export_metrics(&metrics, &path).unwrap();
    assert_eq!(load_metrics(&path).unwrap(), metrics);
}

#[test]
fn config_without_seed_rejected() {
    let err = parse_config("[scenario]\nkind = \"straight_line\"\nduration_s = 5.0\n").unwrap_err();
    assert!(err.contains("seed"), "{err}");
}

fn lqr_rise(cfg: &ScenarioConfig, q_angle: f64, q_rate: f64, r: f64) -> f64 {
    let mut c = cfg.clone();
    c.control.lqr.q_diag[0] = q_angle;
    c.control.lqr.q_diag[1] = q_rate;
    c.control.lqr.r_diag[0] = r;
    step_response_experiment(ControllerKind::Lqr, &c).unwrap().metrics.rise_time_s
}

#[test]
fn heavier_torque_penalty_slows_angle_weighted_lqr() {
    // with no rate weight the roll loop is x'' = -(b K1) x - (b K2) x' with
    // zeta = 1/sqrt(2) and omega_n ∝ r^(-1/4), so rise time scales by 2^(1/4)
    let cfg = config("step_response.toml");
    let base = lqr_rise(&cfg, 0.05, 0.0, 0.01);
    let heavy = lqr_rise(&cfg, 0.05, 0.0, 0.02);
    let ratio = heavy / base;
    assert!((ratio - 2f64.powf(0.25)).abs() < 0.01, "ratio {ratio}");
}

#[test]
fn default_weights_rise_insensitive_to_torque_penalty() {
    // overdamped: the slow pole sits near -sqrt(q_angle / q_rate) for any r
    let cfg = config("step_response.toml");
    let [q1, q2, ..] = cfg.control.lqr.q_diag;
    let base = lqr_rise(&cfg, q1, q2, 0.01);
    let heavy = lqr_rise(&cfg, q1, q2, 0.02);
    assert!(((heavy - base) / base).abs() < 1e-3, "{base} vs {heavy}");
}

#[test]
fn step_values_pinned() {
    let cfg = config("step_response.toml");
    // (rise s, overshoot %, settling s) on the default plant
    let pinned = [
        (ControllerKind::Pid, 0.45437, 2.4891, 3.68477),
        (ControllerKind::FblPd, 0.40489, 3.4756, 1.07068),
        (ControllerKind::Lqr, 0.31068, 0.0, 0.55582),
    ];
    for (kind, rise, overshoot, settling) in pinned {
        let m = step_response_experiment(kind, &cfg).unwrap().metrics;
        assert!((m.rise_time_s - rise).abs() < 1e-4, "{kind:?} rise {}", m.rise_time_s);
        assert!((m.overshoot_pct - overshoot).abs() < 1e-3, "{kind:?} overshoot {}", m.overshoot_pct);
        let s = m.settling_time_s.unwrap();
        assert!((s - settling).abs() < 1e-4, "{kind:?} settling {s}");
    }
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_quadsim"))
}

#[test]
fn cli_simulate_writes_hashed_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/step_response.toml");
    let out = cli()
        .args(["--seed", "3", "--out-dir"])
        .arg(dir.path())
        .arg("simulate")
        .arg(&cfg_path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let mut cfg = load_config(&cfg_path).unwrap();
    cfg.seed = 3;
    assert_eq!(trace.lines().next().unwrap(), format!("# config_hash {}", cfg.hash()));
    let metrics = load_metrics(&dir.path().join("metrics.json")).unwrap();
    assert_eq!(metrics.seed, 3);
    assert_eq!(metrics.config_hash, cfg.hash());
}

#[test]
fn cli_fails_on_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "seed = 1\n[scenario]\nkind = \"straight_line\"\nduration_s = 5.0\nbogus = 1\n").unwrap();
    let out = cli().arg("--out-dir").arg(dir.path()).arg("simulate").arg(&bad).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn cli_plan_on_grid_file() {
    let dir = tempfile::tempdir().unwrap();
    let grid = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/maze.grid");
    let out = cli()
        .arg("--out-dir")
        .arg(dir.path())
        .arg("plan")
        .arg(&grid)
        .args(["1.5,1.5", "7.2,1.2", "--inflate", "0.25"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("path.csv")).unwrap();
    assert!(csv.starts_with("# config_hash "));
    assert!(csv.lines().count() > 20);
}

#[test]
fn grid_file_map_matches_builtin_maze() {
    let a = run_scenario(&config("maze.toml")).unwrap().1;
    let b = run_scenario(&config("maze_from_file.toml")).unwrap().1;
    assert_eq!(a.mission_plan, b.mission_plan);
}
