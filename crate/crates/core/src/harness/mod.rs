//! Scenario configuration, closed-loop runs, experiments and exports.

mod config;
mod export;
mod maps;
mod matrix;
mod sim;
mod step;

pub use config::{
    load_config, parse_config, ControlSection, FaultSpec, MapSection, MapSource, PlanningSection, ScenarioConfig,
    ScenarioKind, ScenarioSection, StepResponseSection, INTEGRATION_DT_S, STEPS_PER_CONTROL_TICK,
};
pub use export::{export_metrics, export_trace, load_metrics, opt_field, trace_csv, write_csv, TRACE_COLUMNS};
pub use maps::{arena_points, load_map, maze_points, MAZE_GOAL, MAZE_LANDING_ZONES, MAZE_SIZE_M, MAZE_START};
pub use matrix::{
    load_matrix_config, matrix_scenarios, parallel_map, run_fdi_matrix, summarize, MatrixConfig, MatrixRun,
    MatrixSummary,
};
pub use sim::{
    run_scenario, FlightMode, RunMetrics, RunTrace, TraceRecord, RECOVERY_MAX_IMPACT_M_S, RECOVERY_MAX_OFFSET_M,
    RECOVERY_MAX_TILT_RAD,
};
pub use step::{step_response_experiment, step_response_table, StepRun, StepSample};
