use std::path::{Path as FsPath, PathBuf};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::control::{AttitudeGains, ControllerKind, LqrWeights, MetricsConfig, OuterLoopGains, PdGains, PidGains};
use crate::dynamics::QuadParams;
use crate::error::{invalid, Error, Result};
use crate::estimation::PoseNoiseModel;
use crate::fdi::{EmergencyConfig, FdiConfig};
use crate::planning::Connectivity;

/// Integration step of every closed-loop run.
pub const INTEGRATION_DT_S: f64 = 0.001;
/// Integration steps per control tick (100 Hz).
pub const STEPS_PER_CONTROL_TICK: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    StraightLine,
    MazeNavigation,
    HoverToFault,
    TurningManoeuvre,
    StepResponse,
}

impl ScenarioKind {
    pub fn label(&self) -> &'static str {
        match self {
            ScenarioKind::StraightLine => "straight_line",
            ScenarioKind::MazeNavigation => "maze_navigation",
            ScenarioKind::HoverToFault => "hover_to_fault",
            ScenarioKind::TurningManoeuvre => "turning_manoeuvre",
            ScenarioKind::StepResponse => "step_response",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub kind: ScenarioKind,
    pub duration_s: f64,
    #[serde(default = "default_controller")]
    pub controller: ControllerKind,
    /// Start followed by the goals visited in order.
    #[serde(default)]
    pub waypoints: Vec<[f64; 2]>,
    #[serde(default = "default_altitude")]
    pub cruise_altitude_m: f64,
    #[serde(default = "default_cruise_speed")]
    pub cruise_speed_m_s: f64,
    #[serde(default = "default_emergency_speed")]
    pub emergency_speed_m_s: f64,
    #[serde(default = "default_tolerance")]
    pub arrival_tolerance_m: f64,
    /// Weight of each new pose sample in the position estimate.
    #[serde(default = "default_fusion_gain")]
    pub pose_fusion_gain: f64,
}

fn default_controller() -> ControllerKind {
    ControllerKind::Lqr
}
fn default_altitude() -> f64 {
    2.0
}
fn default_cruise_speed() -> f64 {
    0.6
}
fn default_emergency_speed() -> f64 {
    0.5
}
fn default_tolerance() -> f64 {
    0.3
}
fn default_fusion_gain() -> f64 {
    0.3
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    /// 1-based rotor index.
    pub rotor: usize,
    pub time_s: f64,
    /// Seeded uniform offset of the injection time, ± this many seconds.
    #[serde(default)]
    pub jitter_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapSource {
    /// Built-in 12 m × 12 m maze.
    Maze,
    /// Empty walled square of side `size_m`.
    Arena,
    /// Occupancy grid text file, relative to the config file.
    GridFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapSection {
    pub source: MapSource,
    pub size_m: f64,
    pub path: Option<PathBuf>,
    pub landing_zones: Vec<[f64; 2]>,
    /// Also offer free areas at least this wide as landing zones.
    pub zone_detection_clearance_m: Option<f64>,
}

impl Default for MapSection {
    fn default() -> Self {
        Self {
            source: MapSource::Arena,
            size_m: 12.0,
            path: None,
            landing_zones: Vec::new(),
            zone_detection_clearance_m: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlSection {
    pub pid: PidGains,
    pub fbl: PdGains,
    pub lqr: LqrWeights,
    pub outer: OuterLoopGains,
}

impl ControlSection {
    pub fn attitude(&self) -> AttitudeGains {
        AttitudeGains {
            pid: self.pid,
            fbl: self.fbl,
            lqr: self.lqr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlanningSection {
    pub resolution_m: f64,
    pub inflation_radius_m: f64,
    pub z_band: [f64; 2],
    pub connectivity: Connectivity,
    pub replan_rate_hz: f64,
    pub waypoint_spacing_m: f64,
    pub v_desc_m_s: f64,
    pub descent_dt_s: f64,
    pub start_snap_cells: usize,
}

impl Default for PlanningSection {
    fn default() -> Self {
        let e = EmergencyConfig::default();
        Self {
            resolution_m: 0.1,
            inflation_radius_m: 0.25,
            z_band: [0.1, 2.0],
            connectivity: Connectivity::Eight,
            replan_rate_hz: 1.0,
            waypoint_spacing_m: e.waypoint_spacing_m,
            v_desc_m_s: e.v_desc,
            descent_dt_s: e.descent_dt,
            start_snap_cells: e.start_snap_cells,
        }
    }
}

impl PlanningSection {
    pub fn emergency(&self) -> EmergencyConfig {
        EmergencyConfig {
            v_desc: self.v_desc_m_s,
            waypoint_spacing_m: self.waypoint_spacing_m,
            descent_dt: self.descent_dt_s,
            connectivity: self.connectivity,
            start_snap_cells: self.start_snap_cells,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepResponseSection {
    pub step_deg: f64,
    pub duration_s: f64,
    pub metrics: MetricsConfig,
}

impl Default for StepResponseSection {
    fn default() -> Self {
        Self {
            step_deg: 5.0,
            duration_s: 6.0,
            metrics: MetricsConfig::default(),
        }
    }
}

/// Complete description of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub fault: Option<FaultSpec>,
    #[serde(default)]
    pub map: MapSection,
    #[serde(default)]
    pub dynamics: QuadParams,
    #[serde(default)]
    pub control: ControlSection,
    #[serde(default)]
    pub estimation: PoseNoiseModel,
    #[serde(default)]
    pub planning: PlanningSection,
    #[serde(default)]
    pub fdi: FdiConfig,
    #[serde(default)]
    pub step_response: StepResponseSection,
    /// Directory that relative map paths resolve against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn steps_per(rate_hz: f64, what: &str) -> Result<u64> {
    let steps = 1.0 / (rate_hz * INTEGRATION_DT_S);
    let rounded = steps.round();
    if !(rate_hz > 0.0) || rounded < 1.0 || (steps - rounded).abs() > 1e-9 {
        return Err(invalid(format!("{what} rate {rate_hz} Hz is not a whole number of 1 ms steps")));
    }
    Ok(rounded as u64)
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.scenario;
        if !(s.duration_s.is_finite() && s.duration_s > 0.0) {
            return Err(invalid("scenario.duration_s must be positive"));
        }
        self.dynamics.validate()?;
        self.control.pid.validate()?;
        self.control.lqr.validate()?;
        self.control.outer.validate()?;
        self.estimation.validate()?;
        self.fdi.validate()?;
        if s.kind == ScenarioKind::StepResponse {
            if !(self.step_response.step_deg != 0.0 && self.step_response.duration_s > 0.0) {
                return Err(invalid("step_response needs a non-zero step and positive duration"));
            }
            return Ok(());
        }
        if s.waypoints.is_empty() {
            return Err(invalid("scenario.waypoints needs at least a start point"));
        }
        if s.kind == ScenarioKind::HoverToFault && s.waypoints.len() != 1 {
            return Err(invalid("hover_to_fault takes a single waypoint"));
        }
        if s.kind != ScenarioKind::HoverToFault && s.waypoints.len() < 2 {
            return Err(invalid("missions need a start and at least one goal"));
        }
        for (name, v) in [
            ("cruise_altitude_m", s.cruise_altitude_m),
            ("cruise_speed_m_s", s.cruise_speed_m_s),
            ("emergency_speed_m_s", s.emergency_speed_m_s),
            ("arrival_tolerance_m", s.arrival_tolerance_m),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("scenario.{name} must be positive")));
            }
        }
        if !(s.pose_fusion_gain > 0.0 && s.pose_fusion_gain <= 1.0) {
            return Err(invalid("scenario.pose_fusion_gain must lie in (0, 1]"));
        }
        if let Some(f) = &self.fault {
            if !(1..=4).contains(&f.rotor) {
                return Err(invalid(format!("fault.rotor {} outside 1..=4", f.rotor)));
            }
            if !(f.jitter_s >= 0.0 && f.time_s - f.jitter_s >= 0.0) {
                return Err(invalid("fault time minus jitter must be non-negative"));
            }
            if !(f.time_s + f.jitter_s < s.duration_s) {
                return Err(invalid("fault must be injected before the run ends"));
            }
        }
        let p = &self.planning;
        if !(p.resolution_m > 0.0 && p.inflation_radius_m >= 0.0 && p.z_band[0] < p.z_band[1]) {
            return Err(invalid("planning grid parameters are inconsistent"));
        }
        if !(p.waypoint_spacing_m > 0.0 && p.v_desc_m_s > 0.0 && p.descent_dt_s > 0.0) {
            return Err(invalid("planning spacing, descent speed and descent dt must be positive"));
        }
        steps_per(p.replan_rate_hz, "replan")?;
        steps_per(self.fdi.monitor_rate_hz, "FDI monitor")?;
        if self.map.source == MapSource::GridFile && self.map.path.is_none() {
            return Err(invalid("map.path is required for grid_file maps"));
        }
        if self.map.source == MapSource::Arena && !(self.map.size_m > 1.0) {
            return Err(invalid("map.size_m must exceed 1 m"));
        }
        Ok(())
    }

    pub fn replan_period_steps(&self) -> u64 {
        steps_per(self.planning.replan_rate_hz, "replan").unwrap_or(1000)
    }

    pub fn fdi_period_steps(&self) -> u64 {
        steps_per(self.fdi.monitor_rate_hz, "FDI monitor").unwrap_or(100)
    }

    pub fn waypoints(&self) -> Vec<Vector2<f64>> {
        self.scenario.waypoints.iter().map(|w| Vector2::new(w[0], w[1])).collect()
    }

    pub fn resolve(&self, path: &FsPath) -> PathBuf {
        match &self.base_dir {
            Some(dir) if path.is_relative() => dir.join(path),
            _ => path.to_owned(),
        }
    }

    /// SHA-256 over the normalized TOML form, hex encoded.
    pub fn hash(&self) -> String {
        let text = toml::to_string(self).unwrap_or_default();
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    /// First 12 hex digits of [`Self::hash`].
    pub fn short_hash(&self) -> String {
        self.hash()[..12].to_owned()
    }
}

pub fn parse_config(text: &str) -> std::result::Result<ScenarioConfig, String> {
    toml::from_str(text).map_err(|e| e.to_string())
}

/// Reads and validates a TOML scenario file.
pub fn load_config(path: &FsPath) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)?;
    let mut cfg = parse_config(&text).map_err(|message| Error::Format {
        path: path.to_owned(),
        message,
    })?;
    cfg.base_dir = path.parent().map(FsPath::to_owned);
    cfg.validate()?;
    Ok(cfg)
}
