//! CSV and JSON artifacts.

use std::fmt::Write as _;
use std::path::Path as FsPath;

use crate::error::Result;

use super::sim::{RunMetrics, RunTrace};

/// Column names of [`trace_csv`], in order.
pub const TRACE_COLUMNS: [&str; 28] = [
    "t", "mode", "x", "y", "z", "vx", "vy", "vz", "phi", "theta", "psi", "p", "q", "r", "est_x", "est_y", "est_z",
    "ref_x", "ref_y", "ref_z", "phi_ref", "theta_ref", "u1", "u2", "u3", "u4", "fault_flag", "suspected_rotor",
];

fn comment_lines(out: &mut String, comment: &str) {
    for line in comment.lines() {
        let _ = writeln!(out, "# {line}");
    }
}

/// Renders a trace as CSV: `# `-prefixed comment lines, a header row, then
/// one row per control tick. Angles are in radians, `suspected_rotor` is
/// 0 while no rotor is suspected.
pub fn trace_csv(trace: &RunTrace, comment: &str) -> String {
    let mut out = String::new();
    comment_lines(&mut out, comment);
    out.push_str(&TRACE_COLUMNS.join(","));
    out.push('\n');
    for r in &trace.records {
        let s = &r.state;
        let u = r.command.values();
        let fields: [f64; 23] = [
            s.position.x,
            s.position.y,
            s.position.z,
            s.velocity.x,
            s.velocity.y,
            s.velocity.z,
            s.attitude.x,
            s.attitude.y,
            s.attitude.z,
            s.attitude_rate.x,
            s.attitude_rate.y,
            s.attitude_rate.z,
            r.estimate.x,
            r.estimate.y,
            r.estimate.z,
            r.position_setpoint.x,
            r.position_setpoint.y,
            r.position_setpoint.z,
            r.tilt_setpoint.0,
            r.tilt_setpoint.1,
            u[0],
            u[1],
            u[2],
        ];
        let _ = write!(out, "{},{}", r.t, r.mode.label());
        for v in fields {
            let _ = write!(out, ",{v}");
        }
        let _ = writeln!(
            out,
            ",{},{},{}",
            u[3],
            u8::from(r.fault_flag),
            r.suspected_rotor.unwrap_or(0)
        );
    }
    out
}

pub fn export_trace(trace: &RunTrace, path: &FsPath, config_hash: &str) -> Result<()> {
    std::fs::write(path, trace_csv(trace, &format!("config_hash {config_hash}")))?;
    Ok(())
}

/// Pretty JSON; the config hash is part of the metrics themselves.
pub fn export_metrics(metrics: &RunMetrics, path: &FsPath) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(metrics)? + "\n")?;
    Ok(())
}

pub fn load_metrics(path: &FsPath) -> Result<RunMetrics> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Writes `rows` under a header, preceded by comment lines.
pub fn write_csv(path: &FsPath, comment: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = String::new();
    comment_lines(&mut out, comment);
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Empty string for `None`, the value otherwise.
pub fn opt_field<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}
