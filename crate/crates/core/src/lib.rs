//! Deterministic simulator and benchmark harness for a fault-tolerant
//! quadrotor autonomy stack.
//!
//! The crate is organized along the flight stack:
//!
//! - [`dynamics`]: rigid-body plant, motor mixing, rotor faults, RK4.
//! - [`control`]: PID, feedback-linearized PD and LQR attitude laws, the
//!   position outer loop and step-response metrics.
//! - [`estimation`]: a pose source with noise, drift and loop closures.
//! - [`planning`]: occupancy grids, obstacle inflation, Dijkstra, landing zones.
//! - [`fdi`]: threshold-based rotor fault detection and the failsafe.
//! - [`vision`]: eigenface training and Mahalanobis classification.
//! - [`harness`]: scenario configuration, closed-loop runs and exports.
//!
//! ```
//! use quadsim::dynamics::{mix_forces, FaultMask, MotorCommand, QuadParams};
//!
//! let params = QuadParams::default();
//! let hover = MotorCommand::uniform(params.hover_command(), params.cmd_max).unwrap();
//! let wrench = mix_forces(&hover, &FaultMask::healthy(), &params);
//! assert!((wrench.thrust - params.weight()).abs() < 1e-12);
//! ```

pub mod control;
pub mod dynamics;
pub mod estimation;
pub mod fdi;
pub mod harness;
pub mod planning;
pub mod vision;
mod error;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/dynamics.md")]
    mod dynamics {}
    #[doc = include_str!("../../../book/src/control.md")]
    mod control {}
    #[doc = include_str!("../../../book/src/estimation.md")]
    mod estimation {}
    #[doc = include_str!("../../../book/src/planning.md")]
    mod planning {}
    #[doc = include_str!("../../../book/src/fdi.md")]
    mod fdi {}
    #[doc = include_str!("../../../book/src/vision.md")]
    mod vision {}
    #[doc = include_str!("../../../book/src/harness.md")]
    mod harness {}
}
