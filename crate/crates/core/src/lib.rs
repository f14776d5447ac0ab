//! Risk-aware route planning for unmanned ground vehicles.
//!
//! The crate turns a terrain raster, probabilistic threat intelligence and a
//! mission request into a route:
//!
//! * [`terrain`] builds the 8-connected planning graph with per-edge travel times;
//! * [`risk`] turns threats into a per-cell dilated risk and additive log cost;
//! * [`planner`] implements the balanced, fast-within-risk and safe-within-time modes;
//! * [`apulse`] is the time-budgeted minimum-risk solver behind safe-within-time;
//! * [`replan`] repairs a route locally when new threats appear;
//! * [`io`] reads and writes the file formats, including `.waypoints` export;
//! * [`bench`] generates instances, runs the exhaustive oracle and benchmark sweeps.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod apulse;
pub mod bench;
pub mod error;
pub mod io;
pub mod planner;
pub mod replan;
pub mod risk;
pub mod terrain;

pub use apulse::{solve, SolverConfig, SolverStats};
pub use error::{Error, Result};
pub use planner::{MissionRequest, Mode, PlanResult, Scenario};
pub use risk::{DetectionParams, RiskField, ThreatSpec};
pub use terrain::{build_graph, Cell, CostGraph, MobilityModel, NodeId, TerrainGrid};
