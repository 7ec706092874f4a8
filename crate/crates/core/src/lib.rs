//! Sandpile-driven load balancing across a capacity-constrained network.
//!
//! Nodes hold integer loads below a threshold. An inflow pushes some nodes
//! over; a redistribution strategy then settles the network again:
//!
//! - [`Strategy::AsmOpen`]: classic toppling, overflow at the boundary is lost.
//! - [`Strategy::Srh`]: toppling where off-network shares go to a hub node
//!   that topples at most once per cascade.
//! - [`Strategy::Standard`]: only the excess moves, one unit at a time, to the
//!   least crowded neighbor with room, falling back to the hub.
//!
//! [`run_scenario`] drives a multi-step experiment with optional dissipation
//! and reports the indicator, critical points and collapse flags per step.

pub mod engine;
pub mod io;
pub mod metrics;
pub mod network;
pub mod render;
pub mod sandpile;
pub mod scenario;
pub mod standard;
pub mod verify;

pub use engine::{run_scenario, run_step, RunReport, ScenarioSpec, StepOptions, StepReport, Strategy};
pub use metrics::{compare, critical_points, indicator, IndicatorValue};
pub use network::{build_graph, build_grid, build_grid_with_hub, GridSpec, Neighborhood, Network, NodeId};
pub use sandpile::{stabilize_open, stabilize_srh, BoundaryPolicy, Configuration, Perturbation};
pub use scenario::{parse_scenario, serialize_scenario};
pub use standard::{standard_step, TieBreak};
