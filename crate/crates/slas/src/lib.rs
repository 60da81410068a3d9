//! File formats, wall-clock timing and the command line around
//! [`slas_core`].
//!
//! * [`scenario`]: JSON scenarios with dotted overrides.
//! * [`csvlog`]: episode logs and Monte Carlo tables as CSV.
//! * [`report`]: JSON event sidecars and run summaries.
//! * [`plot`]: SVG charts of travel time, lateral offset and headway.
//! * [`runner`]: episode and parallel Monte Carlo drivers.
//! * [`cli`]: the `slas` binary.

pub mod cli;
pub mod clock;
pub mod csvlog;
pub mod plot;
pub mod report;
pub mod runner;
pub mod scenario;

pub use slas_core as core;

pub use clock::WallClock;
pub use scenario::{load_scenario, Override, ScenarioError, ScenarioFile};
