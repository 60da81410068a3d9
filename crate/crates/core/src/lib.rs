//! Speed and lane advisory planning for multi-lane highways.
//!
//! The crate is `no_std` (with `alloc`) and contains every algorithmic piece
//! of the planner:
//!
//! * [`highway`]: Frenet road model, vehicle state and observation filtering.
//! * [`predictor`]: regression-based speed and displacement prediction.
//! * [`safety`]: safe following distances and the lane-change deviation cost.
//! * [`model`]: construction of the integer and binary planning models.
//! * [`solver`]: branch and bound for mixed-binary convex QPs.
//! * [`planner`]: the receding-horizon loop producing advisory commands.
//! * [`sim`]: a closed-loop kinematic highway with MOBIL and no-change
//!   baselines.
//!
//! File formats, the command line and wall-clock timing live in the `slas`
//! companion crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod highway;
pub mod model;
pub mod planner;
pub mod predictor;
pub mod safety;
pub mod sim;
pub mod solver;

mod math;

pub use highway::{EgoState, ObservedVehicle, RoadModel, Scenario, WorldSnapshot};
pub use model::{AdvisoryCommand, Formulation, OptimizationModel, PlannerParams};
pub use planner::{PlannerState, SlasPlanner};
pub use solver::{Clock, SolveResult, SolveStatus, WorkClock};
