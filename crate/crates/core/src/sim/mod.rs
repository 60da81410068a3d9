//! Closed-loop highway simulation: the ego under a policy, surrounding
//! traffic that keeps its lane, and the episode metrics.

mod episode;
mod executor;
mod idm;
mod metrics;
mod montecarlo;

pub use episode::{
    make_policy, run_episode, BaselinePolicy, Decision, EpisodeLog, Event, EventKind, Policy, PolicyKind, Sample,
    SimConfig, SlasPolicy, SolverSample, TickCommand, TrafficVehicle, VehicleSample, WorldState,
};
pub use executor::{ExecutorError, LaneChangeExecutor, Retarget};
pub use idm::{mobil_decision, EgoDriver, IdmParams, Leader, MobilParams};
pub use metrics::{aggregate, compute_metrics, distance_to_closest, headway, Metrics, Stat, TableRow, TABLE_COLUMNS};
pub use montecarlo::{randomize, run_seed, Randomization};
