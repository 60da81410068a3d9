#![allow(dead_code)]

pub mod oracle;

use slas_core::highway::{EgoState, RoadModel, Scenario, VehicleSeed};
use slas_core::sim::WorldState;
use slas_core::{PlannerParams, WorldSnapshot};

pub fn scenario(lanes: usize, ego_lane: usize, v0: f64, traffic: &[(u32, usize, f64, f64)]) -> Scenario {
    let sc = Scenario {
        road: RoadModel::new(lanes, 3.5, 15.0, 350.0).unwrap(),
        ego: EgoState::new(0.0, v0, ego_lane, 3.5, 3),
        traffic: traffic
            .iter()
            .map(|&(id, lane, s0, v)| VehicleSeed { id, lane, s0, v })
            .collect(),
        sim_dt: 0.05,
        params: PlannerParams::default(),
        seed: 0,
    };
    sc.validate().unwrap();
    sc
}

/// Ego in the middle lane behind a 5 m/s leader, slow traffic on the right.
pub fn case_study() -> Scenario {
    scenario(
        3,
        1,
        5.0,
        &[
            (1, 1, 20.0, 5.0),
            (2, 0, 40.0, 8.0),
            (3, 0, -40.0, 8.0),
            (4, 2, 10.0, 2.0),
            (5, 2, 30.0, 2.0),
            (6, 1, 60.0, 5.0),
        ],
    )
}

pub fn first_snapshot(sc: &Scenario) -> WorldSnapshot {
    WorldState::from_scenario(sc).snapshot(0, sc.params.visibility)
}
