use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::highway::Scenario;

#[derive(Clone, Debug, PartialEq)]
pub struct Randomization {
    /// Initial positions move uniformly within `±position_jitter`, m.
    pub position_jitter: f64,
    /// Nominal speeds dealt to the lanes by a random permutation; lane `l`
    /// of the base scenario keeps its traffic but gets `lane_speeds[perm[l]]`.
    pub lane_speeds: Vec<f64>,
    /// Draws per run before the run is skipped.
    pub max_attempts: usize,
}

impl Default for Randomization {
    fn default() -> Self {
        Randomization {
            position_jitter: 8.0,
            lane_speeds: alloc::vec![8.0, 5.0, 2.0],
            max_attempts: 10,
        }
    }
}

/// Seed of run `run` in a campaign seeded with `seed`.
pub fn run_seed(seed: u64, run: usize) -> u64 {
    seed.wrapping_add(run as u64)
}

/// A valid randomized copy of `base` for one Monte Carlo run, or `None`
/// when every attempt violated the spacing rules.
pub fn randomize(base: &Scenario, rand: &Randomization, seed: u64) -> Option<Scenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..rand.max_attempts.max(1) {
        let mut sc = base.clone();
        sc.seed = seed;
        let mut speeds = rand.lane_speeds.clone();
        speeds.shuffle(&mut rng);
        for veh in &mut sc.traffic {
            if rand.position_jitter > 0.0 {
                veh.s0 += rng.gen_range(-rand.position_jitter..=rand.position_jitter);
            }
            if let Some(&v) = speeds.get(veh.lane) {
                veh.v = v;
            }
        }
        if sc.validate().is_ok() {
            return Some(sc);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::highway::{EgoState, RoadModel, VehicleSeed};
    use crate::model::PlannerParams;

    fn base() -> Scenario {
        Scenario {
            road: RoadModel::new(3, 3.5, 15.0, 350.0).unwrap(),
            ego: EgoState::new(0.0, 5.0, 1, 3.5, 3),
            traffic: alloc::vec![
                VehicleSeed { id: 1, lane: 0, s0: 40.0, v: 8.0 },
                VehicleSeed { id: 2, lane: 1, s0: 30.0, v: 5.0 },
                VehicleSeed { id: 3, lane: 2, s0: 20.0, v: 2.0 },
            ],
            sim_dt: 0.05,
            params: PlannerParams::default(),
            seed: 0,
        }
    }

    #[test]
    fn same_seed_same_world() {
        let r = Randomization::default();
        assert_eq!(randomize(&base(), &r, 7), randomize(&base(), &r, 7));
        assert_ne!(randomize(&base(), &r, 7), randomize(&base(), &r, 8));
    }

    #[test]
    fn jitter_and_speeds_stay_in_range() {
        let r = Randomization::default();
        for seed in 0..50 {
            let sc = randomize(&base(), &r, seed).unwrap();
            let mut speeds: Vec<f64> = sc.traffic.iter().map(|t| t.v).collect();
            speeds.sort_by(f64::total_cmp);
            assert_eq!(speeds, [2.0, 5.0, 8.0]);
            for (a, b) in sc.traffic.iter().zip(&base().traffic) {
                assert!((a.s0 - b.s0).abs() <= 8.0);
            }
        }
    }
}
