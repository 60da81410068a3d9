//! Intelligent driver model and the MOBIL lane-change rule.

use crate::highway::{Lane, WorldSnapshot};
use crate::math;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdmParams {
    /// Jam distance `s0`, m (bumper to bumper).
    pub min_gap: f64,
    /// Desired time headway `T`, s.
    pub time_headway: f64,
    /// Maximum acceleration `a`, m/s^2.
    pub accel: f64,
    /// Comfortable deceleration `b`, m/s^2 (positive).
    pub comfort_decel: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        IdmParams {
            min_gap: 2.0,
            time_headway: 1.0,
            accel: 1.5,
            comfort_decel: 2.0,
        }
    }
}

/// Leader seen by a follower: bumper gap and speed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Leader {
    pub gap: f64,
    pub v: f64,
}

impl IdmParams {
    /// Desired gap `s*` for speed `v` closing at `v - v_lead`.
    pub fn desired_gap(&self, v: f64, v_lead: f64) -> f64 {
        let dyn_part = v * self.time_headway + v * (v - v_lead) / (2.0 * math::sqrt(self.accel * self.comfort_decel));
        self.min_gap + dyn_part.max(0.0)
    }

    /// IDM acceleration towards `v0` with maximum acceleration `accel`.
    pub fn accel_with(&self, accel: f64, v: f64, v0: f64, leader: Option<Leader>) -> f64 {
        let ratio = if v0 > 0.0 { v / v0 } else { 1.0 };
        let r2 = ratio * ratio;
        let free = 1.0 - r2 * r2;
        let interaction = match leader {
            None => 0.0,
            Some(l) => {
                let s_star = self.desired_gap(v, l.v);
                let gap = l.gap.max(0.1);
                (s_star / gap) * (s_star / gap)
            }
        };
        accel * (free - interaction)
    }

    pub fn accel(&self, v: f64, v0: f64, leader: Option<Leader>) -> f64 {
        self.accel_with(self.accel, v, v0, leader)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MobilParams {
    pub politeness: f64,
    /// Minimum net gain to change, m/s^2.
    pub threshold: f64,
    /// Most negative acceleration imposed on the new follower, m/s^2.
    pub safe_decel: f64,
}

impl Default for MobilParams {
    fn default() -> Self {
        MobilParams {
            politeness: 0.3,
            threshold: 0.1,
            safe_decel: -4.0,
        }
    }
}

/// Longitudinal view of one lane around the ego: nearest leader and
/// follower as `(s, v)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Neighbours {
    leader: Option<(f64, f64)>,
    follower: Option<(f64, f64)>,
}

fn neighbours(snapshot: &WorldSnapshot, lane: Lane) -> Neighbours {
    let s0 = snapshot.ego.s;
    let mut n = Neighbours::default();
    for veh in snapshot.vehicles.iter().filter(|v| v.lane == lane) {
        if veh.s >= s0 {
            if n.leader.map_or(true, |(s, _)| veh.s < s) {
                n.leader = Some((veh.s, veh.v));
            }
        } else if n.follower.map_or(true, |(s, _)| veh.s > s) {
            n.follower = Some((veh.s, veh.v));
        }
    }
    n
}

/// Settings for the ego vehicle's car following.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EgoDriver {
    pub idm: IdmParams,
    pub accel_max: f64,
    pub accel_min: f64,
    pub cruise_speed: f64,
    pub vehicle_length: f64,
    /// Planner period over which a speed command is held, s.
    pub dt: f64,
}

impl EgoDriver {
    /// Ramp to the cruise speed at full acceleration, but never above what
    /// the IDM allows behind `leader`.
    pub fn accel(&self, v: f64, leader: Option<Leader>) -> f64 {
        let cruise = ((self.cruise_speed - v) / self.dt).min(self.accel_max);
        let a = match leader {
            None => cruise,
            Some(_) => cruise.min(self.idm.accel_with(self.accel_max, v, self.cruise_speed, leader)),
        };
        a.clamp(self.accel_min, self.accel_max)
    }

    fn leader_in(&self, snapshot: &WorldSnapshot, lane: Lane) -> Option<Leader> {
        neighbours(snapshot, lane).leader.map(|(s, v)| Leader {
            gap: s - snapshot.ego.s - self.vehicle_length,
            v,
        })
    }

    /// Speed command for following in the current target lane.
    pub fn follow_speed(&self, snapshot: &WorldSnapshot, lane: Lane) -> f64 {
        let v = snapshot.ego.v;
        let a = self.accel(v, self.leader_in(snapshot, lane));
        (v + a * self.dt).clamp(0.0, self.cruise_speed)
    }
}

/// MOBIL over the lanes adjacent to `lane`; returns the best lane, which is
/// `lane` itself when no change passes both the safety and incentive tests.
pub fn mobil_decision(snapshot: &WorldSnapshot, lane: Lane, driver: &EgoDriver, params: &MobilParams) -> Lane {
    let ego = &snapshot.ego;
    let len = driver.vehicle_length;
    let idm = &driver.idm;
    let follower_accel = |f: (f64, f64), leader: Option<(f64, f64)>| {
        idm.accel(
            f.1,
            f.1,
            leader.map(|(s, v)| Leader {
                gap: s - f.0 - len,
                v,
            }),
        )
    };
    let lead = |n: Option<(f64, f64)>| {
        n.map(|(s, v)| Leader {
            gap: s - ego.s - len,
            v,
        })
    };
    let here = neighbours(snapshot, lane);
    let a_old = driver.accel(ego.v, lead(here.leader));
    let me = (ego.s, ego.v);
    // the old follower loses the ego as its leader
    let old_follower_gain = here
        .follower
        .map_or(0.0, |f| follower_accel(f, here.leader) - follower_accel(f, Some(me)));

    let lanes = snapshot.road.lane_count(snapshot.step);
    let mut best = (lane, 0.0);
    for cand in [lane.wrapping_sub(1), lane + 1] {
        if cand >= lanes {
            continue;
        }
        let there = neighbours(snapshot, cand);
        if there.leader.is_some_and(|(s, _)| s - ego.s < len) || there.follower.is_some_and(|(s, _)| ego.s - s < len) {
            continue;
        }
        let a_new = driver.accel(ego.v, lead(there.leader));
        let (new_follower_after, new_follower_gain) = match there.follower {
            None => (0.0, 0.0),
            Some(f) => {
                let after = follower_accel(f, Some(me));
                (after, after - follower_accel(f, there.leader))
            }
        };
        if new_follower_after < params.safe_decel {
            continue;
        }
        let incentive = a_new - a_old + params.politeness * (new_follower_gain + old_follower_gain);
        if incentive > params.threshold && incentive > best.1 {
            best = (cand, incentive);
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::highway::{EgoState, ObservedVehicle, RoadModel};

    fn driver() -> EgoDriver {
        EgoDriver {
            idm: IdmParams::default(),
            accel_max: 3.5,
            accel_min: -5.0,
            cruise_speed: 15.0,
            vehicle_length: 4.5,
            dt: 0.4,
        }
    }

    fn snap(vehicles: alloc::vec::Vec<ObservedVehicle>) -> WorldSnapshot {
        WorldSnapshot {
            step: 0,
            time: 0.0,
            ego: EgoState::new(0.0, 5.0, 1, 3.5, 3),
            vehicles,
            road: RoadModel::new(3, 3.5, 15.0, 350.0).unwrap(),
        }
    }

    #[test]
    fn free_road_idm_is_the_free_term() {
        let p = IdmParams::default();
        assert!((p.accel(0.0, 10.0, None) - 1.5).abs() < 1e-12);
        assert!(p.accel(10.0, 10.0, None).abs() < 1e-12);
    }

    #[test]
    fn equilibrium_gap_gives_zero_accel_at_standstill_limit() {
        let p = IdmParams::default();
        // v = 0: s* = s0, so a gap of s0 exactly cancels the free term
        assert!(p.accel(0.0, 10.0, Some(Leader { gap: 2.0, v: 0.0 })).abs() < 1e-12);
    }

    #[test]
    fn mobil_leaves_a_slow_leader_for_an_empty_lane() {
        let s = snap(alloc::vec![ObservedVehicle::new(1, 12.0, 5.0, 1), ObservedVehicle::new(2, 10.0, 2.0, 2)]);
        assert_eq!(mobil_decision(&s, 1, &driver(), &MobilParams::default()), 0);
    }

    #[test]
    fn mobil_keeps_lane_when_neighbours_are_slower() {
        let s = snap(alloc::vec![
            ObservedVehicle::new(1, 30.0, 5.0, 1),
            ObservedVehicle::new(2, 10.0, 2.0, 0),
            ObservedVehicle::new(3, 10.0, 2.0, 2),
        ]);
        assert_eq!(mobil_decision(&s, 1, &driver(), &MobilParams::default()), 1);
    }
}
