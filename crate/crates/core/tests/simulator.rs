//! Closed-loop episodes and the metrics computed from their logs.

mod common;

use common::{case_study, scenario};
use slas_core::highway::RoadModel;
use slas_core::sim::{
    aggregate, compute_metrics, make_policy, randomize, run_episode, run_seed, EpisodeLog, Event, EventKind, PolicyKind,
    Randomization, Sample, SimConfig, VehicleSample,
};
use slas_core::{Scenario, WorkClock};

fn run(sc: &Scenario, kind: PolicyKind) -> EpisodeLog {
    let cfg = SimConfig::default();
    let mut policy = make_policy(kind, sc, &cfg);
    run_episode(sc, policy.as_mut(), &cfg, &WorkClock::new())
}

/// Ego at constant speed from s = 0 with an optional leader `gap` ahead.
fn synthetic(v: f64, leader_gap: Option<f64>, until: f64) -> EpisodeLog {
    let dt = 0.05;
    let n = (until / dt).round() as usize;
    let samples = (0..=n)
        .map(|k| {
            let t = k as f64 * dt;
            Sample {
                time: t,
                ego_s: v * t,
                ego_v: v,
                ego_lateral: 3.5,
                ego_lane: 1,
                target_lane: 1,
                ref_speed: v,
                planner_tick: k % 8 == 0,
                solver: None,
                vehicles: leader_gap
                    .map(|g| VehicleSample {
                        id: 1,
                        s: v * t + g,
                        v,
                        lane: 1,
                    })
                    .into_iter()
                    .collect(),
            }
        })
        .collect();
    EpisodeLog {
        policy: PolicyKind::NoChange,
        dt,
        road: RoadModel::new(3, 3.5, 15.0, 350.0).unwrap(),
        visibility: 50.0,
        vehicle_length: 4.5,
        lateral_overlap: 2.0,
        samples,
        events: Vec::new(),
    }
}

#[test]
fn constant_speed_solo_run() {
    let m = compute_metrics(&synthetic(10.0, None, 36.0));
    assert!((m.travel_time.unwrap() - 35.0).abs() < 1e-9);
    assert_eq!(m.mean_headway, 50.0);
    assert_eq!(m.long_accel.mean, 0.0);
    assert_eq!(m.lat_jerk.mean, 0.0);
    assert!(m.is_valid());
}

#[test]
fn constant_leader_headway() {
    let m = compute_metrics(&synthetic(10.0, Some(20.0), 36.0));
    assert!((m.mean_headway - 20.0).abs() < 1e-9);
    assert!((m.min_distance_to_closest - 20.0).abs() < 1e-9);
}

#[test]
fn collisions_are_excluded_from_tables() {
    let mut crashed = synthetic(10.0, Some(3.0), 36.0);
    crashed.events.push(Event {
        time: 1.0,
        kind: EventKind::Collision { with: 1 },
    });
    let bad = compute_metrics(&crashed);
    assert!(bad.collided && !bad.is_valid());
    let good = compute_metrics(&synthetic(10.0, None, 36.0));
    let row = aggregate(&[good.clone(), bad]);
    assert_eq!((row.runs, row.excluded), (2, 1));
    assert!((row.columns[0].mean - 35.0).abs() < 1e-9);
    assert_eq!(row.columns[0].std, 0.0);
}

#[test]
fn unfinished_runs_have_no_travel_time() {
    let m = compute_metrics(&synthetic(2.0, None, 100.0));
    assert_eq!(m.travel_time, None);
    assert!(!m.is_valid());
}

#[test]
fn empty_road_matches_ramp_then_cruise() {
    let sc = scenario(3, 1, 8.0, &[]);
    let log = run(&sc, PolicyKind::Slas);
    let m = compute_metrics(&log);
    // 2 s ramp at 3.5 m/s^2 covers 23 m, then 327 m at 15 m/s
    let expect = 2.0 + 327.0 / 15.0;
    let t = m.travel_time.unwrap();
    assert!((t - expect).abs() < 0.15, "{t} vs {expect}");
    assert_eq!(m.lane_changes, 0);
    assert!(log.reached_goal());
}

#[test]
fn no_change_settles_behind_the_leader() {
    let log = run(&case_study(), PolicyKind::NoChange);
    assert!(log.samples.iter().all(|s| s.ego_lane == 1 && s.target_lane == 1));
    assert!(!log.collided());
    let late: Vec<f64> = log.samples.iter().filter(|s| s.time > 30.0).map(|s| s.ego_v).collect();
    assert!(!late.is_empty());
    assert!(late.iter().all(|v| (v - 5.0).abs() < 0.05), "{:?}", &late[..5]);
}

#[test]
fn blocked_road_stops_short_of_traffic() {
    let mut sc = scenario(3, 1, 10.0, &[(1, 0, 60.0, 0.0), (2, 1, 60.0, 0.0), (3, 2, 60.0, 0.0)]);
    sc.road.length = 500.0;
    for kind in [PolicyKind::Slas, PolicyKind::Mobil] {
        let cfg = SimConfig {
            time_cap: 30.0,
            ..SimConfig::default()
        };
        let mut policy = make_policy(kind, &sc, &cfg);
        let log = run_episode(&sc, policy.as_mut(), &cfg, &WorkClock::new());
        assert!(!log.collided(), "{kind}");
        let last = log.samples.last().unwrap();
        assert!(last.ego_v < 0.05, "{kind}: {}", last.ego_v);
        let gap = 60.0 - last.ego_s - 4.5;
        assert!(gap >= 2.0 - 0.1, "{kind}: gap {gap}");
    }
}

#[test]
fn slas_case_study_is_safe_and_fast() {
    let sc = case_study();
    let slas = compute_metrics(&run(&sc, PolicyKind::Slas));
    let mobil = compute_metrics(&run(&sc, PolicyKind::Mobil));
    assert!(slas.is_valid() && mobil.is_valid());
    assert!(slas.travel_time < mobil.travel_time);
    assert!(slas.min_distance_to_closest >= 2.0 - 0.1);
}

#[test]
fn randomized_worlds_are_reproducible() {
    let base = case_study();
    let rand = Randomization::default();
    let a = randomize(&base, &rand, run_seed(7, 3));
    let b = randomize(&base, &rand, run_seed(7, 3));
    assert_eq!(a, b);
    let a = a.unwrap();
    a.validate().unwrap();
    assert_eq!(a.seed, 10);
    for (t, base_t) in a.traffic.iter().zip(&base.traffic) {
        assert_eq!((t.id, t.lane), (base_t.id, base_t.lane));
        assert!((t.s0 - base_t.s0).abs() <= rand.position_jitter);
        assert!(rand.lane_speeds.contains(&t.v));
    }
    // one speed per lane
    for lane in 0..3 {
        let speeds: Vec<f64> = a.traffic.iter().filter(|t| t.lane == lane).map(|t| t.v).collect();
        assert!(speeds.windows(2).all(|w| w[0] == w[1]));
    }
}

#[test]
fn episodes_are_deterministic() {
    let sc = case_study();
    assert_eq!(run(&sc, PolicyKind::Slas), run(&sc, PolicyKind::Slas));
}
