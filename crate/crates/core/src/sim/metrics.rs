use alloc::vec::Vec;

use crate::math;

use super::episode::{EpisodeLog, Sample};

/// Mean and population standard deviation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(xs: impl IntoIterator<Item = f64>) -> Stat {
        let xs: Vec<f64> = xs.into_iter().collect();
        if xs.is_empty() {
            return Stat::default();
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Stat {
            mean,
            std: math::sqrt(var),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    /// Time at which the ego crossed the end of the road; `None` when it
    /// never did.
    pub travel_time: Option<f64>,
    pub mean_headway: f64,
    pub min_distance_to_closest: f64,
    pub mean_distance_to_closest: f64,
    /// `(s, lateral)` per sample.
    pub lateral_profile: Vec<(f64, f64)>,
    pub long_accel: Stat,
    pub long_jerk: Stat,
    pub lat_accel: Stat,
    pub lat_jerk: Stat,
    /// Deceleration magnitude, zero while accelerating.
    pub brake: Stat,
    pub brake_jerk: Stat,
    /// Acceleration, zero while braking.
    pub throttle: Stat,
    pub throttle_jerk: Stat,
    pub collided: bool,
    pub lane_changes: usize,
}

impl Metrics {
    /// Collision-free episodes that reached the goal.
    pub fn is_valid(&self) -> bool {
        !self.collided && self.travel_time.is_some()
    }
}

/// Centre distance to the nearest same-lane leader, capped at `range`.
pub fn headway(sample: &Sample, range: f64) -> f64 {
    sample
        .vehicles
        .iter()
        .filter(|v| v.lane == sample.ego_lane && v.s > sample.ego_s)
        .map(|v| v.s - sample.ego_s)
        .fold(range, f64::min)
}

/// Euclidean centre distance to the nearest vehicle, capped at `range`.
pub fn distance_to_closest(sample: &Sample, lane_width: f64, range: f64) -> f64 {
    sample
        .vehicles
        .iter()
        .map(|v| {
            let ds = v.s - sample.ego_s;
            let dd = v.lane as f64 * lane_width - sample.ego_lateral;
            math::sqrt(ds * ds + dd * dd)
        })
        .fold(range, f64::min)
}

fn diff(xs: &[f64], dt: f64) -> Vec<f64> {
    xs.windows(2).map(|w| (w[1] - w[0]) / dt).collect()
}

fn abs_stat(xs: &[f64]) -> Stat {
    Stat::of(xs.iter().map(|x| x.abs()))
}

pub fn compute_metrics(log: &EpisodeLog) -> Metrics {
    let dt = log.dt;
    let range = log.visibility;
    let lw = log.road.lane_width;
    let samples = &log.samples;
    let goal = log.road.length;
    let travel_time = samples.windows(2).find(|w| w[1].ego_s >= goal && w[0].ego_s < goal).map(|w| {
        let f = (goal - w[0].ego_s) / (w[1].ego_s - w[0].ego_s);
        w[0].time + f * (w[1].time - w[0].time)
    });
    let travel_time = travel_time.or_else(|| samples.first().filter(|s| s.ego_s >= goal).map(|s| s.time));

    let speeds: Vec<f64> = samples.iter().map(|s| s.ego_v).collect();
    let lateral: Vec<f64> = samples.iter().map(|s| s.ego_lateral).collect();
    let accel = diff(&speeds, dt);
    let jerk = diff(&accel, dt);
    let lat_v = diff(&lateral, dt);
    let lat_a = diff(&lat_v, dt);
    let lat_j = diff(&lat_a, dt);
    let brake: Vec<f64> = accel.iter().map(|a| (-a).max(0.0)).collect();
    let throttle: Vec<f64> = accel.iter().map(|a| a.max(0.0)).collect();

    let closest: Vec<f64> = samples.iter().map(|s| distance_to_closest(s, lw, range)).collect();
    let lane_changes = log
        .events
        .iter()
        .filter(|e| matches!(e.kind, super::EventKind::LaneChangeFinish { .. }))
        .count();
    Metrics {
        travel_time,
        mean_headway: Stat::of(samples.iter().map(|s| headway(s, range))).mean,
        min_distance_to_closest: closest.iter().copied().fold(range, f64::min),
        mean_distance_to_closest: Stat::of(closest.iter().copied()).mean,
        lateral_profile: samples.iter().map(|s| (s.ego_s, s.ego_lateral)).collect(),
        long_accel: abs_stat(&accel),
        long_jerk: abs_stat(&jerk),
        lat_accel: abs_stat(&lat_a),
        lat_jerk: abs_stat(&lat_j),
        brake: Stat::of(brake.iter().copied()),
        brake_jerk: abs_stat(&diff(&brake, dt)),
        throttle: Stat::of(throttle.iter().copied()),
        throttle_jerk: abs_stat(&diff(&throttle, dt)),
        collided: log.collided(),
        lane_changes,
    }
}

/// Names of the per-episode figures aggregated over Monte Carlo runs.
pub const TABLE_COLUMNS: [&str; 7] = [
    "travel_time",
    "brake",
    "brake_jerk",
    "throttle",
    "throttle_jerk",
    "lat_accel",
    "lat_jerk",
];

impl Metrics {
    /// The per-episode values behind [`TABLE_COLUMNS`]: travel time and the
    /// mean magnitudes of the comfort channels.
    pub fn table_values(&self) -> [f64; 7] {
        [
            self.travel_time.unwrap_or(f64::NAN),
            self.brake.mean,
            self.brake_jerk.mean,
            self.throttle.mean,
            self.throttle_jerk.mean,
            self.lat_accel.mean,
            self.lat_jerk.mean,
        ]
    }
}

/// Monte Carlo summary for one policy.
#[derive(Clone, Debug, PartialEq)]
pub struct TableRow {
    pub runs: usize,
    /// Runs left out for a collision or a missed goal.
    pub excluded: usize,
    pub columns: [Stat; 7],
    pub long_jerk: Stat,
    pub mean_headway: Stat,
    pub min_distance_to_closest: f64,
}

pub fn aggregate(metrics: &[Metrics]) -> TableRow {
    let valid: Vec<&Metrics> = metrics.iter().filter(|m| m.is_valid()).collect();
    let columns = core::array::from_fn(|c| Stat::of(valid.iter().map(|m| m.table_values()[c])));
    TableRow {
        runs: metrics.len(),
        excluded: metrics.len() - valid.len(),
        columns,
        long_jerk: Stat::of(valid.iter().map(|m| m.long_jerk.mean)),
        mean_headway: Stat::of(valid.iter().map(|m| m.mean_headway)),
        min_distance_to_closest: metrics.iter().map(|m| m.min_distance_to_closest).fold(f64::INFINITY, f64::min),
    }
}
