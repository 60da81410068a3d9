//! Road geometry, vehicle state and the observation model.
//!
//! Positions are Frenet coordinates: `s` is arc length along the road and the
//! lateral offset is measured from the centre of lane 0, the leftmost lane.
//! Lane `i` has its centre at `i * lane_width`.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::model::PlannerParams;
use crate::safety::{min_safe_distance, Direction};

/// Lane index; 0 is the leftmost lane with respect to traffic flow.
pub type Lane = usize;

/// Number of usable lanes as a function of the planner step.
#[derive(Clone, Debug, PartialEq)]
pub enum LaneCount {
    Constant(usize),
    /// `(first_step, count)` pairs sorted by step; the first entry must start
    /// at step 0.
    Schedule(Vec<(u64, usize)>),
}

impl LaneCount {
    pub fn at(&self, k: u64) -> usize {
        match self {
            LaneCount::Constant(n) => *n,
            LaneCount::Schedule(entries) => entries
                .iter()
                .take_while(|(from, _)| *from <= k)
                .last()
                .map(|(_, n)| *n)
                .unwrap_or(0),
        }
    }

    fn max(&self) -> usize {
        match self {
            LaneCount::Constant(n) => *n,
            LaneCount::Schedule(entries) => entries.iter().map(|(_, n)| *n).max().unwrap_or(0),
        }
    }
}

/// Set of lanes `{0, .., count - 1}` available at one step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LaneSet {
    count: usize,
}

impl LaneSet {
    pub fn with_count(count: usize) -> Self {
        LaneSet { count }
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn contains(&self, lane: Lane) -> bool {
        lane < self.count
    }

    pub fn iter(&self) -> core::ops::Range<Lane> {
        0..self.count
    }

    /// Lanes reachable from `lane` in one planning step (itself and its
    /// neighbours).
    pub fn adjacent(&self, lane: Lane) -> core::ops::Range<Lane> {
        lane.saturating_sub(1)..(lane + 2).min(self.count)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoadModel {
    pub lanes: LaneCount,
    pub lane_width: f64,
    pub speed_limit: f64,
    pub length: f64,
}

impl RoadModel {
    pub fn new(lanes: usize, lane_width: f64, speed_limit: f64, length: f64) -> Result<Self, DomainError> {
        let road = RoadModel {
            lanes: LaneCount::Constant(lanes),
            lane_width,
            speed_limit,
            length,
        };
        road.validate()?;
        Ok(road)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        match &self.lanes {
            LaneCount::Constant(n) if *n == 0 => return Err(DomainError::invalid("road.lanes", "must be at least 1")),
            LaneCount::Schedule(entries) => {
                if entries.first().map(|e| e.0) != Some(0) {
                    return Err(DomainError::invalid("road.lanes", "schedule must start at step 0"));
                }
                if entries.iter().any(|e| e.1 == 0) {
                    return Err(DomainError::invalid("road.lanes", "must be at least 1"));
                }
                if entries.windows(2).any(|w| w[0].0 >= w[1].0) {
                    return Err(DomainError::invalid("road.lanes", "schedule steps must increase"));
                }
            }
            _ => {}
        }
        positive("road.lane_width_m", self.lane_width)?;
        positive("road.speed_limit_mps", self.speed_limit)?;
        positive("road.length_m", self.length)?;
        Ok(())
    }

    pub fn lane_count(&self, k: u64) -> usize {
        self.lanes.at(k)
    }

    pub fn max_lanes(&self) -> usize {
        self.lanes.max()
    }

    pub fn lane_center(&self, lane: Lane) -> f64 {
        lane as f64 * self.lane_width
    }

    /// Lane whose centre is closest to the lateral offset `lateral`.
    pub fn lane_at(&self, lateral: f64) -> Lane {
        let idx = crate::math::round(lateral / self.lane_width);
        if idx <= 0.0 {
            0
        } else {
            (idx as usize).min(self.max_lanes().saturating_sub(1))
        }
    }
}

/// Lanes available for travel at planner step `k`.
pub fn lane_set(road: &RoadModel, k: u64) -> LaneSet {
    LaneSet::with_count(road.lane_count(k))
}

/// Trapezoidal position update over one step of length `dt`.
pub fn step_longitudinal(s: f64, v_prev: f64, v_next: f64, dt: f64) -> f64 {
    s + 0.5 * (v_prev + v_next) * dt
}

/// Lane indicator from the last `N` target lanes: the mean rounded half up.
///
/// Computed in integers as `floor((2 * sum + N) / (2 * N))` so that ties are
/// exact.
pub fn lane_indicator(history: &[Lane]) -> Lane {
    assert!(!history.is_empty(), "lane history must not be empty");
    let n = history.len();
    let sum: usize = history.iter().sum();
    (2 * sum + n) / (2 * n)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EgoState {
    pub s: f64,
    pub v: f64,
    /// Lane indicator, always `lane_indicator(&target_history)`.
    pub lane: Lane,
    /// Lateral offset from the centre of lane 0.
    pub lateral: f64,
    /// Last `N` target lanes, oldest first.
    pub target_history: Vec<Lane>,
    /// Target lane commanded at the previous planner step.
    pub prev_target: Lane,
}

impl EgoState {
    /// Ego travelling centred in `lane` with a settled target history of
    /// length `lane_change_steps`.
    pub fn new(s: f64, v: f64, lane: Lane, lane_width: f64, lane_change_steps: usize) -> Self {
        EgoState {
            s,
            v,
            lane,
            lateral: lane as f64 * lane_width,
            target_history: alloc::vec![lane; lane_change_steps.max(1)],
            prev_target: lane,
        }
    }

    /// Record a new target lane and refresh the lane indicator.
    pub fn push_target(&mut self, target: Lane) {
        if !self.target_history.is_empty() {
            self.target_history.remove(0);
        }
        self.target_history.push(target);
        self.lane = lane_indicator(&self.target_history);
        self.prev_target = target;
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpeedSample {
    pub t: f64,
    pub v: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObservedVehicle {
    pub id: u32,
    pub s: f64,
    pub v: f64,
    pub lane: Lane,
    /// Time-ordered speed observations, oldest first.
    pub speed_history: Vec<SpeedSample>,
}

impl ObservedVehicle {
    pub fn new(id: u32, s: f64, v: f64, lane: Lane) -> Self {
        ObservedVehicle {
            id,
            s,
            v,
            lane,
            speed_history: Vec::new(),
        }
    }
}

/// Vehicles within `visibility` of the ego (boundary inclusive), sorted by id.
pub fn observe(ego: &EgoState, traffic: &[ObservedVehicle], visibility: f64) -> Vec<ObservedVehicle> {
    let mut seen: Vec<ObservedVehicle> = traffic
        .iter()
        .filter(|veh| (veh.s - ego.s).abs() <= visibility)
        .cloned()
        .collect();
    seen.sort_by_key(|veh| veh.id);
    seen
}

/// Everything the planner sees at one planner tick.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldSnapshot {
    /// Planner step index `k`.
    pub step: u64,
    pub time: f64,
    pub ego: EgoState,
    pub vehicles: Vec<ObservedVehicle>,
    pub road: RoadModel,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VehicleSeed {
    pub id: u32,
    pub lane: Lane,
    pub s0: f64,
    pub v: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub road: RoadModel,
    pub ego: EgoState,
    pub traffic: Vec<VehicleSeed>,
    pub sim_dt: f64,
    pub params: PlannerParams,
    pub seed: u64,
}

impl Scenario {
    /// Simulator ticks per planner tick.
    pub fn ticks_per_plan(&self) -> usize {
        crate::math::round(self.params.dt / self.sim_dt) as usize
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        self.road.validate()?;
        self.params.validate()?;
        positive("sim.dt_s", self.sim_dt)?;
        let ratio = self.params.dt / self.sim_dt;
        if (ratio - crate::math::round(ratio)).abs() > 1e-9 || ratio < 1.0 - 1e-9 {
            return Err(DomainError::invalid("sim.dt_s", "must divide planner.dt_s exactly"));
        }
        let lanes = self.road.lane_count(0);
        if self.ego.lane >= lanes {
            return Err(DomainError::invalid("ego.lane0", "outside the road"));
        }
        if !(self.ego.v >= 0.0 && self.ego.v <= self.road.speed_limit) {
            return Err(DomainError::invalid("ego.v0_mps", "must lie in [0, speed limit]"));
        }
        let mut ids: Vec<u32> = self.traffic.iter().map(|t| t.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(DomainError::invalid("traffic.id", "ids must be unique"));
        }
        for (i, veh) in self.traffic.iter().enumerate() {
            if veh.id == 0 {
                return Err(DomainError::invalid_at("traffic", i, "id", "0 is reserved for the ego vehicle"));
            }
            if veh.lane >= lanes {
                return Err(DomainError::invalid_at("traffic", i, "lane", "outside the road"));
            }
            if !(veh.v >= 0.0) || !veh.s0.is_finite() {
                return Err(DomainError::invalid_at("traffic", i, "v_mps", "must be finite and non-negative"));
            }
        }
        self.check_spacing()
    }

    /// Same-lane pairs, ego included as id 0, must start at least a vehicle
    /// length plus the safe following distance apart.
    fn check_spacing(&self) -> Result<(), DomainError> {
        let safety = self.params.safety_params(self.road.lane_width);
        let mut all: Vec<VehicleSeed> = self.traffic.clone();
        all.push(VehicleSeed {
            id: 0,
            lane: self.ego.lane,
            s0: self.ego.s,
            v: self.ego.v,
        });
        for (i, a) in all.iter().enumerate() {
            for b in &all[i + 1..] {
                if a.lane != b.lane {
                    continue;
                }
                let (rear, front) = if a.s0 <= b.s0 { (a, b) } else { (b, a) };
                let required =
                    safety.vehicle_length + min_safe_distance(rear.v, front.v, &safety, Direction::Forward);
                let gap = front.s0 - rear.s0;
                if gap < required {
                    return Err(DomainError::Overlap {
                        first: a.id.min(b.id),
                        second: a.id.max(b.id),
                        gap,
                        required,
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DomainError {
    Invalid { field: String, reason: &'static str },
    /// Two vehicles (id 0 is the ego) start too close in the same lane.
    Overlap { first: u32, second: u32, gap: f64, required: f64 },
}

impl DomainError {
    pub(crate) fn invalid(field: &str, reason: &'static str) -> Self {
        DomainError::Invalid {
            field: String::from(field),
            reason,
        }
    }

    fn invalid_at(list: &str, index: usize, field: &str, reason: &'static str) -> Self {
        DomainError::Invalid {
            field: alloc::format!("{list}[{index}].{field}"),
            reason,
        }
    }
}

impl core::error::Error for DomainError {}

impl fmt::Display for DomainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DomainError::Invalid { field, reason } => write!(f, "{field}: {reason}"),
            DomainError::Overlap {
                first,
                second,
                gap,
                required,
            } => write!(
                f,
                "vehicles {first} and {second} start {gap:.2} m apart in the same lane; at least {required:.2} m required"
            ),
        }
    }
}

pub(crate) fn positive(field: &str, value: f64) -> Result<(), DomainError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(DomainError::invalid(field, "must be positive"))
    }
}
