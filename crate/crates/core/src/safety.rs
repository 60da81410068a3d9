//! Safe following distances and the lane-change deviation cost.
//!
//! The required gap combines a reaction-time term with the difference of the
//! two vehicles' stopping distances and never drops below a standstill gap.
//! While the ego vehicle is (or may be) changing lanes the gap is inflated by
//! the distance covered during one lane change, scaled by how far the ego has
//! deviated from its previous target lane.

use alloc::vec::Vec;

use crate::highway::Lane;

/// User-facing safety settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SafetyConfig {
    /// Standstill gap, m.
    pub d_min: f64,
    pub t_react: f64,
    /// Braking capability assumed for the ego, m/s^2 (positive).
    pub a_brake_ego: f64,
    /// Braking capability assumed for other vehicles, m/s^2 (positive).
    pub a_brake_other: f64,
    /// Weight of the deviation cost.
    pub gamma4: f64,
    /// Bumper-to-bumper length; positions are vehicle centres.
    pub vehicle_length: f64,
}

impl Default for SafetyConfig {
    fn default() -> Self {
        SafetyConfig {
            d_min: 2.0,
            t_react: 0.5,
            a_brake_ego: 5.0,
            a_brake_other: 5.0,
            gamma4: 1.0,
            vehicle_length: 4.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SafetyParams {
    pub d_min: f64,
    pub t_react: f64,
    pub a_brake_ego: f64,
    pub a_brake_other: f64,
    pub gamma4: f64,
    pub vehicle_length: f64,
    /// Planner steps needed for one lane change (`N`).
    pub lane_change_steps: usize,
    /// Planner step, s.
    pub dt: f64,
    pub lane_width: f64,
}

impl SafetyParams {
    pub fn new(cfg: SafetyConfig, lane_change_steps: usize, dt: f64, lane_width: f64) -> Self {
        SafetyParams {
            d_min: cfg.d_min,
            t_react: cfg.t_react,
            a_brake_ego: cfg.a_brake_ego,
            a_brake_other: cfg.a_brake_other,
            gamma4: cfg.gamma4,
            vehicle_length: cfg.vehicle_length,
            lane_change_steps,
            dt,
            lane_width,
        }
    }

    /// Time to complete one lane change, `N * T_s`.
    pub fn lane_change_time(&self) -> f64 {
        self.lane_change_steps as f64 * self.dt
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// The other vehicle is ahead of the ego.
    Forward,
    /// The other vehicle follows the ego.
    Rear,
}

/// Minimum bumper gap to another vehicle travelling at `v_other`.
pub fn min_safe_distance(v_ego: f64, v_other: f64, p: &SafetyParams, direction: Direction) -> f64 {
    let raw = match direction {
        Direction::Forward => {
            v_ego * p.t_react + v_ego * v_ego / (2.0 * p.a_brake_ego) - v_other * v_other / (2.0 * p.a_brake_other)
        }
        Direction::Rear => {
            v_other * p.t_react + v_other * v_other / (2.0 * p.a_brake_other) - v_ego * v_ego / (2.0 * p.a_brake_ego)
        }
    };
    raw.max(p.d_min)
}

/// Affine majorant `constant + slope * v` of the unclamped gap over an ego
/// speed interval; the clamped gap is bounded by `max(d_min, constant + slope * v)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineMargin {
    pub constant: f64,
    pub slope: f64,
}

impl AffineMargin {
    pub fn at(&self, v: f64) -> f64 {
        self.constant + self.slope * v
    }
}

/// Majorant of the forward gap for ego speeds in `[v_lo, v_hi]`.
///
/// The ego stopping distance is convex in speed, so the chord through the
/// interval end points bounds it from above and is exact at both ends.
pub fn forward_margin_bound(v_other: f64, v_lo: f64, v_hi: f64, p: &SafetyParams) -> AffineMargin {
    let stop_other = v_other * v_other / (2.0 * p.a_brake_other);
    AffineMargin {
        constant: -v_lo * v_hi / (2.0 * p.a_brake_ego) - stop_other,
        slope: p.t_react + (v_lo + v_hi) / (2.0 * p.a_brake_ego),
    }
}

/// Widest ego speed interval covered by one forward chord, m/s.
pub const FORWARD_CHORD_WIDTH: f64 = 2.5;

/// Chords of the forward gap over equal sub-intervals of `[v_lo, v_hi]`,
/// none wider than [`FORWARD_CHORD_WIDTH`].
///
/// Each chord lies above the gap on its own sub-interval and below it
/// elsewhere, so their maximum bounds the gap over the whole interval and
/// is exact at every break point.
pub fn forward_margin_pieces(v_other: f64, v_lo: f64, v_hi: f64, p: &SafetyParams) -> Vec<AffineMargin> {
    let n = crate::math::ceil((v_hi - v_lo) / FORWARD_CHORD_WIDTH).max(1.0) as usize;
    let w = (v_hi - v_lo) / n as f64;
    (0..n)
        .map(|k| forward_margin_bound(v_other, v_lo + k as f64 * w, v_lo + (k + 1) as f64 * w, p))
        .collect()
}

/// Majorant of the rear gap for ego speeds in `[v_lo, v_hi]`.
///
/// The ego stopping distance enters with a minus sign, so any tangent bounds
/// it from above; the tangent is taken at the interval midpoint.
pub fn rear_margin_bound(v_other: f64, v_lo: f64, v_hi: f64, p: &SafetyParams) -> AffineMargin {
    let follower = v_other * p.t_react + v_other * v_other / (2.0 * p.a_brake_other);
    let v_ref = 0.5 * (v_lo + v_hi);
    AffineMargin {
        constant: follower + v_ref * v_ref / (2.0 * p.a_brake_ego),
        slope: -v_ref / p.a_brake_ego,
    }
}

/// Lateral deviation past the previous target lane's boundary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeviationState {
    /// In `[0, lane_width / 2]`; zero while inside the previous target lane.
    pub delta: f64,
    pub prev_target: Lane,
}

impl DeviationState {
    pub fn from_lateral(lateral: f64, prev_target: Lane, lane_width: f64) -> Self {
        let center = prev_target as f64 * lane_width;
        let past_boundary = (lateral - center).abs() - 0.5 * lane_width;
        DeviationState {
            delta: past_boundary.clamp(0.0, 0.5 * lane_width),
            prev_target,
        }
    }
}

/// Deviation expected `j` planner steps ahead.
pub fn projected_deviation(dev: &DeviationState, j: usize, p: &SafetyParams) -> f64 {
    let grow = p.lane_width * j as f64 / p.lane_change_steps as f64;
    (dev.delta + grow).min(0.5 * p.lane_width)
}

/// Deviation cost; `gamma4` at a full half-lane deviation.
pub fn deviation_cost(delta_j: f64, p: &SafetyParams) -> f64 {
    p.gamma4 * 2.0 * delta_j.abs() / p.lane_width
}

/// Safe distance inflated by the distance covered during one lane change.
pub fn augmented_safe_distance(safe: f64, gamma_d: f64, v_j: f64, p: &SafetyParams) -> f64 {
    safe + gamma_d * v_j * p.lane_change_time()
}
