use crate::highway::{positive, DomainError};
use crate::predictor::PredictionConfig;
use crate::safety::{min_safe_distance, Direction, SafetyConfig, SafetyParams};

use super::Formulation;

#[derive(Clone, Debug, PartialEq)]
pub struct PlannerParams {
    /// Planning horizon `H`, steps.
    pub horizon: usize,
    /// Planner step `T_s`, s.
    pub dt: f64,
    /// Steps per lane change `N`.
    pub lane_change_steps: usize,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub accel_min: f64,
    pub accel_max: f64,
    /// Vehicle top speed; the road speed limit applies when absent or lower.
    pub max_speed: Option<f64>,
    /// Cap on any big-M coefficient; derived from the scenario when absent.
    pub big_m: Option<f64>,
    pub epsilon: f64,
    /// Solver budget per planner tick, s.
    pub time_limit: f64,
    pub lazy_lane_constraints: bool,
    /// Steps over which a fitted acceleration is extrapolated.
    pub accel_horizon: usize,
    /// Speed samples kept per observed vehicle.
    pub history_window: usize,
    /// Sensor range `R_v`, m.
    pub visibility: f64,
    pub formulation: Formulation,
    pub safety: SafetyConfig,
}

impl Default for PlannerParams {
    fn default() -> Self {
        PlannerParams {
            horizon: 40,
            dt: 0.4,
            lane_change_steps: 3,
            gamma1: 1.0,
            gamma2: 0.1,
            gamma3: 0.01,
            accel_min: -5.0,
            accel_max: 3.5,
            max_speed: None,
            big_m: None,
            epsilon: 0.1,
            time_limit: 0.2,
            lazy_lane_constraints: true,
            accel_horizon: 5,
            history_window: 10,
            visibility: 50.0,
            formulation: Formulation::Binary,
            safety: SafetyConfig::default(),
        }
    }
}

impl PlannerParams {
    pub fn validate(&self) -> Result<(), DomainError> {
        if self.horizon == 0 {
            return Err(DomainError::invalid("planner.horizon", "must be at least 1"));
        }
        if self.lane_change_steps == 0 {
            return Err(DomainError::invalid("planner.lane_change_steps", "must be at least 1"));
        }
        positive("planner.dt_s", self.dt)?;
        if !(self.accel_min < 0.0 && self.accel_max > 0.0) || !self.accel_min.is_finite() || !self.accel_max.is_finite() {
            return Err(DomainError::invalid("planner.accel_min", "need accel_min < 0 < accel_max"));
        }
        for (field, g) in [
            ("planner.gamma1", self.gamma1),
            ("planner.gamma2", self.gamma2),
            ("planner.gamma3", self.gamma3),
            ("planner.safety.gamma4", self.safety.gamma4),
        ] {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(DomainError::invalid(field, "must be non-negative"));
            }
        }
        if let Some(v) = self.max_speed {
            positive("planner.max_speed_mps", v)?;
        }
        if let Some(m) = self.big_m {
            positive("planner.big_m", m)?;
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(DomainError::invalid("planner.epsilon", "must lie in (0, 1)"));
        }
        positive("planner.time_limit_s", self.time_limit)?;
        positive("planner.visibility_m", self.visibility)?;
        if self.history_window < 2 {
            return Err(DomainError::invalid("planner.history_window", "must be at least 2"));
        }
        positive("planner.safety.d_min", self.safety.d_min)?;
        positive("planner.safety.a_brake_ego", self.safety.a_brake_ego)?;
        positive("planner.safety.a_brake_other", self.safety.a_brake_other)?;
        if !(self.safety.t_react >= 0.0) {
            return Err(DomainError::invalid("planner.safety.t_react", "must be non-negative"));
        }
        if !(self.safety.vehicle_length >= 0.0) {
            return Err(DomainError::invalid("planner.safety.vehicle_length", "must be non-negative"));
        }
        Ok(())
    }

    pub fn safety_params(&self, lane_width: f64) -> SafetyParams {
        SafetyParams::new(self.safety, self.lane_change_steps, self.dt, lane_width)
    }

    pub fn speed_cap(&self, speed_limit: f64) -> f64 {
        self.max_speed.map_or(speed_limit, |v| v.min(speed_limit))
    }

    pub fn prediction_config(&self, speed_limit: f64) -> PredictionConfig {
        PredictionConfig {
            horizon: self.horizon,
            accel_horizon: self.accel_horizon,
            dt: self.dt,
            speed_limit,
        }
    }

    /// `2 R_v + V H T_s + max augmented gap`, larger than any reachable gap
    /// violation.
    pub fn default_big_m(&self, speed_limit: f64, lane_width: f64) -> f64 {
        let p = self.safety_params(lane_width);
        let v = self.speed_cap(speed_limit);
        let safe = min_safe_distance(v, 0.0, &p, Direction::Forward).max(min_safe_distance(0.0, v, &p, Direction::Rear));
        let augmented = p.vehicle_length + safe + p.gamma4 * v * p.lane_change_time();
        2.0 * self.visibility + v * self.horizon as f64 * self.dt + augmented
    }

    pub fn effective_big_m(&self, speed_limit: f64, lane_width: f64) -> f64 {
        self.big_m.unwrap_or_else(|| self.default_big_m(speed_limit, lane_width))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let p = PlannerParams::default();
        p.validate().unwrap();
        assert_eq!(p.speed_cap(15.0), 15.0);
        let capped = PlannerParams {
            max_speed: Some(12.0),
            ..p.clone()
        };
        assert_eq!(capped.speed_cap(15.0), 12.0);
        // 100 + 240 + 4.5 + (7.5 + 22.5) + 18
        assert!((p.default_big_m(15.0, 3.5) - 392.5).abs() < 1e-9);
    }

    #[test]
    fn invalid_params_are_rejected() {
        let base = PlannerParams::default();
        let cases = [
            PlannerParams { horizon: 0, ..base.clone() },
            PlannerParams { accel_max: -1.0, ..base.clone() },
            PlannerParams { epsilon: 1.0, ..base.clone() },
            PlannerParams { gamma2: -0.1, ..base.clone() },
            PlannerParams { big_m: Some(0.0), ..base.clone() },
        ];
        for case in cases {
            assert!(case.validate().is_err());
        }
    }
}
