//! Constant-rate lateral motion between lane centres.

use core::fmt;

use crate::highway::Lane;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExecutorError {
    /// The commanded lane is not adjacent to the current target.
    NonAdjacent { current: Lane, requested: Lane },
}

impl core::error::Error for ExecutorError {}

impl fmt::Display for ExecutorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExecutorError::NonAdjacent { current, requested } => {
                write!(f, "lane {requested} is not adjacent to target lane {current}")
            }
        }
    }
}

/// What a new command did to the manoeuvre in progress.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Retarget {
    Unchanged,
    Started { from: Lane, to: Lane },
    /// A manoeuvre towards `from` was cancelled and one towards `to` begun.
    Restarted { from: Lane, to: Lane },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LaneChangeExecutor {
    pub lateral: f64,
    pub target: Lane,
    lane_width: f64,
    /// Lateral speed while moving, m/s.
    rate: f64,
}

impl LaneChangeExecutor {
    /// Centred in `lane`, moving one lane width per `duration` seconds.
    pub fn new(lane: Lane, lane_width: f64, duration: f64) -> Self {
        LaneChangeExecutor {
            lateral: lane as f64 * lane_width,
            target: lane,
            lane_width,
            rate: lane_width / duration,
        }
    }

    pub fn target_lateral(&self) -> f64 {
        self.target as f64 * self.lane_width
    }

    pub fn is_moving(&self) -> bool {
        self.lateral != self.target_lateral()
    }

    pub fn command(&mut self, lane: Lane) -> Result<Retarget, ExecutorError> {
        if lane == self.target {
            return Ok(Retarget::Unchanged);
        }
        if lane.abs_diff(self.target) > 1 {
            return Err(ExecutorError::NonAdjacent {
                current: self.target,
                requested: lane,
            });
        }
        let moving = self.is_moving();
        let from = self.target;
        self.target = lane;
        Ok(if moving {
            Retarget::Restarted { from, to: lane }
        } else {
            Retarget::Started { from, to: lane }
        })
    }

    /// Advance by `dt`; returns true when the target centre is reached
    /// during this step.
    pub fn step(&mut self, dt: f64) -> bool {
        let goal = self.target_lateral();
        let diff = goal - self.lateral;
        if diff == 0.0 {
            return false;
        }
        let next = self.lateral + (self.rate * dt).copysign(diff);
        let remaining = goal - next;
        // remaining of the opposite sign means the centre was reached or passed
        if remaining * diff <= 0.0 || remaining.abs() <= 1e-9 * self.lane_width {
            self.lateral = goal;
            true
        } else {
            self.lateral = next;
            false
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_change_takes_the_lane_change_time() {
        let mut ex = LaneChangeExecutor::new(1, 3.5, 1.2);
        assert_eq!(ex.command(0), Ok(Retarget::Started { from: 1, to: 0 }));
        let mut t = 0.0_f64;
        let mut crossed: Option<f64> = None;
        while !ex.step(0.05) {
            t += 0.05;
            if crossed.is_none() && ex.lateral < 1.75 {
                crossed = Some(t);
            }
        }
        t += 0.05;
        assert!((t - 1.2).abs() < 1e-9);
        assert!((crossed.unwrap() - 0.6).abs() < 0.051);
    }

    #[test]
    fn non_adjacent_is_rejected() {
        let mut ex = LaneChangeExecutor::new(0, 3.5, 1.2);
        assert!(ex.command(2).is_err());
        assert_eq!(ex.command(0), Ok(Retarget::Unchanged));
    }

    #[test]
    fn retarget_mid_change() {
        let mut ex = LaneChangeExecutor::new(1, 3.5, 1.2);
        ex.command(0).unwrap();
        for _ in 0..8 {
            ex.step(0.05);
        }
        assert_eq!(ex.command(1), Ok(Retarget::Restarted { from: 0, to: 1 }));
        let mut n = 0;
        while !ex.step(0.05) {
            n += 1;
        }
        assert_eq!(ex.lateral, 3.5);
        assert_eq!(n, 7);
    }
}
