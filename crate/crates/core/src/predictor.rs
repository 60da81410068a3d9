//! Deterministic trajectory prediction for observed vehicles.
//!
//! Each vehicle's recent speeds are fitted with a least-squares line. The
//! fitted acceleration is extrapolated for `accel_horizon` steps, after which
//! the speed is held; the lane is held for the whole horizon.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use crate::highway::{Lane, SpeedSample, WorldSnapshot};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpeedModel {
    /// Estimated acceleration, m/s^2.
    pub accel: f64,
    /// Fitted speed at the latest sample, m/s.
    pub speed: f64,
    pub fitted_at: u64,
    pub sample_count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PredictError {
    InsufficientData { samples: usize },
    /// Timestamps not strictly increasing.
    Unordered,
}

impl fmt::Display for PredictError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredictError::InsufficientData { samples } => {
                write!(f, "speed regression needs at least 2 samples, got {samples}")
            }
            PredictError::Unordered => f.write_str("speed history timestamps must be strictly increasing"),
        }
    }
}

/// Least-squares line through the `(t, v)` history.
pub fn fit_speed_model(history: &[SpeedSample], fitted_at: u64) -> Result<SpeedModel, PredictError> {
    if history.len() < 2 {
        return Err(PredictError::InsufficientData {
            samples: history.len(),
        });
    }
    if history.windows(2).any(|w| !(w[1].t > w[0].t)) {
        return Err(PredictError::Unordered);
    }
    let n = history.len() as f64;
    let t_mean = history.iter().map(|p| p.t).sum::<f64>() / n;
    let v_mean = history.iter().map(|p| p.v).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for p in history {
        let dt = p.t - t_mean;
        sxy += dt * (p.v - v_mean);
        sxx += dt * dt;
    }
    let accel = sxy / sxx;
    let t_last = history[history.len() - 1].t;
    Ok(SpeedModel {
        accel,
        speed: v_mean + accel * (t_last - t_mean),
        fitted_at,
        sample_count: history.len(),
    })
}

/// Speeds `v(0..=horizon)`: constant acceleration for `accel_horizon` steps,
/// then constant speed, every value clamped to `[0, speed_limit]`.
pub fn predict_speed(model: &SpeedModel, horizon: usize, accel_horizon: usize, dt: f64, speed_limit: f64) -> Vec<f64> {
    let mut speeds = Vec::with_capacity(horizon + 1);
    let mut v = model.speed.clamp(0.0, speed_limit);
    speeds.push(v);
    for j in 1..=horizon {
        if j <= accel_horizon {
            v = (v + model.accel * dt).clamp(0.0, speed_limit);
        }
        speeds.push(v);
    }
    speeds
}

/// Displacements from a speed sequence by trapezoidal integration.
pub fn predict_displacement(s0: f64, speeds: &[f64], dt: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(speeds.len());
    let mut s = s0;
    out.push(s);
    for w in speeds.windows(2) {
        s += 0.5 * dt * (w[0] + w[1]);
        out.push(s);
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictedTrajectory {
    pub speeds: Vec<f64>,
    pub displacements: Vec<f64>,
    pub lane: Lane,
    /// Set when the history was too short and a constant-speed fallback used.
    pub fallback: bool,
    pub model: SpeedModel,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PredictionConfig {
    pub horizon: usize,
    pub accel_horizon: usize,
    pub dt: f64,
    pub speed_limit: f64,
}

/// One trajectory per observed vehicle, keyed by id.
pub fn predict_all(snapshot: &WorldSnapshot, cfg: &PredictionConfig) -> BTreeMap<u32, PredictedTrajectory> {
    snapshot
        .vehicles
        .iter()
        .map(|veh| {
            let (model, fallback) = match fit_speed_model(&veh.speed_history, snapshot.step) {
                Ok(model) => (model, false),
                Err(_) => {
                    let last = veh.speed_history.last().map(|p| p.v).unwrap_or(veh.v);
                    (
                        SpeedModel {
                            accel: 0.0,
                            speed: last,
                            fitted_at: snapshot.step,
                            sample_count: veh.speed_history.len(),
                        },
                        true,
                    )
                }
            };
            let speeds = predict_speed(&model, cfg.horizon, cfg.accel_horizon, cfg.dt, cfg.speed_limit);
            let displacements = predict_displacement(veh.s, &speeds, cfg.dt);
            (
                veh.id,
                PredictedTrajectory {
                    speeds,
                    displacements,
                    lane: veh.lane,
                    fallback,
                    model,
                },
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::highway::{step_longitudinal, EgoState, ObservedVehicle, RoadModel};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn samples(points: &[(f64, f64)]) -> Vec<SpeedSample> {
        points.iter().map(|&(t, v)| SpeedSample { t, v }).collect()
    }

    #[test]
    fn regression_examples() {
        let m = fit_speed_model(&samples(&[(0.0, 10.0), (0.4, 10.0), (0.8, 10.0)]), 0).unwrap();
        assert_abs_diff_eq!(m.accel, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.speed, 10.0, epsilon = 1e-12);

        let m = fit_speed_model(&samples(&[(0.0, 8.0), (0.4, 9.0), (0.8, 10.0)]), 0).unwrap();
        assert_abs_diff_eq!(m.accel, 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(m.speed, 10.0, epsilon = 1e-12);

        let m = fit_speed_model(&samples(&[(0.0, 8.0), (0.4, 10.0), (0.8, 9.0)]), 0).unwrap();
        assert_abs_diff_eq!(m.accel, 1.25, epsilon = 1e-12);
        assert_abs_diff_eq!(m.speed, 9.5, epsilon = 1e-12);
    }

    #[test]
    fn regression_errors() {
        assert_eq!(
            fit_speed_model(&samples(&[(0.0, 1.0)]), 0),
            Err(PredictError::InsufficientData { samples: 1 })
        );
        assert_eq!(
            fit_speed_model(&samples(&[(0.4, 1.0), (0.4, 2.0)]), 0),
            Err(PredictError::Unordered)
        );
    }

    fn model(accel: f64, speed: f64) -> SpeedModel {
        SpeedModel {
            accel,
            speed,
            fitted_at: 0,
            sample_count: 3,
        }
    }

    #[test]
    fn speed_rollout() {
        assert_eq!(predict_speed(&model(0.0, 5.0), 4, 5, 0.4, 15.0), [5.0; 5]);
        let v = predict_speed(&model(2.5, 10.0), 4, 2, 0.4, 15.0);
        for (got, want) in v.iter().zip([10.0, 11.0, 12.0, 12.0, 12.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        let v = predict_speed(&model(-5.0, 1.0), 4, 3, 0.4, 15.0);
        assert_eq!(v, [1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn displacement_rollout() {
        assert_eq!(predict_displacement(0.0, &[10.0, 10.0, 10.0], 0.4), [0.0, 4.0, 8.0]);
        let s = predict_displacement(50.0, &[10.0, 11.0, 12.0], 0.4);
        for (got, want) in s.iter().zip([50.0, 54.2, 58.8]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        assert_eq!(predict_displacement(0.0, &[0.0, 0.0], 0.7), [0.0, 0.0]);
    }

    fn snapshot(vehicles: Vec<ObservedVehicle>) -> WorldSnapshot {
        WorldSnapshot {
            step: 0,
            time: 0.0,
            ego: EgoState::new(0.0, 5.0, 1, 3.5, 3),
            vehicles,
            road: RoadModel::new(3, 3.5, 15.0, 350.0).unwrap(),
        }
    }

    const CFG: PredictionConfig = PredictionConfig {
        horizon: 3,
        accel_horizon: 5,
        dt: 0.4,
        speed_limit: 15.0,
    };

    #[test]
    fn predict_all_examples() {
        let mut veh = ObservedVehicle::new(4, 30.0, 8.0, 0);
        veh.speed_history = samples(&[(0.0, 8.0), (0.4, 8.0), (0.8, 8.0)]);
        let preds = predict_all(&snapshot(alloc::vec![veh]), &CFG);
        let p = &preds[&4];
        assert!(!p.fallback);
        assert_eq!(p.lane, 0);
        for (got, want) in p.displacements.iter().zip([30.0, 33.2, 36.4, 39.6]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-9);
        }

        assert!(predict_all(&snapshot(Vec::new()), &CFG).is_empty());

        let mut short = ObservedVehicle::new(9, 10.0, 6.0, 2);
        short.speed_history = samples(&[(0.0, 6.0)]);
        let preds = predict_all(&snapshot(alloc::vec![short]), &CFG);
        assert!(preds[&9].fallback);
        assert_eq!(preds[&9].speeds, [6.0; 4]);
    }

    proptest! {
        #[test]
        fn collinear_history_is_extrapolated_exactly(v0 in 0.0f64..10.0, a in -1.0f64..1.0, n in 2usize..10) {
            let hist: Vec<_> = (0..n).map(|i| SpeedSample { t: 0.4 * i as f64, v: v0 + a * 0.4 * i as f64 }).collect();
            let m = fit_speed_model(&hist, 0).unwrap();
            let v_last = hist[n - 1].v;
            let speeds = predict_speed(&m, 8, 5, 0.4, 1e9);
            for (j, v) in speeds.iter().enumerate().take(6) {
                let line = (v_last + a * 0.4 * j as f64).max(0.0);
                if v_last + a * 0.4 * j as f64 >= 0.0 {
                    prop_assert!((v - line).abs() <= 1e-9);
                }
            }
        }

        #[test]
        fn rollout_invariants(a in -3.0f64..3.0, v in 0.0f64..15.0, ha in 0usize..8, h in 1usize..20) {
            let speeds = predict_speed(&model(a, v), h, ha, 0.4, 15.0);
            prop_assert_eq!(speeds.len(), h + 1);
            prop_assert!(speeds.iter().all(|&x| (0.0..=15.0).contains(&x)));
            for j in (ha + 1)..=h {
                prop_assert_eq!(speeds[j], speeds[j - 1]);
            }
            let s = predict_displacement(12.0, &speeds, 0.4);
            prop_assert_eq!(s[0], 12.0);
            prop_assert!(s.windows(2).all(|w| w[1] >= w[0]));
            // same fold as the vehicle model's position update
            let mut pos = 12.0;
            for (j, w) in speeds.windows(2).enumerate() {
                pos = step_longitudinal(pos, w[0], w[1], 0.4);
                prop_assert!((pos - s[j + 1]).abs() <= 1e-12);
            }
        }
    }
}
