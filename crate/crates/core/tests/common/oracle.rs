//! Brute-force reference optimum for small planning instances.
//!
//! Every admissible lane path is enumerated; for each path the side of every
//! gated vehicle is chosen by depth-first search and the remaining convex QP
//! in the ego speeds is solved with the Goldfarb-Idnani dual active set
//! method from `quadprog`. No big-M rows, selectors or floor encodings are
//! involved.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slas_core::highway::{EgoState, ObservedVehicle, RoadModel, SpeedSample, WorldSnapshot};
use slas_core::predictor::{predict_all, PredictedTrajectory};
use slas_core::safety::{forward_margin_pieces, rear_margin_bound, DeviationState, SafetyParams};
use slas_core::PlannerParams;

pub struct Instance {
    pub snapshot: WorldSnapshot,
    pub preds: BTreeMap<u32, PredictedTrajectory>,
    pub params: PlannerParams,
}

impl Instance {
    pub fn deviation(&self) -> DeviationState {
        DeviationState {
            delta: 0.0,
            prev_target: self.snapshot.ego.lane,
        }
    }
}

/// A random settled snapshot: `H <= 6`, at most two lanes and two vehicles.
pub fn random_instance(seed: u64, max_lanes: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = rng.gen_range(2..=6);
    let lanes = if rng.gen_bool(0.2) { 1 } else { max_lanes };
    let road = RoadModel::new(lanes, 3.5, 15.0, 500.0).unwrap();
    let mut params = PlannerParams {
        horizon: h,
        lane_change_steps: 1,
        gamma2: [0.1, 1.0, 5.0][rng.gen_range(0..3)],
        gamma3: rng.gen_range(0.01..0.5),
        time_limit: 30.0,
        ..PlannerParams::default()
    };
    params.safety.gamma4 = 0.0;
    let lane = rng.gen_range(0..lanes);
    let ego = EgoState::new(100.0, rng.gen_range(0.0..15.0), lane, 3.5, 1);
    let n = if rng.gen_bool(0.1) { 0 } else { rng.gen_range(1..=2) };
    let time = 4.0;
    let vehicles = (0..n)
        .map(|i| {
            let v: f64 = rng.gen_range(0.0..15.0);
            let accel: f64 = rng.gen_range(-1.0..1.0);
            let mut veh = ObservedVehicle::new(i + 1, 100.0 + rng.gen_range(-20.0..35.0), v, rng.gen_range(0..lanes));
            veh.speed_history = (0..5)
                .map(|k| {
                    let t = time - 0.4 * (4 - k) as f64;
                    SpeedSample {
                        t,
                        v: (v + accel * (t - time)).max(0.0),
                    }
                })
                .collect();
            veh
        })
        .collect();
    let snapshot = WorldSnapshot {
        step: 10,
        time,
        ego,
        vehicles,
        road,
    };
    let preds = predict_all(&snapshot, &params.prediction_config(snapshot.road.speed_limit));
    Instance { snapshot, preds, params }
}

/// Lane sequences `L(1..=H)` moving at most one lane per step from `start`.
pub fn lane_paths(start: usize, lanes: usize, h: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..h {
        let mut next = Vec::new();
        for p in &out {
            let last = *p.last().unwrap_or(&start);
            for l in last.saturating_sub(1)..=(last + 1).min(lanes - 1) {
                let mut q = p.clone();
                q.push(l);
                next.push(q);
            }
        }
        out = next;
    }
    out
}

/// Objective of a speed and lane plan in model units.
pub fn plan_objective(inst: &Instance, speeds: &[f64], lanes: &[usize]) -> f64 {
    let p = &inst.params;
    let mut prev_v = inst.snapshot.ego.v;
    let mut prev_l = inst.snapshot.ego.lane as f64;
    let mut obj = 0.0;
    for (&v, &l) in speeds.iter().zip(lanes) {
        obj += -p.gamma1 * v + p.gamma3 * (v - prev_v).powi(2) + p.gamma2 * (l as f64 - prev_l).powi(2);
        prev_v = v;
        prev_l = l as f64;
    }
    obj
}

/// `a . v <= b`.
struct Ineq {
    a: Vec<f64>,
    b: f64,
}

struct SpeedQp {
    h: usize,
    q: Vec<f64>,
    c: Vec<f64>,
    constant: f64,
    base: Vec<Ineq>,
}

impl SpeedQp {
    fn solve(&self, extra: &[&Ineq]) -> Option<f64> {
        let rows: Vec<&Ineq> = self.base.iter().chain(extra.iter().copied()).collect();
        let amat: Vec<f64> = rows.iter().flat_map(|r| r.a.iter().copied()).collect();
        let bvec: Vec<f64> = rows.iter().map(|r| r.b).collect();
        let mut q = self.q.clone();
        match quadprog::solve_qp(&mut q, &self.c, &amat, &bvec, 0, false) {
            Ok(sol) => Some(sol.obj + self.constant),
            Err(quadprog::Error::Infeasible) => None,
            Err(e) => panic!("oracle QP failed: {e:?}"),
        }
    }
}

/// Per-step reachable speed interval.
fn reach(inst: &Instance) -> Vec<(f64, f64)> {
    let p = &inst.params;
    let cap = p.speed_cap(inst.snapshot.road.speed_limit);
    let mut out = vec![(inst.snapshot.ego.v, inst.snapshot.ego.v)];
    for j in 1..=p.horizon {
        let (lo, hi) = out[j - 1];
        let hi = (hi + p.accel_max * p.dt).min(cap);
        let lo = (lo + p.accel_min * p.dt).max(0.0).min(hi.max(0.0));
        out.push((lo, hi.max(lo)));
    }
    out
}

/// The gap rows for keeping behind (side 0) or ahead of (side 1) a vehicle.
fn side_rows(inst: &Instance, sp: &SafetyParams, j: usize, pred: &PredictedTrajectory, v_range: (f64, f64)) -> [Vec<Ineq>; 2] {
    let p = &inst.params;
    let h = p.horizon;
    let dt = p.dt;
    let v0 = inst.snapshot.ego.v;
    // s(j) = a . v + s_const
    let mut a = vec![0.0; h];
    for (k, ak) in a.iter_mut().enumerate().take(j) {
        *ak = if k + 1 == j { 0.5 * dt } else { dt };
    }
    let s_const = 0.5 * dt * v0;
    let d = pred.displacements[j] - inst.snapshot.ego.s;
    let len = sp.vehicle_length;
    let fwd = forward_margin_pieces(pred.speeds[j], v_range.0, v_range.1, sp);
    let rear = rear_margin_bound(pred.speeds[j], v_range.0, v_range.1, sp);
    let with_v = |base: &[f64], sign: f64, slope: f64| {
        let mut r: Vec<f64> = base.iter().map(|x| sign * x).collect();
        r[j - 1] += slope;
        r
    };
    // behind: d - s >= len + max(d_min, fwd_k(v)) for every chord k
    let mut behind = vec![Ineq {
        a: a.clone(),
        b: d - s_const - len - sp.d_min,
    }];
    behind.extend(fwd.iter().map(|m| Ineq {
        a: with_v(&a, 1.0, m.slope),
        b: d - s_const - len - m.constant,
    }));
    // ahead: s - d >= len + max(d_min, rear(v))
    let ahead = vec![
        Ineq {
            a: with_v(&a, -1.0, 0.0),
            b: -d + s_const - len - sp.d_min,
        },
        Ineq {
            a: with_v(&a, -1.0, rear.slope),
            b: -d + s_const - len - rear.constant,
        },
    ];
    [behind, ahead]
}

fn speed_qp(inst: &Instance) -> SpeedQp {
    let p = &inst.params;
    let h = p.horizon;
    let v0 = inst.snapshot.ego.v;
    let cap = p.speed_cap(inst.snapshot.road.speed_limit);
    let g3 = p.gamma3;
    let mut q = vec![0.0; h * h];
    for j in 0..h {
        q[j * h + j] += 2.0 * g3;
        if j + 1 < h {
            q[j * h + j] += 2.0 * g3;
            q[j * h + j + 1] -= 2.0 * g3;
            q[(j + 1) * h + j] -= 2.0 * g3;
        }
    }
    let mut c = vec![-p.gamma1; h];
    c[0] -= 2.0 * g3 * v0;
    let unit = |j: usize, x: f64| {
        let mut a = vec![0.0; h];
        a[j] = x;
        a
    };
    let mut base = Vec::new();
    for j in 0..h {
        base.push(Ineq { a: unit(j, -1.0), b: 0.0 });
        base.push(Ineq { a: unit(j, 1.0), b: cap });
        let mut up = unit(j, 1.0);
        let mut down = unit(j, -1.0);
        let mut rhs_up = p.accel_max * p.dt;
        let mut rhs_down = -p.accel_min * p.dt;
        if j == 0 {
            rhs_up += v0;
            rhs_down -= v0;
        } else {
            up[j - 1] = -1.0;
            down[j - 1] = 1.0;
        }
        base.push(Ineq { a: up, b: rhs_up });
        base.push(Ineq { a: down, b: rhs_down });
    }
    SpeedQp {
        h,
        q,
        c,
        constant: g3 * v0 * v0,
        base,
    }
}

/// Optimal objective, or `None` when no lane path and side choice is
/// feasible.
pub fn brute_force(inst: &Instance) -> Option<f64> {
    let p = &inst.params;
    let h = p.horizon;
    let sp = p.safety_params(inst.snapshot.road.lane_width);
    let qp = speed_qp(inst);
    let r = reach(inst);
    let rows: BTreeMap<(u32, usize), [Vec<Ineq>; 2]> = inst
        .preds
        .iter()
        .flat_map(|(&id, pred)| (1..=h).map(move |j| (id, j, pred)))
        .map(|(id, j, pred)| ((id, j), side_rows(inst, &sp, j, pred, r[j])))
        .collect();
    let lanes = inst.snapshot.road.lane_count(inst.snapshot.step);
    let start = inst.snapshot.ego.lane;
    let mut best = f64::INFINITY;
    for path in lane_paths(start, lanes, h) {
        let mut prev = start as f64;
        let lane_cost: f64 = path
            .iter()
            .map(|&l| {
                let c = p.gamma2 * (l as f64 - prev).powi(2);
                prev = l as f64;
                c
            })
            .sum();
        let gated: Vec<&[Vec<Ineq>; 2]> = rows
            .iter()
            .filter(|((id, j), _)| inst.preds[id].lane == path[j - 1])
            .map(|(_, r)| r)
            .collect();
        let mut chosen: Vec<&Ineq> = Vec::new();
        search(&qp, &gated, &mut chosen, lane_cost, &mut best);
    }
    best.is_finite().then_some(best)
}

fn search<'a>(qp: &SpeedQp, gated: &[&'a [Vec<Ineq>; 2]], chosen: &mut Vec<&'a Ineq>, lane_cost: f64, best: &mut f64) {
    let Some(obj) = qp.solve(chosen) else { return };
    let obj = obj + lane_cost;
    if obj >= *best {
        return;
    }
    let Some((first, rest)) = gated.split_first() else {
        *best = obj;
        return;
    };
    for side in first.iter() {
        let n = chosen.len();
        chosen.extend(side.iter());
        search(qp, rest, chosen, lane_cost, best);
        chosen.truncate(n);
    }
}
