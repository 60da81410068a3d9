//! Builders for the integer and binary planning models.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::highway::{Lane, WorldSnapshot};
use crate::predictor::PredictedTrajectory;
use crate::safety::{
    deviation_cost, forward_margin_pieces, projected_deviation, rear_margin_bound, AffineMargin, DeviationState,
    SafetyParams,
};

use super::encode::{encode_floor, encode_implication, gap_row, GapSide};
use super::program::{Formulation, LinExpr, ModelError, Program, Row, RowKind, VarId, VarKind, VarRole};
use super::{Layout, LaneVars, OptimizationModel, PlannerParams, SafetyPair};

/// Reachable ego speeds and displacements per step, index 0 being now.
#[derive(Clone, Debug)]
pub(crate) struct Reach {
    pub v_lo: Vec<f64>,
    pub v_hi: Vec<f64>,
    pub s_lo: Vec<f64>,
    pub s_hi: Vec<f64>,
}

impl Reach {
    pub(crate) fn new(v0: f64, cap: f64, params: &PlannerParams) -> Reach {
        let h = params.horizon;
        let dt = params.dt;
        let mut r = Reach {
            v_lo: Vec::with_capacity(h + 1),
            v_hi: Vec::with_capacity(h + 1),
            s_lo: Vec::with_capacity(h + 1),
            s_hi: Vec::with_capacity(h + 1),
        };
        r.v_lo.push(v0);
        r.v_hi.push(v0);
        r.s_lo.push(0.0);
        r.s_hi.push(0.0);
        for j in 1..=h {
            let hi = (r.v_hi[j - 1] + params.accel_max * dt).min(cap);
            let lo = (r.v_lo[j - 1] + params.accel_min * dt).max(0.0).min(hi.max(0.0));
            r.v_lo.push(lo);
            r.v_hi.push(hi.max(lo));
            r.s_lo.push(r.s_lo[j - 1] + 0.5 * dt * (r.v_lo[j - 1] + r.v_lo[j]));
            r.s_hi.push(r.s_hi[j - 1] + 0.5 * dt * (r.v_hi[j - 1] + r.v_hi[j]));
        }
        r
    }
}

/// Shared variables and rows of both formulations.
struct Base {
    program: Program,
    speeds: Vec<VarId>,
    disps: Vec<VarId>,
    reach: Reach,
    lane_counts: Vec<usize>,
    big_m: f64,
    safety: SafetyParams,
}

fn check_predictions(preds: &BTreeMap<u32, PredictedTrajectory>, h: usize) -> Result<(), ModelError> {
    for (&id, p) in preds {
        if p.displacements.len() < h + 1 || p.speeds.len() < h + 1 {
            return Err(ModelError::HorizonMismatch {
                vehicle: id,
                have: p.displacements.len().min(p.speeds.len()),
                need: h + 1,
            });
        }
    }
    Ok(())
}

fn base(snapshot: &WorldSnapshot, params: &PlannerParams) -> Result<Base, ModelError> {
    params.validate().map_err(ModelError::InvalidParams)?;
    let h = params.horizon;
    let dt = params.dt;
    let road = &snapshot.road;
    let cap = params.speed_cap(road.speed_limit);
    let v0 = snapshot.ego.v;
    let reach = Reach::new(v0, cap, params);
    let mut program = Program::default();
    let mut speeds = Vec::with_capacity(h);
    let mut disps = Vec::with_capacity(h);
    // time-ordered layout keeps the KKT matrix banded
    for j in 1..=h {
        speeds.push(program.add_var(VarKind::Continuous, reach.v_lo[j], reach.v_hi[j], VarRole::Speed { step: j }));
        disps.push(program.add_var(VarKind::Continuous, reach.s_lo[j], reach.s_hi[j], VarRole::Displacement { step: j }));
    }
    for j in 1..=h {
        let v = speeds[j - 1];
        let s = disps[j - 1];
        let (dv, ds) = if j == 1 {
            (LinExpr::var(v).plus(-v0), LinExpr::var(s).term(v, -0.5 * dt).plus(-0.5 * dt * v0))
        } else {
            let (vp, sp) = (speeds[j - 2], disps[j - 2]);
            (
                LinExpr::var(v).term(vp, -1.0),
                LinExpr::var(s).term(sp, -1.0).term(v, -0.5 * dt).term(vp, -0.5 * dt),
            )
        };
        program.rows.push(Row::between(
            dv.clone(),
            params.accel_min * dt,
            params.accel_max * dt,
            RowKind::Acceleration,
            j,
        ));
        program.rows.push(Row::equal(ds, 0.0, RowKind::Displacement, j));
        program.objective.add_linear(v, -params.gamma1);
        program.objective.add_square(&dv, params.gamma3);
    }
    let lane_counts = (0..=h).map(|j| road.lane_count(snapshot.step + j as u64)).collect();
    Ok(Base {
        program,
        speeds,
        disps,
        reach,
        lane_counts,
        big_m: params.effective_big_m(road.speed_limit, road.lane_width),
        safety: params.safety_params(road.lane_width),
    })
}

/// Safety rows for every (vehicle, step) pair whose disjunction can bind.
///
/// `gate(lane, j)` returns the expression that is 1 when the ego occupies
/// `lane` at step `j`, or `None` when the gate is identically 1; `Err(())`
/// means the ego can never be in that lane and the pair is skipped.
fn add_safety(
    b: &mut Base,
    snapshot: &WorldSnapshot,
    preds: &BTreeMap<u32, PredictedTrajectory>,
    inflation: &dyn Fn(usize) -> f64,
    gate: &mut dyn FnMut(&mut Program, Lane, usize) -> Result<Option<LinExpr>, ()>,
) -> Vec<SafetyPair> {
    let p = b.safety;
    let len = p.vehicle_length;
    let s0 = snapshot.ego.s;
    let mut pairs = Vec::new();
    for (&id, pred) in preds {
        for j in 1..b.speeds.len() + 1 {
            let (v_lo, v_hi) = (b.reach.v_lo[j], b.reach.v_hi[j]);
            let d = pred.displacements[j] - s0;
            let (ds_min, ds_max) = (d - b.reach.s_hi[j], d - b.reach.s_lo[j]);
            let g = inflation(j);
            let v_other = pred.speeds[j];
            let floor = AffineMargin {
                constant: len + p.d_min,
                slope: g,
            };
            let inflate = |m: AffineMargin| AffineMargin {
                constant: len + m.constant,
                slope: m.slope + g,
            };
            let fwd: Vec<AffineMargin> = forward_margin_pieces(v_other, v_lo, v_hi, &p).into_iter().map(inflate).collect();
            let rear = rear_margin_bound(v_other, v_lo, v_hi, &p);
            let ahead = pieces(floor, &fwd, v_lo, v_hi);
            let behind = pieces(floor, &[inflate(rear)], v_lo, v_hi);
            let max_of = |ms: &[AffineMargin]| ms.iter().map(|m| m.at(v_lo).max(m.at(v_hi))).fold(f64::MIN, f64::max);
            if ds_min >= max_of(&ahead) || ds_max <= -max_of(&behind) {
                continue;
            }
            let gate_expr = match gate(&mut b.program, pred.lane, j) {
                Ok(g) => g,
                Err(()) => continue,
            };
            let c = b.program.add_var(VarKind::Binary, 0.0, 1.0, VarRole::Side { vehicle: id, step: j });
            let delta_s = LinExpr::constant(d).term(b.disps[j - 1], -1.0);
            let v = b.speeds[j - 1];
            for m in &ahead {
                let need = m.at(v_lo).max(m.at(v_hi)) - ds_min;
                if need > 0.0 {
                    let margin = LinExpr::constant(m.constant).term(v, m.slope);
                    let big_m = need.min(b.big_m);
                    b.program
                        .rows
                        .push(gap_row(&delta_s, &margin, GapSide::Ahead, c, gate_expr.as_ref(), big_m, j));
                }
            }
            for m in &behind {
                let need = m.at(v_lo).max(m.at(v_hi)) + ds_max;
                if need > 0.0 {
                    let margin = LinExpr::constant(m.constant).term(v, m.slope);
                    let big_m = need.min(b.big_m);
                    b.program
                        .rows
                        .push(gap_row(&delta_s, &margin, GapSide::Behind, c, gate_expr.as_ref(), big_m, j));
                }
            }
            pairs.push(SafetyPair {
                vehicle: id,
                step: j,
                lane: pred.lane,
                side: c,
                gap: d,
                prev_gap: pred.displacements[j - 1] - s0,
            });
        }
    }
    pairs
}

/// The standstill floor and the affine gaps, dropping whatever is dominated
/// over `[v_lo, v_hi]`.
fn pieces(floor: AffineMargin, affine: &[AffineMargin], v_lo: f64, v_hi: f64) -> Vec<AffineMargin> {
    let below = |a: &AffineMargin, b: &AffineMargin| a.at(v_lo) <= b.at(v_lo) && a.at(v_hi) <= b.at(v_hi);
    let mut out: Vec<AffineMargin> = affine.iter().copied().filter(|m| !below(m, &floor)).collect();
    if !out.iter().any(|m| below(&floor, m)) {
        out.insert(0, floor);
    }
    out
}

fn finish(
    formulation: Formulation,
    b: Base,
    lanes: LaneVars,
    pairs: Vec<SafetyPair>,
    snapshot: &WorldSnapshot,
    params: &PlannerParams,
    initial_target: Lane,
) -> Result<OptimizationModel, ModelError> {
    let model = OptimizationModel {
        formulation,
        layout: Layout {
            horizon: params.horizon,
            dt: params.dt,
            lane_counts: b.lane_counts,
            v0: snapshot.ego.v,
            s0: snapshot.ego.s,
            initial_target,
            speed_cap: params.speed_cap(snapshot.road.speed_limit),
            accel_min: params.accel_min,
            accel_max: params.accel_max,
            lane_change_steps: params.lane_change_steps,
            speeds: b.speeds,
            disps: b.disps,
            lanes,
            pairs,
        },
        program: b.program,
        warm_start: None,
    };
    model.program.validate()?;
    Ok(model)
}

/// Binary formulation: one-hot target lane selectors, adjacency as
/// implications, safety gated on the commanded lane with the deviation
/// inflated gap.
pub fn build_binary_model(
    snapshot: &WorldSnapshot,
    preds: &BTreeMap<u32, PredictedTrajectory>,
    params: &PlannerParams,
    deviation: &DeviationState,
) -> Result<OptimizationModel, ModelError> {
    check_predictions(preds, params.horizon)?;
    let mut b = base(snapshot, params)?;
    let h = params.horizon;
    let n_max = b.lane_counts.iter().copied().max().unwrap_or(1);
    let prev = deviation.prev_target;
    let mut sel: Vec<Vec<VarId>> = Vec::with_capacity(h);
    for j in 1..=h {
        // lanes outside the road at this step are pinned to 0
        let row: Vec<VarId> = (0..n_max)
            .map(|i| {
                let ub = if i < b.lane_counts[j] { 1.0 } else { 0.0 };
                b.program.add_var(VarKind::Binary, 0.0, ub, VarRole::LaneSelector { lane: i, step: j })
            })
            .collect();
        sel.push(row);
    }
    let lane_index = |row: &[VarId]| {
        row.iter()
            .enumerate()
            .fold(LinExpr::default(), |e, (i, &v)| if i == 0 { e } else { e.term(v, i as f64) })
    };
    for j in 1..=h {
        let row = &sel[j - 1];
        let one_hot = row.iter().fold(LinExpr::default(), |e, &v| e.term(v, 1.0));
        b.program.rows.push(Row::equal(one_hot, 1.0, RowKind::OneHot, j));
        let change = if j == 1 {
            lane_index(row).plus(-(prev as f64))
        } else {
            lane_index(row).add(&lane_index(&sel[j - 2]), -1.0)
        };
        b.program.objective.add_square(&change, params.gamma2);

        let n = b.lane_counts[j];
        let mut adjacency = Vec::new();
        let sum_of = |lanes: core::ops::Range<Lane>| lanes.fold(LinExpr::default(), |e, l| e.term(row[l], 1.0));
        let lanes_now = crate::highway::LaneSet::with_count(n);
        if j == 1 {
            let targets = lanes_now.adjacent(prev);
            if targets.len() < n || prev >= n {
                adjacency.push(encode_implication(&LinExpr::constant(1.0), &sum_of(targets), 1.0, params.epsilon, j));
            }
        } else {
            for a in 0..b.lane_counts[j - 1] {
                let targets = lanes_now.adjacent(a);
                if targets.len() < n || a >= n {
                    adjacency.push(encode_implication(
                        &LinExpr::var(sel[j - 2][a]),
                        &sum_of(targets),
                        1.0,
                        params.epsilon,
                        j,
                    ));
                }
            }
        }
        if params.lazy_lane_constraints {
            b.program.lazy_rows.extend(adjacency);
        } else {
            b.program.rows.extend(adjacency);
        }
    }
    let p = b.safety;
    let inflation = |j: usize| deviation_cost(projected_deviation(deviation, j, &p), &p) * p.lane_change_time();
    let counts = b.lane_counts.clone();
    let mut gate = |_: &mut Program, lane: Lane, j: usize| {
        if lane < counts[j] {
            Ok(Some(LinExpr::var(sel[j - 1][lane])))
        } else {
            Err(())
        }
    };
    let pairs = add_safety(&mut b, snapshot, preds, &inflation, &mut gate);
    finish(Formulation::Binary, b, LaneVars::OneHot(sel), pairs, snapshot, params, prev)
}

/// Integer formulation: integer target lanes, the projected lane as the
/// floor of their moving average, safety gated on the projected lane.
pub fn build_integer_model(
    snapshot: &WorldSnapshot,
    preds: &BTreeMap<u32, PredictedTrajectory>,
    params: &PlannerParams,
) -> Result<OptimizationModel, ModelError> {
    check_predictions(preds, params.horizon)?;
    let mut b = base(snapshot, params)?;
    let h = params.horizon;
    let big_n = params.lane_change_steps;
    let l0 = snapshot.ego.lane;
    let mut target = Vec::with_capacity(h);
    let mut physical = Vec::with_capacity(h);
    for j in 1..=h {
        let top = b.lane_counts[j].saturating_sub(1) as f64;
        let t = b.program.add_var(VarKind::Integer, 0.0, top, VarRole::TargetLane { step: j });
        target.push(t);
        let prev = if j == 1 {
            LinExpr::constant(l0 as f64)
        } else {
            LinExpr::var(target[j - 2])
        };
        let change = LinExpr::var(t).add(&prev, -1.0);
        b.program.objective.add_square(&change, params.gamma2);
        b.program.rows.push(Row::between(change, -1.0, 1.0, RowKind::Adjacency, j));
        // moving average of the last N targets; steps before now hold l0
        let mut avg = LinExpr::constant(0.5);
        for i in 0..big_n {
            if j > i {
                avg = avg.term(target[j - 1 - i], 1.0 / big_n as f64);
            } else {
                avg = avg.plus(l0 as f64 / big_n as f64);
            }
        }
        physical.push(encode_floor(
            &mut b.program,
            &avg,
            0.0,
            top,
            params.epsilon,
            VarRole::PhysicalLane { step: j },
            j,
        ));
    }
    let counts = b.lane_counts.clone();
    let mut selectors: Vec<Option<Vec<VarId>>> = alloc::vec![None; h];
    let mut gate = |program: &mut Program, lane: Lane, j: usize| {
        let n = counts[j];
        if lane >= n {
            return Err(());
        }
        if n == 1 {
            return Ok(None);
        }
        let row = selectors[j - 1].get_or_insert_with(|| {
            let row: Vec<VarId> = (0..n)
                .map(|i| program.add_var(VarKind::Binary, 0.0, 1.0, VarRole::PhysicalLaneSelector { lane: i, step: j }))
                .collect();
            let one_hot = row.iter().fold(LinExpr::default(), |e, &v| e.term(v, 1.0));
            program.rows.push(Row::equal(one_hot, 1.0, RowKind::OneHot, j));
            let link = row
                .iter()
                .enumerate()
                .fold(LinExpr::var(physical[j - 1]).scale(-1.0), |e, (i, &v)| e.term(v, i as f64));
            program.rows.push(Row::equal(link, 0.0, RowKind::LaneLink, j));
            row
        });
        Ok(Some(LinExpr::var(row[lane])))
    };
    let pairs = add_safety(&mut b, snapshot, preds, &|_| 0.0, &mut gate);
    finish(
        Formulation::Integer,
        b,
        LaneVars::Integer {
            target,
            physical,
            selectors,
        },
        pairs,
        snapshot,
        params,
        l0,
    )
}

/// Builds the formulation selected in `params`.
pub fn build_model(
    snapshot: &WorldSnapshot,
    preds: &BTreeMap<u32, PredictedTrajectory>,
    params: &PlannerParams,
    deviation: &DeviationState,
) -> Result<OptimizationModel, ModelError> {
    match params.formulation {
        Formulation::Binary => build_binary_model(snapshot, preds, params, deviation),
        Formulation::Integer => build_integer_model(snapshot, preds, params),
    }
}
