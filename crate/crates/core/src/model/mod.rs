//! The planning optimization model: parameters, encodings, the two
//! formulations, warm starts and command extraction.

mod build;
mod encode;
pub mod lp;
mod params;
mod program;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::fmt;

use crate::highway::{lane_indicator, Lane};
use crate::solver::{SolveResult, SolveStatus};

pub use build::{build_binary_model, build_integer_model, build_model};
pub use encode::{encode_abs_safety, encode_floor, encode_implication, gap_row, GapSide};
pub use params::PlannerParams;
pub use program::{
    Formulation, LinExpr, ModelError, Objective, Program, Row, RowKind, VarId, VarKind, VarRole, Variable,
};

/// A (vehicle, step) pair that received safety rows.
/// Passes of the side-flipping rollout in the plan repair.
const YIELD_ROUNDS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SafetyPair {
    pub vehicle: u32,
    pub step: usize,
    pub lane: Lane,
    pub side: VarId,
    /// Predicted position of the vehicle relative to the ego's current `s`.
    pub gap: f64,
    /// The same one step earlier.
    pub prev_gap: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LaneVars {
    /// `[step - 1][lane]` selectors.
    OneHot(Vec<Vec<VarId>>),
    Integer {
        target: Vec<VarId>,
        physical: Vec<VarId>,
        /// One-hot expansion of the projected lane, only at steps with
        /// safety rows.
        selectors: Vec<Option<Vec<VarId>>>,
    },
}

/// Where each planning quantity lives in the program.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub horizon: usize,
    pub dt: f64,
    /// Lane count at steps `0..=horizon`.
    pub lane_counts: Vec<usize>,
    pub v0: f64,
    pub s0: f64,
    /// Lane the plan starts from: the previous target (binary) or the
    /// current lane indicator (integer).
    pub initial_target: Lane,
    pub speed_cap: f64,
    pub accel_min: f64,
    pub accel_max: f64,
    pub lane_change_steps: usize,
    pub speeds: Vec<VarId>,
    pub disps: Vec<VarId>,
    pub lanes: LaneVars,
    pub pairs: Vec<SafetyPair>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizationModel {
    pub formulation: Formulation,
    pub program: Program,
    pub layout: Layout,
    pub warm_start: Option<Vec<f64>>,
}

/// Speeds and target lanes for steps `1..=H`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Plan {
    pub speeds: Vec<f64>,
    pub lanes: Vec<Lane>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdvisoryCommand {
    pub target_lane: Lane,
    pub ref_speed: f64,
    pub plan: Plan,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CommandError {
    /// No incumbent; the caller should follow the leader in the current
    /// lane.
    NoIncumbent(SolveStatus),
}

impl fmt::Display for CommandError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CommandError::NoIncumbent(status) => {
                write!(f, "solver returned {status:?} without an incumbent; apply the fallback command")
            }
        }
    }
}

/// Shift a previous plan one step: `x(1..H-1) := prev(2..H)`, the last step
/// repeated. Returns `None` without a previous plan.
pub fn warm_start_from(prev: Option<&Plan>, horizon: usize) -> Option<Plan> {
    let prev = prev?;
    if prev.speeds.is_empty() || prev.lanes.is_empty() {
        return None;
    }
    let shift = |xs: &[f64]| -> Vec<f64> {
        (0..horizon).map(|j| xs[(j + 1).min(xs.len() - 1)]).collect()
    };
    let lanes = (0..horizon)
        .map(|j| prev.lanes[(j + 1).min(prev.lanes.len() - 1)])
        .collect();
    Some(Plan {
        speeds: shift(&prev.speeds),
        lanes,
    })
}

/// Command from the first step of the incumbent.
pub fn extract_command(result: &SolveResult, model: &OptimizationModel) -> Result<AdvisoryCommand, CommandError> {
    let x = match (&result.incumbent, result.status) {
        (Some(x), SolveStatus::Optimal | SolveStatus::FeasibleTimeout) => x,
        _ => return Err(CommandError::NoIncumbent(result.status)),
    };
    let plan = model.plan_from(x);
    Ok(AdvisoryCommand {
        target_lane: plan.lanes[0],
        ref_speed: plan.speeds[0],
        plan,
    })
}

impl OptimizationModel {
    pub fn horizon(&self) -> usize {
        self.layout.horizon
    }

    /// Read the plan out of a full assignment.
    pub fn plan_from(&self, x: &[f64]) -> Plan {
        let l = &self.layout;
        let speeds = l.speeds.iter().map(|v| x[v.index()]).collect();
        let lanes = match &l.lanes {
            LaneVars::OneHot(sel) => sel
                .iter()
                .map(|row| {
                    let mut best = 0;
                    for (i, v) in row.iter().enumerate() {
                        if x[v.index()] > x[row[best].index()] {
                            best = i;
                        }
                    }
                    best
                })
                .collect(),
            LaneVars::Integer { target, .. } => target
                .iter()
                .map(|v| crate::math::round(x[v.index()]).max(0.0) as Lane)
                .collect(),
        };
        Plan { speeds, lanes }
    }

    /// Full assignment from a plan after repair: speeds are projected onto
    /// the acceleration and speed box step by step, lane sequences onto
    /// adjacent moves within the road, and each side selector picks the side
    /// with the smaller violation. The result need not be feasible.
    pub fn assignment_from_plan(&self, plan: &Plan) -> Vec<f64> {
        let l = &self.layout;
        let h = l.horizon;
        let mut x: Vec<f64> = self
            .program
            .vars
            .iter()
            .map(|v| v.lower.max(0.0).min(v.upper))
            .collect();
        fn at<T: Copy>(xs: &[T], j: usize, default: T) -> T {
            xs.get(j).or(xs.last()).copied().unwrap_or(default)
        }
        let mut lanes = Vec::with_capacity(h);
        let mut prev = l.initial_target;
        for j in 0..h {
            let n = l.lane_counts[j + 1].max(1);
            let want = at(&plan.lanes, j, prev);
            let lane = want.clamp(prev.saturating_sub(1), prev + 1).min(n - 1);
            lanes.push(lane);
            prev = lane;
        }
        let mut occupied = lanes.clone();
        match &l.lanes {
            LaneVars::OneHot(sel) => {
                for (row, &lane) in sel.iter().zip(&lanes) {
                    for (i, v) in row.iter().enumerate() {
                        x[v.index()] = if i == lane { 1.0 } else { 0.0 };
                    }
                }
            }
            LaneVars::Integer {
                target,
                physical,
                selectors,
            } => {
                let big_n = l.lane_change_steps;
                let mut window: Vec<Lane> = alloc::vec![l.initial_target; big_n];
                for j in 0..h {
                    x[target[j].index()] = lanes[j] as f64;
                    window.remove(0);
                    window.push(lanes[j]);
                    let phys = lane_indicator(&window);
                    occupied[j] = phys;
                    x[physical[j].index()] = phys as f64;
                    if let Some(row) = &selectors[j] {
                        for (i, v) in row.iter().enumerate() {
                            x[v.index()] = if i == phys { 1.0 } else { 0.0 };
                        }
                    }
                }
            }
        }

        // safety rows by step, for the speed rollout
        let mut by_step: Vec<Vec<usize>> = alloc::vec![Vec::new(); h + 1];
        for (r, row) in self.program.rows.iter().enumerate() {
            if row.kind == RowKind::Safety && row.step <= h {
                by_step[row.step].push(r);
            }
        }
        let mut pairs_at: Vec<Vec<&SafetyPair>> = alloc::vec![Vec::new(); h + 1];
        for pair in &l.pairs {
            pairs_at[pair.step].push(pair);
        }
        // first step of the run of steps the ego spends in each pair's lane
        let mut stint = alloc::vec![0usize; l.pairs.len()];
        let mut starts: BTreeMap<u32, usize> = BTreeMap::new();
        for (k, pair) in l.pairs.iter().enumerate() {
            let here = occupied[pair.step - 1] == pair.lane;
            let before = pair.step >= 2 && occupied[pair.step - 2] == pair.lane;
            if here && !before {
                starts.insert(pair.vehicle, pair.step);
            }
            stint[k] = if here { starts.get(&pair.vehicle).copied().unwrap_or(pair.step) } else { 0 };
        }
        let index_of: BTreeMap<(u32, usize), usize> =
            l.pairs.iter().enumerate().map(|(k, p)| ((p.vehicle, p.step), k)).collect();
        let mut behind: BTreeSet<(u32, usize)> = BTreeSet::new();
        for _ in 0..YIELD_ROUNDS {
            let blocked = self.rollout(&mut x, plan, &by_step, &pairs_at, &|pair: &SafetyPair| {
                let k = index_of[&(pair.vehicle, pair.step)];
                (stint[k] > 0 && behind.contains(&(pair.vehicle, stint[k]))).then_some(0.0)
            });
            let fresh: Vec<(u32, usize)> = blocked
                .into_iter()
                .map(|pair| (pair.vehicle, stint[index_of[&(pair.vehicle, pair.step)]]))
                .filter(|key| key.1 > 0 && !behind.contains(key))
                .collect();
            if fresh.is_empty() {
                break;
            }
            behind.extend(fresh);
        }
        self.choose_sides(&mut x);
        x
    }

    /// Greedy speed rollout for the lanes already set in `x`. Each side
    /// selector comes from `forced` or else from the order at the previous
    /// step. Returns the pairs in the ego's lane that it could not stay
    /// ahead of even at full acceleration.
    fn rollout<'a>(
        &'a self,
        x: &mut [f64],
        plan: &Plan,
        by_step: &[Vec<usize>],
        pairs_at: &[Vec<&'a SafetyPair>],
        forced: &dyn Fn(&SafetyPair) -> Option<f64>,
    ) -> Vec<&'a SafetyPair> {
        let l = &self.layout;
        let half = 0.5 * l.dt;
        let mut blocked = Vec::new();
        let (mut v_prev, mut s_prev) = (l.v0, 0.0);
        for j in 1..=l.horizon {
            let (vj, sj) = (l.speeds[j - 1], l.disps[j - 1]);
            let lo = (v_prev + l.accel_min * l.dt).max(0.0);
            let hi = (v_prev + l.accel_max * l.dt).min(l.speed_cap).max(lo);
            for pair in &pairs_at[j] {
                x[pair.side.index()] = forced(pair).unwrap_or(f64::from(u8::from(pair.prev_gap < s_prev)));
            }
            // pairs the ego cannot lead even flat out
            x[vj.index()] = hi;
            x[sj.index()] = s_prev + half * (v_prev + hi);
            for pair in &pairs_at[j] {
                if x[pair.side.index()] == 1.0
                    && self.pair_rows(pair).any(|r| r.violation(x) > 1e-9)
                {
                    blocked.push(*pair);
                }
            }
            let (mut v_min, mut v_max) = (lo, hi);
            x[vj.index()] = 0.0;
            x[sj.index()] = 0.0;
            for &r in &by_step[j] {
                let row = &self.program.rows[r];
                let (mut a_v, mut a_s) = (0.0, 0.0);
                for &(v, a) in &row.terms {
                    if v == vj {
                        a_v += a;
                    } else if v == sj {
                        a_s += a;
                    }
                }
                // the row over v alone after s = s_prev + half (v_prev + v)
                let alpha = a_v + a_s * half;
                let rest = row.activity(x) + a_s * (s_prev + half * v_prev);
                if alpha.abs() < 1e-12 {
                    continue;
                }
                for (bound, is_lower) in [(row.lower, true), (row.upper, false)] {
                    if !bound.is_finite() {
                        continue;
                    }
                    let t = (bound - rest) / alpha;
                    if is_lower == (alpha > 0.0) {
                        v_min = v_min.max(t);
                    } else {
                        v_max = v_max.min(t);
                    }
                }
            }
            let desired = plan.speeds.get(j - 1).or(plan.speeds.last()).copied().unwrap_or(v_prev);
            let v = if v_min <= v_max {
                desired.clamp(v_min, v_max).clamp(lo, hi)
            } else {
                // no speed keeps every gap; brake as hard as allowed
                lo
            };
            let s = s_prev + half * (v_prev + v);
            x[vj.index()] = v;
            x[sj.index()] = s;
            v_prev = v;
            s_prev = s;
        }
        blocked
    }

    fn pair_rows<'a>(&'a self, pair: &'a SafetyPair) -> impl Iterator<Item = &'a Row> + 'a {
        self.program
            .rows
            .iter()
            .filter(move |r| r.kind == RowKind::Safety && r.step == pair.step && r.terms.iter().any(|t| t.0 == pair.side))
    }

    /// Flip a side selector only when the other side's rows hold and its
    /// own do not.
    pub fn choose_sides(&self, x: &mut [f64]) {
        for pair in &self.layout.pairs {
            let c = pair.side.index();
            let keep = x[c];
            let mut viol = [0.0; 2];
            for (side, v) in viol.iter_mut().enumerate() {
                x[c] = side as f64;
                *v = self.pair_rows(pair).map(|r| r.violation(x)).sum::<f64>();
            }
            x[c] = match (viol[0] <= 1e-9, viol[1] <= 1e-9) {
                (true, false) => 0.0,
                (false, true) => 1.0,
                _ => keep,
            };
        }
    }

    /// Simple lane plans for seeding the search: keep the lane, or wait a
    /// few steps, move one lane per step towards another lane and stay
    /// there. Speeds aim at the cap and are cut back by the rollout in
    /// [`assignment_from_plan`](Self::assignment_from_plan).
    pub fn candidate_plans(&self) -> Vec<Plan> {
        let l = &self.layout;
        let h = l.horizon;
        let lanes_now = l.lane_counts.get(1).copied().unwrap_or(1).max(1);
        let mut plans = alloc::vec![Plan {
            speeds: alloc::vec![l.speed_cap; h],
            lanes: (0..h).map(|j| l.initial_target.min(l.lane_counts[j + 1].max(1) - 1)).collect(),
        }];
        let mut targets: Vec<Lane> = (0..lanes_now).filter(|&t| t != l.initial_target).collect();
        targets.sort_by_key(|&t| (t.abs_diff(l.initial_target), t));
        for wait in (0..=h / 2).step_by(2) {
            for &t in &targets {
                let mut lane = l.initial_target;
                let lanes = (0..h)
                    .map(|j| {
                        let n = l.lane_counts[j + 1].max(1);
                        if j >= wait {
                            if lane < t {
                                lane += 1;
                            } else if lane > t {
                                lane -= 1;
                            }
                        }
                        lane = lane.min(n - 1);
                        lane
                    })
                    .collect();
                plans.push(Plan {
                    speeds: alloc::vec![l.speed_cap; h],
                    lanes,
                });
            }
        }
        plans.dedup();
        plans
    }

    /// Store a repaired plan as the solver hint.
    pub fn set_warm_start(&mut self, plan: Option<&Plan>) {
        self.warm_start = plan.map(|p| self.assignment_from_plan(p));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warm_start_shift() {
        let prev = Plan {
            speeds: alloc::vec![5.0, 6.0, 7.0, 8.0],
            lanes: alloc::vec![1, 1, 0, 0],
        };
        let hint = warm_start_from(Some(&prev), 4).unwrap();
        assert_eq!(hint.speeds, [6.0, 7.0, 8.0, 8.0]);
        assert_eq!(hint.lanes, [1, 0, 0, 0]);
        assert_eq!(warm_start_from(None, 4), None);
    }
}
