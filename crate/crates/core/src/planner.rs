//! Receding-horizon loop: observe, predict, build, solve, extract.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::highway::{Lane, SpeedSample, WorldSnapshot};
use crate::model::{
    build_model, extract_command, warm_start_from, AdvisoryCommand, OptimizationModel, Plan, PlannerParams,
};
use crate::predictor::{predict_all, PredictedTrajectory};
use crate::safety::{min_safe_distance, DeviationState, Direction};
use crate::solver::{solve_model, Clock, SolveStatus, SolverOptions, TraceEntry};

#[derive(Clone, Debug, PartialEq)]
pub struct PlannerState {
    /// Plan of the last successful solve; cleared by the fallback.
    pub prev_plan: Option<Plan>,
    pub prev_target: Lane,
    pub deviation: DeviationState,
    /// Speed samples per vehicle id, oldest first.
    pub histories: BTreeMap<u32, Vec<SpeedSample>>,
}

impl PlannerState {
    pub fn new(lane: Lane) -> Self {
        PlannerState {
            prev_plan: None,
            prev_target: lane,
            deviation: DeviationState {
                delta: 0.0,
                prev_target: lane,
            },
            histories: BTreeMap::new(),
        }
    }
}

/// Per-tick record of what the planner did.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanDiagnostics {
    pub status: SolveStatus,
    pub objective: f64,
    pub first_incumbent_time: Option<f64>,
    pub solve_time: f64,
    pub nodes: u64,
    pub lazy_cuts: usize,
    pub hint_given: bool,
    pub hint_accepted: bool,
    pub fallback: bool,
    /// Vehicles predicted at constant speed for lack of history.
    pub prediction_fallbacks: usize,
    pub vars: usize,
    pub rows: usize,
    pub error: Option<String>,
    pub trace: Vec<TraceEntry>,
}

/// Keep the previous target lane and follow the leader there, braking
/// hard when already inside its safe gap.
pub fn fallback_command(
    snapshot: &WorldSnapshot,
    preds: &BTreeMap<u32, PredictedTrajectory>,
    params: &PlannerParams,
    target: Lane,
) -> AdvisoryCommand {
    let ego = &snapshot.ego;
    let cap = params.speed_cap(snapshot.road.speed_limit);
    let safety = params.safety_params(snapshot.road.lane_width);
    let leader = snapshot
        .vehicles
        .iter()
        .filter(|v| v.lane == target && v.s > ego.s)
        .min_by(|a, b| a.s.total_cmp(&b.s));
    let lo = (ego.v + params.accel_min * params.dt).max(0.0);
    let hi = (ego.v + params.accel_max * params.dt).min(cap).max(lo);
    let desired = match leader {
        None => ego.v,
        Some(l) => {
            let v_lead = preds.get(&l.id).map_or(l.v, |p| p.speeds[1]);
            let need = safety.vehicle_length + min_safe_distance(ego.v, v_lead, &safety, Direction::Forward);
            if l.s - ego.s < need {
                lo
            } else {
                v_lead
            }
        }
    };
    let ref_speed = desired.clamp(lo, hi);
    let mut speeds = Vec::with_capacity(params.horizon);
    let mut v = ref_speed;
    for _ in 0..params.horizon {
        speeds.push(v);
        v = v.clamp((v + params.accel_min * params.dt).max(0.0), (v + params.accel_max * params.dt).min(cap));
    }
    AdvisoryCommand {
        target_lane: target,
        ref_speed,
        plan: Plan {
            speeds,
            lanes: alloc::vec![target; params.horizon],
        },
    }
}

fn update_histories(state: &mut PlannerState, snapshot: &WorldSnapshot, window: usize) {
    state.histories.retain(|id, _| snapshot.vehicles.iter().any(|v| v.id == *id));
    for veh in &snapshot.vehicles {
        let hist = state.histories.entry(veh.id).or_default();
        if hist.last().map_or(true, |p| snapshot.time > p.t) {
            hist.push(SpeedSample {
                t: snapshot.time,
                v: veh.v,
            });
        }
        if hist.len() > window {
            let extra = hist.len() - window;
            hist.drain(..extra);
        }
    }
}

/// Everything one planner tick produces besides the command.
#[derive(Clone, Debug)]
pub struct StepOutput {
    pub command: AdvisoryCommand,
    pub diagnostics: PlanDiagnostics,
    pub model: Option<OptimizationModel>,
}

/// One receding-horizon step.
pub fn plan_step(
    snapshot: &WorldSnapshot,
    mut state: PlannerState,
    params: &PlannerParams,
    options: &SolverOptions,
    clock: &dyn Clock,
) -> (StepOutput, PlannerState) {
    update_histories(&mut state, snapshot, params.history_window);
    let mut seen = snapshot.clone();
    for veh in &mut seen.vehicles {
        veh.speed_history = state.histories.get(&veh.id).cloned().unwrap_or_default();
    }
    let preds = predict_all(&seen, &params.prediction_config(snapshot.road.speed_limit));
    let prediction_fallbacks = preds.values().filter(|p| p.fallback).count();
    state.deviation = DeviationState::from_lateral(snapshot.ego.lateral, state.prev_target, snapshot.road.lane_width);

    let mut diag = PlanDiagnostics {
        status: SolveStatus::Error,
        objective: f64::NAN,
        first_incumbent_time: None,
        solve_time: 0.0,
        nodes: 0,
        lazy_cuts: 0,
        hint_given: false,
        hint_accepted: false,
        fallback: false,
        prediction_fallbacks,
        vars: 0,
        rows: 0,
        error: None,
        trace: Vec::new(),
    };
    let built = build_model(&seen, &preds, params, &state.deviation);
    let (command, model) = match built {
        Err(e) => {
            diag.error = Some(e.to_string());
            (None, None)
        }
        Ok(mut model) => {
            let hint = warm_start_from(state.prev_plan.as_ref(), params.horizon);
            model.set_warm_start(hint.as_ref());
            diag.hint_given = model.warm_start.is_some();
            diag.vars = model.program.num_vars();
            diag.rows = model.program.rows.len() + model.program.lazy_rows.len();
            let result = solve_model(&model, options, clock);
            diag.status = result.status;
            diag.objective = result.objective;
            diag.first_incumbent_time = result.first_incumbent_time;
            diag.solve_time = result.total_time;
            diag.nodes = result.nodes_explored;
            diag.lazy_cuts = result.lazy_cuts_added;
            diag.hint_accepted = result.hint_accepted;
            diag.trace = result.trace.clone();
            let cmd = match extract_command(&result, &model) {
                Ok(cmd) => Some(cmd),
                Err(e) => {
                    diag.error = Some(e.to_string());
                    None
                }
            };
            (cmd, Some(model))
        }
    };
    let command = match command {
        Some(mut cmd) => {
            // the incumbent satisfies the box to solver tolerance; make it exact
            let cap = params.speed_cap(snapshot.road.speed_limit);
            let v0 = snapshot.ego.v;
            let lo = (v0 + params.accel_min * params.dt).max(0.0);
            let hi = (v0 + params.accel_max * params.dt).min(cap).max(lo);
            cmd.ref_speed = cmd.ref_speed.clamp(lo, hi);
            state.prev_plan = Some(cmd.plan.clone());
            cmd
        }
        None => {
            diag.fallback = true;
            state.prev_plan = None;
            fallback_command(&seen, &preds, params, state.prev_target)
        }
    };
    state.prev_target = command.target_lane;
    (
        StepOutput {
            command,
            diagnostics: diag,
            model,
        },
        state,
    )
}

/// The SLAS policy: planner parameters, solver options and state.
#[derive(Clone, Debug)]
pub struct SlasPlanner {
    pub params: PlannerParams,
    pub options: SolverOptions,
    pub state: PlannerState,
    /// Keep the last built model (for dumps and inspection).
    pub keep_model: bool,
    pub last_model: Option<OptimizationModel>,
}

impl SlasPlanner {
    pub fn new(params: PlannerParams, initial_lane: Lane) -> Self {
        let options = SolverOptions {
            time_limit: params.time_limit,
            ..SolverOptions::default()
        };
        SlasPlanner {
            params,
            options,
            state: PlannerState::new(initial_lane),
            keep_model: false,
            last_model: None,
        }
    }

    pub fn plan(&mut self, snapshot: &WorldSnapshot, clock: &dyn Clock) -> (AdvisoryCommand, PlanDiagnostics) {
        let state = core::mem::replace(&mut self.state, PlannerState::new(0));
        let (out, state) = plan_step(snapshot, state, &self.params, &self.options, clock);
        self.state = state;
        if self.keep_model {
            self.last_model = out.model;
        }
        (out.command, out.diagnostics)
    }
}
