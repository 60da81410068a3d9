//! Structure of the built planning models and command extraction.

mod common;

use std::collections::BTreeMap;

use common::{case_study, first_snapshot, scenario};
use slas_core::model::{build_binary_model, build_integer_model, extract_command, CommandError, RowKind, VarKind, VarRole};
use slas_core::predictor::predict_all;
use slas_core::safety::{deviation_cost, projected_deviation, DeviationState};
use slas_core::solver::{solve_model, SolverOptions};
use slas_core::{PlannerParams, SolveStatus, WorkClock};

fn count_roles(model: &slas_core::OptimizationModel, f: impl Fn(&VarRole) -> bool) -> usize {
    model.program.vars.iter().filter(|v| f(&v.role)).count()
}

#[test]
fn single_lane_no_traffic_ramps_at_full_throttle() {
    let mut sc = scenario(1, 0, 5.0, &[]);
    sc.params.horizon = 3;
    let snap = first_snapshot(&sc);
    let model = build_integer_model(&snap, &BTreeMap::new(), &sc.params).unwrap();
    assert_eq!(count_roles(&model, |r| matches!(r, VarRole::Speed { .. })), 3);
    // the only target lane is pinned to 0
    for v in &model.program.vars {
        if matches!(v.role, VarRole::TargetLane { .. }) {
            assert_eq!((v.lower, v.upper), (0.0, 0.0));
        }
    }
    let res = solve_model(&model, &SolverOptions::default(), &WorkClock::new());
    assert_eq!(res.status, SolveStatus::Optimal);
    let plan = model.plan_from(res.incumbent.as_ref().unwrap());
    for (j, v) in plan.speeds.iter().enumerate() {
        assert!((v - (5.0 + 1.4 * (j + 1) as f64)).abs() < 1e-6, "{:?}", plan.speeds);
    }
}

#[test]
fn case_study_model_sizes() {
    let sc = case_study();
    let snap = first_snapshot(&sc);
    let preds = predict_all(&snap, &sc.params.prediction_config(15.0));
    let integer = build_integer_model(&snap, &preds, &sc.params).unwrap();
    assert_eq!(count_roles(&integer, |r| matches!(r, VarRole::TargetLane { .. })), 40);
    assert_eq!(count_roles(&integer, |r| matches!(r, VarRole::PhysicalLane { .. })), 40);
    assert_eq!(integer.program.rows.iter().filter(|r| r.kind == RowKind::LaneTiming).count(), 80);
    let sides = count_roles(&integer, |r| matches!(r, VarRole::Side { .. }));
    assert!(sides > 0 && sides < 6 * 40, "{sides} side selectors");

    let dev = DeviationState {
        delta: 0.0,
        prev_target: 1,
    };
    let binary = build_binary_model(&snap, &preds, &sc.params, &dev).unwrap();
    assert_eq!(count_roles(&binary, |r| matches!(r, VarRole::LaneSelector { .. })), 120);
    assert_eq!(binary.program.rows.iter().filter(|r| r.kind == RowKind::OneHot).count(), 40);
    // adjacency is withheld until violated
    assert!(binary.program.rows.iter().all(|r| r.kind != RowKind::Adjacency));
    assert!(!binary.program.lazy_rows.is_empty());

    let eager = PlannerParams {
        lazy_lane_constraints: false,
        ..sc.params.clone()
    };
    let binary = build_binary_model(&snap, &preds, &eager, &dev).unwrap();
    assert!(binary.program.lazy_rows.is_empty());
    assert!(binary.program.rows.iter().any(|r| r.kind == RowKind::Adjacency));
}

#[test]
fn leader_at_one_metre_still_builds() {
    // spacing validation would reject this scenario, so build the snapshot by hand
    let sc = scenario(1, 0, 10.0, &[]);
    let mut snap = first_snapshot(&sc);
    snap.vehicles.push(slas_core::ObservedVehicle::new(1, 1.0, 0.0, 0));
    let preds = predict_all(&snap, &sc.params.prediction_config(15.0));
    let model = build_integer_model(&snap, &preds, &sc.params).unwrap();
    let res = solve_model(&model, &SolverOptions::default(), &WorkClock::new());
    assert_eq!(res.status, SolveStatus::Infeasible);
    assert_eq!(extract_command(&res, &model), Err(CommandError::NoIncumbent(SolveStatus::Infeasible)));
}

/// Mid-change the required gap grows by the deviation term, so the optimum
/// keeps further back from the leader.
#[test]
fn deviation_inflates_the_required_gap() {
    let mut sc = scenario(1, 0, 10.0, &[(1, 0, 16.0, 10.0)]);
    sc.params.horizon = 4;
    let mut snap = first_snapshot(&sc);
    snap.ego.lateral = 0.9 + 1.75;
    let preds = predict_all(&snap, &sc.params.prediction_config(15.0));
    let dev = DeviationState::from_lateral(snap.ego.lateral, 0, 3.5);
    assert!((dev.delta - 0.9).abs() < 1e-12);
    let mut flat_params = sc.params.clone();
    flat_params.safety.gamma4 = 0.0;
    let solve = |params: &PlannerParams| {
        let model = build_binary_model(&snap, &preds, params, &dev).unwrap();
        let res = solve_model(&model, &SolverOptions::default(), &WorkClock::new());
        assert_eq!(res.status, SolveStatus::Optimal);
        model.plan_from(res.incumbent.as_ref().unwrap()).speeds
    };
    let flat = solve(&flat_params);
    let inflated = solve(&sc.params);
    let p = sc.params.safety_params(3.5);
    let disp = |speeds: &[f64]| {
        let mut s = vec![0.0];
        let mut prev = 10.0;
        for &v in speeds {
            s.push(s.last().unwrap() + 0.2 * (prev + v));
            prev = v;
        }
        s
    };
    let (sf, si) = (disp(&flat), disp(&inflated));
    let pred = &preds[&1];
    for j in 1..=4 {
        assert!(si[j] <= sf[j] + 1e-9, "step {j}");
        let g = deviation_cost(projected_deviation(&dev, j, &p), &p) * p.lane_change_time();
        let gap = pred.displacements[j] - si[j];
        let plain = p.vehicle_length + slas_core::safety::min_safe_distance(inflated[j - 1], pred.speeds[j], &p, slas_core::safety::Direction::Forward);
        assert!(gap >= plain + g * inflated[j - 1] - 1e-6, "step {j}: {gap} < {plain} + {g} v");
    }
    assert!(inflated.iter().sum::<f64>() < flat.iter().sum::<f64>() - 1e-3);
}

#[test]
fn command_is_the_first_plan_step() {
    let sc = case_study();
    let snap = first_snapshot(&sc);
    let preds = predict_all(&snap, &sc.params.prediction_config(15.0));
    let dev = DeviationState {
        delta: 0.0,
        prev_target: 1,
    };
    let model = build_binary_model(&snap, &preds, &sc.params, &dev).unwrap();
    let res = solve_model(&model, &SolverOptions::default(), &WorkClock::new());
    assert!(res.status.has_incumbent());
    let cmd = extract_command(&res, &model).unwrap();
    assert_eq!(cmd.target_lane, cmd.plan.lanes[0]);
    assert_eq!(cmd.ref_speed, cmd.plan.speeds[0]);
    assert!(cmd.target_lane.abs_diff(1) <= 1);
    assert!(cmd.ref_speed >= 5.0 - 5.0 * 0.4 - 1e-6 && cmd.ref_speed <= 5.0 + 3.5 * 0.4 + 1e-6);
    assert!(model.program.vars.iter().filter(|v| v.kind == VarKind::Binary).count() > 120);
}
