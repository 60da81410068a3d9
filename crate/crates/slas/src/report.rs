//! JSON sidecars: episode events, solver statistics and run summaries.

use std::collections::BTreeMap;

use serde::Serialize;
use slas_core::sim::{EpisodeLog, Event, EventKind, Metrics, Stat, TableRow, TABLE_COLUMNS};
use slas_core::solver::{NodeAction, TraceEntry};

use crate::scenario::ScenarioFile;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EventJson {
    pub time: f64,
    pub kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub from: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub to: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lane: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vehicle: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl From<&Event> for EventJson {
    fn from(e: &Event) -> Self {
        let mut j = EventJson {
            time: e.time,
            kind: e.kind.name(),
            from: None,
            to: None,
            lane: None,
            vehicle: None,
            status: None,
            reason: None,
        };
        match &e.kind {
            EventKind::LaneChangeStart { from, to } | EventKind::LaneChangeAbort { from, to } => {
                j.from = Some(*from);
                j.to = Some(*to);
            }
            EventKind::LaneChangeFinish { lane } => j.lane = Some(*lane),
            EventKind::Collision { with } => j.vehicle = Some(*with),
            EventKind::Fallback { status, reason } => {
                j.status = Some(status.name());
                j.reason = reason.clone();
            }
            EventKind::InfeasibleSolve { status } => j.status = Some(status.name()),
            EventKind::CommandRejected { requested, reason } => {
                j.to = Some(*requested);
                j.reason = Some(reason.clone());
            }
            EventKind::Goal | EventKind::TimeCap => {}
        }
        j
    }
}

/// Aggregate solver figures over the planner ticks of one episode.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SolverStats {
    pub solves: usize,
    pub statuses: BTreeMap<&'static str, usize>,
    pub mean_solve_time_s: f64,
    pub max_solve_time_s: f64,
    /// Over solves that found an incumbent.
    pub mean_first_incumbent_s: Option<f64>,
    pub mean_nodes: f64,
    pub hints_accepted: usize,
    pub fallbacks: usize,
    pub infeasible_after_first_feasible: usize,
}

impl SolverStats {
    pub fn of(log: &EpisodeLog) -> Self {
        let solves: Vec<_> = log.samples.iter().filter_map(|s| s.solver.as_ref()).collect();
        if solves.is_empty() {
            return SolverStats::default();
        }
        let n = solves.len() as f64;
        let mut statuses = BTreeMap::new();
        for s in &solves {
            *statuses.entry(s.status.name()).or_insert(0) += 1;
        }
        let firsts: Vec<f64> = solves.iter().filter_map(|s| s.first_incumbent_time).collect();
        SolverStats {
            solves: solves.len(),
            statuses,
            mean_solve_time_s: solves.iter().map(|s| s.solve_time).sum::<f64>() / n,
            max_solve_time_s: solves.iter().map(|s| s.solve_time).fold(0.0, f64::max),
            mean_first_incumbent_s: (!firsts.is_empty()).then(|| firsts.iter().sum::<f64>() / firsts.len() as f64),
            mean_nodes: solves.iter().map(|s| s.nodes as f64).sum::<f64>() / n,
            hints_accepted: solves.iter().filter(|s| s.hint_accepted).count(),
            fallbacks: log.fallbacks(),
            infeasible_after_first_feasible: log.infeasible_after_first_feasible(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceJson {
    pub node: u64,
    pub depth: usize,
    pub bound: f64,
    pub action: String,
}

impl From<&TraceEntry> for TraceJson {
    fn from(t: &TraceEntry) -> Self {
        let action = match &t.action {
            NodeAction::HintAccepted => "hint_accepted".to_string(),
            NodeAction::HintRejected => "hint_rejected".to_string(),
            NodeAction::HeuristicIncumbent => "heuristic_incumbent".to_string(),
            NodeAction::Branch { var, value } => format!("branch x{} = {value}", var.0),
            NodeAction::Incumbent => "incumbent".to_string(),
            NodeAction::PrunedByBound => "pruned_by_bound".to_string(),
            NodeAction::Infeasible => "infeasible".to_string(),
            NodeAction::LazyCuts(n) => format!("lazy_cuts {n}"),
            NodeAction::NumericalFailure => "numerical_failure".to_string(),
        };
        TraceJson {
            node: t.node,
            depth: t.depth,
            bound: t.bound,
            action,
        }
    }
}

/// Search trace of one planner tick.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TickTrace {
    pub time: f64,
    pub entries: Vec<TraceJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EventsFile<'a> {
    pub policy: &'static str,
    pub events: Vec<EventJson>,
    pub solver: SolverStats,
    #[serde(skip_serializing_if = "<[TickTrace]>::is_empty")]
    pub trace: &'a [TickTrace],
}

impl<'a> EventsFile<'a> {
    pub fn new(log: &EpisodeLog, trace: &'a [TickTrace]) -> Self {
        EventsFile {
            policy: log.policy.name(),
            events: log.events.iter().map(EventJson::from).collect(),
            solver: SolverStats::of(log),
            trace,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StatJson {
    pub mean: f64,
    pub std: f64,
}

impl From<Stat> for StatJson {
    fn from(s: Stat) -> Self {
        StatJson { mean: s.mean, std: s.std }
    }
}

/// Episode metrics without the per-sample profile.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsJson {
    pub travel_time_s: Option<f64>,
    pub mean_headway_m: f64,
    pub min_distance_to_closest_m: f64,
    pub mean_distance_to_closest_m: f64,
    pub long_accel: StatJson,
    pub long_jerk: StatJson,
    pub lat_accel: StatJson,
    pub lat_jerk: StatJson,
    pub brake: StatJson,
    pub brake_jerk: StatJson,
    pub throttle: StatJson,
    pub throttle_jerk: StatJson,
    pub collided: bool,
    pub lane_changes: usize,
}

impl From<&Metrics> for MetricsJson {
    fn from(m: &Metrics) -> Self {
        MetricsJson {
            travel_time_s: m.travel_time,
            mean_headway_m: m.mean_headway,
            min_distance_to_closest_m: m.min_distance_to_closest,
            mean_distance_to_closest_m: m.mean_distance_to_closest,
            long_accel: m.long_accel.into(),
            long_jerk: m.long_jerk.into(),
            lat_accel: m.lat_accel.into(),
            lat_jerk: m.lat_jerk.into(),
            brake: m.brake.into(),
            brake_jerk: m.brake_jerk.into(),
            throttle: m.throttle.into(),
            throttle_jerk: m.throttle_jerk.into(),
            collided: m.collided,
            lane_changes: m.lane_changes,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolicyReport {
    pub policy: &'static str,
    pub metrics: MetricsJson,
    pub reached_goal: bool,
    pub solver: SolverStats,
}

impl PolicyReport {
    pub fn new(log: &EpisodeLog, metrics: &Metrics) -> Self {
        PolicyReport {
            policy: log.policy.name(),
            metrics: metrics.into(),
            reached_goal: log.reached_goal(),
            solver: SolverStats::of(log),
        }
    }
}

/// How much better `reference` did than `other` on the same world, in
/// percent of `other`'s figure.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Ratio {
    pub reference: &'static str,
    pub other: &'static str,
    pub travel_time_improvement_pct: Option<f64>,
    pub headway_improvement_pct: f64,
}

impl Ratio {
    pub fn between(reference: &PolicyReport, other: &PolicyReport) -> Self {
        let r = &reference.metrics;
        let o = &other.metrics;
        Ratio {
            reference: reference.policy,
            other: other.policy,
            travel_time_improvement_pct: match (r.travel_time_s, o.travel_time_s) {
                (Some(tr), Some(to)) => Some(100.0 * (to - tr) / to),
                _ => None,
            },
            headway_improvement_pct: 100.0 * (r.mean_headway_m - o.mean_headway_m) / o.mean_headway_m,
        }
    }
}

/// `summary.json` for `run` and `compare`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub seed: u64,
    pub scenario: ScenarioFile,
    pub overrides: Vec<String>,
    pub policies: Vec<PolicyReport>,
    pub ratios: Vec<Ratio>,
    pub artifacts: Vec<String>,
}

impl RunReport {
    /// Ratios of the first policy against each of the others.
    pub fn ratios(policies: &[PolicyReport]) -> Vec<Ratio> {
        match policies.split_first() {
            Some((first, rest)) => rest.iter().map(|o| Ratio::between(first, o)).collect(),
            None => Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TableRowJson {
    pub policy: String,
    pub runs: usize,
    pub excluded: usize,
    pub columns: BTreeMap<&'static str, StatJson>,
    pub long_jerk: StatJson,
    pub mean_headway: StatJson,
    pub min_distance_to_closest: f64,
}

impl TableRowJson {
    pub fn new(policy: &str, row: &TableRow) -> Self {
        TableRowJson {
            policy: policy.to_string(),
            runs: row.runs,
            excluded: row.excluded,
            columns: TABLE_COLUMNS.iter().copied().zip(row.columns.iter().map(|s| (*s).into())).collect(),
            long_jerk: row.long_jerk.into(),
            mean_headway: row.mean_headway.into(),
            min_distance_to_closest: row.min_distance_to_closest,
        }
    }
}

/// `summary.json` for `montecarlo`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonteCarloReport {
    pub seed: u64,
    pub runs: usize,
    pub skipped_runs: Vec<usize>,
    pub scenario: ScenarioFile,
    pub overrides: Vec<String>,
    pub table: Vec<TableRowJson>,
    pub collisions: usize,
    pub fallbacks: usize,
    pub infeasible_after_first_feasible: usize,
    pub artifacts: Vec<String>,
}
