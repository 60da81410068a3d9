//! Episode and Monte Carlo drivers.

use rayon::prelude::*;
use slas_core::sim::{
    aggregate, compute_metrics, make_policy, randomize, run_episode, run_seed, Decision, EpisodeLog, Metrics, Policy, PolicyKind,
    Randomization, SimConfig, SlasPolicy, TableRow,
};
use slas_core::{Clock, Scenario, SlasPlanner, WorkClock, WorldSnapshot};

use crate::clock::WallClock;
use crate::report::{TickTrace, TraceJson};

/// Budget clock for the planner.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ClockKind {
    /// Deterministic work-based time; the default.
    #[default]
    Work,
    Wall,
}

impl ClockKind {
    pub fn make(self) -> Box<dyn Clock> {
        match self {
            ClockKind::Work => Box::new(WorkClock::new()),
            ClockKind::Wall => Box::new(WallClock::new()),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunOptions {
    pub clock: ClockKind,
    pub trace: bool,
    pub sim: SimConfig,
}

pub struct EpisodeRun {
    pub log: EpisodeLog,
    pub metrics: Metrics,
    pub trace: Vec<TickTrace>,
}

/// Records the search trace of each planner tick.
struct Tracing {
    inner: SlasPolicy,
    ticks: Vec<TickTrace>,
}

impl Policy for Tracing {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Slas
    }

    fn decide(&mut self, snapshot: &WorldSnapshot, changing: bool, clock: &dyn Clock) -> Decision {
        let d = self.inner.decide(snapshot, changing, clock);
        if let Some(diag) = &d.diagnostics {
            self.ticks.push(TickTrace {
                time: snapshot.time,
                entries: diag.trace.iter().map(TraceJson::from).collect(),
            });
        }
        d
    }
}

pub fn run_policy(scenario: &Scenario, kind: PolicyKind, opts: &RunOptions) -> EpisodeRun {
    let clock = opts.clock.make();
    let (log, trace) = if kind == PolicyKind::Slas && opts.trace {
        let mut planner = SlasPlanner::new(scenario.params.clone(), scenario.ego.lane);
        planner.options.trace = true;
        let mut policy = Tracing {
            inner: SlasPolicy {
                planner,
                last_command: None,
            },
            ticks: Vec::new(),
        };
        let log = run_episode(scenario, &mut policy, &opts.sim, clock.as_ref());
        (log, policy.ticks)
    } else {
        let mut policy = make_policy(kind, scenario, &opts.sim);
        (run_episode(scenario, policy.as_mut(), &opts.sim, clock.as_ref()), Vec::new())
    };
    let metrics = compute_metrics(&log);
    EpisodeRun { log, metrics, trace }
}

/// Every policy on the same world, in the given order.
pub fn run_policies(scenario: &Scenario, kinds: &[PolicyKind], opts: &RunOptions) -> Vec<EpisodeRun> {
    kinds.iter().map(|&k| run_policy(scenario, k, opts)).collect()
}

/// One Monte Carlo run: the randomized world and each policy's episode.
pub struct McRun {
    pub run: usize,
    pub seed: u64,
    pub scenario: Scenario,
    pub episodes: Vec<EpisodeRun>,
}

pub struct McOutcome {
    pub runs: Vec<McRun>,
    /// Runs with no valid randomized world.
    pub skipped: Vec<usize>,
    pub table: Vec<(PolicyKind, TableRow)>,
}

impl McOutcome {
    pub fn logs(&self) -> impl Iterator<Item = &EpisodeLog> {
        self.runs.iter().flat_map(|r| r.episodes.iter().map(|e| &e.log))
    }
}

/// `n` randomized runs seeded from `seed`, executed in parallel and
/// reduced in run order.
pub fn monte_carlo(base: &Scenario, n: usize, seed: u64, kinds: &[PolicyKind], rand: &Randomization, opts: &RunOptions) -> McOutcome {
    let results: Vec<(usize, u64, Option<Scenario>)> = (0..n)
        .map(|run| {
            let s = run_seed(seed, run);
            (run, s, randomize(base, rand, s))
        })
        .collect();
    let mut skipped = Vec::new();
    let jobs: Vec<(usize, u64, Scenario)> = results
        .into_iter()
        .filter_map(|(run, s, sc)| match sc {
            Some(sc) => Some((run, s, sc)),
            None => {
                skipped.push(run);
                None
            }
        })
        .collect();
    let runs: Vec<McRun> = jobs
        .into_par_iter()
        .map(|(run, seed, scenario)| {
            let episodes = run_policies(&scenario, kinds, opts);
            McRun {
                run,
                seed,
                scenario,
                episodes,
            }
        })
        .collect();
    let table = kinds
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let metrics: Vec<Metrics> = runs.iter().map(|r| r.episodes[i].metrics.clone()).collect();
            (k, aggregate(&metrics))
        })
        .collect();
    McOutcome { runs, skipped, table }
}
