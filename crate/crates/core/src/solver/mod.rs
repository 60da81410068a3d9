//! Branch and bound for mixed-binary convex QPs.
//!
//! The search tests a hint first, then dives depth-first from the root
//! relaxation until it holds an incumbent, then switches to best-first.
//! Lazy rows are checked on integer-feasible candidates and moved into a
//! global pool when violated.

mod clock;
mod ipm;
pub mod linalg;
mod propagate;
mod qp;

use alloc::rc::Rc;
use alloc::vec::Vec;

pub use clock::{Clock, WorkClock};
pub use qp::QpStatus;

use crate::model::{OptimizationModel, Program, VarId, VarKind};
use propagate::propagate;
use qp::{solve_node, AdmmSettings, QpOutcome, Scaling, WarmStart};

/// Tolerance on integrality of relaxation values.
const INT_TOL: f64 = 1e-6;
/// Tolerance for accepting an incumbent.
const FEAS_TOL: f64 = 1e-6;
const PROPAGATION_PASSES: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// Budget exhausted with an incumbent.
    FeasibleTimeout,
    Infeasible,
    /// Budget exhausted before any incumbent was found.
    Timeout,
    Error,
}

impl SolveStatus {
    pub const ALL: [SolveStatus; 5] = [
        SolveStatus::Optimal,
        SolveStatus::FeasibleTimeout,
        SolveStatus::Infeasible,
        SolveStatus::Timeout,
        SolveStatus::Error,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::FeasibleTimeout => "feasible_timeout",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Timeout => "timeout",
            SolveStatus::Error => "error",
        }
    }

    pub fn from_name(name: &str) -> Option<SolveStatus> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }

    pub fn has_incumbent(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::FeasibleTimeout)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum NodeAction {
    HintAccepted,
    HintRejected,
    HeuristicIncumbent,
    Branch { var: VarId, value: f64 },
    Incumbent,
    PrunedByBound,
    Infeasible,
    LazyCuts(usize),
    NumericalFailure,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceEntry {
    pub node: u64,
    pub depth: usize,
    pub bound: f64,
    pub action: NodeAction,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub incumbent: Option<Vec<f64>>,
    pub objective: f64,
    /// Smallest bound over open nodes at exit (equal to `objective` when
    /// optimal).
    pub bound: f64,
    /// Seconds from the start of the solve.
    pub first_incumbent_time: Option<f64>,
    pub total_time: f64,
    pub nodes_explored: u64,
    pub lazy_cuts_added: usize,
    pub hint_accepted: bool,
    pub numerical_failures: u64,
    /// ADMM iterations over all node relaxations.
    pub qp_iterations: u64,
    pub trace: Vec<TraceEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    /// Budget in clock seconds.
    pub time_limit: f64,
    pub node_limit: Option<u64>,
    pub trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            time_limit: 0.2,
            node_limit: None,
            trace: false,
        }
    }
}

/// Turns a relaxation solution into a full candidate assignment whose
/// integer values are then fixed and completed by a QP.
pub trait Heuristic {
    fn propose(&self, relaxation: &[f64]) -> Option<Vec<f64>>;

    /// Candidates tried once after the root relaxation.
    fn root_candidates(&self) -> Vec<Vec<f64>> {
        Vec::new()
    }
}

impl Heuristic for OptimizationModel {
    fn propose(&self, relaxation: &[f64]) -> Option<Vec<f64>> {
        Some(self.assignment_from_plan(&self.plan_from(relaxation)))
    }

    fn root_candidates(&self) -> Vec<Vec<f64>> {
        self.candidate_plans().iter().map(|p| self.assignment_from_plan(p)).collect()
    }
}

/// Every lazy row violated by `x` beyond the feasibility tolerance.
pub fn check_lazy(program: &Program, x: &[f64]) -> Vec<usize> {
    program
        .lazy_rows
        .iter()
        .enumerate()
        .filter(|(_, row)| row.violation(x) > FEAS_TOL)
        .map(|(r, _)| r)
        .collect()
}

/// Fractional integer variable to branch on: earliest step, then lane
/// decisions before derived lane variables before side selectors, then lane
/// (or vehicle) index, then variable index.
pub fn branch_variable(program: &Program, x: &[f64], lo: &[f64], hi: &[f64]) -> Option<VarId> {
    let mut best: Option<((usize, u8, u64, usize), usize)> = None;
    for (j, var) in program.vars.iter().enumerate() {
        if !var.kind.is_integral() || hi[j] - lo[j] < 0.5 {
            continue;
        }
        if (x[j] - crate::math::round(x[j])).abs() <= INT_TOL {
            continue;
        }
        let minor = match var.role {
            crate::model::VarRole::LaneSelector { lane, .. } | crate::model::VarRole::PhysicalLaneSelector { lane, .. } => {
                lane as u64
            }
            crate::model::VarRole::Side { vehicle, .. } => vehicle as u64,
            _ => 0,
        };
        let key = (var.role.step().unwrap_or(usize::MAX), var.role.branch_class(), minor, j);
        if best.as_ref().map_or(true, |(k, _)| key < *k) {
            best = Some((key, j));
        }
    }
    best.map(|(_, j)| VarId(j as u32))
}

/// A search node: bounds on every variable plus bookkeeping.
#[derive(Clone, Debug)]
pub struct Node {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub depth: usize,
    /// Lower bound inherited from the parent relaxation.
    pub bound: f64,
    pub id: u64,
    warm: Option<Rc<WarmStart>>,
}

impl Node {
    pub fn root(program: &Program) -> Node {
        Node {
            lo: program.vars.iter().map(|v| v.lower).collect(),
            hi: program.vars.iter().map(|v| v.upper).collect(),
            depth: 0,
            bound: f64::NEG_INFINITY,
            id: 0,
            warm: None,
        }
    }
}

/// Children `var <= floor(value)` and `var >= ceil(value)`.
pub fn branch(node: &Node, var: VarId, value: f64) -> (Node, Node) {
    let j = var.index();
    let mut down = node.clone();
    let mut up = node.clone();
    down.hi[j] = crate::math::floor(value).max(node.lo[j]);
    up.lo[j] = crate::math::ceil(value).min(node.hi[j]);
    down.depth += 1;
    up.depth += 1;
    (down, up)
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpRelaxationResult {
    pub solution: Vec<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub status: QpStatus,
}

/// Continuous relaxation over the eager rows with some integer variables
/// fixed.
pub fn solve_qp_relaxation(program: &Program, fixings: &[(VarId, f64)]) -> QpRelaxationResult {
    let mut node = Node::root(program);
    for &(v, x) in fixings {
        node.lo[v.index()] = x;
        node.hi[v.index()] = x;
    }
    let scaling = Scaling::ruiz(program, 15);
    let rank = order_rank(program);
    let clock = WorkClock::new();
    let out = solve_node(
        program,
        &scaling,
        &rank,
        &node.lo,
        &node.hi,
        &[],
        None,
        &AdmmSettings::default(),
        &clock,
    );
    QpRelaxationResult {
        solution: out.x,
        objective: out.objective,
        kkt_residual: out.kkt_residual,
        status: out.status,
    }
}

/// Factorization order: by planning step, then declaration order.
fn order_rank(program: &Program) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..program.num_vars()).collect();
    idx.sort_by_key(|&j| (program.vars[j].role.step().unwrap_or(0), j));
    let mut rank = alloc::vec![0; idx.len()];
    for (r, &j) in idx.iter().enumerate() {
        rank[j] = r;
    }
    rank
}

/// Solve a model using its stored warm start and its relaxation rounding
/// heuristic.
pub fn solve_model(model: &OptimizationModel, options: &SolverOptions, clock: &dyn Clock) -> SolveResult {
    solve(&model.program, model.warm_start.as_deref(), Some(model), options, clock)
}

struct Search<'a> {
    program: &'a Program,
    scaling: Scaling,
    rank: Vec<usize>,
    settings: AdmmSettings,
    clock: &'a dyn Clock,
    pool: Vec<usize>,
    in_pool: Vec<bool>,
    root_lo: Vec<f64>,
    root_hi: Vec<f64>,
    incumbent: Option<Vec<f64>>,
    best: f64,
    first_incumbent: Option<f64>,
    start: f64,
    cuts: usize,
    nodes: u64,
    numerical_failures: u64,
    qp_iterations: u64,
    trace: Option<Vec<TraceEntry>>,
}

impl<'a> Search<'a> {
    fn now(&self) -> f64 {
        self.clock.elapsed() - self.start
    }

    fn log(&mut self, node: u64, depth: usize, bound: f64, action: NodeAction) {
        if let Some(t) = &mut self.trace {
            t.push(TraceEntry {
                node,
                depth,
                bound,
                action,
            });
        }
    }

    fn add_cuts(&mut self, x: &[f64]) -> usize {
        let mut added = 0;
        for r in check_lazy(self.program, x) {
            if !self.in_pool[r] {
                self.in_pool[r] = true;
                self.pool.push(r);
                added += 1;
            }
        }
        self.cuts += added;
        added
    }

    fn gap_closed(&self, bound: f64) -> bool {
        bound >= self.best - 1e-7 * (1.0 + self.best.abs())
    }

    fn solve(&mut self, lo: &[f64], hi: &[f64], warm: Option<&WarmStart>) -> QpOutcome {
        let out = solve_node(self.program, &self.scaling, &self.rank, lo, hi, &self.pool, warm, &self.settings, self.clock);
        self.qp_iterations += out.iterations as u64;
        out
    }

    /// Record `x` as incumbent if it is feasible and better.
    fn offer(&mut self, x: Vec<f64>) -> bool {
        if self.program.max_violation(&x) > FEAS_TOL {
            return false;
        }
        let obj = self.program.objective_value(&x);
        if obj < self.best {
            self.best = obj;
            self.incumbent = Some(x);
            if self.first_incumbent.is_none() {
                self.first_incumbent = Some(self.now());
            }
            return true;
        }
        false
    }

    /// Fix every integer variable to its rounded value in `candidate` and
    /// complete the continuous part.
    fn try_leaf(&mut self, candidate: &[f64]) -> bool {
        let mut lo = self.root_lo.clone();
        let mut hi = self.root_hi.clone();
        for (j, var) in self.program.vars.iter().enumerate() {
            if var.kind.is_integral() {
                let v = crate::math::round(candidate[j]);
                if v < lo[j] || v > hi[j] {
                    return false;
                }
                lo[j] = v;
                hi[j] = v;
            }
        }
        // lazy rows over integers only can be checked before any QP
        let program = self.program;
        let violated: Vec<usize> = program
            .lazy_rows
            .iter()
            .enumerate()
            .filter(|(_, r)| {
                r.terms.iter().all(|t| program.vars[t.0.index()].kind.is_integral()) && r.violation(&lo) > FEAS_TOL
            })
            .map(|(k, _)| k)
            .collect();
        if !violated.is_empty() {
            for r in violated {
                if !self.in_pool[r] {
                    self.in_pool[r] = true;
                    self.pool.push(r);
                    self.cuts += 1;
                }
            }
            return false;
        }
        match propagate(self.program, &self.pool, &mut lo, &mut hi, PROPAGATION_PASSES) {
            Ok(w) => self.clock.charge(w),
            Err(_) => {
                return false;
            }
        }
        let out = self.solve(&lo, &hi, None);
        if out.status != QpStatus::Solved {
            return false;
        }
        if self.add_cuts(&out.x) > 0 {
            return false;
        }
        self.offer(out.x)
    }
}

fn pick(open: &mut Vec<Node>, best_first: bool) -> Option<Node> {
    if open.is_empty() {
        return None;
    }
    if !best_first {
        return open.pop();
    }
    let mut k = 0;
    for (i, n) in open.iter().enumerate() {
        let b = &open[k];
        let better = n.bound < b.bound || (n.bound == b.bound && (n.depth > b.depth || (n.depth == b.depth && n.id < b.id)));
        if better {
            k = i;
        }
    }
    Some(open.swap_remove(k))
}

/// Branch and bound over the integer variables of `program`.
pub fn solve(
    program: &Program,
    hint: Option<&[f64]>,
    heuristic: Option<&dyn Heuristic>,
    options: &SolverOptions,
    clock: &dyn Clock,
) -> SolveResult {
    let start = clock.elapsed();
    if program.validate().is_err() || hint.is_some_and(|h| h.len() != program.num_vars()) {
        return SolveResult {
            status: SolveStatus::Error,
            incumbent: None,
            objective: f64::INFINITY,
            bound: f64::NEG_INFINITY,
            first_incumbent_time: None,
            total_time: clock.elapsed() - start,
            nodes_explored: 0,
            lazy_cuts_added: 0,
            hint_accepted: false,
            numerical_failures: 0,
            qp_iterations: 0,
            trace: Vec::new(),
        };
    }
    let mut hint_accepted = false;
    let mut root = Node::root(program);
    let mut s = Search {
        program,
        scaling: Scaling::ruiz(program, 15),
        rank: order_rank(program),
        settings: AdmmSettings::default(),
        clock,
        pool: Vec::new(),
        in_pool: alloc::vec![false; program.lazy_rows.len()],
        root_lo: Vec::new(),
        root_hi: Vec::new(),
        incumbent: None,
        best: f64::INFINITY,
        first_incumbent: None,
        start,
        cuts: 0,
        nodes: 0,
        numerical_failures: 0,
        qp_iterations: 0,
        trace: options.trace.then(Vec::new),
    };
    clock.charge(10 * (program.rows.len() + program.num_vars()) as u64);
    let finish = |s: Search, status: SolveStatus, bound: f64, hint_accepted: bool| SolveResult {
        status,
        objective: s.best,
        bound,
        first_incumbent_time: s.first_incumbent,
        total_time: s.now(),
        nodes_explored: s.nodes,
        lazy_cuts_added: s.cuts,
        hint_accepted,
        numerical_failures: s.numerical_failures,
        qp_iterations: s.qp_iterations,
        trace: s.trace.unwrap_or_default(),
        incumbent: s.incumbent,
    };
    match propagate(program, &[], &mut root.lo, &mut root.hi, PROPAGATION_PASSES) {
        Ok(w) => clock.charge(w),
        Err(_) => {
            s.log(0, 0, f64::INFINITY, NodeAction::Infeasible);
            return finish(s, SolveStatus::Infeasible, f64::INFINITY, false);
        }
    }
    s.root_lo = root.lo.clone();
    s.root_hi = root.hi.clone();

    if let Some(h) = hint {
        let accepted = s.try_leaf(h);
        hint_accepted = accepted;
        let action = if accepted { NodeAction::HintAccepted } else { NodeAction::HintRejected };
        s.log(0, 0, s.best, action);
    }

    let mut open = alloc::vec![root];
    let mut next_id = 1u64;
    let mut timed_out = false;
    while let Some(mut node) = pick(&mut open, s.incumbent.is_some()) {
        if s.now() >= options.time_limit || options.node_limit.is_some_and(|l| s.nodes >= l) {
            open.push(node);
            timed_out = true;
            break;
        }
        if s.gap_closed(node.bound) {
            s.log(node.id, node.depth, node.bound, NodeAction::PrunedByBound);
            continue;
        }
        match propagate(program, &s.pool, &mut node.lo, &mut node.hi, PROPAGATION_PASSES) {
            Ok(w) => clock.charge(w),
            Err(_) => {
                s.log(node.id, node.depth, node.bound, NodeAction::Infeasible);
                continue;
            }
        }
        s.nodes += 1;
        let out = s.solve(&node.lo, &node.hi, node.warm.as_deref());
        let bound = match out.status {
            QpStatus::Infeasible => {
                s.log(node.id, node.depth, node.bound, NodeAction::Infeasible);
                continue;
            }
            QpStatus::NumericalFailure => {
                s.numerical_failures += 1;
                s.log(node.id, node.depth, node.bound, NodeAction::NumericalFailure);
                node.bound
            }
            QpStatus::Solved => out.objective.max(node.bound),
        };
        if s.gap_closed(bound) {
            s.log(node.id, node.depth, bound, NodeAction::PrunedByBound);
            continue;
        }
        if node.id == 0 {
            if let Some(h) = heuristic {
                for candidate in h.root_candidates() {
                    if s.try_leaf(&candidate) {
                        s.log(0, 0, bound, NodeAction::HeuristicIncumbent);
                    }
                }
                if s.gap_closed(bound) {
                    s.log(0, 0, bound, NodeAction::PrunedByBound);
                    continue;
                }
            }
        }
        match branch_variable(program, &out.x, &node.lo, &node.hi) {
            None => {
                if out.status != QpStatus::Solved {
                    // cannot trust the iterate; complete its rounding instead
                    let _ = s.try_leaf(&out.x);
                    continue;
                }
                let added = s.add_cuts(&out.x);
                if added > 0 {
                    s.log(node.id, node.depth, bound, NodeAction::LazyCuts(added));
                    node.bound = bound;
                    node.warm = out.warm.map(Rc::new);
                    open.push(node);
                    continue;
                }
                let mut x = out.x;
                for (j, var) in program.vars.iter().enumerate() {
                    if var.kind.is_integral() {
                        x[j] = crate::math::round(x[j]);
                    }
                }
                let improved = if s.program.max_violation(&x) <= FEAS_TOL {
                    s.offer(x)
                } else {
                    s.try_leaf(&x)
                };
                if improved {
                    s.log(node.id, node.depth, bound, NodeAction::Incumbent);
                }
            }
            Some(var) => {
                if s.incumbent.is_none() {
                    if let Some(h) = heuristic {
                        if let Some(candidate) = h.propose(&out.x) {
                            if s.try_leaf(&candidate) {
                                s.log(node.id, node.depth, bound, NodeAction::HeuristicIncumbent);
                            }
                        }
                    }
                }
                let j = var.index();
                let value = out.x[j];
                s.log(node.id, node.depth, bound, NodeAction::Branch { var, value });
                node.bound = bound;
                node.warm = out.warm.map(Rc::new);
                let (mut down, mut up) = branch(&node, var, value);
                down.id = next_id;
                up.id = next_id + 1;
                next_id += 2;
                let up_first = match hint {
                    Some(h) => h[j] >= up.lo[j] - INT_TOL,
                    None => value - crate::math::floor(value) >= 0.5,
                };
                if program.vars[j].kind == VarKind::Binary || program.vars[j].kind == VarKind::Integer {
                    if up_first {
                        open.push(down);
                        open.push(up);
                    } else {
                        open.push(up);
                        open.push(down);
                    }
                }
            }
        }
    }
    let open_bound = open.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    let (status, bound) = match (timed_out, s.incumbent.is_some()) {
        (false, true) => (SolveStatus::Optimal, s.best),
        (false, false) => (SolveStatus::Infeasible, f64::INFINITY),
        (true, true) => (SolveStatus::FeasibleTimeout, open_bound.min(s.best)),
        (true, false) => (SolveStatus::Timeout, open_bound),
    };
    finish(s, status, bound, hint_accepted)
}
