//! Generic mixed-binary convex QP: variables, a quadratic objective and
//! linear rows split into an eager and a lazy set.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use crate::highway::Lane;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub u32);

impl VarId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
    Integer,
}

impl VarKind {
    pub fn is_integral(self) -> bool {
        !matches!(self, VarKind::Continuous)
    }
}

/// What a variable means in the planning model. Steps are 1-based planning
/// steps `j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarRole {
    Speed { step: usize },
    Displacement { step: usize },
    /// One-hot target lane selector of the binary formulation.
    LaneSelector { lane: Lane, step: usize },
    /// Integer target lane of the integer formulation.
    TargetLane { step: usize },
    /// Integer projected lane (floor auxiliary) of the integer formulation.
    PhysicalLane { step: usize },
    /// One-hot expansion of the projected lane, used to gate safety rows.
    PhysicalLaneSelector { lane: Lane, step: usize },
    /// Chooses which side of a vehicle the ego keeps: 0 behind it, 1 ahead.
    Side { vehicle: u32, step: usize },
    Aux,
}

impl VarRole {
    pub fn step(self) -> Option<usize> {
        match self {
            VarRole::Speed { step }
            | VarRole::Displacement { step }
            | VarRole::LaneSelector { step, .. }
            | VarRole::TargetLane { step }
            | VarRole::PhysicalLane { step }
            | VarRole::PhysicalLaneSelector { step, .. }
            | VarRole::Side { step, .. } => Some(step),
            VarRole::Aux => None,
        }
    }

    /// Branching class: lane decisions first, then derived lane variables,
    /// then side selectors.
    pub fn branch_class(self) -> u8 {
        match self {
            VarRole::LaneSelector { .. } | VarRole::TargetLane { .. } => 0,
            VarRole::PhysicalLane { .. } | VarRole::PhysicalLaneSelector { .. } => 1,
            VarRole::Side { .. } => 2,
            _ => 3,
        }
    }
}

impl fmt::Display for VarRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            VarRole::Speed { step } => write!(f, "v_{step}"),
            VarRole::Displacement { step } => write!(f, "s_{step}"),
            VarRole::LaneSelector { lane, step } => write!(f, "L_{lane}_{step}"),
            VarRole::TargetLane { step } => write!(f, "T_{step}"),
            VarRole::PhysicalLane { step } => write!(f, "l_{step}"),
            VarRole::PhysicalLaneSelector { lane, step } => write!(f, "e_{lane}_{step}"),
            VarRole::Side { vehicle, step } => write!(f, "c_{vehicle}_{step}"),
            VarRole::Aux => f.write_str("aux"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variable {
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
    pub role: VarRole,
}

/// `sum(coeff * x) + constant`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn constant(c: f64) -> Self {
        LinExpr {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(v: VarId) -> Self {
        LinExpr {
            terms: alloc::vec![(v, 1.0)],
            constant: 0.0,
        }
    }

    pub fn term(mut self, v: VarId, coeff: f64) -> Self {
        self.terms.push((v, coeff));
        self
    }

    pub fn plus(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn add(mut self, other: &LinExpr, scale: f64) -> Self {
        self.terms.extend(other.terms.iter().map(|&(v, c)| (v, c * scale)));
        self.constant += other.constant * scale;
        self
    }

    pub fn scale(mut self, k: f64) -> Self {
        for t in &mut self.terms {
            t.1 *= k;
        }
        self.constant *= k;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * x[v.index()]).sum::<f64>()
    }

    /// Merge duplicate variables and drop zero coefficients.
    pub fn normalized(&self) -> LinExpr {
        let mut merged: BTreeMap<VarId, f64> = BTreeMap::new();
        for &(v, c) in &self.terms {
            *merged.entry(v).or_insert(0.0) += c;
        }
        LinExpr {
            terms: merged.into_iter().filter(|&(_, c)| c != 0.0).collect(),
            constant: self.constant,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowKind {
    Acceleration,
    Displacement,
    OneHot,
    Adjacency,
    /// Floor encoding of the projected lane.
    LaneTiming,
    /// Links the projected lane to its one-hot expansion.
    LaneLink,
    Safety,
    Other,
}

impl RowKind {
    pub(crate) fn tag(self) -> &'static str {
        match self {
            RowKind::Acceleration => "accel",
            RowKind::Displacement => "disp",
            RowKind::OneHot => "onehot",
            RowKind::Adjacency => "adjacent",
            RowKind::LaneTiming => "floor",
            RowKind::LaneLink => "link",
            RowKind::Safety => "safety",
            RowKind::Other => "row",
        }
    }
}

/// `lower <= sum(coeff * x) <= upper`.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub terms: Vec<(VarId, f64)>,
    pub lower: f64,
    pub upper: f64,
    pub kind: RowKind,
    pub step: usize,
}

impl Row {
    /// `expr >= rhs` with the expression constant moved to the right.
    pub fn at_least(expr: LinExpr, rhs: f64, kind: RowKind, step: usize) -> Row {
        let e = expr.normalized();
        Row {
            terms: e.terms,
            lower: rhs - e.constant,
            upper: f64::INFINITY,
            kind,
            step,
        }
    }

    pub fn at_most(expr: LinExpr, rhs: f64, kind: RowKind, step: usize) -> Row {
        let e = expr.normalized();
        Row {
            terms: e.terms,
            lower: f64::NEG_INFINITY,
            upper: rhs - e.constant,
            kind,
            step,
        }
    }

    pub fn equal(expr: LinExpr, rhs: f64, kind: RowKind, step: usize) -> Row {
        let e = expr.normalized();
        Row {
            terms: e.terms,
            lower: rhs - e.constant,
            upper: rhs - e.constant,
            kind,
            step,
        }
    }

    pub fn between(expr: LinExpr, lo: f64, hi: f64, kind: RowKind, step: usize) -> Row {
        let e = expr.normalized();
        Row {
            terms: e.terms,
            lower: lo - e.constant,
            upper: hi - e.constant,
            kind,
            step,
        }
    }

    pub fn activity(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * x[v.index()]).sum()
    }

    /// Amount by which `x` violates the row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let a = self.activity(x);
        (self.lower - a).max(a - self.upper).max(0.0)
    }

    pub fn is_equality(&self) -> bool {
        self.lower == self.upper
    }
}

/// `0.5 x'Px + q'x + constant` with `P` stored as its upper triangle.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Objective {
    /// `(i, j) -> P_ij` for `i <= j`.
    pub quad: BTreeMap<(u32, u32), f64>,
    pub linear: Vec<f64>,
    pub constant: f64,
}

impl Objective {
    pub fn add_linear(&mut self, v: VarId, c: f64) {
        if self.linear.len() <= v.index() {
            self.linear.resize(v.index() + 1, 0.0);
        }
        self.linear[v.index()] += c;
    }

    /// Adds `weight * expr^2`.
    pub fn add_square(&mut self, expr: &LinExpr, weight: f64) {
        if weight == 0.0 {
            return;
        }
        let e = expr.normalized();
        for (a, &(vi, ci)) in e.terms.iter().enumerate() {
            for &(vj, cj) in &e.terms[a..] {
                let key = if vi <= vj { (vi.0, vj.0) } else { (vj.0, vi.0) };
                *self.quad.entry(key).or_insert(0.0) += 2.0 * weight * ci * cj;
            }
            self.add_linear(vi, 2.0 * weight * e.constant * ci);
        }
        self.constant += weight * e.constant * e.constant;
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut total = self.constant;
        for (&(i, j), &p) in &self.quad {
            let (xi, xj) = (x[i as usize], x[j as usize]);
            total += if i == j { 0.5 * p * xi * xi } else { p * xi * xj };
        }
        total
            + self
                .linear
                .iter()
                .zip(x)
                .map(|(q, xi)| q * xi)
                .sum::<f64>()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Formulation {
    Integer,
    Binary,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelError {
    HorizonMismatch { vehicle: u32, have: usize, need: usize },
    UnknownVariable { row: usize, var: u32 },
    BadBounds { var: u32 },
    NonFinite,
    NotConvex,
    InvalidParams(crate::highway::DomainError),
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::HorizonMismatch { vehicle, have, need } => {
                write!(f, "prediction for vehicle {vehicle} has {have} points, horizon needs {need}")
            }
            ModelError::UnknownVariable { row, var } => write!(f, "row {row} references undeclared variable {var}"),
            ModelError::BadBounds { var } => write!(f, "variable {var} has inconsistent bounds"),
            ModelError::NonFinite => f.write_str("model contains non-finite coefficients"),
            ModelError::NotConvex => f.write_str("objective is not positive semidefinite"),
            ModelError::InvalidParams(e) => write!(f, "invalid planner parameters: {e}"),
        }
    }
}

/// The program itself, independent of what the variables mean.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Program {
    pub vars: Vec<Variable>,
    pub objective: Objective,
    pub rows: Vec<Row>,
    pub lazy_rows: Vec<Row>,
}

impl Program {
    pub fn add_var(&mut self, kind: VarKind, lower: f64, upper: f64, role: VarRole) -> VarId {
        let id = VarId(self.vars.len() as u32);
        self.vars.push(Variable {
            kind,
            lower,
            upper,
            role,
        });
        if self.objective.linear.len() < self.vars.len() {
            self.objective.linear.resize(self.vars.len(), 0.0);
        }
        id
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.eval(x)
    }

    /// Largest bound, row or integrality violation over eager and lazy rows.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (var, &xi) in self.vars.iter().zip(x) {
            worst = worst.max(var.lower - xi).max(xi - var.upper);
            if var.kind.is_integral() {
                worst = worst.max((xi - crate::math::round(xi)).abs());
            }
        }
        for row in self.rows.iter().chain(&self.lazy_rows) {
            worst = worst.max(row.violation(x));
        }
        worst
    }

    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.vars.len() && self.max_violation(x) <= tol
    }

    /// Structural checks: declared variables, bound order, finiteness and a
    /// positive semidefinite objective.
    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.vars.len() as u32;
        for (i, var) in self.vars.iter().enumerate() {
            if !(var.lower <= var.upper) || var.lower.is_nan() || var.upper.is_nan() {
                return Err(ModelError::BadBounds { var: i as u32 });
            }
        }
        for (r, row) in self.rows.iter().chain(&self.lazy_rows).enumerate() {
            for &(v, c) in &row.terms {
                if v.0 >= n {
                    return Err(ModelError::UnknownVariable { row: r, var: v.0 });
                }
                if !c.is_finite() {
                    return Err(ModelError::NonFinite);
                }
            }
            if row.lower.is_nan() || row.upper.is_nan() || row.lower == f64::INFINITY || row.upper == f64::NEG_INFINITY {
                return Err(ModelError::NonFinite);
            }
        }
        if self.objective.quad.keys().any(|&(i, j)| i >= n || j >= n)
            || self.objective.linear.len() > self.vars.len()
        {
            return Err(ModelError::UnknownVariable { row: usize::MAX, var: n });
        }
        if self.objective.quad.values().chain(&self.objective.linear).any(|c| !c.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        if !crate::solver::linalg::is_positive_semidefinite(self.vars.len(), &self.objective.quad) {
            return Err(ModelError::NotConvex);
        }
        Ok(())
    }
}
