//! Linear encodings of floor, implication and the two-sided gap disjunction.

use super::program::{LinExpr, Program, Row, RowKind, VarId, VarKind, VarRole};

/// Integer `y` with `y <= x` and `y + 1 >= x + eps`; `y = floor(x)` whenever
/// the fractional part of `x` is at most `1 - eps`, and there is no feasible
/// `y` otherwise.
pub fn encode_floor(
    program: &mut Program,
    x: &LinExpr,
    lower: f64,
    upper: f64,
    eps: f64,
    role: VarRole,
    step: usize,
) -> VarId {
    let y = program.add_var(VarKind::Integer, lower, upper, role);
    program
        .rows
        .push(Row::at_most(LinExpr::var(y).add(x, -1.0), 0.0, RowKind::LaneTiming, step));
    program
        .rows
        .push(Row::at_least(LinExpr::var(y).add(x, -1.0), eps - 1.0, RowKind::LaneTiming, step));
    y
}

/// `b + M (1 - a) >= 1 - eps`: forces `b = 1` when `a = 1`.
pub fn encode_implication(a: &LinExpr, b: &LinExpr, big_m: f64, eps: f64, step: usize) -> Row {
    let expr = b.clone().add(a, -big_m).plus(big_m);
    Row::at_least(expr, 1.0 - eps, RowKind::Adjacency, step)
}

/// Which side of the disjunction a row belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GapSide {
    /// `delta_s >= margin` when `c = 0`.
    Ahead,
    /// `-delta_s >= margin` when `c = 1`.
    Behind,
}

/// One row of the gated disjunction:
///
/// * ahead:  `delta_s - margin + M c + M (1 - gate) >= 0`
/// * behind: `-delta_s - margin + M (1 - c) + M (1 - gate) >= 0`
pub fn gap_row(delta_s: &LinExpr, margin: &LinExpr, side: GapSide, c: VarId, gate: Option<&LinExpr>, big_m: f64, step: usize) -> Row {
    let mut expr = match side {
        GapSide::Ahead => delta_s.clone().add(margin, -1.0).term(c, big_m),
        GapSide::Behind => LinExpr::constant(big_m).add(delta_s, -1.0).add(margin, -1.0).term(c, -big_m),
    };
    if let Some(g) = gate {
        expr = expr.add(g, -big_m).plus(big_m);
    }
    Row::at_least(expr, 0.0, RowKind::Safety, step)
}

/// Side selector `c` and the two rows making `delta_s >= l_f` or
/// `delta_s <= -l_r` hold whenever `gate` is 1.
pub fn encode_abs_safety(
    program: &mut Program,
    delta_s: &LinExpr,
    l_f: &LinExpr,
    l_r: &LinExpr,
    gate: Option<&LinExpr>,
    big_m: f64,
    role: VarRole,
    step: usize,
) -> VarId {
    let c = program.add_var(VarKind::Binary, 0.0, 1.0, role);
    program.rows.push(gap_row(delta_s, l_f, GapSide::Ahead, c, gate, big_m, step));
    program.rows.push(gap_row(delta_s, l_r, GapSide::Behind, c, gate, big_m, step));
    c
}
