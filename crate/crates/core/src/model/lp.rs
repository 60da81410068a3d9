//! CPLEX-style LP text dump for debugging against other solvers.

use alloc::string::String;
use core::fmt::Write;

use super::program::{Program, Row, VarKind};

fn name(p: &Program, i: usize) -> String {
    alloc::format!("x{}_{}", i, p.vars[i].role)
}

fn coeff(out: &mut String, c: f64, first: bool) {
    if c < 0.0 {
        let _ = write!(out, " - {}", -c);
    } else if first {
        let _ = write!(out, " {c}");
    } else {
        let _ = write!(out, " + {c}");
    }
}

fn write_row(out: &mut String, p: &Program, tag: &str, row: &Row) {
    let mut lhs = String::new();
    for (k, &(v, c)) in row.terms.iter().enumerate() {
        coeff(&mut lhs, c, k == 0);
        let _ = write!(lhs, " {}", name(p, v.index()));
    }
    if row.terms.is_empty() {
        lhs.push_str(" 0");
    }
    if row.is_equality() {
        let _ = writeln!(out, " {tag}:{lhs} = {}", row.lower);
        return;
    }
    if row.lower.is_finite() {
        let _ = writeln!(out, " {tag}_lo:{lhs} >= {}", row.lower);
    }
    if row.upper.is_finite() {
        let _ = writeln!(out, " {tag}_hi:{lhs} <= {}", row.upper);
    }
}

/// Objective, rows (lazy rows in their own section), bounds and integrality
/// markers.
pub fn to_lp(p: &Program) -> String {
    let mut out = String::new();
    out.push_str("Minimize\n obj:");
    let mut first = true;
    for (i, &q) in p.objective.linear.iter().enumerate() {
        if q != 0.0 {
            coeff(&mut out, q, first);
            let _ = write!(out, " {}", name(p, i));
            first = false;
        }
    }
    if !p.objective.quad.is_empty() {
        out.push_str(if first { " [" } else { " + [" });
        let mut q_first = true;
        for (&(i, j), &c) in &p.objective.quad {
            // LP format reads [ ... ] / 2 as 0.5 x'Qx with each off-diagonal
            // pair written once
            let c = if i == j { c } else { 2.0 * c };
            coeff(&mut out, c, q_first);
            if i == j {
                let _ = write!(out, " {} ^2", name(p, i as usize));
            } else {
                let _ = write!(out, " {} * {}", name(p, i as usize), name(p, j as usize));
            }
            q_first = false;
        }
        out.push_str(" ] / 2");
    }
    if p.objective.constant != 0.0 {
        coeff(&mut out, p.objective.constant, false);
    }
    out.push_str("\nSubject To\n");
    for (r, row) in p.rows.iter().enumerate() {
        write_row(&mut out, p, &alloc::format!("{}_{}_{}", row.kind.tag(), row.step, r), row);
    }
    if !p.lazy_rows.is_empty() {
        out.push_str("Lazy Constraints\n");
        for (r, row) in p.lazy_rows.iter().enumerate() {
            write_row(&mut out, p, &alloc::format!("lazy_{}_{}_{}", row.kind.tag(), row.step, r), row);
        }
    }
    out.push_str("Bounds\n");
    for (i, v) in p.vars.iter().enumerate() {
        let _ = writeln!(out, " {} <= {} <= {}", v.lower, name(p, i), v.upper);
    }
    for (label, kind) in [("Binaries", VarKind::Binary), ("Generals", VarKind::Integer)] {
        let list: alloc::vec::Vec<String> = (0..p.vars.len())
            .filter(|&i| p.vars[i].kind == kind)
            .map(|i| name(p, i))
            .collect();
        if !list.is_empty() {
            let _ = writeln!(out, "{label}\n {}", list.join(" "));
        }
    }
    out.push_str("End\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LinExpr, RowKind, VarRole};

    #[test]
    fn dump_has_all_sections() {
        let mut p = Program::default();
        let a = p.add_var(VarKind::Continuous, 0.0, 15.0, VarRole::Speed { step: 1 });
        let b = p.add_var(VarKind::Binary, 0.0, 1.0, VarRole::LaneSelector { lane: 0, step: 1 });
        p.objective.add_square(&LinExpr::var(a).plus(-5.0), 0.5);
        p.rows.push(Row::equal(LinExpr::var(b), 1.0, RowKind::OneHot, 1));
        p.lazy_rows.push(Row::at_least(LinExpr::var(b).term(a, 1.0), 0.9, RowKind::Adjacency, 1));
        let text = to_lp(&p);
        for section in ["Minimize", "Subject To", "Lazy Constraints", "Bounds", "Binaries", "End"] {
            assert!(text.contains(section), "{section} missing in\n{text}");
        }
        assert!(text.contains("x0_v_1 ^2"));
        assert!(text.contains("onehot_1_0: 1 x1_L_0_1 = 1"));
    }
}
