//! Activity-based bound tightening over the linear rows.

use crate::model::{Program, Row};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Infeasible;

fn tighten_row(program: &Program, row: &Row, lo: &mut [f64], hi: &mut [f64]) -> Result<bool, Infeasible> {
    let (mut amin, mut amax) = (0.0, 0.0);
    for &(v, a) in &row.terms {
        let (l, h) = (lo[v.index()], hi[v.index()]);
        if !l.is_finite() || !h.is_finite() {
            return Ok(false);
        }
        let (x0, x1) = (a * l, a * h);
        amin += x0.min(x1);
        amax += x0.max(x1);
    }
    let tol = 1e-9 * (1.0 + amin.abs().max(amax.abs()));
    if amin > row.upper + tol || amax < row.lower - tol {
        return Err(Infeasible);
    }
    let mut changed = false;
    for &(v, a) in &row.terms {
        let j = v.index();
        let (l, h) = (lo[j], hi[j]);
        let (x0, x1) = (a * l, a * h);
        let rest_min = amin - x0.min(x1);
        let rest_max = amax - x0.max(x1);
        let (mut new_lo, mut new_hi) = (l, h);
        if row.upper.is_finite() {
            let bound = (row.upper - rest_min) / a;
            if a > 0.0 {
                new_hi = new_hi.min(bound);
            } else {
                new_lo = new_lo.max(bound);
            }
        }
        if row.lower.is_finite() {
            let bound = (row.lower - rest_max) / a;
            if a > 0.0 {
                new_lo = new_lo.max(bound);
            } else {
                new_hi = new_hi.min(bound);
            }
        }
        let var = &program.vars[j];
        if var.kind.is_integral() {
            new_lo = crate::math::ceil(new_lo - 1e-6).max(l);
            new_hi = crate::math::floor(new_hi + 1e-6).min(h);
            if new_lo > new_hi {
                return Err(Infeasible);
            }
        } else {
            // small continuous improvements are not worth another pass
            let slack = 1e-9 * (1.0 + new_lo.abs().max(new_hi.abs()));
            new_lo = if new_lo - l > 1e-6 * (1.0 + (h - l)) { new_lo - slack } else { l };
            new_hi = if h - new_hi > 1e-6 * (1.0 + (h - l)) { new_hi + slack } else { h };
            if new_lo > new_hi {
                if new_lo - new_hi > 1e-6 * (1.0 + new_lo.abs()) {
                    return Err(Infeasible);
                }
                let mid = 0.5 * (new_lo + new_hi);
                new_lo = mid;
                new_hi = mid;
            }
            new_lo = new_lo.max(l);
            new_hi = new_hi.min(h);
        }
        if new_lo != l || new_hi != h {
            changed = true;
            let (o0, o1) = (a * l, a * h);
            let (n0, n1) = (a * new_lo, a * new_hi);
            amin += n0.min(n1) - o0.min(o1);
            amax += n0.max(n1) - o0.max(o1);
            lo[j] = new_lo;
            hi[j] = new_hi;
        }
    }
    Ok(changed)
}

/// Tighten `lo..hi` to a fixpoint (at most `passes` sweeps) over the eager
/// rows and the lazy rows listed in `pool`. Returns the work done.
pub(crate) fn propagate(
    program: &Program,
    pool: &[usize],
    lo: &mut [f64],
    hi: &mut [f64],
    passes: usize,
) -> Result<u64, Infeasible> {
    let mut work = 0u64;
    let nnz: usize = program.rows.iter().map(|r| r.terms.len()).sum::<usize>()
        + pool.iter().map(|&r| program.lazy_rows[r].terms.len()).sum::<usize>();
    for _ in 0..passes {
        let mut changed = false;
        for row in program.rows.iter().chain(pool.iter().map(|&r| &program.lazy_rows[r])) {
            changed |= tighten_row(program, row, lo, hi)?;
        }
        work += 4 * nnz as u64;
        if !changed {
            break;
        }
    }
    Ok(work)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LinExpr, RowKind, VarKind, VarRole};

    #[test]
    fn one_hot_fixing_propagates() {
        let mut p = Program::default();
        let vars: alloc::vec::Vec<_> = (0..3).map(|_| p.add_var(VarKind::Binary, 0.0, 1.0, VarRole::Aux)).collect();
        let sum = vars.iter().fold(LinExpr::default(), |e, &v| e.term(v, 1.0));
        p.rows.push(Row::equal(sum, 1.0, RowKind::OneHot, 1));
        let mut lo = [0.0, 1.0, 0.0];
        let mut hi = [1.0; 3];
        propagate(&p, &[], &mut lo, &mut hi, 5).unwrap();
        assert_eq!(hi, [0.0, 1.0, 0.0]);
        let mut lo = [1.0, 1.0, 0.0];
        let mut hi = [1.0; 3];
        assert_eq!(propagate(&p, &[], &mut lo, &mut hi, 5), Err(Infeasible));
    }
}
