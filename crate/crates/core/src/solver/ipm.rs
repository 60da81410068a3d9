//! Primal-dual interior point method (Mehrotra predictor-corrector) for the
//! node QPs, on the same banded quasi-definite KKT layout as the polish.

use alloc::vec::Vec;

use super::linalg::{envelope_of, Envelope};
use super::qp::{NodeQp, Scaling};
use super::Clock;

const NONE: usize = usize::MAX;
const MAX_ITER: usize = 60;
const REG: f64 = 1e-9;
const TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(super) enum IpmStatus {
    Solved,
    Infeasible,
    Failed,
}

pub(super) struct IpmOutcome {
    pub status: IpmStatus,
    /// Scaled local primal iterate.
    pub x: Vec<f64>,
    /// Row multipliers, positive when the upper bound binds.
    pub y: Vec<f64>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

/// One finite side of an inequality row: `sigma * a_r x - c >= 0`.
#[derive(Clone, Copy)]
struct Side {
    row: usize,
    sigma: f64,
    c: f64,
}

struct Layout {
    sides: Vec<Side>,
    eq_rows: Vec<usize>,
    /// KKT slot of each local variable and each equality row.
    slot_var: Vec<usize>,
    slot_eq: Vec<usize>,
    first: Vec<usize>,
    k: usize,
}

fn layout(qp: &NodeQp) -> Layout {
    let n = qp.n;
    let m = qp.m();
    let mut sides = Vec::new();
    let mut eq_rows = Vec::new();
    for r in 0..m {
        if qp.hi[r] - qp.lo[r] <= 1e-12 {
            eq_rows.push(r);
            continue;
        }
        if qp.lo[r].is_finite() {
            sides.push(Side {
                row: r,
                sigma: 1.0,
                c: qp.lo[r],
            });
        }
        if qp.hi[r].is_finite() {
            sides.push(Side {
                row: r,
                sigma: -1.0,
                c: -qp.hi[r],
            });
        }
    }
    let mut items: Vec<(usize, u8, usize)> = (0..n).map(|i| (qp.pos[i], 0u8, i)).collect();
    for &r in &eq_rows {
        let last = qp.row(r).map(|(j, _)| qp.pos[j]).max().unwrap_or(0);
        items.push((last, 1, r));
    }
    items.sort_unstable();
    let k = items.len();
    let mut slot_var = alloc::vec![NONE; n];
    let mut slot_eq = alloc::vec![NONE; m];
    for (s, &(_, t, idx)) in items.iter().enumerate() {
        if t == 0 {
            slot_var[idx] = s;
        } else {
            slot_eq[idx] = s;
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for &(i, j, _) in &qp.p {
        groups.push(alloc::vec![slot_var[i], slot_var[j]]);
    }
    for r in 0..m {
        let mut g: Vec<usize> = qp.row(r).map(|(j, _)| slot_var[j]).collect();
        if slot_eq[r] != NONE {
            g.push(slot_eq[r]);
        } else if g.len() < 2 {
            continue;
        }
        groups.push(g);
    }
    let first = envelope_of(k, groups.iter().map(|g| g.as_slice()));
    Layout {
        sides,
        eq_rows,
        slot_var,
        slot_eq,
        first,
        k,
    }
}

/// Largest step in `(0, 1]` keeping `v + a dv` non-negative.
fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    let mut a: f64 = 1.0;
    for (x, d) in v.iter().zip(dv) {
        if *d < 0.0 {
            a = a.min(-x / d);
        }
    }
    a
}

pub(super) fn solve(qp: &NodeQp, scaling: &Scaling, x0: &[f64], clock: &dyn Clock) -> IpmOutcome {
    let n = qp.n;
    let m = qp.m();
    let lay = layout(qp);
    let ns = lay.sides.len();
    let c_obj = scaling.c;
    let d = &scaling.d;
    let row_e: Vec<f64> = qp.keys.iter().map(|&k| scaling.row_scale(k)).collect();
    let col_s: Vec<f64> = qp.free.iter().map(|&j| c_obj * d[j]).collect();
    // largest |x| over the box, for the infeasibility test
    let mut x_box: f64 = 0.0;
    let mut bounded = alloc::vec![false; n];
    for r in 0..m {
        if let super::qp::RowKey::Bound(_) = qp.keys[r] {
            let li = qp.col[qp.ptr[r]];
            if qp.lo[r].is_finite() && qp.hi[r].is_finite() {
                bounded[li] = true;
                x_box = x_box.max(qp.lo[r].abs()).max(qp.hi[r].abs());
            }
        }
    }
    if bounded.iter().any(|b| !b) {
        x_box = f64::INFINITY;
    }

    let mut x = x0.to_vec();
    let mut y_eq = alloc::vec![0.0; m];
    let mut ax = alloc::vec![0.0; m];
    qp.ax(&x, &mut ax);
    let mut w: Vec<f64> = lay
        .sides
        .iter()
        .map(|s| (s.sigma * ax[s.row] - s.c).max(1.0))
        .collect();
    let mut z = alloc::vec![1.0; ns];

    let mut yv = alloc::vec![0.0; m];
    let mut rd = alloc::vec![0.0; n];
    let mut rp = alloc::vec![0.0; ns];
    let mut re = alloc::vec![0.0; m];
    let mut px = alloc::vec![0.0; n];
    let mut aty = alloc::vec![0.0; n];
    let mut rhs = alloc::vec![0.0; lay.k];
    let mut tmp_m = alloc::vec![0.0; m];
    let mut dx = alloc::vec![0.0; n];
    let mut dy = alloc::vec![0.0; m];
    let mut dz = alloc::vec![0.0; ns];
    let mut dw = alloc::vec![0.0; ns];
    let mut rc = alloc::vec![0.0; ns];
    let mut dz_aff = alloc::vec![0.0; ns];
    let mut dw_aff = alloc::vec![0.0; ns];
    let mut dr = alloc::vec![0.0; m];
    let q_norm = qp
        .q
        .iter()
        .zip(&col_s)
        .map(|(q, s)| (q / s).abs())
        .fold(0.0, f64::max);

    let mut prim = f64::INFINITY;
    let mut dual = f64::INFINITY;
    for iter in 0..MAX_ITER {
        // residuals
        qp.ax(&x, &mut ax);
        qp.px(&x, &mut px);
        yv.iter_mut().for_each(|v| *v = 0.0);
        for (k, s) in lay.sides.iter().enumerate() {
            yv[s.row] -= s.sigma * z[k];
        }
        for &r in &lay.eq_rows {
            yv[r] += y_eq[r];
        }
        qp.atx(&yv, &mut aty);
        clock.charge(3 * qp.nnz() + 6 * (n + m + ns) as u64);
        dual = 0.0;
        for i in 0..n {
            rd[i] = px[i] + qp.q[i] + aty[i];
            dual = dual.max((rd[i] / col_s[i]).abs());
        }
        prim = 0.0;
        let mut b_norm: f64 = 0.0;
        for (k, s) in lay.sides.iter().enumerate() {
            rp[k] = s.sigma * ax[s.row] - s.c - w[k];
            prim = prim.max((rp[k] / row_e[s.row]).abs());
            b_norm = b_norm.max((s.c / row_e[s.row]).abs());
        }
        for &r in &lay.eq_rows {
            re[r] = ax[r] - qp.lo[r];
            prim = prim.max((re[r] / row_e[r]).abs());
            b_norm = b_norm.max((qp.lo[r] / row_e[r]).abs());
        }
        let gap: f64 = w.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>();
        let mu = if ns > 0 { gap / ns as f64 } else { 0.0 };
        let mut fx = 0.0;
        for i in 0..n {
            fx += x[i] * (0.5 * px[i] + qp.q[i]);
        }
        if prim <= TOL * (1.0 + b_norm) && dual <= TOL * (1.0 + q_norm) && gap / c_obj <= TOL * (1.0 + (fx / c_obj).abs()) {
            return IpmOutcome {
                status: IpmStatus::Solved,
                x,
                y: yv,
                iterations: iter,
                primal_residual: prim,
                dual_residual: dual,
            };
        }
        if certifies_infeasible(qp, &lay, &z, &y_eq, x_box, &mut tmp_m, &mut aty) {
            return IpmOutcome {
                status: IpmStatus::Infeasible,
                x,
                y: yv,
                iterations: iter,
                primal_residual: prim,
                dual_residual: dual,
            };
        }

        // factor the reduced system
        dr.iter_mut().for_each(|v| *v = 0.0);
        for (k, s) in lay.sides.iter().enumerate() {
            dr[s.row] += z[k] / w[k];
        }
        let mut env = Envelope::new(lay.first.clone());
        for &(i, j, v) in &qp.p {
            env.add(lay.slot_var[i], lay.slot_var[j], v);
        }
        for i in 0..n {
            env.add(lay.slot_var[i], lay.slot_var[i], REG);
        }
        for r in 0..m {
            let se = lay.slot_eq[r];
            if se != NONE {
                env.add(se, se, -REG);
                for (j, a) in qp.row(r) {
                    env.add(se, lay.slot_var[j], a);
                }
            } else if dr[r] != 0.0 {
                let terms: Vec<(usize, f64)> = qp.row(r).collect();
                for (a, &(i, vi)) in terms.iter().enumerate() {
                    for &(j, vj) in &terms[..=a] {
                        env.add(lay.slot_var[i], lay.slot_var[j], dr[r] * vi * vj);
                    }
                }
            }
        }
        match env.factor(1e-300) {
            Ok(work) => clock.charge(work),
            Err(_) => break,
        }

        // predictor
        for k in 0..ns {
            rc[k] = w[k] * z[k];
        }
        newton(qp, &lay, &env, &w, &z, &rd, &rp, &re, &rc, &mut rhs, &mut tmp_m, &mut dx, &mut dy, &mut dz, &mut dw, clock);
        let a_aff = max_step(&w, &dw).min(max_step(&z, &dz));
        let mu_aff = if ns > 0 {
            (0..ns).map(|k| (w[k] + a_aff * dw[k]) * (z[k] + a_aff * dz[k])).sum::<f64>() / ns as f64
        } else {
            0.0
        };
        let sigma = if mu > 0.0 { { let t = mu_aff / mu; (t * t * t).min(1.0) } } else { 0.0 };
        dz_aff.copy_from_slice(&dz);
        dw_aff.copy_from_slice(&dw);

        // corrector
        for k in 0..ns {
            rc[k] = w[k] * z[k] + dw_aff[k] * dz_aff[k] - sigma * mu;
        }
        newton(qp, &lay, &env, &w, &z, &rd, &rp, &re, &rc, &mut rhs, &mut tmp_m, &mut dx, &mut dy, &mut dz, &mut dw, clock);
        let a_max = max_step(&w, &dw).min(max_step(&z, &dz));
        let alpha = (0.99 * a_max).min(1.0);
        for i in 0..n {
            x[i] += alpha * dx[i];
        }
        for &r in &lay.eq_rows {
            y_eq[r] += alpha * dy[r];
        }
        for k in 0..ns {
            w[k] = (w[k] + alpha * dw[k]).max(1e-300);
            z[k] = (z[k] + alpha * dz[k]).max(1e-300);
        }
    }
    IpmOutcome {
        status: IpmStatus::Failed,
        x,
        y: yv,
        iterations: MAX_ITER,
        primal_residual: prim,
        dual_residual: dual,
    }
}

/// Solves for the Newton step given the complementarity residual `rc`.
#[allow(clippy::too_many_arguments)]
fn newton(
    qp: &NodeQp,
    lay: &Layout,
    env: &Envelope,
    w: &[f64],
    z: &[f64],
    rd: &[f64],
    rp: &[f64],
    re: &[f64],
    rc: &[f64],
    rhs: &mut [f64],
    tmp_m: &mut [f64],
    dx: &mut [f64],
    dy: &mut [f64],
    dz: &mut [f64],
    dw: &mut [f64],
    clock: &dyn Clock,
) {
    let n = qp.n;
    tmp_m.iter_mut().for_each(|v| *v = 0.0);
    for (k, s) in lay.sides.iter().enumerate() {
        tmp_m[s.row] += s.sigma * (z[k] / w[k] * rp[k] + rc[k] / w[k]);
    }
    rhs.iter_mut().for_each(|v| *v = 0.0);
    for r in 0..qp.m() {
        let t = tmp_m[r];
        if t != 0.0 {
            for (j, a) in qp.row(r) {
                rhs[lay.slot_var[j]] -= a * t;
            }
        }
    }
    for i in 0..n {
        rhs[lay.slot_var[i]] -= rd[i];
    }
    for &r in &lay.eq_rows {
        rhs[lay.slot_eq[r]] = -re[r];
    }
    clock.charge(env.solve(rhs) + 2 * qp.nnz());
    for i in 0..n {
        dx[i] = rhs[lay.slot_var[i]];
    }
    for &r in &lay.eq_rows {
        dy[r] = rhs[lay.slot_eq[r]];
    }
    for (k, s) in lay.sides.iter().enumerate() {
        let adx: f64 = qp.row(s.row).map(|(j, a)| a * dx[j]).sum();
        dz[k] = -z[k] / w[k] * (rp[k] + s.sigma * adx) - rc[k] / w[k];
        dw[k] = -(rc[k] + w[k] * dz[k]) / z[k];
    }
}

/// Farkas test on the normalized multipliers: if `G'z - E'y` is small while
/// `c'z - b'y` exceeds what any point of the box could produce, the rows
/// admit no solution.
fn certifies_infeasible(qp: &NodeQp, lay: &Layout, z: &[f64], y_eq: &[f64], x_box: f64, tmp_m: &mut [f64], out: &mut [f64]) -> bool {
    let mut nz: f64 = z.iter().fold(0.0, |a, &b| a.max(b));
    for &r in &lay.eq_rows {
        nz = nz.max(y_eq[r].abs());
    }
    if nz < 1e6 || !x_box.is_finite() {
        return false;
    }
    tmp_m.iter_mut().for_each(|v| *v = 0.0);
    let mut cz = 0.0;
    for (k, s) in lay.sides.iter().enumerate() {
        tmp_m[s.row] += s.sigma * z[k] / nz;
        cz += s.c * z[k] / nz;
    }
    for &r in &lay.eq_rows {
        tmp_m[r] -= y_eq[r] / nz;
        cz -= qp.lo[r] * y_eq[r] / nz;
    }
    qp.atx(tmp_m, out);
    let res: f64 = out.iter().map(|v| v.abs()).sum();
    cz > res * x_box + 1e-9
}
