//! Convex QP relaxations: operator splitting (ADMM) on an equilibrated
//! problem followed by an active-set polish on the reduced KKT system.

use alloc::vec::Vec;

use super::ipm::IpmStatus;
use super::linalg::{envelope_of, Envelope};
use super::Clock;
use crate::model::Program;

const NONE: usize = usize::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum RowKey {
    Eager(usize),
    Lazy(usize),
    Bound(usize),
}

/// Ruiz equilibration of the full program, reused by every node.
#[derive(Clone, Debug)]
pub(crate) struct Scaling {
    pub d: Vec<f64>,
    pub e_rows: Vec<f64>,
    pub e_lazy: Vec<f64>,
    pub c: f64,
}

impl Scaling {
    pub(crate) fn ruiz(p: &Program, passes: usize) -> Scaling {
        let n = p.num_vars();
        let mut d = alloc::vec![1.0; n];
        let mut e_rows = alloc::vec![1.0; p.rows.len()];
        let mut e_lazy = alloc::vec![1.0; p.lazy_rows.len()];
        let clamp = |v: f64| v.clamp(1e-4, 1e4);
        for _ in 0..passes {
            // bound rows are scaled to unit entries
            let mut col = alloc::vec![1.0f64; n];
            for (&(i, j), &v) in &p.objective.quad {
                let (i, j) = (i as usize, j as usize);
                let s = (v * d[i] * d[j]).abs();
                col[i] = col[i].max(s);
                col[j] = col[j].max(s);
            }
            for (rows, e) in [(&p.rows, &mut e_rows), (&p.lazy_rows, &mut e_lazy)] {
                for (r, row) in rows.iter().enumerate() {
                    let mut norm: f64 = 0.0;
                    for &(v, a) in &row.terms {
                        let s = (a * e[r] * d[v.index()]).abs();
                        norm = norm.max(s);
                        col[v.index()] = col[v.index()].max(s);
                    }
                    if norm > 0.0 {
                        e[r] = clamp(e[r] / crate::math::sqrt(norm));
                    }
                }
            }
            for j in 0..n {
                d[j] = clamp(d[j] / crate::math::sqrt(col[j]));
            }
        }
        let mut pcol = alloc::vec![0.0f64; n];
        for (&(i, j), &v) in &p.objective.quad {
            let (i, j) = (i as usize, j as usize);
            let s = (v * d[i] * d[j]).abs();
            pcol[i] = pcol[i].max(s);
            pcol[j] = pcol[j].max(s);
        }
        let mean = if n > 0 { pcol.iter().sum::<f64>() / n as f64 } else { 0.0 };
        let qn = p
            .objective
            .linear
            .iter()
            .zip(&d)
            .map(|(q, dj)| (q * dj).abs())
            .fold(0.0, f64::max);
        let top = mean.max(qn);
        let c = if top > 0.0 { (1.0 / top).clamp(1e-4, 1e4) } else { 1.0 };
        Scaling { d, e_rows, e_lazy, c }
    }

    pub(super) fn row_scale(&self, key: RowKey) -> f64 {
        match key {
            RowKey::Eager(r) => self.e_rows[r],
            RowKey::Lazy(r) => self.e_lazy[r],
            RowKey::Bound(j) => 1.0 / self.d[j],
        }
    }
}

/// Unscaled iterate kept between parent and child nodes.
#[derive(Clone, Debug)]
pub(crate) struct WarmStart {
    pub x: Vec<f64>,
    pub y_rows: Vec<f64>,
    pub y_lazy: Vec<f64>,
    pub y_bound: Vec<f64>,
}

impl WarmStart {
    fn y(&self, key: RowKey) -> f64 {
        match key {
            RowKey::Eager(r) => self.y_rows[r],
            RowKey::Lazy(r) => self.y_lazy[r],
            RowKey::Bound(j) => self.y_bound[j],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QpStatus {
    Solved,
    Infeasible,
    NumericalFailure,
}

#[derive(Clone, Debug)]
pub(crate) struct QpOutcome {
    pub status: QpStatus,
    /// Full-length assignment (fixed variables included).
    pub x: Vec<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub warm: Option<WarmStart>,
}

/// Scaled QP over the free variables of one node.
pub(super) struct NodeQp {
    pub(super) n: usize,
    pub(super) free: Vec<usize>,
    /// Position of each local variable in the factorization order.
    pub(super) pos: Vec<usize>,
    pub(super) p: Vec<(usize, usize, f64)>,
    pub(super) q: Vec<f64>,
    pub(super) ptr: Vec<usize>,
    pub(super) col: Vec<usize>,
    pub(super) val: Vec<f64>,
    pub(super) lo: Vec<f64>,
    pub(super) hi: Vec<f64>,
    pub(super) keys: Vec<RowKey>,
    pub(super) base: Vec<f64>,
}

impl NodeQp {
    pub(super) fn m(&self) -> usize {
        self.keys.len()
    }

    pub(super) fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.ptr[r]..self.ptr[r + 1]).map(move |k| (self.col[k], self.val[k]))
    }

    pub(super) fn ax(&self, x: &[f64], out: &mut [f64]) {
        for r in 0..self.m() {
            out[r] = self.row(r).map(|(j, a)| a * x[j]).sum();
        }
    }

    pub(super) fn atx(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..self.m() {
            let yr = y[r];
            if yr != 0.0 {
                for (j, a) in self.row(r) {
                    out[j] += a * yr;
                }
            }
        }
    }

    pub(super) fn px(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for &(i, j, v) in &self.p {
            out[i] += v * x[j];
            if i != j {
                out[j] += v * x[i];
            }
        }
    }

    pub(super) fn nnz(&self) -> u64 {
        (self.val.len() + self.p.len()) as u64
    }
}

/// Builds the node problem; `None` when a row over fixed variables only is
/// violated.
fn build_node(
    program: &Program,
    scaling: &Scaling,
    rank: &[usize],
    lo: &[f64],
    hi: &[f64],
    pool: &[usize],
) -> Option<NodeQp> {
    let nv = program.num_vars();
    let mut local = alloc::vec![NONE; nv];
    let mut free = Vec::new();
    let mut base = alloc::vec![0.0; nv];
    for j in 0..nv {
        if hi[j] - lo[j] <= 1e-12 {
            base[j] = 0.5 * (lo[j] + hi[j]);
        } else {
            local[j] = free.len();
            free.push(j);
            base[j] = lo[j].max(hi[j].min(0.0));
        }
    }
    let n = free.len();
    let d = &scaling.d;
    let c = scaling.c;
    let mut q: Vec<f64> = free.iter().map(|&j| program.objective.linear.get(j).copied().unwrap_or(0.0)).collect();
    let mut p = Vec::new();
    for (&(i, j), &v) in &program.objective.quad {
        let (i, j) = (i as usize, j as usize);
        match (local[i], local[j]) {
            (NONE, NONE) => {}
            (li, NONE) => q[li] += v * base[j],
            (NONE, lj) => q[lj] += v * base[i],
            (li, lj) => p.push((li.min(lj), li.max(lj), c * v * d[i] * d[j])),
        }
    }
    for (li, &j) in free.iter().enumerate() {
        q[li] *= c * d[j];
    }

    let mut ptr = alloc::vec![0];
    let mut col = Vec::new();
    let mut val = Vec::new();
    let mut rlo = Vec::new();
    let mut rhi = Vec::new();
    let mut keys = Vec::new();
    let rows = program
        .rows
        .iter()
        .enumerate()
        .map(|(r, row)| (RowKey::Eager(r), row))
        .chain(pool.iter().map(|&r| (RowKey::Lazy(r), &program.lazy_rows[r])));
    for (key, row) in rows {
        let mut fixed_part = 0.0;
        let (mut amin, mut amax) = (0.0, 0.0);
        let mut any_free = false;
        for &(v, a) in &row.terms {
            let j = v.index();
            if local[j] == NONE {
                fixed_part += a * base[j];
            } else {
                any_free = true;
                let (x0, x1) = (a * lo[j], a * hi[j]);
                amin += x0.min(x1);
                amax += x0.max(x1);
            }
        }
        let (l, u) = (row.lower - fixed_part, row.upper - fixed_part);
        let tol = 1e-7 * (1.0 + fixed_part.abs());
        if !any_free {
            if l > tol || u < -tol {
                return None;
            }
            continue;
        }
        if amin > u + tol || amax < l - tol {
            return None;
        }
        if amin >= l - 1e-12 && amax <= u + 1e-12 {
            continue;
        }
        let e = scaling.row_scale(key);
        for &(v, a) in &row.terms {
            let li = local[v.index()];
            if li != NONE {
                col.push(li);
                val.push(e * a * d[v.index()]);
            }
        }
        ptr.push(col.len());
        rlo.push(e * l);
        rhi.push(e * u);
        keys.push(key);
    }
    for (li, &j) in free.iter().enumerate() {
        col.push(li);
        val.push(1.0);
        ptr.push(col.len());
        rlo.push(lo[j] / d[j]);
        rhi.push(hi[j] / d[j]);
        keys.push(RowKey::Bound(j));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&li| rank[free[li]]);
    let mut pos = alloc::vec![0; n];
    for (k, &li) in order.iter().enumerate() {
        pos[li] = k;
    }
    Some(NodeQp {
        n,
        free,
        pos,
        p,
        q,
        ptr,
        col,
        val,
        lo: rlo,
        hi: rhi,
        keys,
        base,
    })
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct AdmmSettings {
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub eps_infeasible: f64,
    pub max_iter: usize,
}

impl Default for AdmmSettings {
    fn default() -> Self {
        AdmmSettings {
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            eps_abs: 1e-5,
            eps_rel: 1e-5,
            eps_infeasible: 1e-6,
            max_iter: 4000,
        }
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

struct KktMatrix {
    env: Envelope,
}

impl KktMatrix {
    /// `P + sigma I + A' diag(rho) A` in the node's factorization order.
    fn assemble(qp: &NodeQp, rho: &[f64], sigma: f64, clock: &dyn Clock) -> Option<KktMatrix> {
        let n = qp.n;
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for r in 0..qp.m() {
            if qp.ptr[r + 1] - qp.ptr[r] > 1 {
                groups.push(qp.row(r).map(|(j, _)| qp.pos[j]).collect());
            }
        }
        for &(i, j, _) in &qp.p {
            groups.push(alloc::vec![qp.pos[i], qp.pos[j]]);
        }
        let first = envelope_of(n, groups.iter().map(|g| g.as_slice()));
        let mut env = Envelope::new(first);
        for &(i, j, v) in &qp.p {
            env.add(qp.pos[i], qp.pos[j], v);
        }
        for i in 0..n {
            env.add(i, i, sigma);
        }
        for r in 0..qp.m() {
            let terms: Vec<(usize, f64)> = qp.row(r).collect();
            for (a, &(i, vi)) in terms.iter().enumerate() {
                for &(j, vj) in &terms[..=a] {
                    let w = rho[r] * vi * vj;
                    if i == j {
                        env.add(qp.pos[i], qp.pos[i], w);
                    } else {
                        env.add(qp.pos[i], qp.pos[j], w);
                    }
                }
            }
        }
        let work = env.factor(1e-300).ok()?;
        clock.charge(work + qp.nnz());
        Some(KktMatrix { env })
    }

    fn solve(&self, qp: &NodeQp, rhs: &mut [f64], scratch: &mut [f64], clock: &dyn Clock) {
        for i in 0..qp.n {
            scratch[qp.pos[i]] = rhs[i];
        }
        clock.charge(self.env.solve(scratch));
        for i in 0..qp.n {
            rhs[i] = scratch[qp.pos[i]];
        }
    }
}

fn rho_vector(qp: &NodeQp, rho: f64) -> Vec<f64> {
    (0..qp.m())
        .map(|r| {
            if qp.lo[r] == f64::NEG_INFINITY && qp.hi[r] == f64::INFINITY {
                1e-6
            } else if qp.hi[r] - qp.lo[r] <= 1e-12 {
                1e3 * rho
            } else {
                rho
            }
        })
        .collect()
}

/// Solves the relaxation of `program` with variable bounds `lo..hi`.
pub(crate) fn solve_node(
    program: &Program,
    scaling: &Scaling,
    rank: &[usize],
    lo: &[f64],
    hi: &[f64],
    pool: &[usize],
    warm: Option<&WarmStart>,
    settings: &AdmmSettings,
    clock: &dyn Clock,
) -> QpOutcome {
    let infeasible = |x: Vec<f64>| QpOutcome {
        status: QpStatus::Infeasible,
        x,
        objective: f64::INFINITY,
        kkt_residual: f64::INFINITY,
        iterations: 0,
        warm: None,
    };
    let qp = match build_node(program, scaling, rank, lo, hi, pool) {
        Some(qp) => qp,
        None => return infeasible(lo.to_vec()),
    };
    clock.charge(qp.nnz() + program.num_vars() as u64);
    let n = qp.n;
    let m = qp.m();
    let d = &scaling.d;
    let c = scaling.c;
    let full = |xs: &[f64]| -> Vec<f64> {
        let mut x = qp.base.clone();
        for (li, &j) in qp.free.iter().enumerate() {
            x[j] = xs[li] * d[j];
        }
        x
    };
    if n == 0 {
        let x = qp.base.clone();
        return QpOutcome {
            status: QpStatus::Solved,
            objective: program.objective_value(&x),
            x,
            kkt_residual: 0.0,
            iterations: 0,
            warm: None,
        };
    }

    let mut x: Vec<f64> = qp.free.iter().map(|&j| qp.base[j] / d[j]).collect();
    let mut y = alloc::vec![0.0; m];
    if let Some(w) = warm {
        for (li, &j) in qp.free.iter().enumerate() {
            x[li] = w.x[j] / d[j];
        }
        for r in 0..m {
            let e = scaling.row_scale(qp.keys[r]);
            y[r] = c * w.y(qp.keys[r]) / e;
        }
    }
    let mut z = alloc::vec![0.0; m];

    let ipm = super::ipm::solve(&qp, scaling, &x, clock);
    match ipm.status {
        IpmStatus::Infeasible => return QpOutcome { iterations: ipm.iterations, ..infeasible(full(&ipm.x)) },
        IpmStatus::Solved => {
            qp.ax(&ipm.x, &mut z);
            if let Some(out) = polish(program, scaling, &qp, &ipm.x, &z, &ipm.y, clock) {
                return QpOutcome { iterations: ipm.iterations, ..out };
            }
            if ipm.primal_residual <= 1e-8 && ipm.dual_residual <= 1e-6 {
                let xf = full(&ipm.x);
                return QpOutcome {
                    status: QpStatus::Solved,
                    objective: program.objective_value(&xf),
                    x: xf,
                    kkt_residual: ipm.dual_residual,
                    iterations: ipm.iterations,
                    warm: Some(warm_of(scaling, &qp, &ipm.x, &ipm.y, lo)),
                };
            }
        }
        IpmStatus::Failed => {}
    }

    // operator splitting as the fallback
    qp.ax(&x, &mut z);
    for r in 0..m {
        z[r] = z[r].clamp(qp.lo[r], qp.hi[r]);
    }

    let mut rho_scalar = settings.rho;
    let mut rho = rho_vector(&qp, rho_scalar);
    let mut kkt = match KktMatrix::assemble(&qp, &rho, settings.sigma, clock) {
        Some(k) => k,
        None => return failure(full(&x), 0),
    };
    let mut eps_abs = settings.eps_abs;
    let mut eps_rel = settings.eps_rel;
    let mut polish_attempts = 0;
    let mut next_early_polish = 10;

    let mut rhs = alloc::vec![0.0; n];
    let mut scratch = alloc::vec![0.0; n];
    let mut tmp_m = alloc::vec![0.0; m];
    let mut atv = alloc::vec![0.0; n];
    let mut xt = alloc::vec![0.0; n];
    let mut zt = alloc::vec![0.0; m];
    let mut dy = alloc::vec![0.0; m];
    let mut px = alloc::vec![0.0; n];
    let mut ax = alloc::vec![0.0; m];
    let mut aty = alloc::vec![0.0; n];

    let mut iter = 0;
    while iter < settings.max_iter {
        iter += 1;
        for r in 0..m {
            tmp_m[r] = rho[r] * z[r] - y[r];
        }
        qp.atx(&tmp_m, &mut atv);
        for i in 0..n {
            rhs[i] = settings.sigma * x[i] - qp.q[i] + atv[i];
        }
        xt.copy_from_slice(&rhs);
        kkt.solve(&qp, &mut xt, &mut scratch, clock);
        qp.ax(&xt, &mut zt);
        clock.charge(3 * qp.nnz() + 4 * (n + m) as u64);
        for i in 0..n {
            x[i] = settings.alpha * xt[i] + (1.0 - settings.alpha) * x[i];
        }
        for r in 0..m {
            let zh = settings.alpha * zt[r] + (1.0 - settings.alpha) * z[r];
            let zn = (zh + y[r] / rho[r]).clamp(qp.lo[r], qp.hi[r]);
            let yn = y[r] + rho[r] * (zh - zn);
            dy[r] = yn - y[r];
            y[r] = yn;
            z[r] = zn;
        }
        if iter % 5 != 0 && iter != settings.max_iter {
            continue;
        }
        // residuals in unscaled units
        qp.ax(&x, &mut ax);
        qp.px(&x, &mut px);
        qp.atx(&y, &mut aty);
        clock.charge(3 * qp.nnz());
        let (mut prim, mut ax_n, mut z_n) = (0.0f64, 0.0f64, 0.0f64);
        for r in 0..m {
            let e = scaling.row_scale(qp.keys[r]);
            prim = prim.max(((ax[r] - z[r]) / e).abs());
            ax_n = ax_n.max((ax[r] / e).abs());
            z_n = z_n.max((z[r] / e).abs());
        }
        let (mut dual, mut px_n, mut aty_n, mut q_n) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for i in 0..n {
            let dj = d[qp.free[i]];
            dual = dual.max(((px[i] + qp.q[i] + aty[i]) / (c * dj)).abs());
            px_n = px_n.max((px[i] / (c * dj)).abs());
            aty_n = aty_n.max((aty[i] / (c * dj)).abs());
            q_n = q_n.max((qp.q[i] / (c * dj)).abs());
        }
        let eps_p = eps_abs + eps_rel * ax_n.max(z_n);
        let eps_d = eps_abs + eps_rel * px_n.max(aty_n).max(q_n);
        let loose = prim <= 1e3 * eps_p && dual <= 1e3 * eps_d;
        if loose && polish_attempts == 0 && iter >= next_early_polish {
            next_early_polish = 2 * iter;
            if let Some(out) = polish(program, scaling, &qp, &x, &z, &y, clock) {
                return QpOutcome { iterations: iter, ..out };
            }
        }
        if prim <= eps_p && dual <= eps_d {
            if let Some(out) = polish(program, scaling, &qp, &x, &z, &y, clock) {
                return QpOutcome { iterations: iter, ..out };
            }
            polish_attempts += 1;
            if polish_attempts >= 3 {
                let xf = full(&x);
                return QpOutcome {
                    status: QpStatus::NumericalFailure,
                    objective: program.objective_value(&xf),
                    x: xf,
                    kkt_residual: prim.max(dual),
                    iterations: iter,
                    warm: Some(warm_of(scaling, &qp, &x, &y, lo)),
                };
            }
            eps_abs *= 0.01;
            eps_rel *= 0.01;
            continue;
        }
        if infeasibility_certificate(&qp, &dy, settings.eps_infeasible, &mut atv) {
            return infeasible(full(&x));
        }
        if iter % 25 == 0 {
            let ratio = (prim / ax_n.max(z_n).max(1e-12)) / (dual / px_n.max(aty_n).max(q_n).max(1e-12)).max(1e-12);
            let new_rho = (rho_scalar * crate::math::sqrt(ratio)).clamp(1e-6, 1e6);
            if new_rho > 5.0 * rho_scalar || new_rho < 0.2 * rho_scalar {
                rho_scalar = new_rho;
                rho = rho_vector(&qp, rho_scalar);
                kkt = match KktMatrix::assemble(&qp, &rho, settings.sigma, clock) {
                    Some(k) => k,
                    None => return failure(full(&x), iter),
                };
            }
        }
    }
    failure(full(&x), iter)
}

fn failure(x: Vec<f64>, iterations: usize) -> QpOutcome {
    QpOutcome {
        status: QpStatus::NumericalFailure,
        x,
        objective: f64::NAN,
        kkt_residual: f64::INFINITY,
        iterations,
        warm: None,
    }
}

fn warm_of(scaling: &Scaling, qp: &NodeQp, x: &[f64], y: &[f64], lo: &[f64]) -> WarmStart {
    let mut w = WarmStart {
        x: qp.base.clone(),
        y_rows: alloc::vec![0.0; scaling.e_rows.len()],
        y_lazy: alloc::vec![0.0; scaling.e_lazy.len()],
        y_bound: alloc::vec![0.0; lo.len()],
    };
    for (li, &j) in qp.free.iter().enumerate() {
        w.x[j] = x[li] * scaling.d[j];
    }
    for (r, &key) in qp.keys.iter().enumerate() {
        let v = y[r] * scaling.row_scale(key) / scaling.c;
        match key {
            RowKey::Eager(i) => w.y_rows[i] = v,
            RowKey::Lazy(i) => w.y_lazy[i] = v,
            RowKey::Bound(j) => w.y_bound[j] = v,
        }
    }
    w
}

/// Primal infeasibility test on the dual increment.
fn infeasibility_certificate(qp: &NodeQp, dy: &[f64], eps: f64, scratch: &mut [f64]) -> bool {
    let norm = inf_norm(dy);
    if norm < 1e-12 {
        return false;
    }
    qp.atx(dy, scratch);
    if inf_norm(scratch) > eps * norm {
        return false;
    }
    let mut support = 0.0;
    for r in 0..qp.m() {
        let v = dy[r];
        if v > 0.0 {
            if qp.hi[r] == f64::INFINITY {
                if v > eps * norm {
                    return false;
                }
            } else {
                support += qp.hi[r] * v;
            }
        } else if v < 0.0 {
            if qp.lo[r] == f64::NEG_INFINITY {
                if -v > eps * norm {
                    return false;
                }
            } else {
                support += qp.lo[r] * v;
            }
        }
    }
    support < -eps * norm
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Active {
    No,
    Lower,
    Upper,
}

/// Result of one equality-constrained solve on a fixed active set.
struct PolishTry {
    xs: Vec<f64>,
    ys: Vec<f64>,
    stationarity: f64,
    wrong_sign: Vec<usize>,
    violated: Vec<(usize, Active)>,
}

const POLISH_ROUNDS: usize = 8;
const REFINE_STEPS: usize = 8;

/// Solve the equality-constrained QP on a guessed active set and accept it
/// only if it is primal feasible and the multipliers have the right signs.
/// Violated rows join the active set and wrongly signed ones leave it for a
/// few rounds.
fn polish(
    program: &Program,
    scaling: &Scaling,
    qp: &NodeQp,
    x: &[f64],
    z: &[f64],
    y: &[f64],
    clock: &dyn Clock,
) -> Option<QpOutcome> {
    let m = qp.m();
    let mut active = alloc::vec![Active::No; m];
    for r in 0..m {
        let near = 1e-9 * (1.0 + z[r].abs());
        if qp.hi[r] - qp.lo[r] <= 1e-12 {
            active[r] = Active::Lower;
        } else if z[r] - qp.lo[r] < (-y[r]).max(near) {
            active[r] = Active::Lower;
        } else if qp.hi[r] - z[r] < y[r].max(near) {
            active[r] = Active::Upper;
        }
    }
    for _ in 0..POLISH_ROUNDS {
        let t = polish_once(scaling, qp, &active, x, y, clock)?;
        if t.stationarity > 1e-6 {
            return None;
        }
        if t.violated.is_empty() && t.wrong_sign.is_empty() {
            let d = &scaling.d;
            let mut xf = qp.base.clone();
            for (li, &j) in qp.free.iter().enumerate() {
                xf[j] = t.xs[li] * d[j];
            }
            // snap active bounds exactly
            for r in 0..m {
                if let RowKey::Bound(j) = qp.keys[r] {
                    match active[r] {
                        Active::Lower => xf[j] = qp.lo[r] * d[j],
                        Active::Upper => xf[j] = qp.hi[r] * d[j],
                        Active::No => {}
                    }
                }
            }
            let warm = warm_of(scaling, qp, &t.xs, &t.ys, &xf);
            return Some(QpOutcome {
                status: QpStatus::Solved,
                objective: program.objective_value(&xf),
                x: xf,
                kkt_residual: t.stationarity,
                iterations: 0,
                warm: Some(warm),
            });
        }
        if t.violated.is_empty() {
            for &r in &t.wrong_sign {
                active[r] = Active::No;
            }
        }
        for &(r, side) in &t.violated {
            active[r] = side;
        }
    }
    None
}

/// Refinement starts from the operator-splitting iterate `(x0, y0)`, so
/// directions the active set leaves undetermined keep their values.
fn polish_once(
    scaling: &Scaling,
    qp: &NodeQp,
    active: &[Active],
    x0: &[f64],
    y0: &[f64],
    clock: &dyn Clock,
) -> Option<PolishTry> {
    let n = qp.n;
    let m = qp.m();
    // active bound rows fix their variable
    let mut fixed = alloc::vec![f64::NAN; n];
    let mut bound_row = alloc::vec![NONE; n];
    for r in 0..m {
        if let RowKey::Bound(_) = qp.keys[r] {
            let li = qp.col[qp.ptr[r]];
            bound_row[li] = r;
            match active[r] {
                Active::Lower => fixed[li] = qp.lo[r],
                Active::Upper => fixed[li] = qp.hi[r],
                Active::No => {}
            }
        }
    }
    let general: Vec<usize> = (0..m)
        .filter(|&r| active[r] != Active::No && !matches!(qp.keys[r], RowKey::Bound(_)))
        .collect();
    let vars: Vec<usize> = (0..n).filter(|&i| fixed[i].is_nan()).collect();
    // KKT ordering: free variables by position, each active row right after
    // its last variable
    let mut items: Vec<(usize, u8, usize)> = vars.iter().map(|&i| (qp.pos[i], 0u8, i)).collect();
    for &r in &general {
        if let Some(p) = qp.row(r).filter(|&(j, _)| fixed[j].is_nan()).map(|(j, _)| qp.pos[j]).max() {
            items.push((p, 1, r));
        }
    }
    items.sort_unstable();
    let k = items.len();
    let mut slot_var = alloc::vec![NONE; n];
    let mut slot_row = alloc::vec![NONE; m];
    for (s, &(_, t, idx)) in items.iter().enumerate() {
        if t == 0 {
            slot_var[idx] = s;
        } else {
            slot_row[idx] = s;
        }
    }
    let delta = 1e-9;
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for &(i, j, _) in &qp.p {
        if slot_var[i] != NONE && slot_var[j] != NONE {
            groups.push(alloc::vec![slot_var[i], slot_var[j]]);
        }
    }
    for &r in &general {
        if slot_row[r] == NONE {
            continue;
        }
        let mut g: Vec<usize> = qp.row(r).filter_map(|(j, _)| (slot_var[j] != NONE).then(|| slot_var[j])).collect();
        g.push(slot_row[r]);
        groups.push(g);
    }
    let first = envelope_of(k, groups.iter().map(|g| g.as_slice()));
    let mut env = Envelope::new(first);
    let mut rhs = alloc::vec![0.0; k];
    for &i in &vars {
        env.add(slot_var[i], slot_var[i], delta);
        rhs[slot_var[i]] = -qp.q[i];
    }
    for &(i, j, v) in &qp.p {
        match (slot_var[i], slot_var[j]) {
            (NONE, NONE) => {}
            (si, NONE) => rhs[si] -= v * fixed[j],
            (NONE, sj) => rhs[sj] -= v * fixed[i],
            (si, sj) => env.add(si, sj, v),
        }
    }
    for &r in &general {
        let s = slot_row[r];
        if s == NONE {
            continue;
        }
        env.add(s, s, -delta);
        let mut b = if active[r] == Active::Upper { qp.hi[r] } else { qp.lo[r] };
        for (j, a) in qp.row(r) {
            if slot_var[j] != NONE {
                env.add(s, slot_var[j], a);
            } else {
                b -= a * fixed[j];
            }
        }
        rhs[s] = b;
    }
    clock.charge(env.factor(1e-300).ok()?);
    // the unregularized operator for refinement
    let apply = |sol: &[f64], out: &mut [f64]| {
        out.iter_mut().for_each(|v| *v = 0.0);
        for &(i, j, v) in &qp.p {
            let (si, sj) = (slot_var[i], slot_var[j]);
            if si != NONE && sj != NONE {
                out[si] += v * sol[sj];
                if si != sj {
                    out[sj] += v * sol[si];
                }
            }
        }
        for &r in &general {
            let s = slot_row[r];
            if s == NONE {
                continue;
            }
            for (j, a) in qp.row(r) {
                let sj = slot_var[j];
                if sj != NONE {
                    out[s] += a * sol[sj];
                    out[sj] += a * sol[s];
                }
            }
        }
    };
    let mut sol = alloc::vec![0.0; k];
    for &i in &vars {
        sol[slot_var[i]] = x0[i];
    }
    for &r in &general {
        if slot_row[r] != NONE {
            sol[slot_row[r]] = y0[r];
        }
    }
    let mut res = alloc::vec![0.0; k];
    for _ in 0..REFINE_STEPS {
        apply(&sol, &mut res);
        let mut worst: f64 = 0.0;
        for s in 0..k {
            res[s] = rhs[s] - res[s];
            worst = worst.max(res[s].abs());
        }
        if worst < 1e-13 {
            break;
        }
        clock.charge(env.solve(&mut res));
        for s in 0..k {
            sol[s] += res[s];
        }
    }
    clock.charge(6 * qp.nnz());

    let mut xs = alloc::vec![0.0; n];
    for i in 0..n {
        xs[i] = if slot_var[i] != NONE { sol[slot_var[i]] } else { fixed[i] };
    }
    let mut ys = alloc::vec![0.0; m];
    for &r in &general {
        if slot_row[r] != NONE {
            ys[r] = sol[slot_row[r]];
        }
    }
    // multipliers of active bounds absorb the remaining stationarity residual
    let mut grad = alloc::vec![0.0; n];
    qp.px(&xs, &mut grad);
    let mut aty = alloc::vec![0.0; n];
    qp.atx(&ys, &mut aty);
    for i in 0..n {
        if !fixed[i].is_nan() {
            ys[bound_row[i]] = -(grad[i] + qp.q[i] + aty[i]);
        }
    }
    let c = scaling.c;
    let d = &scaling.d;
    let mut stationarity: f64 = 0.0;
    qp.atx(&ys, &mut aty);
    for i in 0..n {
        let dj = d[qp.free[i]];
        stationarity = stationarity.max(((grad[i] + qp.q[i] + aty[i]) / (c * dj)).abs());
    }
    let mut wrong_sign = Vec::new();
    for r in 0..m {
        let yu = ys[r] * scaling.row_scale(qp.keys[r]) / c;
        let bad = match active[r] {
            Active::Lower if qp.hi[r] - qp.lo[r] > 1e-12 => yu > 1e-6,
            Active::Upper => yu < -1e-6,
            _ => false,
        };
        if bad {
            wrong_sign.push(r);
        }
    }
    // primal check on the unscaled node rows
    let mut violated = Vec::new();
    for r in 0..m {
        if active[r] != Active::No {
            continue;
        }
        let e = scaling.row_scale(qp.keys[r]);
        let act: f64 = qp.row(r).map(|(j, a)| a * xs[j]).sum::<f64>() / e;
        let (l, u) = (qp.lo[r] / e, qp.hi[r] / e);
        let tol = 1e-8 + 1e-12 * (l.abs().min(u.abs()) + act.abs());
        if act < l - tol {
            violated.push((r, Active::Lower));
        } else if act > u + tol {
            violated.push((r, Active::Upper));
        }
    }
    Some(PolishTry {
        xs,
        ys,
        stationarity,
        wrong_sign,
        violated,
    })
}
