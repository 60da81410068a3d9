//! Envelope (skyline) LDL' factorization for symmetric matrices whose
//! nonzeros cluster near the diagonal.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

/// Symmetric matrix stored by rows: row `i` holds columns `first[i]..=i`.
#[derive(Clone, Debug)]
pub struct Envelope {
    first: Vec<usize>,
    start: Vec<usize>,
    /// Matrix entries before `factor`, strictly lower `L` and `D` after.
    data: Vec<f64>,
    diag: Vec<f64>,
    factored: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ZeroPivot(pub usize);

impl Envelope {
    /// `first[i]` is the smallest column with a nonzero in row `i`
    /// (`first[i] <= i`).
    pub fn new(first: Vec<usize>) -> Envelope {
        let n = first.len();
        let mut start = Vec::with_capacity(n + 1);
        let mut total = 0;
        for (i, &f) in first.iter().enumerate() {
            debug_assert!(f <= i);
            start.push(total);
            total += i - f;
        }
        start.push(total);
        Envelope {
            first,
            start,
            data: alloc::vec![0.0; total],
            diag: alloc::vec![0.0; n],
            factored: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    /// Stored off-diagonal entries.
    pub fn profile(&self) -> usize {
        self.data.len()
    }

    pub fn clear(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
        self.diag.iter_mut().for_each(|v| *v = 0.0);
        self.factored = false;
    }

    /// Add `v` at `(i, j)` and, implicitly, `(j, i)`.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i == j {
            self.diag[i] += v;
        } else {
            debug_assert!(j >= self.first[i], "entry ({i}, {j}) outside the envelope");
            self.data[self.start[i] + j - self.first[i]] += v;
        }
    }

    /// In-place `LDL'` without pivoting. Fails on a pivot of magnitude below
    /// `tiny`. Returns an operation count.
    pub fn factor(&mut self, tiny: f64) -> Result<u64, ZeroPivot> {
        let n = self.dim();
        let mut work = 0u64;
        // u[k] = L_ik * D_k for the row being processed
        let mut u = alloc::vec![0.0; n];
        for i in 0..n {
            let fi = self.first[i];
            let si = self.start[i];
            for j in fi..i {
                let fj = self.first[j];
                let sj = self.start[j];
                let k0 = fi.max(fj);
                let mut s = self.data[si + j - fi];
                for k in k0..j {
                    s -= u[k] * self.data[sj + k - fj];
                }
                work += (j - k0) as u64;
                u[j] = s;
            }
            let mut d = self.diag[i];
            for j in fi..i {
                let l = u[j] / self.diag[j];
                d -= u[j] * l;
                self.data[si + j - fi] = l;
            }
            work += (i - fi) as u64 + 1;
            if !(d.abs() > tiny) || !d.is_finite() {
                return Err(ZeroPivot(i));
            }
            self.diag[i] = d;
        }
        self.factored = true;
        Ok(work)
    }

    /// Solve in place with the factored matrix; returns an operation count.
    pub fn solve(&self, b: &mut [f64]) -> u64 {
        debug_assert!(self.factored);
        let n = self.dim();
        for i in 0..n {
            let fi = self.first[i];
            let si = self.start[i];
            let mut s = b[i];
            for j in fi..i {
                s -= self.data[si + j - fi] * b[j];
            }
            b[i] = s;
        }
        for i in 0..n {
            b[i] /= self.diag[i];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let si = self.start[i];
            let bi = b[i];
            for j in fi..i {
                b[j] -= self.data[si + j - fi] * bi;
            }
        }
        (2 * self.data.len() + n) as u64
    }

    pub fn pivots(&self) -> &[f64] {
        &self.diag
    }
}

/// Envelope `first` vector from a list of coupled index groups.
pub fn envelope_of<'a>(n: usize, groups: impl IntoIterator<Item = &'a [usize]>) -> Vec<usize> {
    let mut first: Vec<usize> = (0..n).collect();
    for g in groups {
        if let Some(&lo) = g.iter().min() {
            for &i in g {
                first[i] = first[i].min(lo);
            }
        }
    }
    first
}

/// Whether the symmetric matrix given by its upper triangle is positive
/// semidefinite, tested by factoring it with a tiny diagonal shift.
pub fn is_positive_semidefinite(n: usize, upper: &BTreeMap<(u32, u32), f64>) -> bool {
    let mut first: Vec<usize> = (0..n).collect();
    let mut scale: f64 = 1.0;
    for (&(i, j), &v) in upper {
        let (i, j) = (i as usize, j as usize);
        first[j] = first[j].min(i);
        scale = scale.max(v.abs());
    }
    let mut m = Envelope::new(first);
    for (&(i, j), &v) in upper {
        m.add(i as usize, j as usize, v);
    }
    let shift = 1e-10 * scale;
    for i in 0..n {
        m.add(i, i, shift);
    }
    m.factor(0.0).is_ok() && m.pivots().iter().all(|&d| d > 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense_mul(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        a.iter().map(|row| row.iter().zip(x).map(|(r, v)| r * v).sum()).collect()
    }

    #[test]
    fn quasi_definite_system() {
        // [2 1; 1 -1] is factorable without pivoting
        let mut m = Envelope::new(alloc::vec![0, 0]);
        m.add(0, 0, 2.0);
        m.add(1, 0, 1.0);
        m.add(1, 1, -1.0);
        m.factor(1e-14).unwrap();
        let mut b = [3.0, 0.0];
        m.solve(&mut b);
        assert!((b[0] - 1.0).abs() < 1e-14 && (b[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn psd_check() {
        let mut up = BTreeMap::new();
        up.insert((0, 0), 1.0);
        up.insert((0, 1), -1.0);
        up.insert((1, 1), 1.0);
        assert!(is_positive_semidefinite(2, &up));
        up.insert((0, 1), -2.0);
        assert!(!is_positive_semidefinite(2, &up));
        assert!(is_positive_semidefinite(3, &BTreeMap::new()));
    }

    proptest! {
        #[test]
        fn banded_spd_solve(n in 1usize..30, band in 0usize..5, seed in proptest::collection::vec(-1.0f64..1.0, 200)) {
            // B B' + I restricted to a band is SPD after diagonal boosting
            let mut a = alloc::vec![alloc::vec![0.0; n]; n];
            let mut k = 0;
            for i in 0..n {
                for j in i.saturating_sub(band)..i {
                    let v = seed[k % seed.len()];
                    k += 1;
                    a[i][j] = v;
                    a[j][i] = v;
                }
            }
            for i in 0..n {
                a[i][i] = 1.0 + a[i].iter().map(|v| v.abs()).sum::<f64>();
            }
            let first: Vec<usize> = (0..n).map(|i| i.saturating_sub(band)).collect();
            let mut m = Envelope::new(first);
            for i in 0..n {
                for j in i.saturating_sub(band)..=i {
                    m.add(i, j, a[i][j]);
                }
            }
            m.factor(1e-14).unwrap();
            let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
            let mut b = dense_mul(&a, &x);
            m.solve(&mut b);
            for (got, want) in b.iter().zip(&x) {
                prop_assert!((got - want).abs() < 1e-9);
            }
        }
    }
}
