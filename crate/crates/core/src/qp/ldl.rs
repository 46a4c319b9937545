//! Sparse LDLᵀ factorization of quasi-definite matrices (up-looking, driven
//! by the elimination tree), with numeric refactorization on a fixed pattern.

use crate::error::{Error, Result};
use crate::qp::csc::CscMatrix;

const NONE: usize = usize::MAX;

#[derive(Debug, Clone)]
pub struct Ldl {
    n: usize,
    etree: Vec<usize>,
    lnz: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    dinv: Vec<f64>,
}

impl Ldl {
    /// Symbolic and numeric factorization of the symmetric matrix whose upper
    /// triangle (diagonal included) is `upper`.
    pub fn new(upper: &CscMatrix) -> Result<Self> {
        let n = upper.ncols;
        if upper.nrows != n {
            return Err(Error::Problem("LDL needs a square matrix".into()));
        }
        let mut etree = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        let mut work = vec![NONE; n];
        for j in 0..n {
            work[j] = j;
            for p in upper.colptr[j]..upper.colptr[j + 1] {
                let mut i = upper.rowind[p];
                if i > j {
                    return Err(Error::Problem("LDL input must be upper triangular".into()));
                }
                while work[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    work[i] = j;
                    i = etree[i];
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        let total = lp[n];
        let mut f = Ldl {
            n,
            etree,
            lnz,
            lp,
            li: vec![0; total],
            lx: vec![0.0; total],
            d: vec![0.0; n],
            dinv: vec![0.0; n],
        };
        f.refactor(upper)?;
        Ok(f)
    }

    pub fn nnz_l(&self) -> usize {
        self.lp[self.n]
    }

    /// Number of positive pivots.
    pub fn positive_pivots(&self) -> usize {
        self.d.iter().filter(|&&d| d > 0.0).count()
    }

    /// Numeric factorization of a matrix with the pattern given to [`Ldl::new`].
    pub fn refactor(&mut self, upper: &CscMatrix) -> Result<()> {
        let n = self.n;
        let mut y_vals = vec![0.0; n];
        let mut y_used = vec![false; n];
        let mut y_idx: Vec<usize> = Vec::with_capacity(n);
        let mut elim: Vec<usize> = Vec::with_capacity(n);
        let mut next_in_col: Vec<usize> = self.lp[..n].to_vec();
        for k in 0..n {
            y_idx.clear();
            self.d[k] = 0.0;
            for p in upper.colptr[k]..upper.colptr[k + 1] {
                let b = upper.rowind[p];
                if b == k {
                    self.d[k] += upper.values[p];
                    continue;
                }
                y_vals[b] += upper.values[p];
                if !y_used[b] {
                    y_used[b] = true;
                    elim.clear();
                    elim.push(b);
                    let mut next = self.etree[b];
                    while next != NONE && next < k {
                        if y_used[next] {
                            break;
                        }
                        y_used[next] = true;
                        elim.push(next);
                        next = self.etree[next];
                    }
                    y_idx.extend(elim.iter().rev());
                }
            }
            for &c in y_idx.iter().rev() {
                let yc = y_vals[c];
                let end = next_in_col[c];
                for j in self.lp[c]..end {
                    y_vals[self.li[j]] -= self.lx[j] * yc;
                }
                self.li[end] = k;
                let l = yc * self.dinv[c];
                self.lx[end] = l;
                self.d[k] -= yc * l;
                next_in_col[c] += 1;
                y_vals[c] = 0.0;
                y_used[c] = false;
            }
            if self.d[k] == 0.0 || !self.d[k].is_finite() {
                return Err(Error::Solver(format!("zero or non-finite pivot at {k}")));
            }
            self.dinv[k] = 1.0 / self.d[k];
        }
        debug_assert!((0..n).all(|c| next_in_col[c] == self.lp[c] + self.lnz[c]));
        Ok(())
    }

    /// Solves in place.
    pub fn solve(&self, x: &mut [f64]) {
        for i in 0..self.n {
            let xi = x[i];
            if xi != 0.0 {
                for j in self.lp[i]..self.lp[i + 1] {
                    x[self.li[j]] -= self.lx[j] * xi;
                }
            }
        }
        for i in 0..self.n {
            x[i] *= self.dinv[i];
        }
        for i in (0..self.n).rev() {
            let mut s = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                s -= self.lx[j] * x[self.li[j]];
            }
            x[i] = s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense_upper(a: &[Vec<f64>]) -> CscMatrix {
        let n = a.len();
        let mut t = Vec::new();
        for j in 0..n {
            for i in 0..=j {
                if a[i][j] != 0.0 {
                    t.push((i, j, a[i][j]));
                }
            }
        }
        CscMatrix::from_triplets(n, n, &t)
    }

    #[test]
    fn solves_quasi_definite_system() {
        // [[4, 1, 1], [1, 3, 0], [1, 0, -2]]
        let a = vec![vec![4.0, 1.0, 1.0], vec![1.0, 3.0, 0.0], vec![1.0, 0.0, -2.0]];
        let f = Ldl::new(&dense_upper(&a)).unwrap();
        let want = [1.0, -2.0, 0.5];
        let mut b: Vec<f64> = (0..3).map(|i| (0..3).map(|j| a[i][j] * want[j]).sum()).collect();
        f.solve(&mut b);
        for i in 0..3 {
            assert!((b[i] - want[i]).abs() < 1e-12);
        }
        assert_eq!(f.positive_pivots(), 2);
    }

    #[test]
    fn zero_pivot_is_an_error() {
        let a = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let mut up = dense_upper(&a);
        // keep an explicit zero diagonal in the pattern
        up = CscMatrix::from_triplets(2, 2, &[(0, 0, 0.0), (0, 1, 1.0), (1, 1, 0.0)].iter().copied().chain(up.triplets()).collect::<Vec<_>>());
        assert!(Ldl::new(&up).is_err());
    }

    proptest! {
        #[test]
        fn random_quasi_definite(
            n1 in 1usize..8, n2 in 0usize..6,
            vals in proptest::collection::vec(-1.0f64..1.0, 200),
            dens in 0.1f64..0.9,
        ) {
            let n = n1 + n2;
            let mut a = vec![vec![0.0; n]; n];
            let mut it = vals.iter().cycle();
            for i in 0..n {
                for j in 0..i {
                    let v = *it.next().unwrap();
                    if v.abs() < dens {
                        a[i][j] = v;
                        a[j][i] = v;
                    }
                }
            }
            for i in 0..n {
                a[i][i] = if i < n1 { 1.0 + n as f64 } else { -(1.0 + n as f64) };
            }
            let mut f = Ldl::new(&dense_upper(&a)).unwrap();
            let want: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
            let mut b: Vec<f64> = (0..n).map(|i| (0..n).map(|j| a[i][j] * want[j]).sum()).collect();
            f.solve(&mut b);
            for i in 0..n {
                prop_assert!((b[i] - want[i]).abs() < 1e-9);
            }
            prop_assert_eq!(f.positive_pivots(), n1);
            // refactor with scaled values
            let scaled: Vec<Vec<f64>> = a.iter().map(|r| r.iter().map(|v| 2.0 * v).collect()).collect();
            f.refactor(&dense_upper(&scaled)).unwrap();
            let mut b: Vec<f64> = (0..n).map(|i| (0..n).map(|j| scaled[i][j] * want[j]).sum()).collect();
            f.solve(&mut b);
            for i in 0..n {
                prop_assert!((b[i] - want[i]).abs() < 1e-9);
            }
        }
    }
}
