//! Compressed sparse column storage.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CscMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub colptr: Vec<usize>,
    pub rowind: Vec<usize>,
    pub values: Vec<f64>,
}

impl CscMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CscMatrix {
            nrows,
            ncols,
            colptr: vec![0; ncols + 1],
            rowind: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed and
    /// row indices within each column end up sorted. Explicit zeros are kept.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut count = vec![0usize; ncols];
        for &(i, j, _) in triplets {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) outside {nrows}x{ncols}");
            count[j] += 1;
        }
        let mut colptr = vec![0usize; ncols + 1];
        for j in 0..ncols {
            colptr[j + 1] = colptr[j] + count[j];
        }
        let mut next = colptr.clone();
        let mut rowind = vec![0usize; triplets.len()];
        let mut values = vec![0.0; triplets.len()];
        for &(i, j, v) in triplets {
            rowind[next[j]] = i;
            values[next[j]] = v;
            next[j] += 1;
        }
        // sort within columns and merge duplicates
        let mut out_ptr = vec![0usize; ncols + 1];
        let mut out_ind = Vec::with_capacity(rowind.len());
        let mut out_val = Vec::with_capacity(values.len());
        let mut buf: Vec<(usize, f64)> = Vec::new();
        for j in 0..ncols {
            buf.clear();
            buf.extend((colptr[j]..colptr[j + 1]).map(|p| (rowind[p], values[p])));
            buf.sort_by_key(|e| e.0);
            for &(i, v) in &buf {
                if out_ind.len() > out_ptr[j] && *out_ind.last().unwrap() == i {
                    *out_val.last_mut().unwrap() += v;
                } else {
                    out_ind.push(i);
                    out_val.push(v);
                }
            }
            out_ptr[j + 1] = out_ind.len();
        }
        CscMatrix {
            nrows,
            ncols,
            colptr: out_ptr,
            rowind: out_ind,
            values: out_val,
        }
    }

    pub fn nnz(&self) -> usize {
        self.rowind.len()
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut t = Vec::with_capacity(self.nnz());
        for j in 0..self.ncols {
            for p in self.colptr[j]..self.colptr[j + 1] {
                t.push((self.rowind[p], j, self.values[p]));
            }
        }
        t
    }

    pub fn transpose(&self) -> CscMatrix {
        let t: Vec<_> = self.triplets().into_iter().map(|(i, j, v)| (j, i, v)).collect();
        CscMatrix::from_triplets(self.ncols, self.nrows, &t)
    }

    /// `y = A x`.
    pub fn mul(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.ncols {
            let xj = x[j];
            if xj != 0.0 {
                for p in self.colptr[j]..self.colptr[j + 1] {
                    y[self.rowind[p]] += self.values[p] * xj;
                }
            }
        }
    }

    /// `y = Aᵀ x`.
    pub fn mul_t(&self, x: &[f64], y: &mut [f64]) {
        for j in 0..self.ncols {
            let mut s = 0.0;
            for p in self.colptr[j]..self.colptr[j + 1] {
                s += self.values[p] * x[self.rowind[p]];
            }
            y[j] = s;
        }
    }

    /// `y = P x` where `self` holds the upper triangle of symmetric `P`.
    pub fn sym_upper_mul(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.ncols {
            for p in self.colptr[j]..self.colptr[j + 1] {
                let i = self.rowind[p];
                let v = self.values[p];
                y[i] += v * x[j];
                if i != j {
                    y[j] += v * x[i];
                }
            }
        }
    }

    /// Scales entry `(i, j)` by `left[i]·right[j]`.
    pub fn scale(&mut self, left: &[f64], right: &[f64]) {
        for j in 0..self.ncols {
            for p in self.colptr[j]..self.colptr[j + 1] {
                self.values[p] *= left[self.rowind[p]] * right[j];
            }
        }
    }

    pub fn is_upper(&self) -> bool {
        (0..self.ncols).all(|j| (self.colptr[j]..self.colptr[j + 1]).all(|p| self.rowind[p] <= j))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let n = self.nrows.min(self.ncols);
        let mut d = vec![0.0; n];
        for j in 0..n {
            for p in self.colptr[j]..self.colptr[j + 1] {
                if self.rowind[p] == j {
                    d[j] += self.values[p];
                }
            }
        }
        d
    }
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
