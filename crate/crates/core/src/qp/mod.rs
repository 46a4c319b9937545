//! Convex quadratic programs
//!
//! ```text
//! minimize    ½ xᵀP x + qᵀx
//! subject to  l ≤ A x ≤ u
//! ```
//!
//! solved by operator splitting (ADMM) on a quasi-definite KKT system that is
//! factored once per penalty update, with diagonal equilibration,
//! over-relaxation, adaptive penalty, a primal infeasibility certificate, and
//! an active-set polish of the converged iterate. Equality rows have `l = u`.
//!
//! All linear algebra is sequential, so results are bit-identical across
//! runs and thread counts.

mod csc;
pub mod io;
mod ldl;
mod solver;

pub use csc::{norm_inf, CscMatrix};
pub use ldl::Ldl;
pub use solver::{solve, solve_from};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpProblem {
    /// Upper triangle of the symmetric PSD cost matrix, `n × n`.
    pub p: CscMatrix,
    pub q: Vec<f64>,
    /// Constraint matrix, `m × n`.
    pub a: CscMatrix,
    /// Lower limits; `-inf` for none.
    pub l: Vec<f64>,
    /// Upper limits; `+inf` for none.
    pub u: Vec<f64>,
}

impl QpProblem {
    /// `p` may hold either triangle or both; it is folded onto the upper one.
    pub fn new(
        n: usize,
        p: &[(usize, usize, f64)],
        q: Vec<f64>,
        m: usize,
        a: &[(usize, usize, f64)],
        l: Vec<f64>,
        u: Vec<f64>,
    ) -> Result<Self> {
        let has_upper = p.iter().any(|t| t.0 < t.1);
        let trip: Vec<_> = p
            .iter()
            .filter_map(|&(i, j, v)| match (i <= j, has_upper) {
                (true, _) => Some((i, j, v)),
                // both triangles given: the upper one is kept
                (false, true) => None,
                (false, false) => Some((j, i, v)),
            })
            .collect();
        for &(i, j, _) in &trip {
            if i >= n || j >= n {
                return Err(Error::Problem(format!("cost entry ({i}, {j}) outside {n}x{n}")));
            }
        }
        for &(i, j, _) in a {
            if i >= m || j >= n {
                return Err(Error::Problem(format!("constraint entry ({i}, {j}) outside {m}x{n}")));
            }
        }
        let prob = QpProblem {
            p: CscMatrix::from_triplets(n, n, &trip),
            q,
            a: CscMatrix::from_triplets(m, n, a),
            l,
            u,
        };
        prob.validate()?;
        Ok(prob)
    }

    pub fn n(&self) -> usize {
        self.p.ncols
    }

    pub fn m(&self) -> usize {
        self.a.nrows
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        let m = self.m();
        if self.p.nrows != n || self.a.ncols != n || self.q.len() != n {
            return Err(Error::Problem("inconsistent variable dimensions".into()));
        }
        if self.l.len() != m || self.u.len() != m {
            return Err(Error::Problem("inconsistent constraint dimensions".into()));
        }
        if !self.p.is_upper() {
            return Err(Error::Problem("cost matrix must be stored as its upper triangle".into()));
        }
        if self.p.diagonal().iter().any(|&d| d < 0.0) {
            return Err(Error::Problem("cost matrix has a negative diagonal entry".into()));
        }
        if self.q.iter().chain(&self.p.values).chain(&self.a.values).any(|v| !v.is_finite()) {
            return Err(Error::Problem("non-finite problem data".into()));
        }
        for i in 0..m {
            if self.l[i].is_nan() || self.u[i].is_nan() || self.l[i] > self.u[i] {
                return Err(Error::Problem(format!(
                    "row {i} has limits [{}, {}]",
                    self.l[i], self.u[i]
                )));
            }
            if self.l[i] == f64::INFINITY || self.u[i] == f64::NEG_INFINITY {
                return Err(Error::Problem(format!("row {i} has an empty range")));
            }
        }
        Ok(())
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut px = vec![0.0; self.n()];
        self.p.sym_upper_mul(x, &mut px);
        x.iter()
            .zip(&px)
            .zip(&self.q)
            .map(|((xi, pxi), qi)| 0.5 * xi * pxi + qi * xi)
            .sum()
    }

    /// Same problem with constraint rows reordered: new row `i` is old row
    /// `perm[i]`.
    pub fn permute_rows(&self, perm: &[usize]) -> QpProblem {
        let mut inv = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let t: Vec<_> = self.a.triplets().into_iter().map(|(i, j, v)| (inv[i], j, v)).collect();
        QpProblem {
            p: self.p.clone(),
            q: self.q.clone(),
            a: CscMatrix::from_triplets(self.m(), self.n(), &t),
            l: perm.iter().map(|&i| self.l[i]).collect(),
            u: perm.iter().map(|&i| self.u[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    MaxIter,
    PrimalInfeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSettings {
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub eps_prim_inf: f64,
    pub max_iter: usize,
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    /// Equality rows use `rho · eq_rho_scale`.
    pub eq_rho_scale: f64,
    pub scaling_iters: usize,
    pub adaptive_rho: bool,
    pub adaptive_rho_interval: usize,
    pub adaptive_rho_tolerance: f64,
    pub check_interval: usize,
    pub polish: bool,
    pub polish_delta: f64,
    pub polish_refine_iters: usize,
    pub polish_rounds: usize,
    /// Rows whose scaled activity is this close (relative) to a limit start
    /// in the polish active set.
    pub polish_active_tol: f64,
    /// Multipliers of this wrong-signed magnitude drop a row from the set.
    pub polish_sign_tol: f64,
}

impl Default for QpSettings {
    fn default() -> Self {
        QpSettings {
            eps_abs: 1e-6,
            eps_rel: 1e-6,
            eps_prim_inf: 1e-5,
            max_iter: 200_000,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            eq_rho_scale: 1e3,
            scaling_iters: 10,
            adaptive_rho: true,
            adaptive_rho_interval: 50,
            adaptive_rho_tolerance: 5.0,
            check_interval: 5,
            polish: true,
            polish_delta: 1e-9,
            polish_refine_iters: 5,
            polish_rounds: 8,
            polish_active_tol: 1e-5,
            polish_sign_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// Constraint multipliers: negative at an active lower limit, positive at
    /// an active upper limit.
    pub y: Vec<f64>,
    pub status: QpStatus,
    pub iterations: usize,
    /// `‖A x − Π(A x)‖∞` in problem units.
    pub prim_res: f64,
    /// `‖P x + q + Aᵀ y‖∞`.
    pub dual_res: f64,
    pub objective: f64,
    pub polished: bool,
    pub rho_updates: usize,
    pub rho: f64,
}
