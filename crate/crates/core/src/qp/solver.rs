use log::debug;

use crate::error::{Error, Result};
use crate::qp::csc::{norm_inf, CscMatrix};
use crate::qp::ldl::Ldl;
use crate::qp::{QpProblem, QpSettings, QpSolution, QpStatus};

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const SCALE_MIN: f64 = 1e-4;
const SCALE_MAX: f64 = 1e4;

pub fn solve(problem: &QpProblem, settings: &QpSettings) -> Result<QpSolution> {
    solve_from(problem, settings, None, None)
}

/// Solves starting from primal `x0` and dual `y0` (zeros when absent).
pub fn solve_from(
    problem: &QpProblem,
    settings: &QpSettings,
    x0: Option<&[f64]>,
    y0: Option<&[f64]>,
) -> Result<QpSolution> {
    problem.validate()?;
    check_settings(settings)?;
    let sc = Scaled::new(problem, settings.scaling_iters);
    let mut admm = Admm::new(&sc, settings)?;
    if let Some(x0) = x0 {
        if x0.len() != sc.n {
            return Err(Error::Problem("initial primal has the wrong length".into()));
        }
        for j in 0..sc.n {
            admm.x[j] = x0[j] * sc.dinv[j];
        }
        let mut ax = vec![0.0; sc.m];
        sc.a.mul(&admm.x, &mut ax);
        for i in 0..sc.m {
            admm.z[i] = ax[i].clamp(sc.l[i], sc.u[i]);
        }
    }
    if let Some(y0) = y0 {
        if y0.len() != sc.m {
            return Err(Error::Problem("initial dual has the wrong length".into()));
        }
        for i in 0..sc.m {
            admm.y[i] = y0[i] * sc.einv[i] * sc.c;
        }
    }
    let mut sol = admm.run(&sc, settings)?;
    if settings.polish && sol.status != QpStatus::PrimalInfeasible {
        match polish(&sc, settings, &admm) {
            Ok(Some(p)) => {
                debug!("polish residuals {:e} {:e}", p.prim_res, p.dual_res);
                let tol_ok = p.prim_res <= p.eps_prim && p.dual_res <= p.eps_dual;
                let better = p.prim_res <= sol.prim_res.max(p.eps_prim)
                    && p.dual_res <= sol.dual_res.max(p.eps_dual);
                if tol_ok || better {
                    sol.x = p.x;
                    sol.y = p.y;
                    sol.prim_res = p.prim_res;
                    sol.dual_res = p.dual_res;
                    sol.polished = true;
                    if tol_ok {
                        sol.status = QpStatus::Optimal;
                    }
                }
            }
            Ok(None) => {}
            Err(e) => debug!("polish failed: {e}"),
        }
    }
    sol.objective = problem.objective(&sol.x);
    Ok(sol)
}

fn check_settings(s: &QpSettings) -> Result<()> {
    let pos = [s.eps_abs + s.eps_rel, s.rho, s.sigma, s.eq_rho_scale, s.eps_prim_inf];
    if pos.iter().any(|v| !(v.is_finite() && *v > 0.0)) || s.eps_abs < 0.0 || s.eps_rel < 0.0 {
        return Err(Error::Config("solver tolerances and penalties must be > 0".into()));
    }
    if !(s.alpha > 0.0 && s.alpha < 2.0) {
        return Err(Error::Config("relaxation must lie in (0, 2)".into()));
    }
    if s.max_iter == 0 || s.check_interval == 0 || s.adaptive_rho_interval == 0 {
        return Err(Error::Config("iteration counts must be >= 1".into()));
    }
    Ok(())
}

/// Equilibrated copy of the problem: `P̄ = c·D P D`, `q̄ = c·D q`,
/// `Ā = E A D`, `l̄ = E l`, `ū = E u`.
pub(crate) struct Scaled {
    pub n: usize,
    pub m: usize,
    pub p: CscMatrix,
    pub q: Vec<f64>,
    pub a: CscMatrix,
    pub at: CscMatrix,
    pub l: Vec<f64>,
    pub u: Vec<f64>,
    pub d: Vec<f64>,
    pub dinv: Vec<f64>,
    pub e: Vec<f64>,
    pub einv: Vec<f64>,
    pub c: f64,
}

fn limit_scale(v: f64) -> f64 {
    if v < SCALE_MIN {
        1.0
    } else {
        v.min(SCALE_MAX)
    }
}

impl Scaled {
    fn new(prob: &QpProblem, iters: usize) -> Self {
        let n = prob.n();
        let m = prob.m();
        let mut p = prob.p.clone();
        let mut a = prob.a.clone();
        let mut q = prob.q.clone();
        let mut d = vec![1.0; n];
        let mut e = vec![1.0; m];
        let mut c = 1.0;
        for _ in 0..iters {
            let mut col = vec![0.0f64; n];
            for j in 0..n {
                for k in p.colptr[j]..p.colptr[j + 1] {
                    let v = p.values[k].abs();
                    let i = p.rowind[k];
                    col[j] = col[j].max(v);
                    col[i] = col[i].max(v);
                }
            }
            let mut row = vec![0.0f64; m];
            for j in 0..n {
                for k in a.colptr[j]..a.colptr[j + 1] {
                    let v = a.values[k].abs();
                    col[j] = col[j].max(v);
                    row[a.rowind[k]] = row[a.rowind[k]].max(v);
                }
            }
            let dd: Vec<f64> = col.iter().map(|&v| 1.0 / limit_scale(v).sqrt()).collect();
            let de: Vec<f64> = row.iter().map(|&v| 1.0 / limit_scale(v).sqrt()).collect();
            p.scale(&dd, &dd);
            a.scale(&de, &dd);
            for j in 0..n {
                q[j] *= dd[j];
                d[j] *= dd[j];
            }
            for i in 0..m {
                e[i] *= de[i];
            }

            // cost scaling
            let mut pcol = vec![0.0f64; n];
            for j in 0..n {
                for k in p.colptr[j]..p.colptr[j + 1] {
                    let v = p.values[k].abs();
                    pcol[j] = pcol[j].max(v);
                    pcol[p.rowind[k]] = pcol[p.rowind[k]].max(v);
                }
            }
            let mean = if n > 0 { pcol.iter().sum::<f64>() / n as f64 } else { 0.0 };
            let g = 1.0 / limit_scale(mean.max(norm_inf(&q)));
            p.values.iter_mut().for_each(|v| *v *= g);
            q.iter_mut().for_each(|v| *v *= g);
            c *= g;
        }
        let l = (0..m).map(|i| prob.l[i] * e[i]).collect();
        let u = (0..m).map(|i| prob.u[i] * e[i]).collect();
        let at = a.transpose();
        Scaled {
            n,
            m,
            p,
            q,
            a,
            at,
            l,
            u,
            dinv: d.iter().map(|v| 1.0 / v).collect(),
            d,
            einv: e.iter().map(|v| 1.0 / v).collect(),
            e,
            c,
        }
    }

    fn is_equality(&self, i: usize) -> bool {
        self.l[i] == self.u[i]
    }

    fn is_free(&self, i: usize) -> bool {
        self.l[i] == f64::NEG_INFINITY && self.u[i] == f64::INFINITY
    }

    /// Unscaled primal and dual residuals with their tolerances.
    fn residuals(&self, x: &[f64], z: &[f64], y: &[f64], s: &QpSettings) -> Residuals {
        let mut ax = vec![0.0; self.m];
        self.a.mul(x, &mut ax);
        let mut prim: f64 = 0.0;
        let (mut ax_n, mut z_n): (f64, f64) = (0.0, 0.0);
        for i in 0..self.m {
            prim = prim.max(((ax[i] - z[i]) * self.einv[i]).abs());
            ax_n = ax_n.max((ax[i] * self.einv[i]).abs());
            z_n = z_n.max((z[i] * self.einv[i]).abs());
        }
        let mut px = vec![0.0; self.n];
        self.p.sym_upper_mul(x, &mut px);
        let mut aty = vec![0.0; self.n];
        self.at.mul(y, &mut aty);
        let mut dual: f64 = 0.0;
        let (mut px_n, mut aty_n, mut q_n): (f64, f64, f64) = (0.0, 0.0, 0.0);
        let ic = 1.0 / self.c;
        for j in 0..self.n {
            let di = self.dinv[j] * ic;
            dual = dual.max(((px[j] + self.q[j] + aty[j]) * di).abs());
            px_n = px_n.max((px[j] * di).abs());
            aty_n = aty_n.max((aty[j] * di).abs());
            q_n = q_n.max((self.q[j] * di).abs());
        }
        Residuals {
            prim,
            dual,
            eps_prim: s.eps_abs + s.eps_rel * ax_n.max(z_n),
            eps_dual: s.eps_abs + s.eps_rel * px_n.max(aty_n).max(q_n),
        }
    }

    fn unscale_x(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.d).map(|(v, d)| v * d).collect()
    }

    fn unscale_y(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.e).map(|(v, e)| v * e / self.c).collect()
    }
}

struct Residuals {
    prim: f64,
    dual: f64,
    eps_prim: f64,
    eps_dual: f64,
}

/// Elimination order for `[P, Aᵀ; A, ·]`: variables in their given order,
/// each constraint row right after the last variable it touches.
fn kkt_order(n: usize, rows_max_col: &[Option<usize>]) -> Vec<usize> {
    let m = rows_max_col.len();
    let mut after: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut tail = Vec::new();
    for (i, mc) in rows_max_col.iter().enumerate() {
        match mc {
            Some(j) => after[*j].push(i),
            None => tail.push(i),
        }
    }
    let mut order = Vec::with_capacity(n + m);
    for j in 0..n {
        order.push(j);
        order.extend(after[j].iter().map(|i| n + i));
    }
    order.extend(tail.iter().map(|i| n + i));
    order
}

fn rows_max_col(a: &CscMatrix) -> Vec<Option<usize>> {
    let mut mc = vec![None; a.nrows];
    for j in 0..a.ncols {
        for k in a.colptr[j]..a.colptr[j + 1] {
            mc[a.rowind[k]] = Some(j);
        }
    }
    mc
}

/// Permuted quasi-definite KKT matrix `[P + σI, Aᵀ; A, −diag(δ)]` and its
/// factorization.
struct Kkt {
    n: usize,
    mat: CscMatrix,
    pinv: Vec<usize>,
    /// Positions of the lower-right diagonal entries in `mat.values`.
    diag_pos: Vec<usize>,
    ldl: Ldl,
    work: Vec<f64>,
}

impl Kkt {
    fn new(p: &CscMatrix, a: &CscMatrix, sigma: f64, lower_diag: &[f64]) -> Result<Self> {
        let n = p.ncols;
        let m = a.nrows;
        let order = kkt_order(n, &rows_max_col(a));
        let mut pinv = vec![0; n + m];
        for (new, &old) in order.iter().enumerate() {
            pinv[old] = new;
        }
        let mut t = Vec::with_capacity(p.nnz() + a.nnz() + n + m);
        let up = |i: usize, j: usize| if i <= j { (i, j) } else { (j, i) };
        for (i, j, v) in p.triplets() {
            let (r, c) = up(pinv[i], pinv[j]);
            t.push((r, c, v));
        }
        for j in 0..n {
            t.push((pinv[j], pinv[j], sigma));
        }
        for (i, j, v) in a.triplets() {
            let (r, c) = up(pinv[n + i], pinv[j]);
            t.push((r, c, v));
        }
        for i in 0..m {
            t.push((pinv[n + i], pinv[n + i], -lower_diag[i]));
        }
        let mat = CscMatrix::from_triplets(n + m, n + m, &t);
        let diag_pos = (0..m)
            .map(|i| {
                let c = pinv[n + i];
                let k = mat.colptr[c + 1] - 1;
                debug_assert_eq!(mat.rowind[k], c);
                k
            })
            .collect();
        let ldl = Ldl::new(&mat)?;
        Ok(Kkt {
            n,
            mat,
            pinv,
            diag_pos,
            ldl,
            work: vec![0.0; n + m],
        })
    }

    fn update_lower_diag(&mut self, lower_diag: &[f64]) -> Result<()> {
        for (i, &k) in self.diag_pos.iter().enumerate() {
            self.mat.values[k] = -lower_diag[i];
        }
        self.ldl.refactor(&self.mat)
    }

    /// Solves in place; `b` is in the original (unpermuted) order.
    fn solve(&mut self, b: &mut [f64]) {
        for (k, &p) in self.pinv.iter().enumerate() {
            self.work[p] = b[k];
        }
        self.ldl.solve(&mut self.work);
        for (k, &p) in self.pinv.iter().enumerate() {
            b[k] = self.work[p];
        }
    }

    fn nnz_l(&self) -> usize {
        self.ldl.nnz_l()
    }

    fn n(&self) -> usize {
        self.n
    }
}

struct Admm {
    x: Vec<f64>,
    z: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
    rho_vec: Vec<f64>,
    kkt: Kkt,
}

impl Admm {
    fn new(sc: &Scaled, s: &QpSettings) -> Result<Self> {
        let rho_vec = rho_vector(sc, s.rho, s.eq_rho_scale);
        let inv: Vec<f64> = rho_vec.iter().map(|r| 1.0 / r).collect();
        let kkt = Kkt::new(&sc.p, &sc.a, s.sigma, &inv)?;
        debug!(
            "qp: n {} m {} nnz(A) {} nnz(L) {}",
            sc.n,
            sc.m,
            sc.a.nnz(),
            kkt.nnz_l()
        );
        Ok(Admm {
            x: vec![0.0; sc.n],
            z: (0..sc.m).map(|i| 0.0f64.clamp(sc.l[i], sc.u[i])).collect(),
            y: vec![0.0; sc.m],
            rho: s.rho,
            rho_vec,
            kkt,
        })
    }

    fn set_rho(&mut self, sc: &Scaled, s: &QpSettings, rho: f64) -> Result<()> {
        self.rho = rho;
        self.rho_vec = rho_vector(sc, rho, s.eq_rho_scale);
        let inv: Vec<f64> = self.rho_vec.iter().map(|r| 1.0 / r).collect();
        self.kkt.update_lower_diag(&inv)
    }

    fn run(&mut self, sc: &Scaled, s: &QpSettings) -> Result<QpSolution> {
        let n = sc.n;
        let m = sc.m;
        debug_assert_eq!(self.kkt.n(), n);
        let alpha = s.alpha;
        let mut rhs = vec![0.0; n + m];
        let mut x_prev = vec![0.0; n];
        let mut z_prev = vec![0.0; m];
        let mut y_prev = vec![0.0; m];
        let mut ztilde = vec![0.0; m];
        let mut status = QpStatus::MaxIter;
        let mut iters = 0;
        let mut rho_updates = 0;
        let mut res = sc.residuals(&self.x, &self.z, &self.y, s);
        for iter in 1..=s.max_iter {
            iters = iter;
            x_prev.copy_from_slice(&self.x);
            z_prev.copy_from_slice(&self.z);
            y_prev.copy_from_slice(&self.y);
            for j in 0..n {
                rhs[j] = s.sigma * self.x[j] - sc.q[j];
            }
            for i in 0..m {
                rhs[n + i] = self.z[i] - self.y[i] / self.rho_vec[i];
            }
            self.kkt.solve(&mut rhs);
            for i in 0..m {
                ztilde[i] = self.z[i] + (rhs[n + i] - self.y[i]) / self.rho_vec[i];
            }
            for j in 0..n {
                self.x[j] = alpha * rhs[j] + (1.0 - alpha) * x_prev[j];
            }
            for i in 0..m {
                let zr = alpha * ztilde[i] + (1.0 - alpha) * z_prev[i];
                let zn = (zr + self.y[i] / self.rho_vec[i]).clamp(sc.l[i], sc.u[i]);
                self.y[i] += self.rho_vec[i] * (zr - zn);
                self.z[i] = zn;
            }

            let check = iter % s.check_interval == 0 || iter == s.max_iter;
            if check {
                res = sc.residuals(&self.x, &self.z, &self.y, s);
                if res.prim <= res.eps_prim && res.dual <= res.eps_dual {
                    status = QpStatus::Optimal;
                    break;
                }
                if primal_infeasible(sc, &self.y, &y_prev, s.eps_prim_inf) {
                    status = QpStatus::PrimalInfeasible;
                    break;
                }
            }
            if s.adaptive_rho && iter % s.adaptive_rho_interval == 0 {
                let new = self.proposed_rho(sc);
                if new > self.rho * s.adaptive_rho_tolerance || new < self.rho / s.adaptive_rho_tolerance {
                    self.set_rho(sc, s, new)?;
                    rho_updates += 1;
                }
            }
        }
        debug!(
            "qp: {:?} after {iters} iterations, prim {:.3e} dual {:.3e}, rho {:.3e} ({rho_updates} updates)",
            status, res.prim, res.dual, self.rho
        );
        Ok(QpSolution {
            x: sc.unscale_x(&self.x),
            y: sc.unscale_y(&self.y),
            status,
            iterations: iters,
            prim_res: res.prim,
            dual_res: res.dual,
            objective: 0.0,
            polished: false,
            rho_updates,
            rho: self.rho,
        })
    }

    /// Penalty balancing the normalized scaled residuals.
    fn proposed_rho(&self, sc: &Scaled) -> f64 {
        let mut ax = vec![0.0; sc.m];
        sc.a.mul(&self.x, &mut ax);
        let mut prim: f64 = 0.0;
        for i in 0..sc.m {
            prim = prim.max((ax[i] - self.z[i]).abs());
        }
        let prim_norm = prim / norm_inf(&ax).max(norm_inf(&self.z)).max(1e-10);
        let mut px = vec![0.0; sc.n];
        sc.p.sym_upper_mul(&self.x, &mut px);
        let mut aty = vec![0.0; sc.n];
        sc.at.mul(&self.y, &mut aty);
        let mut dual: f64 = 0.0;
        for j in 0..sc.n {
            dual = dual.max((px[j] + sc.q[j] + aty[j]).abs());
        }
        let dual_norm = dual / norm_inf(&px).max(norm_inf(&aty)).max(norm_inf(&sc.q)).max(1e-10);
        (self.rho * (prim_norm / dual_norm.max(1e-30)).sqrt()).clamp(RHO_MIN, RHO_MAX)
    }
}

fn rho_vector(sc: &Scaled, rho: f64, eq_scale: f64) -> Vec<f64> {
    (0..sc.m)
        .map(|i| {
            if sc.is_free(i) {
                RHO_MIN
            } else if sc.is_equality(i) {
                (rho * eq_scale).min(RHO_MAX)
            } else {
                rho
            }
        })
        .collect()
}

/// Farkas certificate from the dual increment: `Aᵀδy ≈ 0` while
/// `uᵀδy⁺ + lᵀδy⁻ < 0`.
fn primal_infeasible(sc: &Scaled, y: &[f64], y_prev: &[f64], eps: f64) -> bool {
    let m = sc.m;
    if m == 0 {
        return false;
    }
    let mut dy: Vec<f64> = (0..m)
        .map(|i| {
            let d = (y[i] - y_prev[i]) * sc.e[i];
            if (sc.u[i] == f64::INFINITY && d > 0.0) || (sc.l[i] == f64::NEG_INFINITY && d < 0.0) {
                0.0
            } else {
                d
            }
        })
        .collect();
    let norm = norm_inf(&dy);
    if norm <= eps {
        return false;
    }
    dy.iter_mut().for_each(|v| *v /= norm);
    let mut support = 0.0;
    for i in 0..m {
        let (l, u) = (sc.l[i] * sc.einv[i], sc.u[i] * sc.einv[i]);
        if dy[i] > 0.0 {
            support += u * dy[i];
        } else if dy[i] < 0.0 {
            support += l * dy[i];
        }
    }
    if support >= -eps {
        return false;
    }
    // Aᵀδy in unscaled units: D⁻¹ Āᵀ E⁻¹ δy
    let scaled: Vec<f64> = (0..m).map(|i| dy[i] * sc.einv[i]).collect();
    let mut aty = vec![0.0; sc.n];
    sc.at.mul(&scaled, &mut aty);
    (0..sc.n).all(|j| (aty[j] * sc.dinv[j]).abs() <= eps)
}

struct Polished {
    x: Vec<f64>,
    y: Vec<f64>,
    prim_res: f64,
    dual_res: f64,
    eps_prim: f64,
    eps_dual: f64,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Active {
    No,
    Lower,
    Upper,
    Both,
}

/// Active-set refinement: solve the equality-constrained QP on the guessed
/// active rows, then repair the guess (drop rows with wrong-sign
/// multipliers, add violated rows) for a few rounds.
fn polish(sc: &Scaled, s: &QpSettings, admm: &Admm) -> Result<Option<Polished>> {
    let n = sc.n;
    let m = sc.m;
    let mut ax0 = vec![0.0; m];
    sc.a.mul(&admm.x, &mut ax0);
    let near = |v: f64, b: f64| (v - b).abs() <= s.polish_active_tol * (1.0 + b.abs());
    let mut act: Vec<Active> = (0..m)
        .map(|i| {
            let (l, u, z, y) = (sc.l[i], sc.u[i], admm.z[i], admm.y[i]);
            if sc.is_equality(i) {
                Active::Both
            } else if l > f64::NEG_INFINITY && (z - l < -y || near(ax0[i], l)) {
                Active::Lower
            } else if u < f64::INFINITY && (u - z < y || near(ax0[i], u)) {
                Active::Upper
            } else {
                Active::No
            }
        })
        .collect();
    let at = &sc.at;
    let mut best: Option<(Vec<f64>, Vec<f64>, f64, f64)> = None;
    for round in 0..s.polish_rounds.max(1) {
        let rows: Vec<usize> = (0..m).filter(|&i| act[i] != Active::No).collect();
        let target: Vec<f64> = rows
            .iter()
            .map(|&i| match act[i] {
                Active::Upper => sc.u[i],
                _ => sc.l[i],
            })
            .collect();
        // reduced constraint matrix
        let mut t = Vec::new();
        for (r, &i) in rows.iter().enumerate() {
            for k in at.colptr[i]..at.colptr[i + 1] {
                t.push((r, at.rowind[k], at.values[k]));
            }
        }
        let ar = CscMatrix::from_triplets(rows.len(), n, &t);
        let delta = s.polish_delta;
        let mut kkt = Kkt::new(&sc.p, &ar, delta, &vec![delta; rows.len()])?;
        let mut rhs: Vec<f64> = sc.q.iter().map(|v| -v).chain(target.iter().copied()).collect();
        let mut sol = rhs.clone();
        kkt.solve(&mut sol);
        // iterative refinement against the unregularized system
        let art = ar.transpose();
        for _ in 0..s.polish_refine_iters {
            let mut r = kkt_residual(&sc.p, &ar, &art, &sol, &rhs);
            if norm_inf(&r) < 1e-14 {
                break;
            }
            kkt.solve(&mut r);
            for (v, d) in sol.iter_mut().zip(&r) {
                *v += d;
            }
        }
        rhs.clear();
        let x = sol[..n].to_vec();
        let mut y = vec![0.0; m];
        for (r, &i) in rows.iter().enumerate() {
            y[i] = sol[n + r];
        }

        let mut ax = vec![0.0; m];
        sc.a.mul(&x, &mut ax);
        let z: Vec<f64> = (0..m).map(|i| ax[i].clamp(sc.l[i], sc.u[i])).collect();
        let res = sc.residuals(&x, &z, &y, s);
        let yu = sc.unscale_y(&y);
        let wrong_sign = (0..m)
            .map(|i| match act[i] {
                Active::Lower => yu[i].max(0.0),
                Active::Upper => (-yu[i]).max(0.0),
                _ => 0.0,
            })
            .fold(0.0, f64::max);
        let score = (res.prim / res.eps_prim).max((res.dual + wrong_sign) / res.eps_dual);
        // add violated rows first; drop wrong-signed ones only once feasible
        let mut changed = false;
        for i in 0..m {
            if act[i] == Active::No {
                let tol = 1e-9 * (1.0 + ax[i].abs());
                if ax[i] < sc.l[i] - tol {
                    act[i] = Active::Lower;
                    changed = true;
                } else if ax[i] > sc.u[i] + tol {
                    act[i] = Active::Upper;
                    changed = true;
                }
            }
        }
        if !changed {
            for i in 0..m {
                match act[i] {
                    Active::Lower if y[i] > s.polish_sign_tol => {
                        act[i] = Active::No;
                        changed = true;
                    }
                    Active::Upper if y[i] < -s.polish_sign_tol => {
                        act[i] = Active::No;
                        changed = true;
                    }
                    _ => {}
                }
            }
        }
        debug!("polish round {round}: {} active rows, score {score:e}", rows.len());
        if best.as_ref().is_none_or(|b| score < b.2) {
            best = Some((x, y, score, res.dual + wrong_sign));
        }
        if !changed {
            break;
        }
    }
    let Some((x, y, _, dual)) = best else { return Ok(None) };
    let mut ax = vec![0.0; m];
    sc.a.mul(&x, &mut ax);
    let z: Vec<f64> = (0..m).map(|i| ax[i].clamp(sc.l[i], sc.u[i])).collect();
    let res = sc.residuals(&x, &z, &y, s);
    Ok(Some(Polished {
        x: sc.unscale_x(&x),
        y: sc.unscale_y(&y),
        prim_res: res.prim,
        // includes multipliers of the wrong sign on active rows
        dual_res: dual,
        eps_prim: res.eps_prim,
        eps_dual: res.eps_dual,
    }))
}

/// `rhs − [P, Aᵀ; A, 0]·sol`.
fn kkt_residual(p: &CscMatrix, a: &CscMatrix, at: &CscMatrix, sol: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = p.ncols;
    let m = a.nrows;
    let (x, y) = sol.split_at(n);
    let mut px = vec![0.0; n];
    p.sym_upper_mul(x, &mut px);
    let mut aty = vec![0.0; n];
    at.mul(y, &mut aty);
    let mut ax = vec![0.0; m];
    a.mul(x, &mut ax);
    let mut r = Vec::with_capacity(n + m);
    for j in 0..n {
        r.push(rhs[j] - px[j] - aty[j]);
    }
    for i in 0..m {
        r.push(rhs[n + i] - ax[i]);
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_places_rows_after_last_variable() {
        let a = CscMatrix::from_triplets(3, 3, &[(0, 0, 1.0), (0, 2, 1.0), (1, 0, 1.0)]);
        assert_eq!(kkt_order(3, &rows_max_col(&a)), vec![0, 4, 1, 2, 3, 5]);
    }

    #[test]
    fn scaling_equilibrates() {
        let prob = QpProblem::new(
            2,
            &[(0, 0, 1e4), (1, 1, 1e-2)],
            vec![1.0, 1.0],
            1,
            &[(0, 0, 100.0), (0, 1, 0.01)],
            vec![0.0],
            vec![1.0],
        )
        .unwrap();
        let sc = Scaled::new(&prob, 25);
        let spread = |v: &[f64]| {
            let mx = v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            let mn = v.iter().fold(f64::INFINITY, |a, b| a.min(b.abs()));
            mx / mn
        };
        assert!(spread(&sc.a.values) < spread(&prob.a.values));
        assert!(spread(&sc.p.values) < spread(&prob.p.values));
    }
}
