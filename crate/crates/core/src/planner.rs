//! Reference planning: project a balancing-authority request onto the
//! fleet's capacity set (the proposed method, cycling-aware and energy
//! neutral) or onto the plain battery envelope (the alternative method).

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::capacity::{build_omega, energy_bounds, power_bounds, ves_check, Block, CapacityParams, OmegaOptions, OmegaSystem, RowKind};
use crate::error::{Error, Result};
use crate::qp::{self, QpProblem, QpSettings, QpStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PlanMethod {
    #[default]
    Proposed,
    Alternative,
}

impl PlanMethod {
    /// Whether the plan carries the zero-net-energy row `Σ r_k = 0`.
    pub fn has_ves_row(self) -> bool {
        self == PlanMethod::Proposed
    }
}

/// Diagonal cost weights per block, in per-unit variables (`r/P_agg`,
/// `z/(N·C̄)`, fractions as they are).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub r: f64,
    pub z: f64,
    pub s_on: f64,
    pub s_off: f64,
    pub gamma_on: f64,
    pub gamma_off: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Weights {
            r: 1.0,
            z: 1e-6,
            s_on: 1e-4,
            s_off: 1e-4,
            gamma_on: 1e-4,
            gamma_off: 1e-4,
        }
    }
}

impl Weights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.r, self.z, self.s_on, self.s_off, self.gamma_on, self.gamma_off];
        if all.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Config(format!("all weights must be finite and > 0, got {all:?}")));
        }
        Ok(())
    }

    pub fn scaled(&self, f: f64) -> Weights {
        Weights {
            r: self.r * f,
            z: self.z * f,
            s_on: self.s_on * f,
            s_off: self.s_off * f,
            gamma_on: self.gamma_on * f,
            gamma_off: self.gamma_off * f,
        }
    }

    fn of(&self, b: Block) -> f64 {
        match b {
            Block::R => self.r,
            Block::Z => self.z,
            Block::SOn => self.s_on,
            Block::SOff => self.s_off,
            Block::GammaOn => self.gamma_on,
            Block::GammaOff => self.gamma_off,
            Block::NOn => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanProblem {
    /// Requested deviation `r^BA`, kW, one entry per step.
    pub ba_signal: Vec<f64>,
    pub cap: CapacityParams,
    pub weights: Weights,
    /// Aggregate thermal energy at the start of step 0, kWh.
    pub z0: f64,
    /// Fraction on before step 0.
    pub n0: f64,
    pub options: OmegaOptions,
    pub solver: QpSettings,
}

impl PlanProblem {
    /// Starts from `z = 0` and the baseline duty ratio.
    pub fn new(ba_signal: Vec<f64>, cap: CapacityParams) -> Self {
        let n0 = cap.baseline_fraction();
        PlanProblem {
            ba_signal,
            cap,
            weights: Weights::default(),
            z0: 0.0,
            n0,
            options: OmegaOptions::default(),
            solver: QpSettings::default(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.ba_signal.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        self.cap.validate()?;
        if self.ba_signal.is_empty() {
            return Err(Error::Config("empty reference request".into()));
        }
        if self.ba_signal.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("non-finite reference request".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSolution {
    pub method: PlanMethod,
    pub r_ba: Vec<f64>,
    /// Planned reference, kW.
    pub reference: Vec<f64>,
    /// Thermal energy at the start of each step, kWh.
    pub z: Vec<f64>,
    /// Thermal energy after the last step, kWh.
    pub z_end: f64,
    pub n_on: Vec<f64>,
    pub s_on: Vec<f64>,
    pub s_off: Vec<f64>,
    pub gamma_on: Vec<f64>,
    pub gamma_off: Vec<f64>,
    /// Weighted squared distance to the request, per-unit.
    pub objective: f64,
    pub status: QpStatus,
    pub iterations: usize,
    pub prim_res: f64,
    pub dual_res: f64,
    pub polished: bool,
    /// `(T_s/N_t)·|Σ r_k|`, kWh.
    pub ves_residual_kwh: f64,
    /// Largest violation of any row of the constraint set, physical units.
    pub max_row_violation: f64,
    /// Same, with each row divided by its largest per-unit coefficient, the
    /// measure the solver tolerance applies to.
    pub max_row_violation_pu: f64,
    pub weights: Weights,
    pub tau_ba: usize,
}

pub const PLAN_COLUMNS: [&str; 9] = [
    "k", "r_ba_kw", "r_kw", "z_kwh", "n_on", "s_on", "s_off", "gamma_on", "gamma_off",
];

impl PlanSolution {
    pub fn horizon(&self) -> usize {
        self.reference.len()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(PLAN_COLUMNS)?;
        for k in 0..self.horizon() {
            out.write_record([
                k.to_string(),
                self.r_ba[k].to_string(),
                self.reference[k].to_string(),
                self.z[k].to_string(),
                self.n_on[k].to_string(),
                self.s_on[k].to_string(),
                self.s_off[k].to_string(),
                self.gamma_on[k].to_string(),
                self.gamma_off[k].to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::io("plan", e))?;
        Ok(())
    }

    /// Summary without the trajectories.
    pub fn summary(&self) -> serde_json::Value {
        serde_json::json!({
            "method": self.method,
            "status": self.status,
            "objective": self.objective,
            "iterations": self.iterations,
            "prim_res": self.prim_res,
            "dual_res": self.dual_res,
            "polished": self.polished,
            "ves_residual_kwh": self.ves_residual_kwh,
            "max_row_violation": self.max_row_violation,
            "max_row_violation_pu": self.max_row_violation_pu,
            "weights": self.weights,
            "tau_ba": self.tau_ba,
            "horizon": self.horizon(),
        })
    }
}

/// Per-unit scale of each variable block.
fn block_scale(cap: &CapacityParams, b: Block) -> f64 {
    match b {
        Block::R => cap.p_agg,
        Block::Z if cap.c_bar_agg > 0.0 => cap.c_bar_agg,
        _ => 1.0,
    }
}

/// Assembles the per-unit QP for a constraint set and request.
fn assemble(om: &OmegaSystem, r_ba: &[f64], w: &Weights) -> Result<(QpProblem, Vec<f64>)> {
    let lay = om.layout;
    let cap = &om.cap;
    let nv = lay.n_vars();
    let mut scale = vec![1.0; nv];
    for k in 0..lay.horizon {
        for b in Block::ALL {
            scale[lay.index(b, k)] = block_scale(cap, b);
        }
    }
    let mut p = Vec::with_capacity(nv);
    let mut q = vec![0.0; nv];
    for k in 0..lay.horizon {
        for b in Block::ALL {
            let j = lay.index(b, k);
            let wb = w.of(b);
            if wb > 0.0 {
                p.push((j, j, 2.0 * wb));
            }
        }
        q[lay.index(Block::R, k)] = -2.0 * w.r * r_ba[k] / cap.p_agg;
    }
    let mut a = Vec::new();
    let mut l = Vec::with_capacity(om.n_rows());
    let mut u = Vec::with_capacity(om.n_rows());
    for (i, row) in om.rows.iter().enumerate() {
        let terms: Vec<(usize, f64)> = row.terms.iter().map(|&(j, v)| (j, v * scale[j])).collect();
        let rs = terms.iter().fold(0.0f64, |m, t| m.max(t.1.abs())).max(f64::MIN_POSITIVE);
        for (j, v) in terms {
            a.push((i, j, v / rs));
        }
        l.push(row.lower / rs);
        u.push(row.upper / rs);
    }
    let prob = QpProblem::new(nv, &p, q, om.n_rows(), &a, l, u)?;
    Ok((prob, scale))
}

fn solve_plan(problem: &PlanProblem, method: PlanMethod, options: OmegaOptions) -> Result<PlanSolution> {
    problem.validate()?;
    let nt = problem.horizon();
    let cap = problem.cap;
    let om = build_omega(&cap, nt, problem.z0, problem.n0, options)?;
    let (qp_prob, scale) = assemble(&om, &problem.ba_signal, &problem.weights)?;
    let sol = qp::solve(&qp_prob, &problem.solver)?;
    if sol.status == QpStatus::PrimalInfeasible {
        return Err(Error::Invariant(
            "planning problem reported infeasible although its constraint set is nonempty".into(),
        ));
    }
    let x: Vec<f64> = sol.x.iter().zip(&scale).map(|(v, s)| v * s).collect();
    let lay = om.layout;
    let reference = lay.extract(&x, Block::R);
    let z_after = lay.extract(&x, Block::Z);
    let mut z = Vec::with_capacity(nt);
    z.push(problem.z0);
    z.extend_from_slice(&z_after[..nt - 1]);
    let r_ba_pu: f64 = problem.ba_signal.iter().map(|v| (v / cap.p_agg).powi(2)).sum();
    let objective = (sol.objective + problem.weights.r * r_ba_pu).max(0.0);
    Ok(PlanSolution {
        method,
        r_ba: problem.ba_signal.clone(),
        ves_residual_kwh: ves_check(&reference, cap.coef.t_s_hours),
        reference,
        z,
        z_end: z_after[nt - 1],
        n_on: lay.extract(&x, Block::NOn),
        s_on: lay.extract(&x, Block::SOn),
        s_off: lay.extract(&x, Block::SOff),
        gamma_on: lay.extract(&x, Block::GammaOn),
        gamma_off: lay.extract(&x, Block::GammaOff),
        objective,
        status: sol.status,
        iterations: sol.iterations,
        prim_res: sol.prim_res,
        dual_res: sol.dual_res,
        polished: sol.polished,
        max_row_violation: om.max_violation(&x),
        max_row_violation_pu: om
            .rows
            .iter()
            .map(|row| {
                let rs = row.terms.iter().fold(0.0f64, |m, &(j, v)| m.max((v * scale[j]).abs()));
                row.violation(&x) / rs.max(f64::MIN_POSITIVE)
            })
            .fold(0.0, f64::max),
        weights: problem.weights,
        tau_ba: cap.tau_ba,
    })
}

/// Cycling-aware, energy-neutral projection of the request.
pub fn plan_proposed(problem: &PlanProblem) -> Result<PlanSolution> {
    solve_plan(problem, PlanMethod::Proposed, problem.options)
}

/// Projection onto `|z| ≤ N·C̄` and `-P̄ ≤ r ≤ P_agg - P̄` only.
pub fn plan_alternative(problem: &PlanProblem) -> Result<PlanSolution> {
    let options = OmegaOptions {
        cycling_constraints: false,
        ves_constraint: false,
        enforce_nonneg_switches: false,
    };
    solve_plan(problem, PlanMethod::Alternative, options)
}

pub fn plan(problem: &PlanProblem, method: PlanMethod) -> Result<PlanSolution> {
    match method {
        PlanMethod::Proposed => plan_proposed(problem),
        PlanMethod::Alternative => plan_alternative(problem),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExistenceReport {
    pub strictly_convex: bool,
    pub bounds_ordered: bool,
    pub grid_points: usize,
    pub zero_feasible: bool,
    pub zero_max_violation: f64,
}

impl ExistenceReport {
    pub fn passed(&self) -> bool {
        self.strictly_convex && self.bounds_ordered && self.zero_feasible
    }
}

/// Checks the ingredients of existence and uniqueness of the planning
/// solution: positive weights, ordered bounds over a grid of stuck fractions
/// with `γ_on + γ_off ≤ 1`, and feasibility of the all-baseline trajectory.
pub fn existence_witness(cap: &CapacityParams, horizon: usize, weights: &Weights) -> Result<ExistenceReport> {
    let strictly_convex = weights.validate().is_ok();
    let steps = 40;
    let mut grid_points = 0;
    let mut bounds_ordered = true;
    for i in 0..=steps {
        for j in 0..=(steps - i) {
            let (g_on, g_off) = (i as f64 / steps as f64, j as f64 / steps as f64);
            grid_points += 1;
            let (lo, hi) = power_bounds(g_on, g_off)?;
            let (elo, ehi) = energy_bounds(g_on, g_off, cap);
            let tol = 1e-12 * (1.0 + cap.c_bar_agg);
            bounds_ordered &= lo <= hi + 1e-12 && elo <= ehi + tol;
        }
    }
    let om = build_omega(cap, horizon, 0.0, cap.baseline_fraction(), OmegaOptions::default())?;
    let x = om.baseline_point();
    let lay = om.layout;
    let is_zero = (0..horizon).all(|k| {
        [Block::R, Block::Z, Block::SOn, Block::SOff, Block::GammaOn, Block::GammaOff]
            .iter()
            .all(|&b| x[lay.index(b, k)] == 0.0)
    });
    let zero_max_violation = om
        .rows
        .iter()
        .map(|r| {
            let s = r.terms.iter().fold(1.0f64, |m, t| m.max(t.1.abs()));
            r.violation(&x) / s
        })
        .fold(0.0, f64::max);
    Ok(ExistenceReport {
        strictly_convex,
        bounds_ordered,
        grid_points,
        zero_feasible: is_zero && zero_max_violation <= 1e-12,
        zero_max_violation,
    })
}

/// Fraction-on recursion residual `max |n_k - n_{k-1} - s_on_k + s_off_k|`.
pub fn fraction_on_residual(plan: &PlanSolution, n0: f64) -> f64 {
    let mut prev = n0;
    let mut worst: f64 = 0.0;
    for k in 0..plan.horizon() {
        worst = worst.max((plan.n_on[k] - prev - plan.s_on[k] + plan.s_off[k]).abs());
        prev = plan.n_on[k];
    }
    worst
}

/// Rows of a kind in the constraint set that bind (within `tol`) at the plan.
pub fn active_rows(om: &OmegaSystem, x: &[f64], kind: RowKind, tol: f64) -> usize {
    om.rows_of(kind)
        .filter(|r| {
            let v = r.eval(x);
            (v - r.lower).abs() <= tol || (v - r.upper).abs() <= tol
        })
        .count()
}
