//! Aggregate capacity constraint set of a fleet with cycling constraints:
//! stuck-fraction dynamics, power bounds, cycling-aware thermal-energy
//! bounds and the zero-net-energy row, laid out as a sparse linear system
//! over a planning horizon.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fleet::FleetConstants;
use crate::tcl::DerivedCoefficients;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityParams {
    pub n_devices: usize,
    /// Cycling parameter assumed by the planner, samples.
    pub tau_ba: usize,
    pub coef: DerivedCoefficients,
    pub p_agg: f64,
    pub p_base_agg: f64,
    /// `N·C̄`, kWh.
    pub c_bar_agg: f64,
}

impl CapacityParams {
    pub fn new(constants: &FleetConstants, coef: DerivedCoefficients, tau_ba: usize) -> Result<Self> {
        let cap = CapacityParams {
            n_devices: constants.n_devices,
            tau_ba,
            coef,
            p_agg: constants.p_agg,
            p_base_agg: constants.p_base_agg,
            c_bar_agg: constants.n_devices as f64 * coef.c_bar,
        };
        cap.validate()?;
        Ok(cap)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau_ba < 1 {
            return Err(Error::ParameterDomain("tau_ba must be >= 1".into()));
        }
        if self.n_devices < 1 {
            return Err(Error::ParameterDomain("n_devices must be >= 1".into()));
        }
        if !(self.p_agg > 0.0 && self.p_base_agg > 0.0 && self.p_base_agg < self.p_agg) {
            return Err(Error::ParameterDomain(format!(
                "need 0 < P̄ < P_agg, got {} and {}",
                self.p_base_agg, self.p_agg
            )));
        }
        if !(self.c_bar_agg >= 0.0) {
            return Err(Error::ParameterDomain("N·C̄ must be >= 0".into()));
        }
        Ok(())
    }

    pub fn baseline_fraction(&self) -> f64 {
        self.p_base_agg / self.p_agg
    }

    /// Reference range `[-P̄, P_agg - P̄]`, kW.
    pub fn r_range(&self) -> (f64, f64) {
        (-self.p_base_agg, self.p_agg - self.p_base_agg)
    }
}

/// One step of the stuck-fraction recursion
/// `γ_k = γ_{k-1} + s_{k-1} - s_{k-1-τ}`.
///
/// `window` holds switch fractions newest first: `window[0] = s_{k-1}`,
/// `window[τ] = s_{k-1-τ}`. Missing entries are switches before the start
/// of the run and count as zero.
pub fn stuck_step(gamma_prev: f64, window: &[f64], tau_ba: usize) -> Result<f64> {
    if let Some(s) = window.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::ParameterDomain(format!("switch fraction {s} outside [0, 1]")));
    }
    let newest = window.first().copied().unwrap_or(0.0);
    let expiring = window.get(tau_ba).copied().unwrap_or(0.0);
    let g = gamma_prev + newest - expiring;
    if !(-1e-12..=1.0 + 1e-12).contains(&g) {
        return Err(Error::Invariant(format!("stuck fraction {g} outside [0, 1]")));
    }
    Ok(g)
}

/// Bounds on the fraction on at `k` given stuck fractions at `k-1`.
pub fn power_bounds(gamma_on_prev: f64, gamma_off_prev: f64) -> Result<(f64, f64)> {
    if gamma_on_prev + gamma_off_prev > 1.0 + 1e-12 {
        return Err(Error::InfeasibleState {
            gamma_on: gamma_on_prev,
            gamma_off: gamma_off_prev,
        });
    }
    Ok((gamma_on_prev, 1.0 - gamma_off_prev))
}

/// Worst-case thermal-energy bounds `(C̃-, C̃+)`, kWh.
pub fn energy_bounds(gamma_on: f64, gamma_off: f64, cap: &CapacityParams) -> (f64, f64) {
    (
        -cap.c_bar_agg * (1.0 - 2.0 * gamma_off),
        cap.c_bar_agg * (1.0 - 2.0 * gamma_on),
    )
}

/// `(T_s/N_t)·|Σ r_k|`, kWh.
pub fn ves_check(reference: &[f64], t_s_hours: f64) -> f64 {
    if reference.is_empty() {
        return 0.0;
    }
    t_s_hours / reference.len() as f64 * reference.iter().sum::<f64>().abs()
}

/// Variable blocks of the per-step decision vector. Variables are laid out
/// time-major: step `k` occupies `k·BLOCKS.len() ..`, in this order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    /// Reference `r_k`, kW.
    R,
    /// Fraction on `n_k`.
    NOn,
    SOn,
    SOff,
    GammaOn,
    GammaOff,
    /// Thermal energy `z_{k+1}` at the end of step `k`, kWh.
    Z,
}

impl Block {
    pub const ALL: [Block; 7] = [
        Block::R,
        Block::NOn,
        Block::SOn,
        Block::SOff,
        Block::GammaOn,
        Block::GammaOff,
        Block::Z,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Block::R => "r",
            Block::NOn => "n_on",
            Block::SOn => "s_on",
            Block::SOff => "s_off",
            Block::GammaOn => "gamma_on",
            Block::GammaOff => "gamma_off",
            Block::Z => "z",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub horizon: usize,
}

impl Layout {
    pub const STRIDE: usize = Block::ALL.len();

    pub fn n_vars(&self) -> usize {
        self.horizon * Self::STRIDE
    }

    pub fn index(&self, block: Block, k: usize) -> usize {
        debug_assert!(k < self.horizon);
        k * Self::STRIDE + block as usize
    }

    pub fn extract(&self, x: &[f64], block: Block) -> Vec<f64> {
        (0..self.horizon).map(|k| x[self.index(block, k)]).collect()
    }
}

/// What a constraint row expresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    Battery,
    Coupling,
    FractionOn,
    StuckOn,
    StuckOff,
    PowerLower,
    PowerUpper,
    EnergyUpper,
    EnergyLower,
    Ves,
    SwitchNonneg,
    GammaRange,
    ZRange,
    RRange,
}

/// One sparse linear row `lower ≤ Σ coef·x ≤ upper` in physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub kind: RowKind,
    pub step: usize,
    pub terms: Vec<(usize, f64)>,
    pub lower: f64,
    pub upper: f64,
}

impl Row {
    pub fn is_equality(&self) -> bool {
        self.lower == self.upper
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates the row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let v = self.eval(x);
        (self.lower - v).max(v - self.upper).max(0.0)
    }
}

/// Which optional rows to emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OmegaOptions {
    /// Stuck recursions, power bounds and cycling-aware energy bounds. When
    /// off, only `|z| ≤ N·C̄` and the reference range remain.
    pub cycling_constraints: bool,
    pub ves_constraint: bool,
    pub enforce_nonneg_switches: bool,
}

impl Default for OmegaOptions {
    fn default() -> Self {
        OmegaOptions {
            cycling_constraints: true,
            ves_constraint: true,
            enforce_nonneg_switches: true,
        }
    }
}

/// The constraint set over a horizon in physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaSystem {
    pub layout: Layout,
    pub cap: CapacityParams,
    pub options: OmegaOptions,
    pub z0: f64,
    pub n0: f64,
    pub rows: Vec<Row>,
}

/// Builds the constraint set for `horizon` steps from initial thermal energy
/// `z0` (kWh) and fraction on `n0` before step 0. Nothing has switched
/// before step 0.
pub fn build_omega(
    cap: &CapacityParams,
    horizon: usize,
    z0: f64,
    n0: f64,
    options: OmegaOptions,
) -> Result<OmegaSystem> {
    cap.validate()?;
    if horizon < 1 {
        return Err(Error::ParameterDomain("horizon must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&n0) || !z0.is_finite() {
        return Err(Error::ParameterDomain(format!("bad initial state z0 {z0}, n0 {n0}")));
    }
    let lay = Layout { horizon };
    let ix = |b: Block, k: usize| lay.index(b, k);
    let a = cap.coef.a_bar;
    let b = cap.coef.b_coef;
    let tau = cap.tau_ba;
    let p_agg = cap.p_agg;
    let inf = f64::INFINITY;
    let mut rows = Vec::new();
    let mut push = |kind, step, terms: Vec<(usize, f64)>, lower, upper| {
        rows.push(Row {
            kind,
            step,
            terms,
            lower,
            upper,
        })
    };

    for k in 0..horizon {
        // z_{k+1} = ā z_k - b r_k
        let mut t = vec![(ix(Block::Z, k), 1.0), (ix(Block::R, k), b)];
        let rhs = if k == 0 {
            a * z0
        } else {
            t.push((ix(Block::Z, k - 1), -a));
            0.0
        };
        push(RowKind::Battery, k, t, rhs, rhs);

        // P_agg n_k - r_k = P̄
        push(
            RowKind::Coupling,
            k,
            vec![(ix(Block::NOn, k), p_agg), (ix(Block::R, k), -1.0)],
            cap.p_base_agg,
            cap.p_base_agg,
        );

        if !options.cycling_constraints {
            push(
                RowKind::ZRange,
                k,
                vec![(ix(Block::Z, k), 1.0)],
                -cap.c_bar_agg,
                cap.c_bar_agg,
            );
            let (lo, hi) = cap.r_range();
            push(RowKind::RRange, k, vec![(ix(Block::R, k), 1.0)], lo, hi);
            continue;
        }

        // n_k - n_{k-1} - s_on_k + s_off_k = 0
        let mut t = vec![
            (ix(Block::NOn, k), 1.0),
            (ix(Block::SOn, k), -1.0),
            (ix(Block::SOff, k), 1.0),
        ];
        let rhs = if k == 0 {
            n0
        } else {
            t.push((ix(Block::NOn, k - 1), -1.0));
            0.0
        };
        push(RowKind::FractionOn, k, t, rhs, rhs);

        // γ_k - γ_{k-1} - s_k + s_{k-τ} = 0
        for (kind, g, s) in [
            (RowKind::StuckOn, Block::GammaOn, Block::SOn),
            (RowKind::StuckOff, Block::GammaOff, Block::SOff),
        ] {
            let mut t = vec![(ix(g, k), 1.0), (ix(s, k), -1.0)];
            if k >= 1 && tau > 1 {
                t.push((ix(g, k - 1), -1.0));
                if k >= tau {
                    t.push((ix(s, k - tau), 1.0));
                }
            }
            push(kind, k, t, 0.0, 0.0);
        }

        // γ_on_{k-1} ≤ n_k ≤ 1 - γ_off_{k-1}
        if k == 0 {
            push(RowKind::PowerLower, k, vec![(ix(Block::NOn, k), 1.0)], 0.0, inf);
            push(RowKind::PowerUpper, k, vec![(ix(Block::NOn, k), 1.0)], -inf, 1.0);
        } else {
            push(
                RowKind::PowerLower,
                k,
                vec![(ix(Block::NOn, k), 1.0), (ix(Block::GammaOn, k - 1), -1.0)],
                0.0,
                inf,
            );
            push(
                RowKind::PowerUpper,
                k,
                vec![(ix(Block::NOn, k), 1.0), (ix(Block::GammaOff, k - 1), 1.0)],
                -inf,
                1.0,
            );
        }

        // -N C̄ (1 - 2γ_off_k) ≤ z_{k+1} ≤ N C̄ (1 - 2γ_on_k)
        let c = cap.c_bar_agg;
        push(
            RowKind::EnergyUpper,
            k,
            vec![(ix(Block::Z, k), 1.0), (ix(Block::GammaOn, k), 2.0 * c)],
            -inf,
            c,
        );
        push(
            RowKind::EnergyLower,
            k,
            vec![(ix(Block::Z, k), 1.0), (ix(Block::GammaOff, k), -2.0 * c)],
            -c,
            inf,
        );

        if options.enforce_nonneg_switches {
            push(RowKind::SwitchNonneg, k, vec![(ix(Block::SOn, k), 1.0)], 0.0, inf);
            push(RowKind::SwitchNonneg, k, vec![(ix(Block::SOff, k), 1.0)], 0.0, inf);
        }
        push(RowKind::GammaRange, k, vec![(ix(Block::GammaOn, k), 1.0)], 0.0, 1.0);
        push(RowKind::GammaRange, k, vec![(ix(Block::GammaOff, k), 1.0)], 0.0, 1.0);
    }

    if options.ves_constraint {
        push(
            RowKind::Ves,
            horizon - 1,
            (0..horizon).map(|k| (ix(Block::R, k), 1.0)).collect(),
            0.0,
            0.0,
        );
    }

    Ok(OmegaSystem {
        layout: lay,
        cap: *cap,
        options,
        z0,
        n0,
        rows,
    })
}

/// Block name and offsets within the time-major layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockInfo {
    pub name: String,
    pub offset: usize,
    pub stride: usize,
    pub count: usize,
}

/// JSON header accompanying the triplet export. Infinite bounds are `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletHeader {
    pub n_rows: usize,
    pub n_cols: usize,
    pub blocks: Vec<BlockInfo>,
    pub row_kinds: Vec<RowKind>,
    pub row_steps: Vec<usize>,
    pub lower: Vec<Option<f64>>,
    pub upper: Vec<Option<f64>>,
    /// Offsets of the first row of each kind.
    pub row_offsets: BTreeMap<String, usize>,
    /// Everything needed to rebuild the system exactly.
    pub system: OmegaMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaMeta {
    pub cap: CapacityParams,
    pub options: OmegaOptions,
    pub horizon: usize,
    pub z0: f64,
    pub n0: f64,
}

pub(crate) fn finite_or_none(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl OmegaSystem {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_vars(&self) -> usize {
        self.layout.n_vars()
    }

    /// Largest row violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.rows.iter().map(|r| r.violation(x)).fold(0.0, f64::max)
    }

    pub fn rows_of(&self, kind: RowKind) -> impl Iterator<Item = &Row> {
        self.rows.iter().filter(move |r| r.kind == kind)
    }

    pub fn header(&self) -> TripletHeader {
        let mut row_offsets = BTreeMap::new();
        for (i, r) in self.rows.iter().enumerate() {
            row_offsets
                .entry(serde_json::to_value(r.kind).unwrap().as_str().unwrap().to_string())
                .or_insert(i);
        }
        TripletHeader {
            n_rows: self.rows.len(),
            n_cols: self.n_vars(),
            blocks: Block::ALL
                .iter()
                .map(|&b| BlockInfo {
                    name: b.name().into(),
                    offset: b as usize,
                    stride: Layout::STRIDE,
                    count: self.layout.horizon,
                })
                .collect(),
            row_kinds: self.rows.iter().map(|r| r.kind).collect(),
            row_steps: self.rows.iter().map(|r| r.step).collect(),
            lower: self.rows.iter().map(|r| finite_or_none(r.lower)).collect(),
            upper: self.rows.iter().map(|r| finite_or_none(r.upper)).collect(),
            row_offsets,
            system: OmegaMeta {
                cap: self.cap,
                options: self.options,
                horizon: self.layout.horizon,
                z0: self.z0,
                n0: self.n0,
            },
        }
    }

    pub fn write_triplets<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["row", "col", "value"])?;
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, a) in &r.terms {
                out.serialize((i, j, a))?;
            }
        }
        out.flush().map_err(|e| Error::io("triplets", e))?;
        Ok(())
    }

    pub fn write_header<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, &self.header())?;
        Ok(())
    }

    /// Rebuilds a system from its triplet CSV and JSON header.
    pub fn read<R1: Read, R2: Read>(triplets: R1, header: R2) -> Result<Self> {
        let h: TripletHeader = serde_json::from_reader(header)?;
        let n = h.n_rows;
        if h.row_kinds.len() != n || h.row_steps.len() != n || h.lower.len() != n || h.upper.len() != n {
            return Err(Error::Problem("header row arrays disagree with n_rows".into()));
        }
        let mut rows: Vec<Row> = (0..n)
            .map(|i| Row {
                kind: h.row_kinds[i],
                step: h.row_steps[i],
                terms: Vec::new(),
                lower: h.lower[i].unwrap_or(f64::NEG_INFINITY),
                upper: h.upper[i].unwrap_or(f64::INFINITY),
            })
            .collect();
        let mut rdr = csv::Reader::from_reader(triplets);
        for rec in rdr.deserialize() {
            let (i, j, a): (usize, usize, f64) = rec?;
            if i >= n || j >= h.n_cols {
                return Err(Error::Problem(format!("triplet ({i}, {j}) out of range")));
            }
            rows[i].terms.push((j, a));
        }
        let m = h.system;
        if m.horizon * Layout::STRIDE != h.n_cols {
            return Err(Error::Problem("column count disagrees with horizon".into()));
        }
        Ok(OmegaSystem {
            layout: Layout { horizon: m.horizon },
            cap: m.cap,
            options: m.options,
            z0: m.z0,
            n0: m.n0,
            rows,
        })
    }

    /// The all-baseline trajectory: `r = 0`, `n = P̄/P_agg`, no switching
    /// after the first step, `z` decaying freely from `z0`.
    pub fn baseline_point(&self) -> Vec<f64> {
        let lay = self.layout;
        let mut x = vec![0.0; lay.n_vars()];
        let nb = self.cap.baseline_fraction();
        let mut z = self.z0;
        for k in 0..lay.horizon {
            x[lay.index(Block::NOn, k)] = nb;
            z *= self.cap.coef.a_bar;
            x[lay.index(Block::Z, k)] = z;
        }
        if self.options.cycling_constraints {
            let ds = nb - self.n0;
            let (s, g) = if ds >= 0.0 {
                (Block::SOn, Block::GammaOn)
            } else {
                (Block::SOff, Block::GammaOff)
            };
            x[lay.index(s, 0)] = ds.abs();
            for k in 0..lay.horizon.min(self.cap.tau_ba) {
                x[lay.index(g, k)] = ds.abs();
            }
        }
        x
    }
}
