//! Independent re-derivation of a run's aggregates from raw device data,
//! plus the bookkeeping identities every trace must satisfy.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fleet::{FleetHistory, FleetTrace};
use crate::tcl::{cycling_violations, thermal_energy_of, Mode, QosSet, TclParams};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub steps: usize,
    /// Rows where `on[k] != on[k-1] + s_on[k] - s_off[k]`.
    pub fraction_on_identity_failures: usize,
    /// Rows where the stuck counts differ from the windowed switch sums
    /// `gamma[k] = gamma[k-1] + s[k] - s[k-tau]`.
    pub stuck_recursion_failures: usize,
    /// Rows whose forced switches exceed total switches.
    pub decomposition_failures: usize,
    pub range_failures: usize,
    /// Largest `|y - (P_agg·n_on - P̄)|`, kW.
    pub deviation_identity_residual: f64,
    /// `(T_s/N_t)·|Σ y_k|`, kWh.
    pub energy_lhs: f64,
    /// `N·Ẽ`, kWh.
    pub energy_rhs: f64,
    /// Device-samples outside the deadband (from the trace's diagnostics, or
    /// from device histories when available).
    pub temperature_violations: usize,
    /// Devices with at least one window of `tau_tcl` transitions holding more
    /// than one switch. `None` when no device histories were supplied.
    pub devices_cycling_too_fast: Option<usize>,
    /// Windowed-count violations summed over rows (from the trace).
    pub cycling_window_violations: usize,
    pub recomputed_from_devices: bool,
}

impl AuditReport {
    pub fn bookkeeping_ok(&self) -> bool {
        self.fraction_on_identity_failures == 0
            && self.decomposition_failures == 0
            && self.range_failures == 0
            && self.deviation_identity_residual <= 1e-6
    }

    pub fn qos_ok(&self) -> bool {
        self.temperature_violations == 0
            && self.cycling_window_violations == 0
            && self.devices_cycling_too_fast.unwrap_or(0) == 0
    }

    pub fn energy_ok(&self) -> bool {
        self.energy_lhs <= self.energy_rhs
    }
}

/// Checks the identities that hold for any trace, and, given device
/// histories, recomputes every aggregate from scratch and compares.
///
/// A mismatch between the incrementally maintained trace and the
/// recomputation is an internal-consistency error.
pub fn aggregate_audit(
    trace: &FleetTrace,
    history: Option<&FleetHistory>,
    params: &TclParams,
    qos: &QosSet,
) -> Result<AuditReport> {
    let c = trace.constants;
    let n = c.n_devices;
    let tau = c.tau_tcl;

    let mut fraction_on_identity_failures = 0;
    let mut stuck_recursion_failures = 0;
    let mut decomposition_failures = 0;
    let mut range_failures = 0;
    let mut deviation_residual: f64 = 0.0;
    let mut prev_on = trace.initial_on as i64;
    let (mut window_on, mut window_off) = (0i64, 0i64);
    for (k, r) in trace.rows.iter().enumerate() {
        if r.k != k {
            return Err(Error::Consistency(format!("row {k} labelled {}", r.k)));
        }
        if r.on as i64 != prev_on + r.s_on as i64 - r.s_off as i64 {
            fraction_on_identity_failures += 1;
        }
        prev_on = r.on as i64;

        window_on += r.s_on as i64;
        window_off += r.s_off as i64;
        if k >= tau {
            window_on -= trace.rows[k - tau].s_on as i64;
            window_off -= trace.rows[k - tau].s_off as i64;
        }
        if window_on != r.stuck_on as i64 || window_off != r.stuck_off as i64 {
            stuck_recursion_failures += 1;
        }

        if r.d_on > r.s_on || r.d_off > r.s_off {
            decomposition_failures += 1;
        }
        let counts = [r.on, r.s_on, r.s_off, r.stuck_on, r.stuck_off, r.d_on, r.d_off];
        if counts.iter().any(|&x| x > n) || r.stuck_on + r.stuck_off > n {
            range_failures += 1;
        }
        deviation_residual = deviation_residual.max((r.y_kw - c.deviation(r.on)).abs());
    }

    let t_s_hours = c.t_s_minutes / 60.0;
    let energy_lhs = if trace.is_empty() {
        0.0
    } else {
        t_s_hours / trace.len() as f64 * trace.rows.iter().map(|r| r.y_kw).sum::<f64>().abs()
    };

    let mut report = AuditReport {
        steps: trace.len(),
        fraction_on_identity_failures,
        stuck_recursion_failures,
        decomposition_failures,
        range_failures,
        deviation_identity_residual: deviation_residual,
        energy_lhs,
        energy_rhs: n as f64 * qos.e_tilde,
        temperature_violations: trace.rows.iter().map(|r| r.temperature_violations).sum(),
        devices_cycling_too_fast: None,
        cycling_window_violations: trace.rows.iter().map(|r| r.cycling_violations).sum(),
        recomputed_from_devices: false,
    };

    if let Some(h) = history {
        recompute(trace, h, params, qos, &mut report)?;
    }
    Ok(report)
}

/// Stuck flag of one device at row `k`: exactly one switch among the
/// transitions into rows `k-tau+1 ..= k`, reported with the current mode.
pub fn stuck_flag(initial: Mode, modes: &[Mode], k: usize, tau: usize) -> Option<Mode> {
    let mode_at = |i: isize| -> Mode {
        if i < 0 {
            initial
        } else {
            modes[i as usize]
        }
    };
    let switches = (0..tau)
        .filter(|&i| {
            let row = k as isize - i as isize;
            mode_at(row) != mode_at(row - 1)
        })
        .count();
    (switches == 1).then(|| modes[k])
}

fn recompute(
    trace: &FleetTrace,
    h: &FleetHistory,
    params: &TclParams,
    qos: &QosSet,
    report: &mut AuditReport,
) -> Result<()> {
    let n = trace.constants.n_devices;
    let tau = trace.constants.tau_tcl;
    if h.modes.len() != n {
        return Err(Error::Consistency(format!(
            "history holds {} devices, trace {n}",
            h.modes.len()
        )));
    }
    let tol = 1e-12 * n as f64 * (1.0 + qos.delta * params.c_th / params.cop);
    for (k, r) in trace.rows.iter().enumerate() {
        let (mut on, mut s_on, mut s_off, mut g_on, mut g_off, mut d_on, mut d_off) =
            (0, 0, 0, 0, 0, 0, 0);
        let mut z = 0.0;
        for j in 0..n {
            let m = h.modes[j][k];
            let prev = if k == 0 { h.initial_modes[j] } else { h.modes[j][k - 1] };
            on += usize::from(m.is_on());
            if m != prev {
                let forced = h.forced[j][k];
                match m {
                    Mode::On => {
                        s_on += 1;
                        d_on += usize::from(forced);
                    }
                    Mode::Off => {
                        s_off += 1;
                        d_off += usize::from(forced);
                    }
                }
            } else if h.forced[j][k] {
                return Err(Error::Consistency(format!(
                    "device {j} flagged forced at row {k} without switching"
                )));
            }
            match stuck_flag(h.initial_modes[j], &h.modes[j], k, tau) {
                Some(Mode::On) => g_on += 1,
                Some(Mode::Off) => g_off += 1,
                None => {}
            }
            z += thermal_energy_of(h.temps[j][k], params, qos);
        }
        let got = (r.on, r.s_on, r.s_off, r.stuck_on, r.stuck_off, r.d_on, r.d_off);
        let want = (on, s_on, s_off, g_on, g_off, d_on, d_off);
        if got != want {
            return Err(Error::Consistency(format!(
                "row {k}: trace counts {got:?} vs recomputed {want:?}"
            )));
        }
        if (r.z_kwh - z).abs() > tol {
            return Err(Error::Consistency(format!(
                "row {k}: trace z {} vs recomputed {z}",
                r.z_kwh
            )));
        }
    }

    let mut too_fast = 0;
    let mut temperature = 0;
    for j in 0..n {
        let dev = h.device(j, tau);
        if cycling_violations(&dev.modes, tau) > 0 {
            too_fast += 1;
        }
        temperature += dev.temps.iter().filter(|t| !qos.contains(**t)).count();
    }
    report.devices_cycling_too_fast = Some(too_fast);
    report.temperature_violations = temperature;
    report.recomputed_from_devices = true;
    Ok(())
}
