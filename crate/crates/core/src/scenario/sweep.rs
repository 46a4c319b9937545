//! Parametric study over the device lockout `tau_tcl` and the planning
//! lockout `tau_ba`.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{plan_stage, request, simulate_stage, ScenarioConfig};
use crate::error::{Error, Result};
use crate::fleet::Fleet;
use crate::planner::PlanSolution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub tau_tcl: usize,
    pub tau_ba: usize,
    pub tau_tcl_min: f64,
    pub tau_ba_min: f64,
    pub s_tau: Option<f64>,
    pub d_tau: Option<usize>,
    pub tracking_error_pct: Option<f64>,
    pub error: Option<String>,
}

pub const SWEEP_COLUMNS: [&str; 6] = ["tau_tcl_min", "tau_ba_min", "s_tau", "d_tau", "tracking_error_pct", "error"];

/// Every pair with `tau_ba >= tau_tcl` (both in samples): plan with
/// `tau_ba`, track on a fleet with lockout `tau_tcl`, and measure. Plans
/// are shared between cells with the same `tau_ba`. A failing cell records
/// its error and the sweep continues.
pub fn run_sweep(base: &ScenarioConfig, tau_tcl: &[usize], tau_ba: &[usize]) -> Result<Vec<SweepCell>> {
    if tau_tcl.is_empty() || tau_ba.is_empty() {
        return Err(Error::Config("sweep lists must be nonempty".into()));
    }
    let mut base = base.clone();
    base.run.record_history = false;
    let pairs: Vec<(usize, usize)> = tau_tcl
        .iter()
        .flat_map(|&t| tau_ba.iter().filter(move |&&b| b >= t).map(move |&b| (t, b)))
        .collect();
    let mut needed: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    needed.sort_unstable();
    needed.dedup();

    // initial state is independent of tau_tcl
    let fleet = Fleet::init(&base.fleet_config())?;
    let r_ba = request(&base, &fleet)?;
    let plans: BTreeMap<usize, std::result::Result<PlanSolution, String>> = needed
        .par_iter()
        .map(|&b| {
            let mut cfg = base.clone();
            cfg.planning.tau_ba = b;
            (b, plan_stage(&cfg, &fleet, r_ba.clone()).map_err(|e| e.to_string()))
        })
        .collect();

    let t_s = base.run.t_s_minutes;
    Ok(pairs
        .par_iter()
        .map(|&(t, b)| {
            let mut cell = SweepCell {
                tau_tcl: t,
                tau_ba: b,
                tau_tcl_min: t as f64 * t_s,
                tau_ba_min: b as f64 * t_s,
                s_tau: None,
                d_tau: None,
                tracking_error_pct: None,
                error: None,
            };
            let res = plans[&b].clone().and_then(|plan| {
                let mut cfg = base.clone();
                cfg.fleet.qos.tau_tcl = t;
                cfg.planning.tau_ba = b;
                let reference = plan.reference.clone();
                simulate_stage(&cfg, &reference, Some(plan)).map_err(|e| e.to_string())
            });
            match res {
                Ok(out) => {
                    cell.s_tau = Some(out.metrics.s_tau);
                    cell.d_tau = Some(out.metrics.d_tau);
                    cell.tracking_error_pct = Some(out.metrics.tracking_error_pct);
                }
                Err(e) => cell.error = Some(e),
            }
            cell
        })
        .collect())
}

pub fn write_sweep<W: Write>(cells: &[SweepCell], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SWEEP_COLUMNS)?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for c in cells {
        out.write_record([
            c.tau_tcl_min.to_string(),
            c.tau_ba_min.to_string(),
            opt(c.s_tau.map(|v| v.to_string())),
            opt(c.d_tau.map(|v| v.to_string())),
            opt(c.tracking_error_pct.map(|v| v.to_string())),
            opt(c.error.clone()),
        ])?;
    }
    out.flush().map_err(|e| Error::io("sweep", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{execute, Preset};

    fn small() -> ScenarioConfig {
        let mut cfg = ScenarioConfig::preset(Preset::TI);
        cfg.fleet.n_devices = 300;
        cfg.run.horizon = 90;
        cfg
    }

    #[test]
    fn single_cell_matches_the_scenario() {
        let cfg = small();
        let cells = run_sweep(&cfg, &[cfg.fleet.qos.tau_tcl], &[cfg.planning.tau_ba]).unwrap();
        assert_eq!(cells.len(), 1);
        let out = execute(&cfg).unwrap();
        assert_eq!(cells[0].s_tau, Some(out.metrics.s_tau));
        assert_eq!(cells[0].d_tau, Some(out.metrics.d_tau));
        assert_eq!(cells[0].tracking_error_pct, Some(out.metrics.tracking_error_pct));
    }

    #[test]
    fn only_valid_pairs_are_run_and_written() {
        let cells = run_sweep(&small(), &[2, 4], &[2, 3, 6]).unwrap();
        let pairs: Vec<_> = cells.iter().map(|c| (c.tau_tcl, c.tau_ba)).collect();
        assert_eq!(pairs, vec![(2, 2), (2, 3), (2, 6), (4, 6)]);
        assert!(cells.iter().all(|c| c.error.is_none()));
        assert_eq!(cells[2].tau_ba_min, 12.0);
        let mut buf = Vec::new();
        write_sweep(&cells, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("tau_tcl_min,tau_ba_min,s_tau,d_tau,tracking_error_pct"));
        assert!(run_sweep(&small(), &[], &[1]).is_err());
    }

    #[test]
    fn failing_cells_are_recorded() {
        // a zero lockout is rejected by the fleet, the other cell still runs
        let cells = run_sweep(&small(), &[0, 2], &[3]).unwrap();
        assert!(cells[0].error.is_some());
        assert!(cells[1].error.is_none());
    }
}
