//! Run metrics: tracking error, switching rate `s^tau`, capacity-exceedance
//! count `d^tau` with its per-step indicator `H_k`, and the inter-switch
//! interval histogram.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::audit::stuck_flag;
use crate::error::{Error, Result};
use crate::fleet::{FleetConstants, FleetHistory, FleetTrace};
use crate::tcl::Mode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorNorm {
    /// `100·‖y − r‖₂ / ‖r‖₂`.
    #[default]
    L2Ratio,
    /// `100·rms(y − r) / P_agg`.
    RmsOverCapacity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingError {
    pub percent: f64,
    pub rms_kw: f64,
    pub norm: ErrorNorm,
    /// The reference was identically zero, so `percent` holds the RMS error
    /// in kW instead of a ratio.
    pub rms_fallback: bool,
}

pub fn tracking_error(y: &[f64], r: &[f64], norm: ErrorNorm, p_agg: f64) -> Result<TrackingError> {
    if y.len() != r.len() {
        return Err(Error::Invariant(format!(
            "tracking error over {} achieved and {} reference samples",
            y.len(),
            r.len()
        )));
    }
    let n = y.len().max(1) as f64;
    let err2: f64 = y.iter().zip(r).map(|(a, b)| (a - b) * (a - b)).sum();
    let ref2: f64 = r.iter().map(|v| v * v).sum();
    let rms = (err2 / n).sqrt();
    let (percent, rms_fallback) = match norm {
        ErrorNorm::L2Ratio if ref2 > 0.0 => (100.0 * (err2 / ref2).sqrt(), false),
        ErrorNorm::L2Ratio => (rms, true),
        ErrorNorm::RmsOverCapacity => (100.0 * rms / p_agg, false),
    };
    Ok(TrackingError {
        percent,
        rms_kw: rms,
        norm,
        rms_fallback,
    })
}

/// Mean switches per device from device histories.
pub fn s_tau_from_history(h: &FleetHistory) -> f64 {
    let n = h.modes.len();
    if n == 0 {
        return 0.0;
    }
    let total: usize = h
        .modes
        .iter()
        .zip(&h.initial_modes)
        .map(|(modes, &init)| {
            let mut prev = init;
            let mut count = 0;
            for &m in modes {
                count += usize::from(m != prev);
                prev = m;
            }
            count
        })
        .sum();
    total as f64 / n as f64
}

/// Mean switches per device from the aggregate trace.
pub fn s_tau(trace: &FleetTrace) -> f64 {
    trace.total_switches() as f64 / trace.constants.n_devices as f64
}

/// Aggregate quantities `H_k` reads at one step.
#[derive(Debug, Clone, Copy, PartialEq)]
struct HInputs {
    gamma_on_prev: f64,
    gamma_off_prev: f64,
    delta_d_prev: f64,
    y_prev: f64,
}

fn h_value(inp: HInputs, r: f64, c: &FleetConstants) -> u8 {
    let demand = (r + c.p_base_agg) / c.p_agg;
    let up = 1.0 - inp.gamma_off_prev + inp.delta_d_prev < demand && r - inp.y_prev > 0.0;
    let down = inp.gamma_on_prev - inp.delta_d_prev > demand && inp.y_prev - r > 0.0;
    u8::from(up || down)
}

/// `H_k` for every step of a run against its reference.
///
/// `H_k = 1` when the reference asks for more on-devices than can be on
/// (`1 − gamma_off_{k−1} + Δd_{k−1} < (r_k + P̄)/P_agg` while rising) or
/// fewer than must stay on (`gamma_on_{k−1} − Δd_{k−1} > (r_k + P̄)/P_agg`
/// while falling), and 0 otherwise. Stuck fractions come from row `k−1`;
/// `Δd_{k−1} = d_on − d_off` counts the forced transitions into row `k`.
/// Before row 0 nothing is stuck and `y` is the initial deviation.
pub fn h_series(trace: &FleetTrace, reference: &[f64]) -> Result<Vec<u8>> {
    check_len(trace.len(), reference.len())?;
    let c = trace.constants;
    let n = c.n_devices as f64;
    let mut prev = (0usize, 0usize, c.deviation(trace.initial_on));
    Ok(trace
        .rows
        .iter()
        .zip(reference)
        .map(|(row, &r)| {
            let inp = HInputs {
                gamma_on_prev: prev.0 as f64 / n,
                gamma_off_prev: prev.1 as f64 / n,
                delta_d_prev: (row.d_on as f64 - row.d_off as f64) / n,
                y_prev: prev.2,
            };
            prev = (row.stuck_on, row.stuck_off, row.y_kw);
            h_value(inp, r, &c)
        })
        .collect())
}

/// [`h_series`] recomputed from raw device modes and forced flags.
pub fn h_series_from_history(
    history: &FleetHistory,
    constants: &FleetConstants,
    reference: &[f64],
) -> Result<Vec<u8>> {
    let n = history.modes.len();
    if n != constants.n_devices {
        return Err(Error::Consistency(format!(
            "history holds {n} devices, constants {}",
            constants.n_devices
        )));
    }
    let steps = history.modes.first().map_or(0, Vec::len);
    check_len(steps, reference.len())?;
    let tau = constants.tau_tcl;
    let nf = n as f64;
    let mut out = Vec::with_capacity(steps);
    for (k, &r) in reference.iter().enumerate() {
        let (mut g_on, mut g_off, mut dd, mut on_prev) = (0i64, 0i64, 0i64, 0usize);
        for j in 0..n {
            let modes = &history.modes[j];
            if k > 0 {
                match stuck_flag(history.initial_modes[j], modes, k - 1, tau) {
                    Some(Mode::On) => g_on += 1,
                    Some(Mode::Off) => g_off += 1,
                    None => {}
                }
            }
            let before = if k == 0 { history.initial_modes[j] } else { modes[k - 1] };
            on_prev += usize::from(before.is_on());
            if history.forced[j][k] {
                dd += if modes[k].is_on() { 1 } else { -1 };
            }
        }
        let inp = HInputs {
            gamma_on_prev: g_on as f64 / nf,
            gamma_off_prev: g_off as f64 / nf,
            delta_d_prev: dd as f64 / nf,
            y_prev: constants.deviation(on_prev),
        };
        out.push(h_value(inp, r, constants));
    }
    Ok(out)
}

fn check_len(steps: usize, reference: usize) -> Result<()> {
    if steps != reference {
        return Err(Error::Invariant(format!(
            "{steps} simulated steps against {reference} reference samples"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalBin {
    pub minutes: f64,
    pub count: usize,
}

/// Inter-switch intervals of a run, in minutes.
pub fn interval_histogram(trace: &FleetTrace) -> Vec<IntervalBin> {
    trace
        .switch_intervals
        .iter()
        .map(|(&samples, &count)| IntervalBin {
            minutes: samples as f64 * trace.constants.t_s_minutes,
            count,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub tracking_error_pct: f64,
    pub tracking_error_rms_kw: f64,
    pub tracking_error_norm: ErrorNorm,
    pub tracking_error_rms_fallback: bool,
    pub s_tau: f64,
    pub d_tau: usize,
    pub h_series: Vec<u8>,
    pub interval_histogram: Vec<IntervalBin>,
    /// Share of inter-switch intervals lasting exactly one sample.
    pub one_sample_interval_share: f64,
    pub min_interval_minutes: Option<f64>,
    pub total_switches: usize,
    pub rejected_commands: usize,
    pub cycling_window_violations: usize,
    pub temperature_violations: usize,
    /// `(T_s/N_t)·|Σ r_k|`, kWh.
    pub reference_ves_kwh: f64,
    /// `(T_s/N_t)·|Σ y_k|`, kWh.
    pub achieved_ves_kwh: f64,
}

impl RunMetrics {
    pub fn compute(trace: &FleetTrace, reference: &[f64], norm: ErrorNorm) -> Result<Self> {
        let c = trace.constants;
        let y = trace.y();
        let te = tracking_error(&y, reference, norm, c.p_agg)?;
        let h = h_series(trace, reference)?;
        let hist = interval_histogram(trace);
        let intervals: usize = hist.iter().map(|b| b.count).sum();
        let one = trace.switch_intervals.get(&1).copied().unwrap_or(0);
        let t_s_hours = c.t_s_minutes / 60.0;
        let ves = |v: &[f64]| {
            if v.is_empty() {
                0.0
            } else {
                t_s_hours / v.len() as f64 * v.iter().sum::<f64>().abs()
            }
        };
        Ok(RunMetrics {
            tracking_error_pct: te.percent,
            tracking_error_rms_kw: te.rms_kw,
            tracking_error_norm: te.norm,
            tracking_error_rms_fallback: te.rms_fallback,
            s_tau: s_tau(trace),
            d_tau: h.iter().map(|&v| v as usize).sum(),
            h_series: h,
            one_sample_interval_share: if intervals == 0 { 0.0 } else { one as f64 / intervals as f64 },
            min_interval_minutes: hist.first().map(|b| b.minutes),
            interval_histogram: hist,
            total_switches: trace.total_switches(),
            rejected_commands: trace.total_rejected(),
            cycling_window_violations: trace.rows.iter().map(|r| r.cycling_violations).sum(),
            temperature_violations: trace.rows.iter().map(|r| r.temperature_violations).sum(),
            reference_ves_kwh: ves(reference),
            achieved_ves_kwh: ves(&y),
        })
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::{track, ControllerConfig};
    use crate::fleet::{Command, Fleet, FleetConfig, LockoutPolicy};
    use proptest::prelude::*;

    #[test]
    fn tracking_error_oracles() {
        let r = [1.0, -2.0, 3.0];
        assert_eq!(tracking_error(&r, &r, ErrorNorm::L2Ratio, 10.0).unwrap().percent, 0.0);
        let e = tracking_error(&[0.0; 3], &r, ErrorNorm::L2Ratio, 10.0).unwrap();
        assert!((e.percent - 100.0).abs() < 1e-12);
        let e = tracking_error(&[3.0, 4.0], &[0.0, 0.0], ErrorNorm::L2Ratio, 10.0).unwrap();
        assert!(e.rms_fallback);
        assert!((e.percent - (12.5f64).sqrt()).abs() < 1e-12);
        let e = tracking_error(&[1.0, 1.0], &[0.0, 0.0], ErrorNorm::RmsOverCapacity, 10.0).unwrap();
        assert!((e.percent - 10.0).abs() < 1e-12);
        assert!(tracking_error(&[1.0], &[], ErrorNorm::L2Ratio, 1.0).is_err());
    }

    fn recorded(n: usize, lockout: LockoutPolicy) -> Fleet {
        let cfg = FleetConfig { lockout, record_history: true, ..FleetConfig::nominal(n) };
        Fleet::init(&cfg).unwrap()
    }

    #[test]
    fn s_tau_counts_switches() {
        let mut fleet = recorded(10, LockoutPolicy::Disabled);
        let mut trace = fleet.new_trace();
        fleet.step_into(&[], &mut trace);
        let before = s_tau(&trace);
        assert_eq!(before, s_tau_from_history(fleet.history().unwrap()));

        // device 0 toggled twice in two steps away from the band edges
        let mut fleet = recorded(10, LockoutPolicy::Disabled);
        let mut trace = fleet.new_trace();
        let m0 = fleet.states()[0].mode;
        fleet.step_into(&[Command { device: 0, mode: m0.toggled() }], &mut trace);
        fleet.step_into(&[Command { device: 0, mode: m0 }], &mut trace);
        let h = fleet.history().unwrap();
        assert_eq!(s_tau(&trace), s_tau_from_history(h));
        let none = FleetHistory {
            initial_modes: vec![Mode::On; 4],
            modes: vec![vec![Mode::On; 5]; 4],
            ..Default::default()
        };
        assert_eq!(s_tau_from_history(&none), 0.0);
        let twice = FleetHistory {
            initial_modes: vec![Mode::On; 2],
            modes: vec![vec![Mode::Off, Mode::Off, Mode::On]; 2],
            ..Default::default()
        };
        assert_eq!(s_tau_from_history(&twice), 2.0);
    }

    #[test]
    fn baseline_reference_never_exceeds_capacity() {
        let mut fleet = recorded(500, LockoutPolicy::Enforced);
        let reference = vec![0.0; 200];
        let run = track(&mut fleet, &reference, &ControllerConfig::default()).unwrap();
        let h = h_series(&run.trace, &reference).unwrap();
        assert_eq!(h.iter().map(|&v| v as usize).sum::<usize>(), 0);
    }

    #[test]
    fn extreme_reference_is_flagged_and_recomputation_agrees() {
        let mut fleet = recorded(300, LockoutPolicy::Enforced);
        let c = fleet.constants();
        let reference: Vec<f64> = (0..120)
            .map(|k| if (k / 6) % 2 == 0 { 0.9 } else { -0.9 } * c.p_base_agg.min(c.p_agg - c.p_base_agg))
            .collect();
        let run = track(&mut fleet, &reference, &ControllerConfig::default()).unwrap();
        let h = h_series(&run.trace, &reference).unwrap();
        let h2 = h_series_from_history(fleet.history().unwrap(), &c, &reference).unwrap();
        assert_eq!(h, h2);
        assert!(h.iter().any(|&v| v == 1));
        let m = RunMetrics::compute(&run.trace, &reference, ErrorNorm::L2Ratio).unwrap();
        assert_eq!(m.d_tau, h.iter().map(|&v| v as usize).sum::<usize>());
        // lockout on: no interval shorter than the lockout
        let min = m.min_interval_minutes.unwrap();
        assert!(min >= c.tau_tcl as f64 * c.t_s_minutes, "{min}");
        assert_eq!(m.cycling_window_violations, 0);
    }

    #[test]
    fn histogram_is_in_minutes() {
        let mut fleet = recorded(200, LockoutPolicy::Disabled);
        let c = fleet.constants();
        let reference: Vec<f64> = (0..60).map(|k| if k % 2 == 0 { 0.2 } else { -0.2 } * c.p_agg).collect();
        let ctl = ControllerConfig { enforce_lockout: false, ..Default::default() };
        let run = track(&mut fleet, &reference, &ctl).unwrap();
        let m = RunMetrics::compute(&run.trace, &reference, ErrorNorm::L2Ratio).unwrap();
        assert_eq!(m.min_interval_minutes, Some(c.t_s_minutes));
        assert!(m.one_sample_interval_share > 0.5);
        let total: usize = m.interval_histogram.iter().map(|b| b.count).sum();
        assert_eq!(total, run.trace.switch_intervals.values().sum::<usize>());
        let mut buf = Vec::new();
        m.write_json(&mut buf).unwrap();
        let back: RunMetrics = serde_json::from_slice(&buf).unwrap();
        assert_eq!(back, m);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn h_series_matches_device_recomputation(seed in 0u64..1000, amp in 0.0f64..0.6, period in 2usize..20) {
            let cfg = FleetConfig { seed, record_history: true, ..FleetConfig::nominal(120) };
            let mut fleet = Fleet::init(&cfg).unwrap();
            let c = fleet.constants();
            let reference: Vec<f64> = (0..60)
                .map(|k| amp * c.p_agg * (std::f64::consts::TAU * k as f64 / period as f64).sin())
                .collect();
            let run = track(&mut fleet, &reference, &ControllerConfig::default()).unwrap();
            let h = h_series(&run.trace, &reference).unwrap();
            let h2 = h_series_from_history(fleet.history().unwrap(), &c, &reference).unwrap();
            prop_assert_eq!(h, h2);
            prop_assert_eq!(s_tau(&run.trace), s_tau_from_history(fleet.history().unwrap()));
        }
    }
}
