//! Priority-stack tracking controller.
//!
//! Each sample the controller predicts the thermostat overrides, computes
//! the on-count that matches the reference, and commands the shortfall:
//! warmest eligible off devices switch on, coolest eligible on devices
//! switch off. Devices the fleet would refuse (locked, or unable to hold the
//! new mode) are ranked after the ones it accepts and only commanded when
//! the accepted ones run out.

use std::cmp::Ordering;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fleet::{Command, Fleet, FleetTrace};
use crate::tcl::Mode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Equal temperatures: lower device index first.
    #[default]
    LowestIndex,
    HighestIndex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControllerConfig {
    /// Never command a device that switched within the last `tau_tcl`
    /// samples.
    pub enforce_lockout: bool,
    #[serde(default)]
    pub tie_break: TieBreak,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            enforce_lockout: true,
            tie_break: TieBreak::LowestIndex,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dispatch {
    pub commands: Vec<Command>,
    /// On-count the reference asks for.
    pub target: usize,
    /// On-count after the predicted thermostat overrides alone.
    pub predicted: usize,
    /// Commands the fleet is expected to reject.
    pub blocked: usize,
    /// Signed devices still missing after accepted commands (positive: too
    /// few on).
    pub deficit: i64,
}

/// On-count closest to `r_kw` of deviation.
pub fn target_on_count(fleet: &Fleet, r_kw: f64) -> usize {
    let c = fleet.constants();
    let n = c.n_devices as f64;
    let t = (n * (r_kw + c.p_base_agg) / c.p_agg).round();
    if t.is_nan() {
        return 0;
    }
    t.clamp(0.0, n) as usize
}

pub fn dispatch(fleet: &Fleet, r_kw: f64, cfg: &ControllerConfig) -> Dispatch {
    let n = fleet.len();
    let tau = fleet.qos().tau_tcl;
    let target = target_on_count(fleet, r_kw);

    let mut predicted = fleet.on_count();
    let mut forced = vec![false; n];
    for (j, f) in forced.iter_mut().enumerate() {
        if let Some(m) = fleet.forced_mode(j) {
            *f = true;
            match m {
                Mode::On => predicted += 1,
                Mode::Off => predicted -= 1,
            }
        }
    }

    let (mode, need) = match target.cmp(&predicted) {
        Ordering::Greater => (Mode::On, target - predicted),
        Ordering::Less => (Mode::Off, predicted - target),
        Ordering::Equal => {
            return Dispatch {
                target,
                predicted,
                ..Default::default()
            }
        }
    };

    // (accepted, theta, index); the candidate leaves `mode.toggled()`
    let states = fleet.states();
    let mut cands: Vec<(bool, f64, usize)> = (0..n)
        .filter(|&j| !forced[j] && states[j].mode != mode)
        .filter(|&j| !(cfg.enforce_lockout && states[j].is_locked(tau)))
        // switching would only trigger an immediate override back
        .filter(|&j| fleet.can_hold(j, mode, 1))
        .map(|j| (fleet.admissible(j, mode), states[j].theta, j))
        .collect();
    cands.sort_by(|a, b| {
        b.0.cmp(&a.0)
            .then_with(|| match mode {
                Mode::On => b.1.total_cmp(&a.1),
                Mode::Off => a.1.total_cmp(&b.1),
            })
            .then_with(|| match cfg.tie_break {
                TieBreak::LowestIndex => a.2.cmp(&b.2),
                TieBreak::HighestIndex => b.2.cmp(&a.2),
            })
    });
    cands.truncate(need);

    let accepted = cands.iter().filter(|c| c.0).count();
    let blocked = cands.len() - accepted;
    let short = (need - accepted) as i64;
    let deficit = match mode {
        Mode::On => short,
        Mode::Off => -short,
    };
    if deficit != 0 {
        debug!(
            "step {}: target {target}, predicted {predicted}, deficit {deficit}",
            fleet.step_index()
        );
    }
    Dispatch {
        commands: cands.into_iter().map(|(_, _, device)| Command { device, mode }).collect(),
        target,
        predicted,
        blocked,
        deficit,
    }
}

/// Closed-loop run of a reference through the fleet.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingRun {
    pub trace: FleetTrace,
    pub reference: Vec<f64>,
    pub deficits: Vec<i64>,
    pub blocked: Vec<usize>,
}

impl TrackingRun {
    /// Share of steps whose commanded switches met the target exactly.
    pub fn zero_deficit_share(&self) -> f64 {
        if self.deficits.is_empty() {
            return 1.0;
        }
        self.deficits.iter().filter(|&&d| d == 0).count() as f64 / self.deficits.len() as f64
    }
}

/// Dispatches and steps once per reference sample.
///
/// With `enforce_lockout`, every command is checked against the device's
/// lockout counter before it is applied.
pub fn track(fleet: &mut Fleet, reference: &[f64], cfg: &ControllerConfig) -> Result<TrackingRun> {
    let tau = fleet.qos().tau_tcl;
    let mut trace = fleet.new_trace();
    let mut deficits = Vec::with_capacity(reference.len());
    let mut blocked = Vec::with_capacity(reference.len());
    for &r in reference {
        let d = dispatch(fleet, r, cfg);
        if cfg.enforce_lockout {
            if let Some(c) = d.commands.iter().find(|c| fleet.states()[c.device].is_locked(tau)) {
                return Err(Error::Invariant(format!(
                    "step {}: device {} commanded while locked",
                    fleet.step_index(),
                    c.device
                )));
            }
        }
        fleet.step_into(&d.commands, &mut trace);
        deficits.push(d.deficit);
        blocked.push(d.blocked);
    }
    Ok(TrackingRun {
        trace,
        reference: reference.to_vec(),
        deficits,
        blocked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fleet::{FleetConfig, LockoutPolicy};
    use crate::tcl::TclState;

    fn fleet_at(thetas: &[f64], modes: &[Mode], lockout: LockoutPolicy) -> Fleet {
        let cfg = FleetConfig { lockout, ..FleetConfig::nominal(thetas.len()) };
        let states = thetas
            .iter()
            .zip(modes)
            .map(|(&theta, &mode)| TclState { mode, theta, since_switch: cfg.qos.tau_tcl })
            .collect();
        Fleet::from_states(&cfg, states).unwrap()
    }

    #[test]
    fn no_commands_when_already_tracking() {
        let fleet = fleet_at(&[20.5, 21.0, 21.2, 20.8], &[Mode::On, Mode::Off, Mode::On, Mode::Off], LockoutPolicy::Enforced);
        let y = fleet.constants().deviation(fleet.on_count());
        let d = dispatch(&fleet, y, &ControllerConfig::default());
        assert!(d.commands.is_empty());
        assert_eq!(d.deficit, 0);
        assert_eq!(d.target, 2);
    }

    #[test]
    fn all_on_request_switches_every_off_device() {
        let thetas = [20.5, 21.0, 21.2, 20.8, 21.4, 20.6];
        let modes = [Mode::Off; 6];
        let fleet = fleet_at(&thetas, &modes, LockoutPolicy::Disabled);
        let c = fleet.constants();
        let d = dispatch(&fleet, c.p_agg - c.p_base_agg, &ControllerConfig::default());
        assert_eq!(d.target, 6);
        assert_eq!(d.commands.len(), 6);
        assert!(d.commands.iter().all(|c| c.mode == Mode::On));
    }

    #[test]
    fn warmest_switch_on_first() {
        let thetas = [20.4, 21.6, 21.0, 21.6, 20.2, 21.3];
        let fleet = fleet_at(&thetas, &[Mode::Off; 6], LockoutPolicy::Disabled);
        let c = fleet.constants();
        let r = c.deviation(3);
        let d = dispatch(&fleet, r, &ControllerConfig::default());
        let ids: Vec<usize> = d.commands.iter().map(|c| c.device).collect();
        assert_eq!(ids, vec![1, 3, 5]);
        let d = dispatch(&fleet, r, &ControllerConfig { tie_break: TieBreak::HighestIndex, ..Default::default() });
        let ids: Vec<usize> = d.commands.iter().map(|c| c.device).collect();
        assert_eq!(ids, vec![3, 1, 5]);
    }

    #[test]
    fn coolest_switch_off_first() {
        let thetas = [20.4, 21.6, 21.0, 20.3, 20.9];
        let fleet = fleet_at(&thetas, &[Mode::On; 5], LockoutPolicy::Disabled);
        let d = dispatch(&fleet, fleet.constants().deviation(2), &ControllerConfig::default());
        let ids: Vec<usize> = d.commands.iter().map(|c| c.device).collect();
        assert_eq!(ids, vec![3, 0, 4]);
    }

    #[test]
    fn boundary_devices_are_skipped() {
        // 20.01 on would leave the band next step; nothing else is off
        let fleet = fleet_at(&[21.0, 20.01], &[Mode::On, Mode::Off], LockoutPolicy::Disabled);
        let c = fleet.constants();
        let d = dispatch(&fleet, c.p_agg - c.p_base_agg, &ControllerConfig::default());
        assert_eq!(d.predicted, 1);
        assert!(d.commands.is_empty());
        assert_eq!(d.deficit, 1);
    }

    #[test]
    fn forced_switches_are_anticipated() {
        // device 0 is about to be forced off; the target keeps one device on
        let fleet = fleet_at(&[20.01, 21.0], &[Mode::On, Mode::Off], LockoutPolicy::Disabled);
        assert_eq!(fleet.forced_mode(0), Some(Mode::Off));
        let d = dispatch(&fleet, fleet.constants().deviation(1), &ControllerConfig::default());
        assert_eq!(d.predicted, 0);
        assert_eq!(d.commands, vec![Command { device: 1, mode: Mode::On }]);
    }

    #[test]
    fn locked_devices_are_never_commanded() {
        let cfg = FleetConfig::nominal(400);
        let mut fleet = Fleet::init(&cfg).unwrap();
        let c = fleet.constants();
        let reference: Vec<f64> = (0..150)
            .map(|k| 0.3 * c.p_agg * ((k as f64) * 0.7).sin())
            .collect();
        let run = track(&mut fleet, &reference, &ControllerConfig::default()).unwrap();
        assert_eq!(run.trace.rows.iter().map(|r| r.cycling_violations).sum::<usize>(), 0);
        assert_eq!(run.trace.rows.iter().map(|r| r.temperature_violations).sum::<usize>(), 0);
        assert!(run.deficits.iter().any(|&d| d != 0));
    }

    #[test]
    fn dispatch_is_deterministic() {
        let mut a = Fleet::init(&FleetConfig::nominal(300)).unwrap();
        let mut b = a.clone();
        let c = a.constants();
        let reference: Vec<f64> = (0..60).map(|k| 0.05 * c.p_agg * (k as f64 * 0.2).cos()).collect();
        let ra = track(&mut a, &reference, &ControllerConfig::default()).unwrap();
        let rb = track(&mut b, &reference, &ControllerConfig::default()).unwrap();
        assert_eq!(ra, rb);
    }

    #[test]
    fn slow_reference_is_tracked_closely() {
        let mut fleet = Fleet::init(&FleetConfig::nominal(2000)).unwrap();
        let c = fleet.constants();
        let reference: Vec<f64> = (0..120).map(|k| 0.02 * c.p_agg * (k as f64 * 0.05).sin()).collect();
        let run = track(&mut fleet, &reference, &ControllerConfig::default()).unwrap();
        assert!(run.zero_deficit_share() >= 0.99, "{}", run.zero_deficit_share());
        let q = c.p_agg / c.n_devices as f64;
        for (row, r) in run.trace.rows.iter().zip(&reference) {
            assert!((row.y_kw - r).abs() <= 0.5 * q + 1e-9);
        }
    }

    #[test]
    fn unlocked_controller_against_enforcing_fleet_gets_rejections() {
        let cfg = FleetConfig::nominal(300);
        let mut fleet = Fleet::init(&cfg).unwrap();
        let c = fleet.constants();
        let reference: Vec<f64> = (0..80).map(|k| if k % 2 == 0 { 0.3 } else { -0.3 } * c.p_agg).collect();
        let ctl = ControllerConfig { enforce_lockout: false, ..Default::default() };
        let run = track(&mut fleet, &reference, &ctl).unwrap();
        assert!(run.trace.total_rejected() > 0);
        assert_eq!(run.blocked.iter().sum::<usize>(), run.trace.total_rejected());
        assert_eq!(run.trace.rows.iter().map(|r| r.cycling_violations).sum::<usize>(), 0);
    }
}
