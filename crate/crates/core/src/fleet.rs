//! Homogeneous fleet of TCLs stepped in discrete time, with the aggregate
//! bookkeeping (fractions on, switching, stuck, forced) recorded per step.
//!
//! Row convention: row `k` describes the mode `m_k` applied during sample
//! `k`. Its switch fractions `s_on`/`s_off` and forced fractions
//! `d_on`/`d_off` count transitions `m_{k-1} -> m_k`; `z_kwh` is the
//! aggregate thermal energy at the start of sample `k`; `gamma_on` and
//! `gamma_off` are the stuck fractions at `k`, i.e. devices whose window of
//! the last `tau_tcl` transitions (rows `k-tau_tcl+1 ..= k`) holds exactly one
//! switch. Before row 0 no device has switched.

use std::collections::{BTreeMap, VecDeque};
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tcl::{
    derive_coefficients, next_temperature, temperature_after, thermal_energy_of, DerivedCoefficients,
    DeviceHistory, Mode, QosSet, TclParams, TclState,
};

/// How the lockout (minimum inter-switch time) is enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LockoutPolicy {
    /// Commands are admitted only for unlocked devices that can hold the new
    /// mode for a full lockout period without leaving the deadband, so the
    /// thermostat never has to override a locked device.
    #[default]
    Enforced,
    /// Commands to locked devices are rejected, but commands are only checked
    /// one sample ahead; thermostat overrides ignore the lockout.
    ForcedOverride,
    /// No lockout at all.
    Disabled,
}

impl LockoutPolicy {
    pub fn enforced(self) -> bool {
        !matches!(self, LockoutPolicy::Disabled)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetConfig {
    pub n_devices: usize,
    pub params: TclParams,
    pub qos: QosSet,
    pub t_s_minutes: f64,
    pub seed: u64,
    #[serde(default)]
    pub lockout: LockoutPolicy,
    /// Keep full per-device trajectories for auditing.
    #[serde(default)]
    pub record_history: bool,
}

impl FleetConfig {
    pub fn nominal(n_devices: usize) -> Self {
        FleetConfig {
            n_devices,
            params: TclParams::NOMINAL,
            qos: QosSet::NOMINAL,
            t_s_minutes: 2.0,
            seed: 1,
            lockout: LockoutPolicy::Enforced,
            record_history: false,
        }
    }

    pub fn validate(&self) -> Result<DerivedCoefficients> {
        if self.n_devices < 1 {
            return Err(Error::Config("fleet needs at least one device".into()));
        }
        self.params.validate()?;
        self.qos.validate()?;
        let duty = self.params.duty_ratio(self.qos.theta_set);
        if !(duty > 0.0 && duty < 1.0) {
            return Err(Error::ParameterDomain(format!(
                "baseline duty ratio {duty} outside (0, 1)"
            )));
        }
        derive_coefficients(&self.params, &self.qos, self.t_s_minutes)
    }
}

/// Aggregate constants of a homogeneous fleet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FleetConstants {
    pub n_devices: usize,
    /// Power with every device on, kW.
    pub p_agg: f64,
    /// Baseline power, kW.
    pub p_base_agg: f64,
    pub t_s_minutes: f64,
    pub tau_tcl: usize,
}

impl FleetConstants {
    pub fn baseline_fraction(&self) -> f64 {
        self.p_base_agg / self.p_agg
    }

    pub fn deviation(&self, on_count: usize) -> f64 {
        self.p_agg * on_count as f64 / self.n_devices as f64 - self.p_base_agg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Command {
    pub device: usize,
    pub mode: Mode,
}

/// Per-step aggregate record. Counts are integers; fractions are derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub on: usize,
    pub s_on: usize,
    pub s_off: usize,
    pub stuck_on: usize,
    pub stuck_off: usize,
    pub d_on: usize,
    pub d_off: usize,
    pub y_kw: f64,
    pub z_kwh: f64,
    /// Commands refused by the lockout or deadband checks.
    pub rejected: usize,
    /// Devices whose current window of `tau_tcl` transitions holds more than
    /// one switch.
    pub cycling_violations: usize,
    /// Devices whose temperature left the deadband at the end of the sample.
    pub temperature_violations: usize,
}

impl TraceRow {
    fn frac(count: usize, n: usize) -> f64 {
        count as f64 / n as f64
    }
}

/// Complete record of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetTrace {
    pub constants: FleetConstants,
    /// Devices on before row 0.
    pub initial_on: usize,
    pub rows: Vec<TraceRow>,
    /// Inter-switch intervals in samples, with multiplicity.
    pub switch_intervals: BTreeMap<usize, usize>,
}

pub const TRACE_COLUMNS: [&str; 10] = [
    "k", "n_on", "y_kw", "z_kwh", "s_on", "s_off", "gamma_on", "gamma_off", "d_on", "d_off",
];

impl FleetTrace {
    pub fn new(constants: FleetConstants, initial_on: usize) -> Self {
        FleetTrace {
            constants,
            initial_on,
            rows: Vec::new(),
            switch_intervals: BTreeMap::new(),
        }
    }

    fn n(&self) -> usize {
        self.constants.n_devices
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_on(&self) -> Vec<f64> {
        self.rows.iter().map(|r| TraceRow::frac(r.on, self.n())).collect()
    }

    pub fn y(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.y_kw).collect()
    }

    pub fn z(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.z_kwh).collect()
    }

    pub fn initial_n_on(&self) -> f64 {
        TraceRow::frac(self.initial_on, self.n())
    }

    pub fn gamma_on(&self, k: usize) -> f64 {
        TraceRow::frac(self.rows[k].stuck_on, self.n())
    }

    pub fn gamma_off(&self, k: usize) -> f64 {
        TraceRow::frac(self.rows[k].stuck_off, self.n())
    }

    pub fn d_on(&self, k: usize) -> f64 {
        TraceRow::frac(self.rows[k].d_on, self.n())
    }

    pub fn d_off(&self, k: usize) -> f64 {
        TraceRow::frac(self.rows[k].d_off, self.n())
    }

    pub fn total_switches(&self) -> usize {
        self.rows.iter().map(|r| r.s_on + r.s_off).sum()
    }

    pub fn total_rejected(&self) -> usize {
        self.rows.iter().map(|r| r.rejected).sum()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(TRACE_COLUMNS)?;
        let n = self.n();
        for r in &self.rows {
            out.write_record([
                r.k.to_string(),
                TraceRow::frac(r.on, n).to_string(),
                r.y_kw.to_string(),
                r.z_kwh.to_string(),
                TraceRow::frac(r.s_on, n).to_string(),
                TraceRow::frac(r.s_off, n).to_string(),
                TraceRow::frac(r.stuck_on, n).to_string(),
                TraceRow::frac(r.stuck_off, n).to_string(),
                TraceRow::frac(r.d_on, n).to_string(),
                TraceRow::frac(r.d_off, n).to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::io("trace", e))?;
        Ok(())
    }

    /// Reads the CSV written by [`FleetTrace::write_csv`]. Counts are
    /// recovered from fractions with the fleet size in `constants`;
    /// per-row diagnostics not in the CSV are zero.
    pub fn read_csv<R: Read>(r: R, constants: FleetConstants, initial_on: usize) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.iter().ne(TRACE_COLUMNS.iter().copied()) {
            return Err(Error::Config(format!("unexpected trace columns {headers:?}")));
        }
        let n = constants.n_devices as f64;
        let count = |s: &str| -> Result<usize> {
            let v: f64 = s
                .parse()
                .map_err(|_| Error::Config(format!("bad fraction {s:?}")))?;
            Ok((v * n).round() as usize)
        };
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Config(format!("bad number {s:?}")))
        };
        let mut trace = FleetTrace::new(constants, initial_on);
        for rec in rdr.records() {
            let rec = rec?;
            trace.rows.push(TraceRow {
                k: rec[0]
                    .parse()
                    .map_err(|_| Error::Config(format!("bad step {:?}", &rec[0])))?,
                on: count(&rec[1])?,
                y_kw: num(&rec[2])?,
                z_kwh: num(&rec[3])?,
                s_on: count(&rec[4])?,
                s_off: count(&rec[5])?,
                stuck_on: count(&rec[6])?,
                stuck_off: count(&rec[7])?,
                d_on: count(&rec[8])?,
                d_off: count(&rec[9])?,
                rejected: 0,
                cycling_violations: 0,
                temperature_violations: 0,
            });
        }
        Ok(trace)
    }
}

/// Full per-device trajectories, kept when `record_history` is set.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FleetHistory {
    pub initial_modes: Vec<Mode>,
    /// `modes[j][k]`: mode of device `j` applied in row `k`.
    pub modes: Vec<Vec<Mode>>,
    /// `temps[j][k]`: temperature at the start of row `k`; one extra final entry.
    pub temps: Vec<Vec<f64>>,
    /// `forced[j][k]`: the transition into row `k` was a thermostat override.
    pub forced: Vec<Vec<bool>>,
}

impl FleetHistory {
    /// Trajectory of device `j` padded with `pad` copies of its initial mode,
    /// so that windows reaching before row 0 see no switches.
    pub fn device(&self, j: usize, pad: usize) -> DeviceHistory {
        let mut modes = vec![self.initial_modes[j]; pad];
        modes.extend_from_slice(&self.modes[j]);
        DeviceHistory {
            modes,
            temps: self.temps[j].clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fleet {
    config: FleetConfig,
    coef: DerivedCoefficients,
    constants: FleetConstants,
    states: Vec<TclState>,
    /// Rows of each device's switches inside the current lockout window.
    recent_switches: Vec<VecDeque<usize>>,
    last_switch: Vec<Option<usize>>,
    intervals: BTreeMap<usize, usize>,
    initial_on: usize,
    k: usize,
    history: Option<FleetHistory>,
}

impl Fleet {
    /// Temperatures uniform over the deadband, modes drawn with the baseline
    /// duty ratio, and every device unlocked.
    pub fn init(config: &FleetConfig) -> Result<Self> {
        config.validate()?;
        let qos = config.qos;
        let duty = config.params.duty_ratio(qos.theta_set);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let states: Vec<TclState> = (0..config.n_devices)
            .map(|_| {
                let theta = rng.random_range(qos.theta_min()..=qos.theta_max());
                let mode = Mode::from(rng.random_bool(duty));
                TclState {
                    mode,
                    theta,
                    since_switch: qos.tau_tcl,
                }
            })
            .collect();
        Self::from_states(config, states)
    }

    pub fn from_states(config: &FleetConfig, states: Vec<TclState>) -> Result<Self> {
        let coef = config.validate()?;
        if states.len() != config.n_devices {
            return Err(Error::Config(format!(
                "{} states for a fleet of {}",
                states.len(),
                config.n_devices
            )));
        }
        if let Some(s) = states.iter().find(|s| !config.qos.contains(s.theta)) {
            return Err(Error::Config(format!(
                "initial temperature {} outside the deadband",
                s.theta
            )));
        }
        let n = config.n_devices;
        let constants = FleetConstants {
            n_devices: n,
            p_agg: n as f64 * config.params.p_rated,
            p_base_agg: n as f64 * coef.p_base,
            t_s_minutes: config.t_s_minutes,
            tau_tcl: config.qos.tau_tcl,
        };
        let initial_on = states.iter().filter(|s| s.mode.is_on()).count();
        let history = config.record_history.then(|| FleetHistory {
            initial_modes: states.iter().map(|s| s.mode).collect(),
            modes: vec![Vec::new(); n],
            temps: states.iter().map(|s| vec![s.theta]).collect(),
            forced: vec![Vec::new(); n],
        });
        Ok(Fleet {
            config: config.clone(),
            coef,
            constants,
            states,
            recent_switches: vec![VecDeque::new(); n],
            last_switch: vec![None; n],
            intervals: BTreeMap::new(),
            initial_on,
            k: 0,
            history,
        })
    }

    pub fn config(&self) -> &FleetConfig {
        &self.config
    }

    pub fn params(&self) -> &TclParams {
        &self.config.params
    }

    pub fn qos(&self) -> &QosSet {
        &self.config.qos
    }

    pub fn coefficients(&self) -> &DerivedCoefficients {
        &self.coef
    }

    pub fn constants(&self) -> FleetConstants {
        self.constants
    }

    pub fn lockout(&self) -> LockoutPolicy {
        self.config.lockout
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[TclState] {
        &self.states
    }

    pub fn step_index(&self) -> usize {
        self.k
    }

    pub fn on_count(&self) -> usize {
        self.states.iter().filter(|s| s.mode.is_on()).count()
    }

    pub fn initial_on(&self) -> usize {
        self.initial_on
    }

    /// Aggregate thermal energy deviation, kWh.
    pub fn thermal_energy(&self) -> f64 {
        self.states
            .iter()
            .map(|s| thermal_energy_of(s.theta, &self.config.params, &self.config.qos))
            .sum()
    }

    pub fn history(&self) -> Option<&FleetHistory> {
        self.history.as_ref()
    }

    pub fn new_trace(&self) -> FleetTrace {
        FleetTrace::new(self.constants, self.initial_on)
    }

    /// Mode the thermostat will impose on device `j` in the coming sample,
    /// if keeping the current mode would leave the deadband.
    pub fn forced_mode(&self, j: usize) -> Option<Mode> {
        let s = &self.states[j];
        let qos = &self.config.qos;
        let next = next_temperature(s.theta, s.mode, &self.coef, &self.config.params);
        match s.mode {
            Mode::Off if next > qos.theta_max() => Some(Mode::On),
            Mode::On if next < qos.theta_min() => Some(Mode::Off),
            _ => None,
        }
    }

    /// Whether `mode` can be held by device `j` for `steps` samples without
    /// leaving the deadband. Temperature moves monotonically under a held
    /// mode, so only the end point needs checking.
    pub fn can_hold(&self, j: usize, mode: Mode, steps: usize) -> bool {
        let s = &self.states[j];
        let end = temperature_after(s.theta, mode, steps, &self.coef, &self.config.params);
        self.config.qos.contains(end)
    }

    pub fn is_locked(&self, j: usize) -> bool {
        self.states[j].is_locked(self.config.qos.tau_tcl)
    }

    /// Whether a command moving device `j` into `mode` is accepted under
    /// the fleet's lockout policy.
    pub fn admissible(&self, j: usize, mode: Mode) -> bool {
        let tau = self.config.qos.tau_tcl;
        match self.config.lockout {
            LockoutPolicy::Enforced => !self.is_locked(j) && self.can_hold(j, mode, tau),
            LockoutPolicy::ForcedOverride => !self.is_locked(j) && self.can_hold(j, mode, 1),
            LockoutPolicy::Disabled => self.can_hold(j, mode, 1),
        }
    }

    /// Apply thermostat overrides, then `commands`, and advance one sample.
    ///
    /// Commands naming a device that is already in the requested mode or is
    /// being overridden by the thermostat are ignored; commands failing
    /// [`Fleet::admissible`] are rejected and counted.
    pub fn apply_and_step(&mut self, commands: &[Command]) -> TraceRow {
        let n = self.states.len();
        let tau = self.config.qos.tau_tcl;
        let k = self.k;

        let mut next: Vec<Mode> = self.states.iter().map(|s| s.mode).collect();
        let mut forced = vec![false; n];
        let (mut d_on, mut d_off) = (0, 0);
        for j in 0..n {
            if let Some(m) = self.forced_mode(j) {
                next[j] = m;
                forced[j] = true;
                match m {
                    Mode::On => d_on += 1,
                    Mode::Off => d_off += 1,
                }
            }
        }

        let mut rejected = 0;
        for c in commands {
            let j = c.device;
            if j >= n || forced[j] || next[j] == c.mode || self.states[j].mode == c.mode {
                continue;
            }
            if !self.admissible(j, c.mode) {
                rejected += 1;
                continue;
            }
            next[j] = c.mode;
        }

        let params = self.config.params;
        let qos = self.config.qos;
        let mut row = TraceRow {
            k,
            on: 0,
            s_on: 0,
            s_off: 0,
            stuck_on: 0,
            stuck_off: 0,
            d_on,
            d_off,
            y_kw: 0.0,
            z_kwh: 0.0,
            rejected,
            cycling_violations: 0,
            temperature_violations: 0,
        };
        for j in 0..n {
            let state = &mut self.states[j];
            row.z_kwh += thermal_energy_of(state.theta, &params, &qos);
            let m = next[j];
            let switched = m != state.mode;
            if switched {
                match m {
                    Mode::On => row.s_on += 1,
                    Mode::Off => row.s_off += 1,
                }
                if let Some(prev) = self.last_switch[j] {
                    *self.intervals.entry(k - prev).or_default() += 1;
                }
                self.last_switch[j] = Some(k);
                self.recent_switches[j].push_back(k);
            }
            let window = &mut self.recent_switches[j];
            while window.front().is_some_and(|&r| r + tau <= k) {
                window.pop_front();
            }
            if window.len() > 1 {
                row.cycling_violations += 1;
            }
            if window.len() == 1 {
                match m {
                    Mode::On => row.stuck_on += 1,
                    Mode::Off => row.stuck_off += 1,
                }
            }
            if m.is_on() {
                row.on += 1;
            }
            state.theta = next_temperature(state.theta, m, &self.coef, &params);
            state.record_mode(m, tau);
            if !qos.contains(state.theta) {
                row.temperature_violations += 1;
            }
            if let Some(h) = self.history.as_mut() {
                h.modes[j].push(m);
                h.temps[j].push(state.theta);
                h.forced[j].push(forced[j]);
            }
        }
        row.y_kw = self.constants.deviation(row.on);
        self.k += 1;
        row
    }

    /// Inter-switch intervals observed so far, in samples.
    pub fn switch_intervals(&self) -> &BTreeMap<usize, usize> {
        &self.intervals
    }

    /// [`Fleet::apply_and_step`], appending the row to `trace`.
    pub fn step_into(&mut self, commands: &[Command], trace: &mut FleetTrace) -> TraceRow {
        let row = self.apply_and_step(commands);
        trace.rows.push(row);
        trace.switch_intervals.clone_from(&self.intervals);
        row
    }
}
