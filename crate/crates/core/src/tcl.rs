//! Physics and quality-of-service predicates for a single on/off
//! thermostatically controlled load (a cooling air conditioner).
//!
//! Canonical units: kW, kWh, °C and hours. The sample time is accepted in
//! minutes by [`derive_coefficients`] and converted to hours there, once.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical parameters of one homogeneous TCL class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TclParams {
    /// Thermal resistance to ambient, °C/kW.
    pub r_th: f64,
    /// Thermal capacitance, kWh/°C.
    pub c_th: f64,
    /// Coefficient of performance.
    pub cop: f64,
    /// Electrical power draw while on, kW.
    pub p_rated: f64,
    /// Ambient temperature, °C (constant).
    pub theta_a: f64,
}

impl TclParams {
    /// Residential air conditioner used throughout the experiments.
    pub const NOMINAL: TclParams = TclParams {
        r_th: 2.5,
        c_th: 2.5,
        cop: 2.5,
        p_rated: 2.24,
        theta_a: 30.0,
    };

    /// Thermal power removed while on, kW.
    pub fn q_ac(&self) -> f64 {
        self.cop * self.p_rated
    }

    /// Steady-state temperature if the unit were held on forever.
    pub fn theta_on_limit(&self) -> f64 {
        self.theta_a - self.r_th * self.q_ac()
    }

    /// Fraction of time on that holds the temperature at `theta_set`.
    pub fn duty_ratio(&self, theta_set: f64) -> f64 {
        (self.theta_a - theta_set) / (self.cop * self.r_th * self.p_rated)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("r_th", self.r_th),
            ("c_th", self.c_th),
            ("cop", self.cop),
            ("p_rated", self.p_rated),
            ("theta_a", self.theta_a),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::ParameterDomain(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// User QoS parameters: deadband, lockout, and billing constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QosSet {
    pub theta_set: f64,
    /// Half deadband width, °C.
    pub delta: f64,
    /// Lockout duration in samples.
    pub tau_tcl: usize,
    /// Permitted mean energy deviation over a billing window, kWh.
    pub e_tilde: f64,
    /// Billing window length in samples.
    pub n_b: usize,
}

impl QosSet {
    pub const NOMINAL: QosSet = QosSet {
        theta_set: 21.0,
        delta: 1.0,
        tau_tcl: 5,
        e_tilde: 0.1,
        n_b: 720,
    };

    pub fn theta_min(&self) -> f64 {
        self.theta_set - self.delta
    }

    pub fn theta_max(&self) -> f64 {
        self.theta_set + self.delta
    }

    pub fn contains(&self, theta: f64) -> bool {
        (theta - self.theta_set).abs() <= self.delta
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::ParameterDomain(format!(
                "delta must be > 0, got {}",
                self.delta
            )));
        }
        if !self.theta_set.is_finite() {
            return Err(Error::ParameterDomain("theta_set must be finite".into()));
        }
        if self.tau_tcl < 1 {
            return Err(Error::ParameterDomain("tau_tcl must be >= 1".into()));
        }
        if !(self.e_tilde >= 0.0) {
            return Err(Error::ParameterDomain("e_tilde must be >= 0".into()));
        }
        if self.n_b < 1 {
            return Err(Error::ParameterDomain("n_b must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    Off,
    On,
}

impl Mode {
    pub fn is_on(self) -> bool {
        self == Mode::On
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Mode::Off => 0.0,
            Mode::On => 1.0,
        }
    }

    pub fn toggled(self) -> Mode {
        match self {
            Mode::Off => Mode::On,
            Mode::On => Mode::Off,
        }
    }
}

impl From<bool> for Mode {
    fn from(on: bool) -> Self {
        if on {
            Mode::On
        } else {
            Mode::Off
        }
    }
}

/// State of one device at the start of a sample.
///
/// `mode` is the mode held during the previous sample and `since_switch`
/// counts samples since it was entered, saturating at the lockout length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TclState {
    pub mode: Mode,
    pub theta: f64,
    pub since_switch: usize,
}

impl TclState {
    pub fn is_locked(&self, tau_tcl: usize) -> bool {
        self.since_switch < tau_tcl
    }

    /// Advance the lockout counter after `next` is applied for one sample.
    pub fn record_mode(&mut self, next: Mode, tau_tcl: usize) {
        if next != self.mode {
            self.mode = next;
            self.since_switch = 1;
        } else {
            self.since_switch = (self.since_switch + 1).min(tau_tcl);
        }
    }
}

/// Constants derived once per scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedCoefficients {
    /// Per-sample temperature decay factor.
    pub a_bar: f64,
    /// Gain from power deviation (kW) to thermal energy change (kWh).
    pub b_coef: f64,
    /// Baseline power of one device, kW.
    pub p_base: f64,
    /// Thermal energy half-range of one device, kWh.
    pub c_bar: f64,
    /// Sample time in hours.
    pub t_s_hours: f64,
}

pub fn derive_coefficients(
    params: &TclParams,
    qos: &QosSet,
    t_s_minutes: f64,
) -> Result<DerivedCoefficients> {
    params.validate()?;
    if !(t_s_minutes.is_finite() && t_s_minutes > 0.0) {
        return Err(Error::ParameterDomain(format!(
            "sample time must be > 0 minutes, got {t_s_minutes}"
        )));
    }
    if !(qos.delta >= 0.0) {
        return Err(Error::ParameterDomain("delta must be >= 0".into()));
    }
    let t_s_hours = t_s_minutes / 60.0;
    let a_bar = (-t_s_hours / (params.r_th * params.c_th)).exp();
    let b_coef = (1.0 - a_bar) * params.c_th * params.r_th;
    let p_base = (params.theta_a - qos.theta_set) / (params.cop * params.r_th);
    let full_band = 2.0 * qos.delta;
    let c_bar = params.c_th * full_band / (2.0 * params.cop);
    Ok(DerivedCoefficients {
        a_bar,
        b_coef,
        p_base,
        c_bar,
        t_s_hours,
    })
}

/// Temperature after one sample with `mode` applied.
pub fn next_temperature(theta: f64, mode: Mode, coef: &DerivedCoefficients, params: &TclParams) -> f64 {
    coef.a_bar * theta
        + (1.0 - coef.a_bar) * (params.theta_a - params.r_th * mode.as_f64() * params.q_ac())
}

pub fn step_temperature(state: &TclState, coef: &DerivedCoefficients, params: &TclParams) -> f64 {
    next_temperature(state.theta, state.mode, coef, params)
}

/// Temperature after holding `mode` for `steps` samples (closed form).
pub fn temperature_after(
    theta: f64,
    mode: Mode,
    steps: usize,
    coef: &DerivedCoefficients,
    params: &TclParams,
) -> f64 {
    let limit = params.theta_a - params.r_th * mode.as_f64() * params.q_ac();
    limit + coef.a_bar.powi(steps as i32) * (theta - limit)
}

pub fn thermal_energy_of(theta: f64, params: &TclParams, qos: &QosSet) -> f64 {
    params.c_th / params.cop * (theta - qos.theta_set)
}

pub fn thermal_energy(state: &TclState, params: &TclParams, qos: &QosSet) -> f64 {
    thermal_energy_of(state.theta, params, qos)
}

/// One sample of the thermal-energy dynamics driven by the power deviation
/// `on_fraction·P − P̄`. `on_fraction` may be relaxed to [0, 1].
pub fn step_thermal_energy(
    z: f64,
    on_fraction: f64,
    coef: &DerivedCoefficients,
    params: &TclParams,
) -> f64 {
    coef.a_bar * z - coef.b_coef * (on_fraction * params.p_rated - coef.p_base)
}

/// Mode/temperature trajectory of one device.
///
/// `modes[k]` is the mode applied during sample k and `temps[k]` the
/// temperature at the start of sample k.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DeviceHistory {
    pub modes: Vec<Mode>,
    pub temps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QosReport {
    pub temperature_violations: usize,
    /// Number of windows of `tau_tcl` transitions with more than one switch.
    pub cycling_violations: usize,
    /// Mean energy deviation (kWh) per complete billing window.
    pub energy_deviation: Vec<f64>,
    pub energy_violations: usize,
}

impl QosReport {
    pub fn temperature_ok(&self) -> bool {
        self.temperature_violations == 0
    }

    pub fn cycling_ok(&self) -> bool {
        self.cycling_violations == 0
    }

    pub fn energy_ok(&self) -> bool {
        self.energy_violations == 0
    }

    pub fn all_ok(&self) -> bool {
        self.temperature_ok() && self.cycling_ok() && self.energy_ok()
    }
}

/// Number of windows of `tau` consecutive transitions containing more than
/// one switch. Only windows fully inside `modes` are evaluated.
pub fn cycling_violations(modes: &[Mode], tau: usize) -> usize {
    if tau == 0 || modes.len() < tau + 1 {
        return 0;
    }
    let switched: Vec<u32> = modes
        .windows(2)
        .map(|w| u32::from(w[0] != w[1]))
        .collect();
    let mut in_window: u32 = switched[..tau].iter().sum();
    let mut count = usize::from(in_window > 1);
    for k in tau..switched.len() {
        in_window += switched[k];
        in_window -= switched[k - tau];
        if in_window > 1 {
            count += 1;
        }
    }
    count
}

/// Mean energy deviation `(T_s/N_b)·Σ(m_k·P − P̄)` over consecutive complete
/// billing windows of `n_b` samples. `on_fraction` may be relaxed.
pub fn billing_deviations(
    on_fraction: &[f64],
    n_b: usize,
    coef: &DerivedCoefficients,
    params: &TclParams,
) -> Vec<f64> {
    on_fraction
        .chunks_exact(n_b)
        .map(|w| {
            let sum: f64 = w.iter().map(|m| m * params.p_rated - coef.p_base).sum();
            coef.t_s_hours / n_b as f64 * sum
        })
        .collect()
}

pub fn qos_check(
    history: &DeviceHistory,
    params: &TclParams,
    qos: &QosSet,
    coef: &DerivedCoefficients,
) -> QosReport {
    let temperature_violations = history.temps.iter().filter(|t| !qos.contains(**t)).count();
    let cycling = cycling_violations(&history.modes, qos.tau_tcl);
    let fractions: Vec<f64> = history.modes.iter().map(|m| m.as_f64()).collect();
    let energy_deviation = billing_deviations(&fractions, qos.n_b, coef, params);
    let energy_violations = energy_deviation
        .iter()
        .filter(|d| d.abs() > qos.e_tilde)
        .count();
    QosReport {
        temperature_violations,
        cycling_violations: cycling,
        energy_deviation,
        energy_violations,
    }
}
