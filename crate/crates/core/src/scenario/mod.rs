//! Scenario configuration and the plan, simulate, measure pipeline, with
//! the artifacts each run leaves on disk.

pub mod plot;
pub mod signal;
mod sweep;

pub use sweep::{run_sweep, write_sweep, SweepCell, SWEEP_COLUMNS};

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;
use serde::{Deserialize, Serialize};

use crate::audit::{aggregate_audit, AuditReport};
use crate::capacity::CapacityParams;
use crate::controller::{track, ControllerConfig, TieBreak, TrackingRun};
use crate::error::{Error, Result};
use crate::fleet::{Fleet, FleetConfig, FleetTrace, LockoutPolicy};
use crate::metrics::{h_series_from_history, ErrorNorm, RunMetrics};
use crate::planner::{plan, PlanMethod, PlanProblem, PlanSolution};
use crate::qp::{QpSettings, QpStatus};
use crate::tcl::{QosSet, TclParams};
use signal::{Band, Scaling, SignalSource, SignalSpec, SyntheticSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetBlock {
    pub n_devices: usize,
    pub params: TclParams,
    pub qos: QosSet,
    pub seed: u64,
    #[serde(default)]
    pub lockout: LockoutPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanningBlock {
    /// Planning lockout, samples.
    pub tau_ba: usize,
    #[serde(default)]
    pub method: PlanMethod,
    #[serde(default)]
    pub weights: crate::planner::Weights,
    /// Initial thermal energy, kWh; the simulated fleet's when absent.
    #[serde(default)]
    pub z0_kwh: Option<f64>,
    /// Initial fraction on; the simulated fleet's when absent.
    #[serde(default)]
    pub n0: Option<f64>,
    #[serde(default)]
    pub solver: QpSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    /// Steps `N_t`.
    pub horizon: usize,
    pub t_s_minutes: f64,
    /// Controller never commands locked devices.
    pub enforce_lockout: bool,
    #[serde(default)]
    pub tie_break: TieBreak,
    #[serde(default)]
    pub error_norm: ErrorNorm,
    /// Keep per-device trajectories for the independent audit.
    #[serde(default = "yes")]
    pub record_history: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub fleet: FleetBlock,
    pub planning: PlanningBlock,
    pub signal: SignalSpec,
    pub run: RunBlock,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// Built-in configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Proposed plan, lockout enforced (same as `t-i`).
    Nominal,
    TI,
    /// Alternative plan, lockout enforced.
    TIi,
    /// Alternative plan; commands respect the lockout, thermostat overrides
    /// do not.
    TIiForced,
    /// Alternative plan, no lockout.
    TIii,
}

impl Preset {
    pub const ALL: [Preset; 5] = [Preset::Nominal, Preset::TI, Preset::TIi, Preset::TIiForced, Preset::TIii];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Nominal => "nominal",
            Preset::TI => "t-i",
            Preset::TIi => "t-ii",
            Preset::TIiForced => "t-ii-forced",
            Preset::TIii => "t-iii",
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown preset `{s}`")))
    }
}

/// Desk-scale fleet size.
pub const DESK_DEVICES: usize = 5_000;
pub const FULL_SCALE_DEVICES: usize = 60_000;

/// Default request: a slow band plus a fast band that is nearly white at a
/// two-minute sample time, peaking at 60% of `P_agg`.
pub fn default_signal(seed: u64) -> SignalSpec {
    SignalSpec {
        source: SignalSource::Synthetic(SyntheticSpec {
            seed,
            bands: vec![
                Band { time_constant_minutes: 60.0, weight: 1.0, order: 2 },
                Band { time_constant_minutes: 0.5, weight: 10.0, order: 1 },
            ],
        }),
        scaling: Scaling::PeakFraction(0.6),
        force_zero_mean: true,
    }
}

impl ScenarioConfig {
    pub fn preset(p: Preset) -> Self {
        let mut cfg = ScenarioConfig {
            name: p.name().to_string(),
            fleet: FleetBlock {
                n_devices: DESK_DEVICES,
                params: TclParams::NOMINAL,
                qos: QosSet::NOMINAL,
                seed: 7,
                lockout: LockoutPolicy::Enforced,
            },
            planning: PlanningBlock {
                tau_ba: 10,
                method: PlanMethod::Proposed,
                weights: Default::default(),
                z0_kwh: None,
                n0: None,
                solver: QpSettings::default(),
            },
            signal: default_signal(7),
            run: RunBlock {
                horizon: 720,
                t_s_minutes: 2.0,
                enforce_lockout: true,
                tie_break: TieBreak::LowestIndex,
                error_norm: ErrorNorm::L2Ratio,
                record_history: true,
            },
            output_dir: None,
        };
        match p {
            Preset::Nominal | Preset::TI => {}
            Preset::TIi => cfg.planning.method = PlanMethod::Alternative,
            Preset::TIiForced => {
                cfg.planning.method = PlanMethod::Alternative;
                cfg.fleet.lockout = LockoutPolicy::ForcedOverride;
            }
            Preset::TIii => {
                cfg.planning.method = PlanMethod::Alternative;
                cfg.fleet.lockout = LockoutPolicy::Disabled;
                cfg.run.enforce_lockout = false;
            }
        }
        cfg
    }

    pub fn full_scale(mut self) -> Self {
        self.fleet.n_devices = FULL_SCALE_DEVICES;
        self
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let cfg: ScenarioConfig = serde_json::from_reader(BufReader::new(f))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn fleet_config(&self) -> FleetConfig {
        FleetConfig {
            n_devices: self.fleet.n_devices,
            params: self.fleet.params,
            qos: self.fleet.qos,
            t_s_minutes: self.run.t_s_minutes,
            seed: self.fleet.seed,
            lockout: self.fleet.lockout,
            record_history: self.run.record_history,
        }
    }

    pub fn controller(&self) -> ControllerConfig {
        ControllerConfig {
            enforce_lockout: self.run.enforce_lockout,
            tie_break: self.run.tie_break,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.fleet_config().validate()?;
        if self.run.horizon == 0 {
            return Err(Error::Config("horizon must be at least one step".into()));
        }
        if self.planning.tau_ba == 0 {
            return Err(Error::Config("tau_ba must be at least one sample".into()));
        }
        self.planning.weights.validate()?;
        if let SignalSource::File { path } = &self.signal.source {
            if !path.is_file() {
                return Err(Error::Config(format!("signal file {} not found", path.display())));
            }
        }
        Ok(())
    }
}

/// Request in kW for the fleet described by `cfg`.
pub fn request(cfg: &ScenarioConfig, fleet: &Fleet) -> Result<Vec<f64>> {
    signal::ingest(&cfg.signal, cfg.run.horizon, cfg.run.t_s_minutes, fleet.constants().p_agg)
}

/// Plans against the initial state of `fleet` (or the configured one).
pub fn plan_stage(cfg: &ScenarioConfig, fleet: &Fleet, r_ba: Vec<f64>) -> Result<PlanSolution> {
    let cap = CapacityParams::new(&fleet.constants(), *fleet.coefficients(), cfg.planning.tau_ba)?;
    let mut problem = PlanProblem::new(r_ba, cap);
    problem.weights = cfg.planning.weights;
    problem.solver = cfg.planning.solver.clone();
    problem.z0 = cfg.planning.z0_kwh.unwrap_or_else(|| fleet.thermal_energy());
    problem.n0 = cfg.planning.n0.unwrap_or_else(|| fleet.on_count() as f64 / fleet.len() as f64);
    plan(&problem, cfg.planning.method)
}

/// Pass/fail of every check a run must satisfy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Invariants {
    pub plan_optimal: Option<bool>,
    pub plan_ves: Option<bool>,
    pub bookkeeping: bool,
    pub temperature: bool,
    /// Required only when the fleet enforces the lockout.
    pub cycling: bool,
    pub cycling_required: bool,
    /// Device-level recomputation of the aggregates and of `H_k` agreed.
    pub recomputed_from_devices: bool,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub config: ScenarioConfig,
    pub plan: Option<PlanSolution>,
    pub run: TrackingRun,
    pub metrics: RunMetrics,
    pub audit: AuditReport,
    pub invariants: Invariants,
}

/// Simulates `reference` on a fresh fleet and measures the run.
pub fn simulate_stage(cfg: &ScenarioConfig, reference: &[f64], plan: Option<PlanSolution>) -> Result<Outcome> {
    if reference.len() != cfg.run.horizon {
        return Err(Error::Config(format!(
            "reference has {} samples, horizon is {}",
            reference.len(),
            cfg.run.horizon
        )));
    }
    let mut fleet = Fleet::init(&cfg.fleet_config())?;
    let run = track(&mut fleet, reference, &cfg.controller())?;
    let metrics = RunMetrics::compute(&run.trace, reference, cfg.run.error_norm)?;
    let audit = aggregate_audit(&run.trace, fleet.history(), fleet.params(), fleet.qos())?;
    let mut recomputed = audit.recomputed_from_devices;
    if let Some(h) = fleet.history() {
        let h2 = h_series_from_history(h, &fleet.constants(), reference)?;
        if h2 != metrics.h_series {
            return Err(Error::Consistency("H_k from device histories differs from the trace".into()));
        }
    } else {
        recomputed = false;
    }
    let cycling_required = fleet.lockout() == LockoutPolicy::Enforced;
    let p_agg = fleet.constants().p_agg;
    let plan_optimal = plan.as_ref().map(|p| p.status == QpStatus::Optimal);
    let plan_ves = plan
        .as_ref()
        .filter(|p| p.method.has_ves_row())
        .map(|p| p.ves_residual_kwh <= 1e-6 * p_agg);
    let temperature = audit.temperature_violations == 0;
    let cycling = audit.cycling_window_violations == 0 && audit.devices_cycling_too_fast.unwrap_or(0) == 0;
    let passed = plan_optimal.unwrap_or(true)
        && plan_ves.unwrap_or(true)
        && audit.bookkeeping_ok()
        && temperature
        && (cycling || !cycling_required);
    Ok(Outcome {
        config: cfg.clone(),
        plan,
        run,
        metrics,
        invariants: Invariants {
            plan_optimal,
            plan_ves,
            bookkeeping: audit.bookkeeping_ok(),
            temperature,
            cycling,
            cycling_required,
            recomputed_from_devices: recomputed,
            passed,
        },
        audit,
    })
}

/// Plan, simulate and measure, in memory.
pub fn execute(cfg: &ScenarioConfig) -> Result<Outcome> {
    cfg.validate()?;
    let fleet = Fleet::init(&cfg.fleet_config())?;
    let r_ba = request(cfg, &fleet)?;
    let plan = plan_stage(cfg, &fleet, r_ba)?;
    let reference = plan.reference.clone();
    simulate_stage(cfg, &reference, Some(plan))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    File::create(&path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.flush().map_err(|e| Error::io(dir.join(name), e))
}

fn write_series(dir: &Path, name: &str, columns: &[&str], cols: &[&[f64]]) -> Result<()> {
    let mut out = csv::Writer::from_writer(create(dir, name)?);
    let mut head = vec!["k"];
    head.extend_from_slice(columns);
    out.write_record(&head)?;
    let n = cols.first().map_or(0, |c| c.len());
    for k in 0..n {
        let mut rec = vec![k.to_string()];
        rec.extend(cols.iter().map(|c| c[k].to_string()));
        out.write_record(&rec)?;
    }
    out.flush().map_err(|e| Error::io(dir.join(name), e))
}

/// Column `name` of a CSV file as numbers.
pub fn read_column(path: &Path, name: &str) -> Result<Vec<f64>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(f);
    let idx = rdr
        .headers()?
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Config(format!("{}: no column `{name}`", path.display())))?;
    rdr.records()
        .map(|rec| {
            let rec = rec?;
            rec[idx]
                .parse()
                .map_err(|_| Error::Config(format!("{}: bad number `{}`", path.display(), &rec[idx])))
        })
        .collect()
}

/// Reads a reference from a plan CSV (`r_kw`) or a tracking CSV
/// (`reference_kw`).
pub fn read_reference(path: &Path) -> Result<Vec<f64>> {
    read_column(path, "r_kw").or_else(|_| read_column(path, "reference_kw"))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StageError {
    stage: String,
    message: String,
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn record_error(dir: &Path, stage: &str, e: &Error) {
    let report = StageError {
        stage: stage.into(),
        message: e.to_string(),
    };
    if let Err(w) = write_json(dir, "error.json", &report) {
        log::error!("could not write error report: {w}");
    }
}

fn stage<T>(dir: &Path, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    info!("{name}");
    f().inspect_err(|e| record_error(dir, name, e))
}

pub fn write_plan(dir: &Path, plan: &PlanSolution) -> Result<()> {
    plan.write_csv(create(dir, "plan.csv")?)?;
    write_json(dir, "plan.json", &plan.summary())
}

/// Plans only; writes the resolved config, request and plan.
pub fn run_plan(cfg: &ScenarioConfig, dir: &Path) -> Result<PlanSolution> {
    prepare_dir(dir)?;
    write_json(dir, "config.json", cfg)?;
    let plan = stage(dir, "plan", || {
        cfg.validate()?;
        let fleet = Fleet::init(&cfg.fleet_config())?;
        let r_ba = request(cfg, &fleet)?;
        write_series(dir, "request.csv", &["r_ba_kw"], &[&r_ba])?;
        plan_stage(cfg, &fleet, r_ba)
    })?;
    write_plan(dir, &plan)?;
    render_plots(dir)?;
    Ok(plan)
}

/// Simulates a given reference and writes the run artifacts.
pub fn run_simulation(cfg: &ScenarioConfig, reference: &[f64], dir: &Path) -> Result<Outcome> {
    prepare_dir(dir)?;
    write_json(dir, "config.json", cfg)?;
    let out = stage(dir, "simulate", || {
        cfg.validate()?;
        simulate_stage(cfg, reference, None)
    })?;
    write_run(dir, &out)?;
    Ok(out)
}

/// Plan, simulate and measure, writing every artifact. On failure the
/// artifacts of the completed stages remain, with `error.json`.
pub fn run_scenario(cfg: &ScenarioConfig, dir: &Path) -> Result<Outcome> {
    let plan = run_plan(cfg, dir)?;
    let reference = plan.reference.clone();
    let out = stage(dir, "simulate", || simulate_stage(cfg, &reference, Some(plan)))?;
    write_run(dir, &out)?;
    Ok(out)
}

fn write_run(dir: &Path, out: &Outcome) -> Result<()> {
    let trace = &out.run.trace;
    trace.write_csv(create(dir, "trace.csv")?)?;
    write_json(dir, "trace.json", trace)?;
    write_series(
        dir,
        "tracking.csv",
        &["reference_kw", "achieved_kw"],
        &[&out.run.reference, &trace.y()],
    )?;
    let mut hist = csv::Writer::from_writer(create(dir, "intervals.csv")?);
    hist.write_record(["minutes", "count"])?;
    for b in &out.metrics.interval_histogram {
        hist.write_record([b.minutes.to_string(), b.count.to_string()])?;
    }
    hist.flush().map_err(|e| Error::io(dir.join("intervals.csv"), e))?;
    drop(hist);
    write_json(dir, "metrics.json", &out.metrics)?;
    write_json(
        dir,
        "audit.json",
        &serde_json::json!({ "audit": out.audit, "invariants": out.invariants }),
    )?;
    render_plots(dir)
}

/// SVG figures drawn from whichever CSV artifacts exist in `dir`.
pub fn render_plots(dir: &Path) -> Result<()> {
    let save = |name: &str, svg: String| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, svg).map_err(|e| Error::io(path, e))
    };
    let minutes = |n: usize, t_s: f64| (0..n).map(|k| k as f64 * t_s).collect::<Vec<f64>>();
    let t_s = ScenarioConfig::load(&dir.join("config.json")).map_or(2.0, |c| c.run.t_s_minutes);

    let plan_csv = dir.join("plan.csv");
    if plan_csv.is_file() {
        let r_ba = read_column(&plan_csv, "r_ba_kw")?;
        let r = read_column(&plan_csv, "r_kw")?;
        let x = minutes(r.len(), t_s);
        save(
            "plan.svg",
            plot::lines("Request and planned reference", "minutes", "kW", &x, &[("r_ba", &r_ba), ("r", &r)]),
        )?;
    }
    let tracking = dir.join("tracking.csv");
    if tracking.is_file() {
        let r = read_column(&tracking, "reference_kw")?;
        let y = read_column(&tracking, "achieved_kw")?;
        let x = minutes(r.len(), t_s);
        save(
            "tracking.svg",
            plot::lines("Reference and achieved deviation", "minutes", "kW", &x, &[("reference", &r), ("achieved", &y)]),
        )?;
    }
    let intervals = dir.join("intervals.csv");
    if intervals.is_file() {
        let m = read_column(&intervals, "minutes")?;
        let c = read_column(&intervals, "count")?;
        let data: Vec<(f64, f64)> = m.into_iter().zip(c).collect();
        save("intervals.svg", plot::bars("Inter-switch intervals", "minutes", "count", &data))?;
    }
    Ok(())
}

/// Result of re-checking a run directory.
#[derive(Debug, Clone, Serialize)]
pub struct DirAudit {
    pub audit: AuditReport,
    /// `trace.csv` and `trace.json` describe the same aggregates.
    pub csv_matches_json: bool,
    /// Metrics recomputed from the trace equal `metrics.json`.
    pub metrics_match: bool,
    pub cycling_required: bool,
    pub plan_ves_kwh: Option<f64>,
    pub plan_ves_ok: Option<bool>,
    pub passed: bool,
}

/// Invariant suite over an existing run directory.
pub fn audit_run_dir(dir: &Path) -> Result<DirAudit> {
    let cfg = ScenarioConfig::load(&dir.join("config.json"))?;
    let open = |name: &str| -> Result<BufReader<File>> {
        let p = dir.join(name);
        File::open(&p).map(BufReader::new).map_err(|e| Error::io(p, e))
    };
    let trace: FleetTrace = serde_json::from_reader(open("trace.json")?)?;
    let from_csv = FleetTrace::read_csv(open("trace.csv")?, trace.constants, trace.initial_on)?;
    let csv_matches_json = from_csv.rows.len() == trace.rows.len()
        && from_csv.rows.iter().zip(&trace.rows).all(|(a, b)| {
            (a.k, a.on, a.s_on, a.s_off, a.stuck_on, a.stuck_off, a.d_on, a.d_off)
                == (b.k, b.on, b.s_on, b.s_off, b.stuck_on, b.stuck_off, b.d_on, b.d_off)
                && (a.y_kw - b.y_kw).abs() <= 1e-9 * (1.0 + b.y_kw.abs())
        });
    let audit = aggregate_audit(&trace, None, &cfg.fleet.params, &cfg.fleet.qos)?;
    let reference = read_column(&dir.join("tracking.csv"), "reference_kw")?;
    let recomputed = RunMetrics::compute(&trace, &reference, cfg.run.error_norm)?;
    let stored: RunMetrics = serde_json::from_reader(open("metrics.json")?)?;
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()));
    let metrics_match = stored.d_tau == recomputed.d_tau
        && stored.h_series == recomputed.h_series
        && close(stored.s_tau, recomputed.s_tau)
        && close(stored.tracking_error_pct, recomputed.tracking_error_pct)
        && stored.interval_histogram == recomputed.interval_histogram;
    let plan_csv = dir.join("plan.csv");
    let plan_ves_kwh = if plan_csv.is_file() {
        let r = read_column(&plan_csv, "r_kw")?;
        Some(crate::capacity::ves_check(&r, cfg.run.t_s_minutes / 60.0))
    } else {
        None
    };
    let plan_ves_ok = plan_ves_kwh
        .filter(|_| cfg.planning.method.has_ves_row())
        .map(|v| v <= 1e-6 * trace.constants.p_agg);
    let cycling_required = cfg.fleet.lockout == LockoutPolicy::Enforced;
    let passed = csv_matches_json
        && metrics_match
        && audit.bookkeeping_ok()
        && audit.stuck_recursion_failures == 0
        && audit.temperature_violations == 0
        && (!cycling_required || audit.cycling_window_violations == 0)
        && plan_ves_ok.unwrap_or(true);
    Ok(DirAudit {
        audit,
        csv_matches_json,
        metrics_match,
        cycling_required,
        plan_ves_kwh,
        plan_ves_ok,
        passed,
    })
}
