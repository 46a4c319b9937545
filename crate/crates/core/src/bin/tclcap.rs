use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use tclcap::scenario::{
    self, audit_run_dir, run_plan, run_scenario, run_simulation, run_sweep, write_sweep, Preset, ScenarioConfig,
};
use tclcap::scenario::signal::SignalSource;

#[derive(Parser)]
#[command(name = "tclcap", version, about = "Plan, simulate and audit TCL fleet reference tracking")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Scenario JSON; flags below override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in scenario used when no config file is given.
    #[arg(long, global = true, default_value = "nominal")]
    preset: String,
    /// 60,000 devices instead of the desk-scale 5,000.
    #[arg(long, global = true)]
    full_scale: bool,
    /// Seed for the fleet and the synthetic request.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    devices: Option<usize>,
    #[arg(long, global = true)]
    horizon: Option<usize>,
    /// Planning lockout in samples.
    #[arg(long, global = true)]
    tau_ba: Option<usize>,
    /// Worker threads for the sweep.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run directory; defaults to `<output root>/<scenario name>`.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, env = "TCLCAP_OUTPUT_ROOT", default_value = "runs")]
    output_root: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Plan a reference from the request.
    Plan,
    /// Track a stored reference (`r_kw` or `reference_kw` column).
    Simulate {
        #[arg(long)]
        reference: PathBuf,
    },
    /// Plan, simulate and measure.
    Track,
    /// Parametric study; lockouts in samples.
    Sweep {
        #[arg(long, value_delimiter = ',', default_values_t = [5, 10, 15])]
        tau_tcl: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [5, 10, 15, 20, 40])]
        tau_ba: Vec<usize>,
    },
    /// Re-check an existing run directory.
    Audit { dir: PathBuf },
}

impl Common {
    fn resolve(&self) -> Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(p) => ScenarioConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => ScenarioConfig::preset(self.preset.parse::<Preset>()?),
        };
        if self.full_scale {
            cfg = cfg.full_scale();
        }
        if let Some(s) = self.seed {
            cfg.fleet.seed = s;
            if let SignalSource::Synthetic(spec) = &mut cfg.signal.source {
                spec.seed = s;
            }
        }
        if let Some(n) = self.devices {
            cfg.fleet.n_devices = n;
        }
        if let Some(h) = self.horizon {
            cfg.run.horizon = h;
        }
        if let Some(t) = self.tau_ba {
            cfg.planning.tau_ba = t;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn dir(&self, cfg: &ScenarioConfig) -> PathBuf {
        self.output
            .clone()
            .or_else(|| cfg.output_dir.clone())
            .unwrap_or_else(|| self.output_root.join(&cfg.name))
    }
}

fn report(dir: &Path, value: serde_json::Value) {
    println!("{}", json!({ "dir": dir, "result": value }));
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.common.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match &cli.cmd {
        Cmd::Audit { dir } => {
            let a = audit_run_dir(dir)?;
            report(dir, serde_json::to_value(&a)?);
            return Ok(a.passed);
        }
        Cmd::Plan => {
            let cfg = cli.common.resolve()?;
            let dir = cli.common.dir(&cfg);
            let plan = run_plan(&cfg, &dir)?;
            let ok = plan.status == tclcap::qp::QpStatus::Optimal
                && (!plan.method.has_ves_row()
                    || plan.ves_residual_kwh <= 1e-6 * cfg.fleet.n_devices as f64 * cfg.fleet.params.p_rated);
            report(&dir, plan.summary());
            Ok(ok)
        }
        Cmd::Simulate { reference } => {
            let cfg = cli.common.resolve()?;
            let dir = cli.common.dir(&cfg);
            let r = scenario::read_reference(reference)?;
            let out = run_simulation(&cfg, &r, &dir)?;
            report(&dir, json!({ "invariants": out.invariants, "tracking_error_pct": out.metrics.tracking_error_pct }));
            Ok(out.invariants.passed)
        }
        Cmd::Track => {
            let cfg = cli.common.resolve()?;
            let dir = cli.common.dir(&cfg);
            let out = run_scenario(&cfg, &dir)?;
            let m = &out.metrics;
            report(
                &dir,
                json!({
                    "invariants": out.invariants,
                    "tracking_error_pct": m.tracking_error_pct,
                    "s_tau": m.s_tau,
                    "d_tau": m.d_tau,
                    "rejected_commands": m.rejected_commands,
                    "one_sample_interval_share": m.one_sample_interval_share,
                }),
            );
            Ok(out.invariants.passed)
        }
        Cmd::Sweep { tau_tcl, tau_ba } => {
            let cfg = cli.common.resolve()?;
            let dir = cli.common.output.clone().unwrap_or_else(|| cli.common.output_root.join("sweep"));
            std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            let cells = run_sweep(&cfg, tau_tcl, tau_ba)?;
            let path = dir.join("sweep.csv");
            write_sweep(&cells, BufWriter::new(File::create(&path)?))?;
            serde_json::to_writer_pretty(BufWriter::new(File::create(dir.join("config.json"))?), &cfg)?;
            let svg = sweep_plot(&cells);
            std::fs::write(dir.join("sweep.svg"), svg)?;
            report(&dir, serde_json::to_value(&cells)?);
            Ok(cells.iter().all(|c| c.error.is_none()))
        }
    }
}

/// `s_tau` against `tau_ba`, one line per `tau_tcl`.
fn sweep_plot(cells: &[scenario::SweepCell]) -> String {
    let mut ba: Vec<f64> = cells.iter().map(|c| c.tau_ba_min).collect();
    ba.sort_by(f64::total_cmp);
    ba.dedup();
    let mut tcl: Vec<f64> = cells.iter().map(|c| c.tau_tcl_min).collect();
    tcl.sort_by(f64::total_cmp);
    tcl.dedup();
    let names: Vec<String> = tcl.iter().map(|t| format!("tau_tcl {t} min")).collect();
    let rows: Vec<Vec<f64>> = tcl
        .iter()
        .map(|&t| {
            ba.iter()
                .map(|&b| {
                    cells
                        .iter()
                        .find(|c| c.tau_tcl_min == t && c.tau_ba_min == b)
                        .and_then(|c| c.s_tau)
                        .unwrap_or(f64::NAN)
                })
                .collect()
        })
        .collect();
    let series: Vec<(&str, &[f64])> = names.iter().map(String::as_str).zip(rows.iter().map(Vec::as_slice)).collect();
    scenario::plot::lines("Switches per device", "tau_ba (minutes)", "s_tau", &ba, &series)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("tclcap: invariant checks failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("tclcap: {e:#}");
            ExitCode::from(2)
        }
    }
}
