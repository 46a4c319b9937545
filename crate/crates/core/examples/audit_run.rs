//! Runs a scenario into a directory, then re-checks the directory from its
//! files alone.

use tclcap::scenario::{audit_run_dir, run_scenario, Preset, ScenarioConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = ScenarioConfig::preset(Preset::TI);
    cfg.fleet.n_devices = 1000;
    cfg.run.horizon = 240;
    let dir = std::env::temp_dir().join("tclcap-audit-example");
    let out = run_scenario(&cfg, &dir)?;
    println!("run: tracking error {:.3}%, invariants passed {}", out.metrics.tracking_error_pct, out.invariants.passed);

    let mut files: Vec<String> = std::fs::read_dir(&dir)
        ?
        .filter_map(|e| e.ok().map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect();
    files.sort();
    println!("artifacts in {}: {}", dir.display(), files.join(", "));

    let a = audit_run_dir(&dir)?;
    println!("csv matches json {}, metrics reproduce {}, passed {}", a.csv_matches_json, a.metrics_match, a.passed);
    println!("{}", serde_json::to_string_pretty(&a.audit)?);
    Ok(())
}
