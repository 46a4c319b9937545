//! Switches per device and capacity exceedances as the planning lockout
//! grows past the device lockout.

use tclcap::scenario::{run_sweep, write_sweep, Preset, ScenarioConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let base = ScenarioConfig::preset(Preset::TI);
    let cells = run_sweep(&base, &[5, 10, 15], &[5, 10, 15, 20, 40])?;
    println!("tau_tcl  tau_ba   s_tau  d_tau  error %");
    for c in &cells {
        println!(
            "{:>4} min {:>4} min {:>7.2} {:>6} {:>8.3}",
            c.tau_tcl_min,
            c.tau_ba_min,
            c.s_tau.unwrap_or(f64::NAN),
            c.d_tau.map_or("-".into(), |d| d.to_string()),
            c.tracking_error_pct.unwrap_or(f64::NAN)
        );
    }
    let path = std::env::temp_dir().join("tclcap_sweep.csv");
    write_sweep(&cells, std::fs::File::create(&path)?)?;
    println!("written to {}", path.display());
    Ok(())
}
