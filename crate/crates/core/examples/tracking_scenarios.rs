//! The three tracking scenarios at desk scale, plus the variant where only
//! thermostat overrides may break the lockout.

use tclcap::scenario::{execute, Preset, ScenarioConfig};

fn main() -> tclcap::Result<()> {
    println!("{:<12} {:>10} {:>8} {:>9} {:>10} {:>10} {:>9}", "scenario", "error %", "s_tau", "rejected", "window", "one-step %", "passed");
    for preset in [Preset::TI, Preset::TIi, Preset::TIiForced, Preset::TIii] {
        let mut cfg = ScenarioConfig::preset(preset);
        cfg.run.record_history = false;
        let out = execute(&cfg)?;
        let m = &out.metrics;
        println!(
            "{:<12} {:>10.4} {:>8.2} {:>9} {:>10} {:>10.1} {:>9}",
            preset.name(),
            m.tracking_error_pct,
            m.s_tau,
            m.rejected_commands,
            m.cycling_window_violations,
            100.0 * m.one_sample_interval_share,
            out.invariants.passed
        );
    }
    Ok(())
}
