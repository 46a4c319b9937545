//! Power and energy bounds as functions of the stuck fractions, and the
//! constraint set over a short horizon with its triplet export.

use std::collections::BTreeMap;
use std::fs::File;

use tclcap::capacity::{build_omega, energy_bounds, power_bounds, CapacityParams, OmegaOptions, RowKind};
use tclcap::fleet::{Fleet, FleetConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fleet = Fleet::init(&FleetConfig::nominal(5000))?;
    let cap = CapacityParams::new(&fleet.constants(), *fleet.coefficients(), 10)?;
    let (r_lo, r_hi) = cap.r_range();
    println!("P_agg {:.0} kW, P_bar {:.0} kW, N*C_bar {:.0} kWh", cap.p_agg, cap.p_base_agg, cap.c_bar_agg);
    println!("r range [{r_lo:.0}, {r_hi:.0}] kW\n");

    println!("gamma_on gamma_off   n_min  n_max     C-      C+");
    for (g_on, g_off) in [(0.0, 0.0), (0.1, 0.0), (0.2, 0.3), (0.25, 0.25), (0.5, 0.5), (0.0, 1.0)] {
        let (lo, hi) = power_bounds(g_on, g_off)?;
        let (elo, ehi) = energy_bounds(g_on, g_off, &cap);
        println!("{g_on:>8.2} {g_off:>9.2} {lo:>7.2} {hi:>6.2} {:>7.0} {:>7.0}", elo + 0.0, ehi + 0.0);
    }

    let om = build_omega(&cap, 30, fleet.thermal_energy(), fleet.on_count() as f64 / 5000.0, OmegaOptions::default())?;
    let mut kinds: BTreeMap<String, usize> = BTreeMap::new();
    for row in &om.rows {
        *kinds.entry(format!("{:?}", row.kind)).or_default() += 1;
    }
    println!("\n{} variables, {} rows", om.n_vars(), om.n_rows());
    for (k, count) in kinds {
        println!("  {k:<14} {count}");
    }
    let widest = om.rows.iter().filter(|r| r.kind != RowKind::Ves).map(|r| r.terms.len()).max().unwrap_or(0);
    println!("widest row apart from the energy-neutrality row: {widest} terms");
    println!("baseline point violation: {:.1e}", om.max_violation(&om.baseline_point()));

    let dir = std::env::temp_dir().join("tclcap-omega");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("omega_triplets.csv");
    om.write_triplets(File::create(&path)?)?;
    println!("triplets written to {}", path.display());
    Ok(())
}
