//! One dispatch decision on a small fleet: who gets switched, who is locked,
//! and who is skipped because the thermostat is about to act.

use tclcap::controller::{dispatch, target_on_count, ControllerConfig};
use tclcap::fleet::{Fleet, FleetConfig};

fn main() -> tclcap::Result<()> {
    let mut fleet = Fleet::init(&FleetConfig::nominal(24))?;
    let cfg = ControllerConfig::default();
    let c = fleet.constants();

    // settle a few steps at baseline so some devices carry a lockout
    for _ in 0..3 {
        let d = dispatch(&fleet, 0.0, &cfg);
        fleet.apply_and_step(&d.commands);
    }

    let r = 0.25 * c.p_agg;
    let d = dispatch(&fleet, r, &cfg);
    println!("reference {r:.1} kW: {} on now, target {}, after thermostat {}", fleet.on_count(), target_on_count(&fleet, r), d.predicted);
    println!("commands {}, expected rejections {}, deficit {}", d.commands.len(), d.blocked, d.deficit);

    let commanded: Vec<usize> = d.commands.iter().map(|c| c.device).collect();
    let mut order: Vec<usize> = (0..fleet.len()).collect();
    order.sort_by(|&a, &b| fleet.states()[b].theta.total_cmp(&fleet.states()[a].theta));
    println!("\n dev  theta  mode  locked  admissible_on  commanded");
    for j in order {
        let s = &fleet.states()[j];
        println!(
            "{j:>4} {:>6.3}  {:<4}  {:<6}  {:<13}  {}",
            s.theta,
            if s.mode.is_on() { "on" } else { "off" },
            fleet.is_locked(j),
            fleet.admissible(j, tclcap::tcl::Mode::On),
            if commanded.contains(&j) { "<-" } else { "" }
        );
    }
    Ok(())
}
