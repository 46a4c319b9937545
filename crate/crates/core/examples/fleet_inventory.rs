//! A small fleet driven by random commands. The stuck fractions kept by the
//! simulator follow the inventory recursion, and the audit recomputes every
//! aggregate from the per-device histories.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tclcap::audit::aggregate_audit;
use tclcap::capacity::stuck_step;
use tclcap::fleet::{Command, Fleet, FleetConfig};
use tclcap::tcl::Mode;

fn main() -> tclcap::Result<()> {
    let cfg = FleetConfig { record_history: true, ..FleetConfig::nominal(500) };
    let mut fleet = Fleet::init(&cfg)?;
    let tau = cfg.qos.tau_tcl;
    let n = cfg.n_devices as f64;
    let mut trace = fleet.new_trace();
    let mut rng = ChaCha8Rng::seed_from_u64(3);

    for _ in 0..60 {
        let mut commands = Vec::new();
        for device in 0..cfg.n_devices {
            if rng.random_bool(0.05) {
                let mode = if rng.random_bool(0.5) { Mode::On } else { Mode::Off };
                commands.push(Command { device, mode });
            }
        }
        fleet.step_into(&commands, &mut trace);
    }

    let s_on: Vec<f64> = trace.rows.iter().map(|r| r.s_on as f64 / n).collect();
    let mut gamma = 0.0;
    println!("   k  n_on  s_on s_off  stuck_on  recursion  rejected");
    for (k, row) in trace.rows.iter().enumerate() {
        let window: Vec<f64> = (0..=tau).map_while(|i| k.checked_sub(i).map(|j| s_on[j])).collect();
        gamma = stuck_step(gamma, &window, tau)?;
        if k % 5 == 0 {
            println!(
                "{k:>4} {:>5} {:>5} {:>5} {:>9} {:>10.1} {:>9}",
                row.on, row.s_on, row.s_off, row.stuck_on, gamma * n, row.rejected
            );
        }
    }

    let audit = aggregate_audit(&trace, fleet.history(), &cfg.params, &cfg.qos)?;
    println!(
        "audit: bookkeeping {} qos {} (recomputed from devices: {})",
        audit.bookkeeping_ok(),
        audit.qos_ok(),
        audit.recomputed_from_devices
    );
    Ok(())
}
