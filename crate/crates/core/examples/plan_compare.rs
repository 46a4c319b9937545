//! The same request projected two ways: onto the cycling-aware capacity set
//! and onto the temperature-only set.

use tclcap::capacity::RowKind;
use tclcap::planner::{plan, PlanMethod};
use tclcap::scenario::{plan_stage, request, Preset, ScenarioConfig};
use tclcap::fleet::Fleet;

fn variation(r: &[f64]) -> f64 {
    r.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

fn main() -> tclcap::Result<()> {
    let mut cfg = ScenarioConfig::preset(Preset::TI);
    let fleet = Fleet::init(&cfg.fleet_config())?;
    let r_ba = request(&cfg, &fleet)?;
    println!("request: {} samples, peak {:.0} kW, variation {:.0} kW", r_ba.len(),
        r_ba.iter().fold(0.0f64, |m, v| m.max(v.abs())), variation(&r_ba));

    for method in [PlanMethod::Proposed, PlanMethod::Alternative] {
        cfg.planning.method = method;
        let t = std::time::Instant::now();
        let p = plan_stage(&cfg, &fleet, r_ba.clone())?;
        let dist = (p.reference.iter().zip(&r_ba).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            / r_ba.iter().map(|b| b * b).sum::<f64>())
        .sqrt();
        println!(
            "{method:?}: {:?} in {:.1?}, {} iterations, distance to request {:.1}%, variation {:.0} kW, \
             peak stuck on {:.3}, VES residual {:.1e} kWh",
            p.status,
            t.elapsed(),
            p.iterations,
            100.0 * dist,
            variation(&p.reference),
            p.gamma_on.iter().fold(0.0f64, |m, &g| m.max(g)) + 0.0,
            p.ves_residual_kwh
        );
    }

    // which constraints bind for the proposed plan
    cfg.planning.method = PlanMethod::Proposed;
    let cap = tclcap::capacity::CapacityParams::new(&fleet.constants(), *fleet.coefficients(), cfg.planning.tau_ba)?;
    let mut prob = tclcap::planner::PlanProblem::new(r_ba, cap);
    prob.z0 = fleet.thermal_energy();
    prob.n0 = fleet.on_count() as f64 / fleet.len() as f64;
    let p = plan(&prob, PlanMethod::Proposed)?;
    let om = tclcap::capacity::build_omega(&cap, p.horizon(), prob.z0, prob.n0, prob.options)?;
    let x = solution_vector(&om, &p);
    for kind in [RowKind::PowerLower, RowKind::PowerUpper, RowKind::EnergyLower, RowKind::EnergyUpper] {
        println!("  active {kind:?}: {}", tclcap::planner::active_rows(&om, &x, kind, 1e-6));
    }
    Ok(())
}

fn solution_vector(om: &tclcap::capacity::OmegaSystem, p: &tclcap::planner::PlanSolution) -> Vec<f64> {
    use tclcap::capacity::Block;
    let mut x = vec![0.0; om.n_vars()];
    let lay = om.layout;
    for k in 0..p.horizon() {
        x[lay.index(Block::R, k)] = p.reference[k];
        x[lay.index(Block::NOn, k)] = p.n_on[k];
        x[lay.index(Block::SOn, k)] = p.s_on[k];
        x[lay.index(Block::SOff, k)] = p.s_off[k];
        x[lay.index(Block::GammaOn, k)] = p.gamma_on[k];
        x[lay.index(Block::GammaOff, k)] = p.gamma_off[k];
        x[lay.index(Block::Z, k)] = if k + 1 < p.horizon() { p.z[k + 1] } else { p.z_end };
    }
    x
}
