//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so every line is printed; exits nonzero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{as_general_rows, kkt, projected_gradient, random_box_qp};
use tclcap::audit::stuck_flag;
use tclcap::capacity::{stuck_step, CapacityParams};
use tclcap::fleet::{Command, Fleet, FleetConfig};
use tclcap::planner::{existence_witness, Weights};
use tclcap::qp::{solve, QpSettings, QpStatus};
use tclcap::scenario::{default_signal, execute, plan_stage, request, run_sweep, Outcome, Preset, ScenarioConfig};
use tclcap::tcl::{derive_coefficients, Mode, QosSet, TclParams};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn err(e: impl std::fmt::Display) -> Verdict {
    verdict(false, format!("error: {e}"))
}

// Criterion 1: per-device scans against the inventory recursion.
fn inventory_equivalence() -> Verdict {
    const N: usize = 200;
    const STEPS: usize = 150;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_gamma: f64 = 0.0;
    let mut on_failures = 0usize;
    let mut switches = 0usize;
    for case in 0..100u64 {
        let tau = rng.random_range(1..=12);
        let cfg = FleetConfig {
            seed: case,
            qos: QosSet { tau_tcl: tau, ..QosSet::NOMINAL },
            record_history: true,
            ..FleetConfig::nominal(N)
        };
        let mut fleet = match Fleet::init(&cfg) {
            Ok(f) => f,
            Err(e) => return err(e),
        };
        let mut trace = fleet.new_trace();
        let rate = rng.random_range(0.01..0.3);
        for _ in 0..STEPS {
            let mut commands = Vec::new();
            for device in 0..N {
                if rng.random_bool(rate) {
                    let mode = if rng.random_bool(0.5) { Mode::On } else { Mode::Off };
                    commands.push(Command { device, mode });
                }
            }
            fleet.step_into(&commands, &mut trace);
        }
        let h = fleet.history().expect("history recorded");
        let s_on: Vec<f64> = trace.rows.iter().map(|r| r.s_on as f64 / N as f64).collect();
        let s_off: Vec<f64> = trace.rows.iter().map(|r| r.s_off as f64 / N as f64).collect();
        let window = |s: &[f64], k: usize| -> Vec<f64> { (0..=tau).map_while(|i| k.checked_sub(i).map(|j| s[j])).collect() };
        let (mut g_on, mut g_off) = (0.0, 0.0);
        let mut prev_on = trace.initial_on;
        for (k, row) in trace.rows.iter().enumerate() {
            g_on = match stuck_step(g_on, &window(&s_on, k), tau) {
                Ok(g) => g,
                Err(e) => return err(e),
            };
            g_off = match stuck_step(g_off, &window(&s_off, k), tau) {
                Ok(g) => g,
                Err(e) => return err(e),
            };
            let (mut scan_on, mut scan_off, mut on) = (0usize, 0usize, 0usize);
            for j in 0..N {
                match stuck_flag(h.initial_modes[j], &h.modes[j], k, tau) {
                    Some(Mode::On) => scan_on += 1,
                    Some(Mode::Off) => scan_off += 1,
                    None => {}
                }
                on += usize::from(h.modes[j][k].is_on());
            }
            worst_gamma = worst_gamma
                .max((g_on * N as f64 - scan_on as f64).abs())
                .max((g_off * N as f64 - scan_off as f64).abs());
            if row.on != on || row.on + row.s_off != prev_on + row.s_on {
                on_failures += 1;
            }
            prev_on = row.on;
            switches += row.s_on + row.s_off;
        }
    }
    verdict(
        worst_gamma < 1e-9 && on_failures == 0,
        format!(
            "100 fleets x {STEPS} steps, {switches} switches: max |N*gamma - scan| = {worst_gamma:.1e}, n_on identity failures = {on_failures}"
        ),
    )
}

// Criterion 2: existence/uniqueness witness on the nominal parameters and random draws.
fn existence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0;
    let mut failed = Vec::new();
    let mut draws = vec![(TclParams::NOMINAL, QosSet::NOMINAL, 5000usize, 10usize)];
    while draws.len() < 21 {
        let params = TclParams {
            r_th: rng.random_range(1.0..4.0),
            c_th: rng.random_range(1.0..20.0),
            cop: rng.random_range(2.0..4.5),
            p_rated: rng.random_range(1.0..6.0),
            theta_a: rng.random_range(25.0..40.0),
        };
        let qos = QosSet {
            theta_set: rng.random_range(18.0..24.0),
            delta: rng.random_range(0.25..2.0),
            tau_tcl: rng.random_range(1..15),
            ..QosSet::NOMINAL
        };
        let duty = params.duty_ratio(qos.theta_set);
        if duty > 0.05 && duty < 0.95 {
            draws.push((params, qos, rng.random_range(50..20_000), rng.random_range(1..40)));
        }
    }
    for (i, (params, qos, n, tau_ba)) in draws.into_iter().enumerate() {
        let res = (|| -> tclcap::Result<bool> {
            let cfg = FleetConfig { params, qos, ..FleetConfig::nominal(n) };
            let constants = Fleet::init(&cfg)?.constants();
            let coef = derive_coefficients(&params, &qos, cfg.t_s_minutes)?;
            let cap = CapacityParams::new(&constants, coef, tau_ba)?;
            Ok(existence_witness(&cap, 48, &Weights::default())?.passed())
        })();
        checked += 1;
        match res {
            Ok(true) => {}
            Ok(false) => failed.push(format!("draw {i}")),
            Err(e) => failed.push(format!("draw {i}: {e}")),
        }
    }
    verdict(
        failed.is_empty(),
        format!("{checked} parameter sets (nominal + 20 random), failures: {failed:?}"),
    )
}

// Criterion 3: solver against a projected-gradient oracle.
fn qp_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_rel, mut worst_kkt): (f64, f64) = (0.0, 0.0);
    let mut not_optimal = 0;
    for _ in 0..50 {
        let n = rng.random_range(2..=100);
        let b = random_box_qp(n, &mut rng);
        let prob = as_general_rows(&b, &mut rng);
        let sol = match solve(&prob, &QpSettings::default()) {
            Ok(s) => s,
            Err(e) => return err(e),
        };
        if sol.status != QpStatus::Optimal {
            not_optimal += 1;
        }
        let oracle = projected_gradient(&b);
        let scale = oracle.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        let rel = (0..n).map(|j| (sol.x[j] - oracle[j]).abs()).fold(0.0, f64::max) / scale;
        worst_rel = worst_rel.max(rel);
        let k = kkt(&prob, &sol.x, &sol.y);
        worst_kkt = worst_kkt.max(k.stationarity).max(k.primal).max(k.complementarity);
    }
    verdict(
        not_optimal == 0 && worst_rel <= 1e-5 && worst_kkt <= 1e-6,
        format!("50 QPs: worst relative error {worst_rel:.1e} (limit 1e-5), worst KKT residual {worst_kkt:.1e} (limit 1e-6), non-optimal {not_optimal}"),
    )
}

// Criterion 4: exact QoS audit of every lockout-on run.
fn qos_enforcement(runs: &[(&str, &Outcome)]) -> Verdict {
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, out) in runs {
        let a = &out.audit;
        let too_fast = a.devices_cycling_too_fast.unwrap_or(usize::MAX);
        pass &= a.recomputed_from_devices && too_fast == 0 && a.cycling_window_violations == 0 && a.temperature_violations == 0;
        parts.push(format!(
            "{name}: {too_fast} devices over the switch limit, {} temperature violations",
            a.temperature_violations
        ));
    }
    verdict(pass, parts.join("; "))
}

// Criterion 5: proposed-method plans store no net energy. The alternative
// method has no such row.
fn ves() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut limit = f64::INFINITY;
    let mut plans = 0;
    for seed in [7u64, 11] {
        for tau_ba in [5, 10, 15, 20, 40] {
            let mut cfg = ScenarioConfig::preset(Preset::TI);
            cfg.fleet.seed = seed;
            cfg.signal = default_signal(seed);
            cfg.planning.tau_ba = tau_ba;
            let res = Fleet::init(&cfg.fleet_config()).and_then(|fleet| {
                let r_ba = request(&cfg, &fleet)?;
                Ok((plan_stage(&cfg, &fleet, r_ba)?, fleet.constants().p_agg))
            });
            match res {
                Ok((plan, p_agg)) => {
                    if plan.status != QpStatus::Optimal {
                        return verdict(false, format!("seed {seed}, tau_ba {tau_ba}: status {:?}", plan.status));
                    }
                    worst = worst.max(plan.ves_residual_kwh);
                    limit = limit.min(1e-6 * p_agg);
                    plans += 1;
                }
                Err(e) => return err(e),
            }
        }
    }
    verdict(
        worst <= limit,
        format!("{plans} plans (tau_ba 5..40, two seeds): worst residual {worst:.2e} (limit {limit:.2e})"),
    )
}

fn scenario(preset: Preset) -> tclcap::Result<Outcome> {
    let t = Instant::now();
    let out = execute(&ScenarioConfig::preset(preset))?;
    eprintln!("  ran {} in {:.1?}", preset.name(), t.elapsed());
    Ok(out)
}

// Criterion 10: parametric sweep, lockouts in samples.
fn sweep() -> Verdict {
    let t = Instant::now();
    let cells = match run_sweep(&ScenarioConfig::preset(Preset::TI), &[5, 10, 15], &[5, 10, 15, 20, 40]) {
        Ok(c) => c,
        Err(e) => return err(e),
    };
    eprintln!("  ran sweep in {:.1?}", t.elapsed());
    if let Some(c) = cells.iter().find(|c| c.error.is_some()) {
        return verdict(false, format!("cell ({}, {}) failed: {:?}", c.tau_tcl, c.tau_ba, c.error));
    }
    let mut monotone = true;
    for t in [5, 10, 15] {
        let col: Vec<f64> = cells.iter().filter(|c| c.tau_tcl == t).filter_map(|c| c.s_tau).collect();
        monotone &= col.windows(2).all(|w| w[1] <= w[0]);
    }
    let d = |t: usize, b: usize| cells.iter().find(|c| c.tau_tcl == t && c.tau_ba == b).and_then(|c| c.d_tau);
    let (d_long, d_equal) = (d(15, 40), d(15, 15));
    let table: Vec<String> = cells
        .iter()
        .map(|c| format!("({},{}) s={:.1} d={}", c.tau_tcl, c.tau_ba, c.s_tau.unwrap_or(f64::NAN), c.d_tau.unwrap_or(0)))
        .collect();
    verdict(
        monotone && d_long == Some(0) && d_equal.is_some_and(|v| v > 0),
        format!(
            "s_tau nonincreasing in tau_ba: {monotone}; d_tau(15,40) = {d_long:?} (want 0); d_tau(15,15) = {d_equal:?} (want > 0); cells {}",
            table.join(" ")
        ),
    )
}

fn main() -> ExitCode {
    // libtest flags such as --nocapture are accepted and ignored
    let mut results: Vec<(usize, &str, Verdict)> = Vec::new();
    results.push((1, "inventory model equivalence", inventory_equivalence()));
    results.push((2, "existence witness", existence()));
    results.push((3, "QP oracle equivalence", qp_oracle()));

    let t_i = scenario(Preset::TI);
    let t_ii = scenario(Preset::TIi);
    let t_ii_forced = scenario(Preset::TIiForced);
    let t_iii = scenario(Preset::TIii);

    match (&t_i, &t_ii) {
        (Ok(a), Ok(b)) => {
            results.push((4, "QoS enforcement", qos_enforcement(&[("t-i", a), ("t-ii", b)])));
        }
        (Err(e), _) | (_, Err(e)) => {
            results.push((4, "QoS enforcement", err(e)));
        }
    }

    results.push((5, "virtual energy storage", ves()));
    results.push((
        6,
        "t-i tracking",
        match &t_i {
            Ok(o) => {
                let e = o.metrics.tracking_error_pct;
                verdict(e <= 1.0, format!("tracking error {e:.4}% (limit 1%)"))
            }
            Err(e) => err(e),
        },
    ));
    results.push((
        7,
        "t-ii tracking",
        match (&t_i, &t_ii) {
            (Ok(a), Ok(b)) => {
                let (e1, e2) = (a.metrics.tracking_error_pct, b.metrics.tracking_error_pct);
                verdict(e2 >= 10.0 * e1, format!("tracking error {e2:.3}% vs t-i {e1:.4}%, ratio {:.0} (want >= 10)", e2 / e1))
            }
            (Err(e), _) | (_, Err(e)) => err(e),
        },
    ));
    results.push((
        8,
        "t-ii cycling pressure",
        match (&t_ii, &t_ii_forced) {
            (Ok(a), Ok(b)) => {
                let rejected = a.metrics.rejected_commands;
                let windows = b.metrics.cycling_window_violations;
                verdict(
                    rejected > 0 && windows > 0,
                    format!("rejected commands {rejected} (want > 0); switch-window violations with thermostat overrides exempt {windows} (want > 0)"),
                )
            }
            (Err(e), _) | (_, Err(e)) => err(e),
        },
    ));
    results.push((
        9,
        "t-iii tracking without lockout",
        match &t_iii {
            Ok(o) => {
                let e = o.metrics.tracking_error_pct;
                let share = o.metrics.one_sample_interval_share;
                verdict(
                    e <= 1.0 && share >= 0.1,
                    format!("tracking error {e:.4}% (limit 1%); one-sample interval share {:.1}% (want >= 10%)", 100.0 * share),
                )
            }
            Err(e) => err(e),
        },
    ));
    results.push((10, "parametric sweep", sweep()));

    let mut failed = 0;
    for (id, name, v) in &results {
        let tag = if v.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!v.pass);
        println!("criterion {id:>2} [{tag}] {name}: {}", v.detail);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
