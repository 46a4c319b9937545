//! One air conditioner under its own thermostat: derived coefficients, the
//! natural cycle, and the thermal-energy view of its temperature.

use tclcap::tcl::{derive_coefficients, next_temperature, thermal_energy_of, Mode, QosSet, TclParams};

fn main() -> tclcap::Result<()> {
    let params = TclParams::NOMINAL;
    let qos = QosSet::NOMINAL;
    let coef = derive_coefficients(&params, &qos, 2.0)?;

    println!("a_bar      {:.6}", coef.a_bar);
    println!("b          {:.6} kWh/kW", coef.b_coef);
    println!("P_bar      {:.4} kW", coef.p_base);
    println!("C_bar      {:.4} kWh", coef.c_bar);
    println!("duty ratio {:.4}", params.duty_ratio(qos.theta_set));

    // thermostat only, 8 hours
    let (mut theta, mut mode) = (qos.theta_set, Mode::On);
    let mut switches = Vec::new();
    let mut on_steps = 0;
    let steps = 240;
    for k in 0..steps {
        theta = next_temperature(theta, mode, &coef, &params);
        let forced = if theta <= qos.theta_min() {
            Some(Mode::Off)
        } else if theta >= qos.theta_max() {
            Some(Mode::On)
        } else {
            None
        };
        if let Some(m) = forced.filter(|&m| m != mode) {
            mode = m;
            switches.push(k);
        }
        on_steps += usize::from(mode.is_on());
        if k % 20 == 0 {
            println!(
                "k {k:>3}  theta {theta:6.3}  mode {:<3}  energy {:+.3} kWh",
                if mode.is_on() { "on" } else { "off" },
                thermal_energy_of(theta, &params, &qos)
            );
        }
    }
    let gaps: Vec<usize> = switches.windows(2).map(|w| w[1] - w[0]).collect();
    println!("switch gaps (samples): {gaps:?}");
    println!("share of time on: {:.3}", on_steps as f64 / steps as f64);
    Ok(())
}
