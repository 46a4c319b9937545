//! A small QP through the ADMM solver, checked against its KKT conditions.
//!
//!   min  x0² + x0 x1 + x1² + x2² - x0 - 2 x1
//!   s.t. x0 + x1 + x2 = 1,  0 ≤ x ≤ 0.6,  x0 - x2 ≥ 0.1

use tclcap::qp::{solve, QpProblem, QpSettings};

fn main() -> tclcap::Result<()> {
    let p = [(0, 0, 2.0), (0, 1, 1.0), (1, 1, 2.0), (2, 2, 2.0)];
    let q = vec![-1.0, -2.0, 0.0];
    let a = [
        (0, 0, 1.0), (0, 1, 1.0), (0, 2, 1.0),
        (1, 0, 1.0), (2, 1, 1.0), (3, 2, 1.0),
        (4, 0, 1.0), (4, 2, -1.0),
    ];
    let l = vec![1.0, 0.0, 0.0, 0.0, 0.1];
    let u = vec![1.0, 0.6, 0.6, 0.6, f64::INFINITY];
    let prob = QpProblem::new(3, &p, q.clone(), 5, &a, l.clone(), u.clone())?;
    let sol = solve(&prob, &QpSettings::default())?;

    println!("status {:?} after {} iterations (polished: {})", sol.status, sol.iterations, sol.polished);
    println!("x = {:.6?}", sol.x);
    println!("y = {:.6?}", sol.y);
    println!("objective {:.8}", sol.objective);

    // stationarity P x + q + Aᵀ y = 0
    let x = &sol.x;
    let mut grad = q;
    for &(i, j, v) in &p {
        grad[i] += v * x[j];
        if i != j {
            grad[j] += v * x[i];
        }
    }
    let mut ax = [0.0; 5];
    for &(i, j, v) in &a {
        grad[j] += v * sol.y[i];
        ax[i] += v * x[j];
    }
    let stat = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let prim = (0..5).map(|i| (l[i] - ax[i]).max(ax[i] - u[i]).max(0.0)).fold(0.0, f64::max);
    let comp = (0..5)
        .map(|i| match sol.y[i] {
            y if y > 0.0 => y * (u[i] - ax[i]),
            y if y < 0.0 => -y * (ax[i] - l[i]),
            _ => 0.0,
        })
        .fold(0.0f64, |m, c| m.max(c.abs()));
    println!("KKT: stationarity {stat:.1e}, primal {prim:.1e}, complementarity {comp:.1e}");
    Ok(())
}
