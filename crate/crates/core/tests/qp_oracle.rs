//! The QP solver against independent oracles and an independent KKT check.

mod common;

use common::{as_general_rows, kkt, projected_gradient, random_box_qp, random_spd};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tclcap::qp::{solve, solve_from, QpProblem, QpSettings, QpStatus};

#[test]
fn random_box_qps_match_projected_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let n = rng.random_range(2..=100);
        let b = random_box_qp(n, &mut rng);
        let prob = as_general_rows(&b, &mut rng);
        let sol = solve(&prob, &QpSettings::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal, "case {case}");
        let oracle = projected_gradient(&b);
        let scale = oracle.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        let err = (0..n).map(|j| (sol.x[j] - oracle[j]).abs()).fold(0.0, f64::max) / scale;
        worst = worst.max(err);
        assert!(err <= 1e-5, "case {case} (n = {n}): relative error {err:e}");
        let k = kkt(&prob, &sol.x, &sol.y);
        assert!(
            k.stationarity <= 1e-6 && k.primal <= 1e-6 && k.complementarity <= 1e-6,
            "case {case}: KKT {:e} {:e} {:e}",
            k.stationarity,
            k.primal,
            k.complementarity
        );
    }
    eprintln!("worst relative error {worst:e}");
}

#[test]
fn general_constraints_satisfy_kkt_and_resist_permutation() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..20 {
        let n = rng.random_range(3..40);
        let m = rng.random_range(1..2 * n);
        let p = random_spd(n, &mut rng);
        let mut ptrip = Vec::new();
        for i in 0..n {
            for j in i..n {
                ptrip.push((i, j, p[i][j]));
            }
        }
        let q: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let x_feas: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut a = Vec::new();
        let mut l = Vec::new();
        let mut u = Vec::new();
        for i in 0..m {
            let mut ax = 0.0;
            for j in 0..n {
                if rng.random_bool(0.3) {
                    let v = rng.random_range(-2.0..2.0);
                    a.push((i, j, v));
                    ax += v * x_feas[j];
                }
            }
            match rng.random_range(0..3) {
                0 => {
                    l.push(ax);
                    u.push(ax);
                }
                1 => {
                    l.push(ax - rng.random_range(0.0..0.5));
                    u.push(f64::INFINITY);
                }
                _ => {
                    l.push(ax - rng.random_range(0.0..0.5));
                    u.push(ax + rng.random_range(0.0..0.5));
                }
            }
        }
        let prob = QpProblem::new(n, &ptrip, q, m, &a, l, u).unwrap();
        let sol = solve(&prob, &QpSettings::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal, "case {case}");
        let k = kkt(&prob, &sol.x, &sol.y);
        assert!(k.stationarity <= 1e-6 && k.primal <= 1e-6 && k.complementarity <= 1e-6, "case {case}");

        let mut perm: Vec<usize> = (0..m).collect();
        perm.reverse();
        let permuted = solve(&prob.permute_rows(&perm), &QpSettings::default()).unwrap();
        for j in 0..n {
            assert!((permuted.x[j] - sol.x[j]).abs() <= 1e-6 * (1.0 + sol.x[j].abs()));
        }

        let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let y0: Vec<f64> = (0..m).map(|_| rng.random_range(-10.0..10.0)).collect();
        let other = solve_from(&prob, &QpSettings::default(), Some(&x0), Some(&y0)).unwrap();
        for j in 0..n {
            assert!((other.x[j] - sol.x[j]).abs() <= 1e-6 * (1.0 + sol.x[j].abs()));
        }
    }
}
