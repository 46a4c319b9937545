//! Shared oracles for the integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use tclcap::qp::QpProblem;

/// Dense random SPD matrix `MᵀM + μI`.
pub fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let k = n.max(2);
    let m: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let mu = rng.random_range(0.05..1.0);
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (0..k).map(|r| m[r][i] * m[r][j]).sum::<f64>() + if i == j { mu } else { 0.0 })
                .collect()
        })
        .collect()
}

pub struct BoxQp {
    pub p: Vec<Vec<f64>>,
    pub q: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

pub fn random_box_qp(n: usize, rng: &mut ChaCha8Rng) -> BoxQp {
    let p = random_spd(n, rng);
    let q = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for _ in 0..n {
        let a: f64 = rng.random_range(-1.0..0.5);
        let w: f64 = rng.random_range(0.1..1.5);
        lo.push(if rng.random_bool(0.1) { f64::NEG_INFINITY } else { a });
        hi.push(if rng.random_bool(0.1) { f64::INFINITY } else { a + w });
    }
    BoxQp { p, q, lo, hi }
}

/// Primal projected gradient with step `1/L`, run to a fixed point.
pub fn projected_gradient(b: &BoxQp) -> Vec<f64> {
    let n = b.q.len();
    // Gershgorin bound on the largest eigenvalue
    let l = (0..n).map(|i| b.p[i].iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut x: Vec<f64> = (0..n).map(|j| 0.0f64.clamp(b.lo[j], b.hi[j])).collect();
    let mut y = x.clone();
    let mut t = 1.0f64;
    for _ in 0..2_000_000 {
        let g: Vec<f64> = (0..n).map(|i| (0..n).map(|j| b.p[i][j] * y[j]).sum::<f64>() + b.q[i]).collect();
        let xn: Vec<f64> = (0..n).map(|j| (y[j] - g[j] / l).clamp(b.lo[j], b.hi[j])).collect();
        let tn = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let step = (0..n).map(|j| (xn[j] - x[j]).abs()).fold(0.0, f64::max);
        y = (0..n).map(|j| xn[j] + (t - 1.0) / tn * (xn[j] - x[j])).collect();
        // restart on non-monotone momentum
        if (0..n).map(|j| (xn[j] - x[j]) * g[j]).sum::<f64>() > 0.0 {
            y = xn.clone();
            t = 1.0;
        } else {
            t = tn;
        }
        x = xn;
        if step < 1e-15 {
            break;
        }
    }
    x
}

/// Boxes become general rows, each scaled by a random factor and shuffled.
pub fn as_general_rows(b: &BoxQp, rng: &mut ChaCha8Rng) -> QpProblem {
    let n = b.q.len();
    let mut ptrip = Vec::new();
    for i in 0..n {
        for j in i..n {
            ptrip.push((i, j, b.p[i][j]));
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut a = Vec::new();
    let mut l = Vec::new();
    let mut u = Vec::new();
    for (row, &j) in order.iter().enumerate() {
        let s: f64 = rng.random_range(0.1..10.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        a.push((row, j, s));
        let (lo, hi) = (s * b.lo[j], s * b.hi[j]);
        l.push(lo.min(hi));
        u.push(lo.max(hi));
    }
    QpProblem::new(n, &ptrip, b.q.clone(), n, &a, l, u).unwrap()
}

pub struct Kkt {
    pub stationarity: f64,
    pub primal: f64,
    pub complementarity: f64,
}

/// KKT residuals from scratch, with dense arithmetic only.
pub fn kkt(prob: &QpProblem, x: &[f64], y: &[f64]) -> Kkt {
    let n = prob.n();
    let m = prob.m();
    let mut grad = prob.q.clone();
    for (i, j, v) in prob.p.triplets() {
        grad[i] += v * x[j];
        if i != j {
            grad[j] += v * x[i];
        }
    }
    let mut ax = vec![0.0; m];
    for (i, j, v) in prob.a.triplets() {
        grad[j] += v * y[i];
        ax[i] += v * x[j];
    }
    let stationarity = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
    let mut primal = 0.0f64;
    let mut comp = 0.0f64;
    for i in 0..m {
        primal = primal.max(prob.l[i] - ax[i]).max(ax[i] - prob.u[i]);
        // y > 0 only at the upper limit, y < 0 only at the lower one
        if y[i] > 0.0 {
            comp = comp.max((y[i] * (prob.u[i] - ax[i])).abs());
        } else if y[i] < 0.0 {
            comp = comp.max((y[i] * (ax[i] - prob.l[i])).abs());
        }
    }
    let _ = n;
    Kkt { stationarity, primal: primal.max(0.0), complementarity: comp }
}

