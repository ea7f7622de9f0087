#![allow(dead_code)]

use dna_inverse::genlasso::GenLassoProblem;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Primal ADMM for `min ½ Σ w²(τ − z)² + λ‖Lτ‖₁` with the splitting `s = Lτ`.
/// Dense and slow; only meant as an independent reference on small problems.
pub fn admm_genlasso(z: &[f64], w: &[f64], lambda: f64, iters: usize) -> Vec<f64> {
    let n = z.len();
    let m = n - 2;
    let mut l = DMatrix::<f64>::zeros(m, n);
    for r in 0..m {
        l[(r, r)] = 1.0;
        l[(r, r + 1)] = -2.0;
        l[(r, r + 2)] = 1.0;
    }
    let wsq = DVector::from_iterator(n, w.iter().map(|v| v * v));
    let wz = DVector::from_iterator(
        n,
        (0..n).map(|i| if w[i] != 0.0 { w[i] * w[i] * z[i] } else { 0.0 }),
    );
    let mean_w = wsq.iter().sum::<f64>() / n as f64;
    let rho = mean_w.max(1e-3);
    let a = DMatrix::from_diagonal(&wsq) + l.transpose() * &l * rho;
    let chol = a.cholesky().expect("positive definite");
    let mut tau = DVector::<f64>::zeros(n);
    let mut s = DVector::<f64>::zeros(m);
    let mut y = DVector::<f64>::zeros(m);
    let k = lambda / rho;
    for _ in 0..iters {
        let rhs = &wz + l.transpose() * (&s - &y) * rho;
        tau = chol.solve(&rhs);
        let lt = &l * &tau;
        let v = &lt + &y;
        let s_new = v.map(|x| x.signum() * (x.abs() - k).max(0.0));
        let dual_res = (&s_new - &s).norm();
        s = s_new;
        y += &lt - &s;
        let primal_res = (&lt - &s).norm();
        if primal_res < 1e-13 && dual_res < 1e-13 {
            break;
        }
    }
    tau.iter().copied().collect()
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, &x| a.max(x.abs()))
}

/// Noisy piecewise-linear target with random weights; `zero_prob` of the
/// weights are zeroed and half of those targets marked as missing.
pub fn random_problem(rng: &mut ChaCha8Rng, n: usize, zero_prob: f64) -> GenLassoProblem {
    let mut z = Vec::with_capacity(n);
    let mut level = rng.random_range(-2.0..2.0);
    let mut slope = rng.random_range(-1.0..1.0);
    for _ in 0..n {
        if rng.random_bool(0.2) {
            slope = rng.random_range(-1.0..1.0);
        }
        level += slope;
        z.push(level + rng.random_range(-0.5..0.5));
    }
    let mut w: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..2.0)).collect();
    loop {
        for x in w.iter_mut() {
            if rng.random_bool(zero_prob) {
                *x = 0.0;
            }
        }
        if w.iter().filter(|&&x| x != 0.0).count() >= 2 {
            break;
        }
        w = (0..n).map(|_| rng.random_range(0.2..2.0)).collect();
    }
    for i in 0..n {
        if w[i] == 0.0 && rng.random_bool(0.5) {
            z[i] = f64::INFINITY;
        }
    }
    let lambda = 10f64.powf(rng.random_range(-2.0..1.5));
    GenLassoProblem::new(z, w, lambda).unwrap()
}
