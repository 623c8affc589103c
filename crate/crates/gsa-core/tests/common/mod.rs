//! Shared helpers for the integration suites: naive reference forms written
//! as plain f64 loops (quadratic time, no shared code with the kernels), a
//! central-difference harness, and tensor generators.

#![allow(dead_code)]

pub mod oracles;

use gsa_core::rng::Rng;
use gsa_core::tensor::Tensor;

pub fn rand_tensor(rng: &mut Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor<f64> {
    let data = (0..rows * cols).map(|_| rng.uniform(lo, hi)).collect();
    Tensor::from_vec(&[rows, cols], data).unwrap()
}

/// Log-gates in a band away from 0 so finite differencing never crosses the
/// alpha <= 1 boundary.
pub fn rand_log_gate(rng: &mut Rng, rows: usize, cols: usize) -> Tensor<f64> {
    let data = (0..rows * cols).map(|_| rng.uniform(-3.0, -1e-3)).collect();
    Tensor::from_vec(&[rows, cols], data).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b.iter())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Central finite difference of `loss` with respect to `params`, one
/// coordinate at a time.
pub fn finite_diff(params: &[f64], h: f64, mut loss: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut grad = vec![0.0; params.len()];
    let mut work = params.to_vec();
    for i in 0..params.len() {
        let x = params[i];
        work[i] = x + h;
        let up = loss(&work);
        work[i] = x - h;
        let down = loss(&work);
        work[i] = x;
        grad[i] = (up - down) / (2.0 * h);
    }
    grad
}

/// Relative error with an absolute floor, the gradient-check metric.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b.iter())
        .fold(0.0f64, |m, (x, y)| m.max(rel_err(*x, *y)))
}

/// Worst deviation between two tensors relative to the larger magnitude
/// present in either. Stays meaningful where individual entries cross zero
/// and elementwise relative error blows up.
pub fn tensor_rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().chain(b.iter()).fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    max_abs_diff(a, b) / scale
}
