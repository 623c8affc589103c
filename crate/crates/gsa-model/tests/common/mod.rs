//! Shared helpers for the model-level test suites.

#![allow(dead_code)]

use gsa_core::rng::Rng;
use gsa_core::tensor::Tensor;

pub fn rand_tensor(rng: &mut Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let mut t = Tensor::<f64>::zeros(shape);
    t.fill_uniform(rng, lo, hi);
    t
}

/// Largest elementwise gap relative to the larger of the two maximum
/// magnitudes. Zero when both tensors vanish.
pub fn tensor_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = a
        .iter()
        .chain(b)
        .fold(0.0f64, |acc, &x| acc.max(x.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).fold(0.0f64, |acc, (&x, &y)| acc.max((x - y).abs())) / scale
}

/// Central-difference gradient of `loss` with respect to every entry of `x`.
pub fn fd_grad(x: &Tensor<f64>, h: f64, mut loss: impl FnMut(&Tensor<f64>) -> f64) -> Tensor<f64> {
    let mut g = Tensor::<f64>::zeros(x.shape());
    let mut work = x.clone();
    for i in 0..x.len() {
        let saved = work.data()[i];
        work.data_mut()[i] = saved + h;
        let up = loss(&work);
        work.data_mut()[i] = saved - h;
        let down = loss(&work);
        work.data_mut()[i] = saved;
        g.data_mut()[i] = (up - down) / (2.0 * h);
    }
    g
}
