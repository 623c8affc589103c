//! Elementwise and rowwise building blocks with hand-written backwards:
//! Swish activation, RMSNorm, and the LM cross-entropy. All operate on
//! row-major rank-2 tensors and are generic over the scalar width.

use gsa_core::error::{Error, Result};
use gsa_core::scalar::{sigmoid, swish, swish_grad, Scalar};
use gsa_core::tensor::Tensor;

pub const RMS_EPS: f64 = 1e-6;

/// Sentinel target id marking unsupervised positions.
pub const IGNORE_TARGET: usize = 1;

pub fn swish_fwd<T: Scalar>(pre: &Tensor<T>) -> Tensor<T> {
    pre.map(swish)
}

/// d(swish)/d(pre) (.) d_out, from the stored pre-activation.
pub fn swish_bwd<T: Scalar>(pre: &Tensor<T>, d_out: &Tensor<T>) -> Tensor<T> {
    debug_assert_eq!(pre.shape(), d_out.shape());
    let mut d_pre = d_out.clone();
    for (d, &x) in d_pre.data_mut().iter_mut().zip(pre.data()) {
        *d = *d * swish_grad(x);
    }
    d_pre
}

/// Per-row x / sqrt(mean(x^2) + eps) (.) gain. Returns the inverse rms per
/// row; the backward needs it and recomputing it costs a full pass.
pub fn rmsnorm_fwd<T: Scalar>(x: &Tensor<T>, gain: &Tensor<T>) -> Result<(Tensor<T>, Vec<T>)> {
    let (rows, d) = (x.rows(), x.cols());
    if gain.data().len() != d {
        return Err(Error::shape(format!(
            "norm gain length {} does not match width {d}",
            gain.data().len()
        )));
    }
    let mut y = Tensor::<T>::zeros(&[rows, d]);
    let mut inv_rms = vec![T::ZERO; rows];
    let eps = T::from_f64(RMS_EPS);
    let inv_d = T::from_f64(1.0 / d as f64);
    for i in 0..rows {
        let xr = x.row(i);
        let mut ss = T::ZERO;
        for &v in xr {
            ss = v.mul_add(v, ss);
        }
        let inv = T::ONE / (ss * inv_d + eps).sqrt();
        inv_rms[i] = inv;
        for ((o, &v), &g) in y.row_mut(i).iter_mut().zip(xr).zip(gain.data()) {
            *o = v * inv * g;
        }
    }
    Ok((y, inv_rms))
}

/// Backward of rmsnorm_fwd given the stored input and inverse rms.
/// dx = (g (.) dy) r - x * (sum(g dy x) r^3 / d);  dgain = sum_rows dy x r.
pub fn rmsnorm_bwd<T: Scalar>(
    x: &Tensor<T>,
    gain: &Tensor<T>,
    inv_rms: &[T],
    d_y: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (rows, d) = (x.rows(), x.cols());
    if d_y.shape() != x.shape() || inv_rms.len() != rows {
        return Err(Error::shape("rmsnorm backward operands do not match the forward"));
    }
    let mut d_x = Tensor::<T>::zeros(&[rows, d]);
    let mut d_gain = Tensor::<T>::zeros(&[d]);
    let inv_d = T::from_f64(1.0 / d as f64);
    for i in 0..rows {
        let (xr, dyr) = (x.row(i), d_y.row(i));
        let r = inv_rms[i];
        let mut s = T::ZERO;
        for ((&g, &dy), &v) in gain.data().iter().zip(dyr).zip(xr) {
            s = (g * dy).mul_add(v, s);
        }
        let coef = s * r * r * r * inv_d;
        for (j, (dx, (&v, &dy))) in
            d_x.row_mut(i).iter_mut().zip(xr.iter().zip(dyr)).enumerate()
        {
            *dx = gain.data()[j] * dy * r - v * coef;
            d_gain.data_mut()[j] = (dy * v).mul_add(r, d_gain.data_mut()[j]);
        }
    }
    Ok((d_x, d_gain))
}

/// Damped log-gate (1/tau) log sigmoid(pre), elementwise.
pub fn log_gate_fwd<T: Scalar>(pre: &Tensor<T>, tau: f64) -> Tensor<T> {
    let inv_tau = T::from_f64(1.0 / tau);
    pre.map(|x| gsa_core::scalar::log_sigmoid(x) * inv_tau)
}

/// d(log gate)/d(pre) = (1 - sigmoid(pre)) / tau.
pub fn log_gate_bwd<T: Scalar>(pre: &Tensor<T>, tau: f64, d_lg: &Tensor<T>) -> Tensor<T> {
    debug_assert_eq!(pre.shape(), d_lg.shape());
    let inv_tau = T::from_f64(1.0 / tau);
    let mut d_pre = d_lg.clone();
    for (d, &x) in d_pre.data_mut().iter_mut().zip(pre.data()) {
        *d = *d * (T::ONE - sigmoid(x)) * inv_tau;
    }
    d_pre
}

/// Mean negative log-likelihood over supervised positions, with the
/// gradient and the argmax hit count for accuracy reporting. Rows whose
/// target is the ignore sentinel contribute nothing.
pub struct CrossEntropy<T: Scalar> {
    pub loss: f64,
    pub d_logits: Tensor<T>,
    pub supervised: usize,
    pub correct: usize,
}

pub fn cross_entropy<T: Scalar>(logits: &Tensor<T>, targets: &[usize]) -> Result<CrossEntropy<T>> {
    let (rows, v) = (logits.rows(), logits.cols());
    if targets.len() != rows {
        return Err(Error::shape(format!(
            "targets length {} does not match {rows} logit rows",
            targets.len()
        )));
    }
    let supervised = targets.iter().filter(|&&t| t != IGNORE_TARGET).count();
    if supervised == 0 {
        return Err(Error::domain("cross entropy undefined: every position is ignored"));
    }
    let mut d_logits = Tensor::<T>::zeros(&[rows, v]);
    let inv_n = 1.0 / supervised as f64;
    let mut loss = 0.0f64;
    let mut correct = 0usize;
    let mut probs = vec![0.0f64; v];
    for i in 0..rows {
        let tgt = targets[i];
        if tgt == IGNORE_TARGET {
            continue;
        }
        if tgt >= v {
            return Err(Error::domain(format!("target {tgt} outside vocab {v}")));
        }
        let row = logits.row(i);
        let mut mx = f64::NEG_INFINITY;
        let mut arg = 0usize;
        for (j, x) in row.iter().enumerate() {
            let x = x.to_f64();
            if x > mx {
                mx = x;
                arg = j;
            }
        }
        if arg == tgt {
            correct += 1;
        }
        let mut denom = 0.0f64;
        for (p, x) in probs.iter_mut().zip(row) {
            *p = (x.to_f64() - mx).exp();
            denom += *p;
        }
        loss -= (probs[tgt] / denom).ln() * inv_n;
        let dr = d_logits.row_mut(i);
        for (d, &p) in dr.iter_mut().zip(probs.iter()) {
            *d = T::from_f64(p / denom * inv_n);
        }
        dr[tgt] = dr[tgt] - T::from_f64(inv_n);
    }
    Ok(CrossEntropy { loss, d_logits, supervised, correct })
}
