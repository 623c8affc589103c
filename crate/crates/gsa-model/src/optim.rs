//! AdamW with decoupled weight decay, a warmup-then-cosine learning-rate
//! schedule, and global-norm gradient clipping. Moment math runs in f64 and
//! rounds back to the parameter width, so resumed runs replay identically.

use gsa_core::error::{Error, Result};
use gsa_core::scalar::Scalar;

use crate::config::ModelConfig;
use crate::model::{ModelGrads, ModelParams};

/// Linear warmup to `peak_lr`, then cosine decay to `min_lr` at `total`.
#[derive(Clone, Copy, Debug)]
pub struct Schedule {
    pub peak_lr: f64,
    pub min_lr: f64,
    pub warmup: usize,
    pub total: usize,
}

impl Schedule {
    pub fn new(peak_lr: f64, min_lr: f64, warmup: usize, total: usize) -> Result<Self> {
        if total == 0 || warmup > total {
            return Err(Error::config(format!(
                "warmup {warmup} must fit inside {total} total steps"
            )));
        }
        if peak_lr <= 0.0 || min_lr < 0.0 || min_lr > peak_lr {
            return Err(Error::config("learning rates must satisfy 0 <= min <= peak"));
        }
        Ok(Self { peak_lr, min_lr, warmup, total })
    }

    /// Learning rate for a 1-based optimizer step.
    pub fn lr_at(&self, step: usize) -> Result<f64> {
        if step > self.total {
            return Err(Error::config(format!(
                "step {step} is past the schedule horizon {}",
                self.total
            )));
        }
        if step <= self.warmup && self.warmup > 0 {
            return Ok(self.peak_lr * step as f64 / self.warmup as f64);
        }
        let progress = (step - self.warmup) as f64 / (self.total - self.warmup) as f64;
        Ok(self.min_lr
            + 0.5 * (self.peak_lr - self.min_lr) * (1.0 + (std::f64::consts::PI * progress).cos()))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.95, eps: 1e-8, weight_decay: 0.01 }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug)]
pub struct AdamState<T: Scalar> {
    pub m: ModelGrads<T>,
    pub v: ModelGrads<T>,
    pub step: usize,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(cfg: &ModelConfig) -> Self {
        Self { m: ModelParams::zeros(cfg), v: ModelParams::zeros(cfg), step: 0 }
    }
}

/// Decay applies to matrix weights only; gains and the embedding table are
/// exempt. Shrinking a norm gain rescales every activation downstream, and
/// rarely-hit embedding rows would otherwise drift toward zero.
fn decays(name: &str) -> bool {
    !(name.contains("norm") || name == "embedding")
}

/// Scale all gradients so their joint l2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<T: Scalar>(grads: &mut ModelGrads<T>, max_norm: f64) -> f64 {
    let mut sum_sq = 0.0f64;
    for (_, g) in grads.flat() {
        for &x in g.data() {
            let x = x.to_f64();
            sum_sq += x * x;
        }
    }
    let norm = sum_sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = T::from_f64(max_norm / norm);
        for (_, g) in grads.flat_mut() {
            for x in g.data_mut() {
                *x = *x * scale;
            }
        }
    }
    norm
}

/// One AdamW update. The caller supplies the learning rate so schedules
/// stay outside the optimizer.
pub fn adamw_step<T: Scalar>(
    params: &mut ModelParams<T>,
    grads: &ModelGrads<T>,
    state: &mut AdamState<T>,
    hyper: &AdamHyper,
    lr: f64,
) -> Result<()> {
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - hyper.beta1.powi(t);
    let bc2 = 1.0 - hyper.beta2.powi(t);
    let mut p_flat = params.flat_mut();
    let g_flat = grads.flat();
    let mut m_flat = state.m.flat_mut();
    let mut v_flat = state.v.flat_mut();
    if p_flat.len() != g_flat.len() {
        return Err(Error::shape("gradient layout does not match the parameters"));
    }
    for i in 0..p_flat.len() {
        let (name, p) = &mut p_flat[i];
        let g = g_flat[i].1;
        if g.shape() != p.shape() {
            return Err(Error::shape(format!("gradient shape mismatch for {name}")));
        }
        let wd = if decays(name) { hyper.weight_decay } else { 0.0 };
        let m = m_flat[i].1.data_mut();
        let v = v_flat[i].1.data_mut();
        for (j, x) in p.data_mut().iter_mut().enumerate() {
            let gj = g.data()[j].to_f64();
            let mj = hyper.beta1 * m[j].to_f64() + (1.0 - hyper.beta1) * gj;
            let vj = hyper.beta2 * v[j].to_f64() + (1.0 - hyper.beta2) * gj * gj;
            m[j] = T::from_f64(mj);
            v[j] = T::from_f64(vj);
            let step = mj / bc1 / ((vj / bc2).sqrt() + hyper.eps);
            let xf = x.to_f64();
            *x = T::from_f64(xf - lr * (step + wd * xf));
        }
    }
    Ok(())
}
