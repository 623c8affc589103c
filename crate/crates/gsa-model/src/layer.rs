//! The token-mixing layer: Swish-activated projections feed per-head
//! gated-slot kernels; head outputs are concatenated, passed through Swish
//! and RMSNorm, and mixed by the output projection. Inputs arrive batched
//! as (B*T) x d with each sequence occupying a contiguous row block.

use gsa_core::error::{Error, Result};
use gsa_core::kernels::{
    abc_write_strengths, abc_write_strengths_bwd, gsa_bwd, gsa_fwd, ChunkSpec, GsaSaved,
    KernelInput,
};
use gsa_core::scalar::Scalar;
use gsa_core::tensor::Tensor;
use rayon::prelude::*;

use crate::config::{GateMode, ModelConfig};
use crate::ops::{log_gate_bwd, log_gate_fwd, rmsnorm_bwd, rmsnorm_fwd, swish_bwd, swish_fwd};

/// Trainable tensors of one token-mixing layer.
#[derive(Clone, Debug)]
pub struct GsaLayerParams<T: Scalar> {
    pub w_q: Tensor<T>,
    pub w_k: Tensor<T>,
    pub w_v: Tensor<T>,
    pub w_alpha: Tensor<T>,
    pub w_o: Tensor<T>,
    pub norm_gain: Tensor<T>,
}

impl<T: Scalar> GsaLayerParams<T> {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let d = cfg.dim;
        Self {
            w_q: Tensor::zeros(&[d, d]),
            w_k: Tensor::zeros(&[d, d]),
            w_v: Tensor::zeros(&[d, d]),
            w_alpha: Tensor::zeros(&[d, cfg.heads * cfg.slots]),
            w_o: Tensor::zeros(&[d, d]),
            norm_gain: Tensor::zeros(&[d]),
        }
    }

    pub fn param_count(&self) -> usize {
        self.w_q.len()
            + self.w_k.len()
            + self.w_v.len()
            + self.w_alpha.len()
            + self.w_o.len()
            + self.norm_gain.len()
    }
}

/// Everything the backward pass reads back. Chunk boundary states are kept
/// only when the config says so; otherwise the backward rebuilds them.
pub struct LayerCache<T: Scalar> {
    pub batch: usize,
    pub t: usize,
    x: Tensor<T>,
    pre_q: Tensor<T>,
    pre_k: Tensor<T>,
    pre_v: Tensor<T>,
    q: Tensor<T>,
    k: Tensor<T>,
    v: Tensor<T>,
    pre_a: Tensor<T>,
    /// Log gates, (B*T) x (H*m); zero for the no-decay mode.
    lg: Tensor<T>,
    mixed: Tensor<T>,
    sw: Tensor<T>,
    inv_rms: Vec<T>,
    /// Per (b, h) forward byproducts, indexed b * H + h.
    heads: Vec<GsaSaved<T>>,
}

/// Gradients share the parameter layout.
pub type GsaLayerGrads<T> = GsaLayerParams<T>;

/// Copy of rows [r0, r1) and columns [c0, c1).
fn block<T: Scalar>(x: &Tensor<T>, r0: usize, r1: usize, c0: usize, c1: usize) -> Tensor<T> {
    debug_assert!(r1 <= x.rows() && c1 <= x.cols());
    let (rows, cols) = (r1 - r0, c1 - c0);
    let mut out = Tensor::zeros(&[rows, cols]);
    for i in 0..rows {
        out.row_mut(i).copy_from_slice(&x.row(r0 + i)[c0..c1]);
    }
    out
}

fn write_block<T: Scalar>(x: &mut Tensor<T>, r0: usize, c0: usize, src: &Tensor<T>) {
    for i in 0..src.rows() {
        x.row_mut(r0 + i)[c0..c0 + src.cols()].copy_from_slice(src.row(i));
    }
}

/// Kernel input for one sequence and head; the same construction serves
/// forward and backward so recomputed quantities agree bitwise.
fn head_input<T: Scalar>(
    cfg: &ModelConfig,
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    pre_a: &Tensor<T>,
    lg: &Tensor<T>,
    b: usize,
    h: usize,
    t: usize,
) -> Result<KernelInput<T>> {
    let (dh, m) = (cfg.head_dim(), cfg.slots);
    let (r0, r1) = (b * t, (b + 1) * t);
    let qh = block(q, r0, r1, h * dh, (h + 1) * dh);
    let kh = block(k, r0, r1, h * dh, (h + 1) * dh);
    let vh = block(v, r0, r1, h * dh, (h + 1) * dh);
    let lgh = block(lg, r0, r1, h * m, (h + 1) * m);
    match cfg.gate_mode {
        GateMode::DataDependent | GateMode::DataIndependentScalar => {
            KernelInput::slot_coupled(qh, kh, vh, lgh)
        }
        GateMode::None => {
            let phi = abc_write_strengths(&block(pre_a, r0, r1, h * m, (h + 1) * m))?;
            KernelInput::slot_independent(qh, kh, vh, lgh, phi)
        }
    }
}

fn layer_log_gate<T: Scalar>(cfg: &ModelConfig, pre_a: &Tensor<T>) -> Tensor<T> {
    match cfg.gate_mode {
        GateMode::DataDependent => log_gate_fwd(pre_a, cfg.tau),
        GateMode::DataIndependentScalar => {
            let mut lg = Tensor::zeros(&[pre_a.rows(), pre_a.cols()]);
            for h in 0..cfg.heads {
                let a = T::from_f64(GateMode::scalar_alpha(h).ln());
                for i in 0..lg.rows() {
                    lg.row_mut(i)[h * cfg.slots..(h + 1) * cfg.slots].fill(a);
                }
            }
            lg
        }
        GateMode::None => Tensor::zeros(&[pre_a.rows(), pre_a.cols()]),
    }
}

pub fn gsa_layer_fwd<T: Scalar>(
    x: &Tensor<T>,
    p: &GsaLayerParams<T>,
    cfg: &ModelConfig,
    batch: usize,
) -> Result<(Tensor<T>, LayerCache<T>)> {
    let rows = x.rows();
    if batch == 0 || rows % batch != 0 {
        return Err(Error::shape(format!("{rows} rows do not split into {batch} sequences")));
    }
    let t = rows / batch;
    let d = cfg.dim;
    if x.cols() != d {
        return Err(Error::shape(format!("input width {} does not match dim {d}", x.cols())));
    }
    let spec = ChunkSpec::new(cfg.chunk)?;

    let pre_q = x.matmul(&p.w_q)?;
    let pre_k = x.matmul(&p.w_k)?;
    let pre_v = x.matmul(&p.w_v)?;
    let pre_a = x.matmul(&p.w_alpha)?;
    let q = swish_fwd(&pre_q);
    let k = swish_fwd(&pre_k);
    let v = swish_fwd(&pre_v);
    let lg = layer_log_gate(cfg, &pre_a);

    let jobs: Vec<(usize, usize)> =
        (0..batch).flat_map(|b| (0..cfg.heads).map(move |h| (b, h))).collect();
    let results: Vec<Result<(Tensor<T>, GsaSaved<T>)>> = jobs
        .par_iter()
        .map(|&(b, h)| {
            let input = head_input(cfg, &q, &k, &v, &pre_a, &lg, b, h, t)?;
            gsa_fwd(&input, spec, cfg.link, cfg.cache_chunk_states)
        })
        .collect();

    let dh = cfg.head_dim();
    let mut mixed = Tensor::zeros(&[rows, d]);
    let mut heads = Vec::with_capacity(jobs.len());
    for (&(b, h), res) in jobs.iter().zip(results) {
        let (o, saved) = res?;
        write_block(&mut mixed, b * t, h * dh, &o);
        heads.push(saved);
    }

    let sw = swish_fwd(&mixed);
    let (norm, inv_rms) = rmsnorm_fwd(&sw, &p.norm_gain)?;
    let y = norm.matmul(&p.w_o)?;
    let cache = LayerCache {
        batch,
        t,
        x: x.clone(),
        pre_q,
        pre_k,
        pre_v,
        q,
        k,
        v,
        pre_a,
        lg,
        mixed,
        sw,
        inv_rms,
        heads,
    };
    Ok((y, cache))
}

pub fn gsa_layer_bwd<T: Scalar>(
    cache: &LayerCache<T>,
    p: &GsaLayerParams<T>,
    cfg: &ModelConfig,
    d_y: &Tensor<T>,
) -> Result<(Tensor<T>, GsaLayerGrads<T>)> {
    let (batch, t) = (cache.batch, cache.t);
    let rows = batch * t;
    let (d, dh, m) = (cfg.dim, cfg.head_dim(), cfg.slots);
    if d_y.shape() != [rows, d] {
        return Err(Error::shape("output gradient does not match the cached forward"));
    }
    let spec = ChunkSpec::new(cfg.chunk)?;

    // Output path: y = rmsnorm(swish(mixed)) . w_o.
    let norm = {
        let mut n = cache.sw.clone();
        for i in 0..rows {
            let inv = cache.inv_rms[i];
            for (x, &g) in n.row_mut(i).iter_mut().zip(p.norm_gain.data()) {
                *x = *x * inv * g;
            }
        }
        n
    };
    let d_w_o = norm.matmul_tn(d_y)?;
    let d_norm = d_y.matmul_nt(&p.w_o)?;
    let (d_sw, d_gain) = rmsnorm_bwd(&cache.sw, &p.norm_gain, &cache.inv_rms, &d_norm)?;
    let d_mixed = swish_bwd(&cache.mixed, &d_sw);

    // Kernel backward per sequence and head.
    let jobs: Vec<(usize, usize)> =
        (0..batch).flat_map(|b| (0..cfg.heads).map(move |h| (b, h))).collect();
    let recompute = !cfg.cache_chunk_states;
    let results: Vec<Result<_>> = jobs
        .par_iter()
        .map(|&(b, h)| {
            let input =
                head_input(cfg, &cache.q, &cache.k, &cache.v, &cache.pre_a, &cache.lg, b, h, t)?;
            let d_o = block(&d_mixed, b * t, (b + 1) * t, h * dh, (h + 1) * dh);
            let saved = &cache.heads[b * cfg.heads + h];
            let grads = gsa_bwd(&input, spec, &d_o, saved, recompute)?;
            // The no-decay mode chains the write-strength gradient through
            // the cumulative softmax here, while the slices are at hand.
            let d_pre_a_h = match cfg.gate_mode {
                GateMode::None => Some(abc_write_strengths_bwd(
                    &block(&cache.pre_a, b * t, (b + 1) * t, h * m, (h + 1) * m),
                    &grads.d_write_strength,
                )?),
                _ => None,
            };
            Ok((grads, d_pre_a_h))
        })
        .collect();

    let mut d_q_post = Tensor::<T>::zeros(&[rows, d]);
    let mut d_k_post = Tensor::<T>::zeros(&[rows, d]);
    let mut d_v_post = Tensor::<T>::zeros(&[rows, d]);
    let mut d_lg = Tensor::<T>::zeros(&[rows, cfg.heads * m]);
    let mut d_pre_a = Tensor::<T>::zeros(&[rows, cfg.heads * m]);
    for (&(b, h), res) in jobs.iter().zip(results) {
        let (grads, d_pre_a_h) = res?;
        write_block(&mut d_q_post, b * t, h * dh, &grads.d_q);
        write_block(&mut d_k_post, b * t, h * dh, &grads.d_k);
        write_block(&mut d_v_post, b * t, h * dh, &grads.d_v);
        write_block(&mut d_lg, b * t, h * m, &grads.d_log_gate);
        if let Some(dp) = d_pre_a_h {
            write_block(&mut d_pre_a, b * t, h * m, &dp);
        }
    }

    if cfg.gate_mode == GateMode::DataDependent {
        d_pre_a = log_gate_bwd(&cache.pre_a, cfg.tau, &d_lg);
    }

    // Projection path.
    let d_pre_q = swish_bwd(&cache.pre_q, &d_q_post);
    let d_pre_k = swish_bwd(&cache.pre_k, &d_k_post);
    let d_pre_v = swish_bwd(&cache.pre_v, &d_v_post);
    let grads = GsaLayerGrads {
        w_q: cache.x.matmul_tn(&d_pre_q)?,
        w_k: cache.x.matmul_tn(&d_pre_k)?,
        w_v: cache.x.matmul_tn(&d_pre_v)?,
        w_alpha: cache.x.matmul_tn(&d_pre_a)?,
        w_o: d_w_o,
        norm_gain: d_gain,
    };
    let mut d_x = d_pre_q.matmul_nt(&p.w_q)?;
    d_x.accumulate(&d_pre_k.matmul_nt(&p.w_k)?)?;
    d_x.accumulate(&d_pre_v.matmul_nt(&p.w_v)?)?;
    d_x.accumulate(&d_pre_a.matmul_nt(&p.w_alpha)?)?;
    Ok((d_x, grads))
}
