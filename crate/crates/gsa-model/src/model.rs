//! The full language model: embedding, pre-norm residual blocks pairing a
//! gated-slot mixing layer with a Swish GLU, a final norm, and an untied
//! output head. Parameters expose a flat name-to-tensor view so the
//! optimizer and checkpoint code never learn the nesting.

use gsa_core::error::{Error, Result};
use gsa_core::rng::Rng;
use gsa_core::scalar::Scalar;
use gsa_core::tensor::Tensor;

use crate::config::ModelConfig;
use crate::layer::{gsa_layer_bwd, gsa_layer_fwd, GsaLayerParams, LayerCache};
use crate::ops::{rmsnorm_bwd, rmsnorm_fwd, swish_bwd, swish_fwd};

#[derive(Clone, Debug)]
pub struct GluParams<T: Scalar> {
    pub w_gate: Tensor<T>,
    pub w_up: Tensor<T>,
    pub w_down: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct BlockParams<T: Scalar> {
    pub norm1: Tensor<T>,
    pub gsa: GsaLayerParams<T>,
    pub norm2: Tensor<T>,
    pub glu: GluParams<T>,
}

#[derive(Clone, Debug)]
pub struct ModelParams<T: Scalar> {
    pub embedding: Tensor<T>,
    pub blocks: Vec<BlockParams<T>>,
    pub final_norm: Tensor<T>,
    pub lm_head: Tensor<T>,
}

/// Gradients share the parameter layout, so the flat views serve both.
pub type ModelGrads<T> = ModelParams<T>;

impl<T: Scalar> ModelParams<T> {
    /// All tensors zero, shaped for `cfg`.
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let (d, e, v) = (cfg.dim, cfg.glu_width(), cfg.vocab);
        let blocks = (0..cfg.layers)
            .map(|_| BlockParams {
                norm1: Tensor::zeros(&[d]),
                gsa: GsaLayerParams::zeros(cfg),
                norm2: Tensor::zeros(&[d]),
                glu: GluParams {
                    w_gate: Tensor::zeros(&[d, e]),
                    w_up: Tensor::zeros(&[d, e]),
                    w_down: Tensor::zeros(&[e, d]),
                },
            })
            .collect();
        Self {
            embedding: Tensor::zeros(&[v, d]),
            blocks,
            final_norm: Tensor::zeros(&[d]),
            lm_head: Tensor::zeros(&[d, v]),
        }
    }

    /// Fresh trainable initialization: projections and embeddings draw from
    /// a narrow normal, norm gains start at one, and the gate projection
    /// starts at zero so training begins from the damped-gate fixed point.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut p = Self::zeros(cfg);
        for (idx, (name, t)) in p.flat_mut().into_iter().enumerate() {
            let mut rng = Rng::derive(seed, &[0x70617261, idx as u64]);
            if name.contains("norm") {
                t.data_mut().fill(T::ONE);
            } else if name.ends_with("walpha") {
                // stays zero
            } else {
                t.fill_normal(&mut rng, 0.0, 0.02);
            }
        }
        p
    }

    /// Canonical (name, tensor) listing. Checkpoints, the optimizer, and
    /// gradient sweeps all iterate in exactly this order.
    pub fn flat(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out: Vec<(String, &Tensor<T>)> = vec![("embedding".into(), &self.embedding)];
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("blocks.{i}.norm1"), &b.norm1));
            out.push((format!("blocks.{i}.gsa.wq"), &b.gsa.w_q));
            out.push((format!("blocks.{i}.gsa.wk"), &b.gsa.w_k));
            out.push((format!("blocks.{i}.gsa.wv"), &b.gsa.w_v));
            out.push((format!("blocks.{i}.gsa.walpha"), &b.gsa.w_alpha));
            out.push((format!("blocks.{i}.gsa.wo"), &b.gsa.w_o));
            out.push((format!("blocks.{i}.gsa.norm_gain"), &b.gsa.norm_gain));
            out.push((format!("blocks.{i}.norm2"), &b.norm2));
            out.push((format!("blocks.{i}.glu.w_gate"), &b.glu.w_gate));
            out.push((format!("blocks.{i}.glu.w_up"), &b.glu.w_up));
            out.push((format!("blocks.{i}.glu.w_down"), &b.glu.w_down));
        }
        out.push(("final_norm".into(), &self.final_norm));
        out.push(("lm_head".into(), &self.lm_head));
        out
    }

    pub fn flat_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out: Vec<(String, &mut Tensor<T>)> =
            vec![("embedding".into(), &mut self.embedding)];
        for (i, b) in self.blocks.iter_mut().enumerate() {
            out.push((format!("blocks.{i}.norm1"), &mut b.norm1));
            out.push((format!("blocks.{i}.gsa.wq"), &mut b.gsa.w_q));
            out.push((format!("blocks.{i}.gsa.wk"), &mut b.gsa.w_k));
            out.push((format!("blocks.{i}.gsa.wv"), &mut b.gsa.w_v));
            out.push((format!("blocks.{i}.gsa.walpha"), &mut b.gsa.w_alpha));
            out.push((format!("blocks.{i}.gsa.wo"), &mut b.gsa.w_o));
            out.push((format!("blocks.{i}.gsa.norm_gain"), &mut b.gsa.norm_gain));
            out.push((format!("blocks.{i}.norm2"), &mut b.norm2));
            out.push((format!("blocks.{i}.glu.w_gate"), &mut b.glu.w_gate));
            out.push((format!("blocks.{i}.glu.w_up"), &mut b.glu.w_up));
            out.push((format!("blocks.{i}.glu.w_down"), &mut b.glu.w_down));
        }
        out.push(("final_norm".into(), &mut self.final_norm));
        out.push(("lm_head".into(), &mut self.lm_head));
        out
    }

    pub fn param_count(&self) -> usize {
        self.flat().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            embedding: self.embedding.cast(),
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockParams {
                    norm1: b.norm1.cast(),
                    gsa: GsaLayerParams {
                        w_q: b.gsa.w_q.cast(),
                        w_k: b.gsa.w_k.cast(),
                        w_v: b.gsa.w_v.cast(),
                        w_alpha: b.gsa.w_alpha.cast(),
                        w_o: b.gsa.w_o.cast(),
                        norm_gain: b.gsa.norm_gain.cast(),
                    },
                    norm2: b.norm2.cast(),
                    glu: GluParams {
                        w_gate: b.glu.w_gate.cast(),
                        w_up: b.glu.w_up.cast(),
                        w_down: b.glu.w_down.cast(),
                    },
                })
                .collect(),
            final_norm: self.final_norm.cast(),
            lm_head: self.lm_head.cast(),
        }
    }
}

pub struct GluCache<T: Scalar> {
    xn: Tensor<T>,
    pre_g: Tensor<T>,
    pre_u: Tensor<T>,
    sg: Tensor<T>,
    h: Tensor<T>,
}

struct BlockCache<T: Scalar> {
    x: Tensor<T>,
    inv1: Vec<T>,
    layer: LayerCache<T>,
    x_mid: Tensor<T>,
    inv2: Vec<T>,
    glu: GluCache<T>,
}

pub struct ModelCache<T: Scalar> {
    pub batch: usize,
    pub t: usize,
    tokens: Vec<usize>,
    blocks: Vec<BlockCache<T>>,
    x_final: Tensor<T>,
    inv_final: Vec<T>,
    nf: Tensor<T>,
}

/// Gated linear unit with a Swish gate: y = (swish(xn W_g) (.) xn W_u) W_d.
/// The cache keeps the gate activation and the hidden product so the
/// backward pass reads them instead of recomputing two wide elementwise maps.
pub fn glu_fwd<T: Scalar>(xn: &Tensor<T>, p: &GluParams<T>) -> Result<(Tensor<T>, GluCache<T>)> {
    let pre_g = xn.matmul(&p.w_gate)?;
    let pre_u = xn.matmul(&p.w_up)?;
    let sg = swish_fwd(&pre_g);
    let h = sg.mul(&pre_u)?;
    let y = h.matmul(&p.w_down)?;
    Ok((y, GluCache { xn: xn.clone(), pre_g, pre_u, sg, h }))
}

pub fn glu_bwd<T: Scalar>(
    cache: &GluCache<T>,
    p: &GluParams<T>,
    d_y: &Tensor<T>,
) -> Result<(Tensor<T>, GluParams<T>)> {
    let sg = &cache.sg;
    let d_w_down = cache.h.matmul_tn(d_y)?;
    let d_h = d_y.matmul_nt(&p.w_down)?;
    let d_pre_u = d_h.mul(sg)?;
    let d_pre_g = swish_bwd(&cache.pre_g, &d_h.mul(&cache.pre_u)?);
    let d_w_gate = cache.xn.matmul_tn(&d_pre_g)?;
    let d_w_up = cache.xn.matmul_tn(&d_pre_u)?;
    let mut d_xn = d_pre_g.matmul_nt(&p.w_gate)?;
    d_xn.accumulate(&d_pre_u.matmul_nt(&p.w_up)?)?;
    Ok((d_xn, GluParams { w_gate: d_w_gate, w_up: d_w_up, w_down: d_w_down }))
}

fn block_fwd<T: Scalar>(
    x: Tensor<T>,
    p: &BlockParams<T>,
    cfg: &ModelConfig,
    batch: usize,
) -> Result<(Tensor<T>, BlockCache<T>)> {
    let (xn1, inv1) = rmsnorm_fwd(&x, &p.norm1)?;
    let (att, layer) = gsa_layer_fwd(&xn1, &p.gsa, cfg, batch)?;
    let mut x_mid = x.clone();
    x_mid.accumulate(&att)?;
    let (xn2, inv2) = rmsnorm_fwd(&x_mid, &p.norm2)?;
    let (up, glu) = glu_fwd(&xn2, &p.glu)?;
    let mut y = x_mid.clone();
    y.accumulate(&up)?;
    Ok((y, BlockCache { x, inv1, layer, x_mid, inv2, glu }))
}

fn block_bwd<T: Scalar>(
    cache: &BlockCache<T>,
    p: &BlockParams<T>,
    cfg: &ModelConfig,
    d_y: &Tensor<T>,
) -> Result<(Tensor<T>, BlockParams<T>)> {
    let (d_xn2, d_glu) = glu_bwd(&cache.glu, &p.glu, d_y)?;
    let (d_from_norm2, d_norm2) = rmsnorm_bwd(&cache.x_mid, &p.norm2, &cache.inv2, &d_xn2)?;
    let mut d_x_mid = d_y.clone();
    d_x_mid.accumulate(&d_from_norm2)?;

    let (d_xn1, d_gsa) = gsa_layer_bwd(&cache.layer, &p.gsa, cfg, &d_x_mid)?;
    let (d_from_norm1, d_norm1) = rmsnorm_bwd(&cache.x, &p.norm1, &cache.inv1, &d_xn1)?;
    let mut d_x = d_x_mid;
    d_x.accumulate(&d_from_norm1)?;
    Ok((d_x, BlockParams { norm1: d_norm1, gsa: d_gsa, norm2: d_norm2, glu: d_glu }))
}

/// Logits for a batch of token sequences laid out back to back. Row
/// `b * t + i` of the result scores the token following position `i` of
/// sequence `b`.
pub fn model_fwd<T: Scalar>(
    tokens: &[usize],
    p: &ModelParams<T>,
    cfg: &ModelConfig,
    batch: usize,
) -> Result<(Tensor<T>, ModelCache<T>)> {
    if batch == 0 || tokens.is_empty() || tokens.len() % batch != 0 {
        return Err(Error::shape(format!(
            "{} tokens do not split into {batch} sequences",
            tokens.len()
        )));
    }
    let t = tokens.len() / batch;
    if t > cfg.seq_len_max {
        return Err(Error::config(format!(
            "sequence length {t} exceeds the configured maximum {}",
            cfg.seq_len_max
        )));
    }
    let d = cfg.dim;
    let mut x = Tensor::<T>::zeros(&[tokens.len(), d]);
    for (i, &tok) in tokens.iter().enumerate() {
        if tok >= cfg.vocab {
            return Err(Error::domain(format!("token {tok} outside vocab {}", cfg.vocab)));
        }
        x.row_mut(i).copy_from_slice(p.embedding.row(tok));
    }

    let mut blocks = Vec::with_capacity(p.blocks.len());
    for bp in &p.blocks {
        let (y, cache) = block_fwd(x, bp, cfg, batch)?;
        x = y;
        blocks.push(cache);
    }

    let (nf, inv_final) = rmsnorm_fwd(&x, &p.final_norm)?;
    let logits = nf.matmul(&p.lm_head)?;
    let cache = ModelCache {
        batch,
        t,
        tokens: tokens.to_vec(),
        blocks,
        x_final: x,
        inv_final,
        nf,
    };
    Ok((logits, cache))
}

/// Parameter gradients for a forward recorded by `model_fwd`, given the
/// loss gradient with respect to the logits.
pub fn model_bwd<T: Scalar>(
    cache: &ModelCache<T>,
    p: &ModelParams<T>,
    cfg: &ModelConfig,
    d_logits: &Tensor<T>,
) -> Result<ModelGrads<T>> {
    let d_lm_head = cache.nf.matmul_tn(d_logits)?;
    let d_nf = d_logits.matmul_nt(&p.lm_head)?;
    let (mut d_x, d_final_norm) =
        rmsnorm_bwd(&cache.x_final, &p.final_norm, &cache.inv_final, &d_nf)?;

    let mut block_grads = Vec::with_capacity(p.blocks.len());
    for (bc, bp) in cache.blocks.iter().zip(&p.blocks).rev() {
        let (d_in, g) = block_bwd(bc, bp, cfg, &d_x)?;
        d_x = d_in;
        block_grads.push(g);
    }
    block_grads.reverse();

    let mut d_embedding = Tensor::<T>::zeros(&[cfg.vocab, cfg.dim]);
    for (i, &tok) in cache.tokens.iter().enumerate() {
        for (dst, &s) in d_embedding.row_mut(tok).iter_mut().zip(d_x.row(i)) {
            *dst = *dst + s;
        }
    }
    Ok(ModelGrads {
        embedding: d_embedding,
        blocks: block_grads,
        final_norm: d_final_norm,
        lm_head: d_lm_head,
    })
}
