//! The gated slot form as a two-pass composition: a value-side gated pass
//! scores the slots, a link nonlinearity turns scores into read weights, and
//! a key-side gated pass mixes the value memory. Both passes share one
//! per-chunk gate cumsum. The backward runs the passes in reverse with the
//! link's Jacobian in between and assembles the gate gradient from the
//! reversed-cumsum identity.

use crate::error::{Error, Result};
use crate::kernels::{
    chunkwise::{gla_chunk_states, gla_chunkwise_bwd, gla_chunkwise_fwd, log_gate_grad_from_partial},
    ChunkSpec, GateSide, KernelInput,
};
use crate::scalar::{swish, swish_grad, Scalar};
use crate::tensor::{softmax_row, softmax_vjp_row, Tensor};

/// Nonlinearity between the two passes. Softmax normalizes each row of slot
/// scores; the pointwise variants are the ablation alternatives.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum LinkFn {
    Softmax,
    Swish,
    Relu,
    Relu2,
    Identity,
}

impl LinkFn {
    pub const ALL: [LinkFn; 5] =
        [LinkFn::Softmax, LinkFn::Swish, LinkFn::Relu, LinkFn::Relu2, LinkFn::Identity];

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "softmax" => Ok(LinkFn::Softmax),
            "swish" => Ok(LinkFn::Swish),
            "relu" => Ok(LinkFn::Relu),
            "relu2" => Ok(LinkFn::Relu2),
            "identity" => Ok(LinkFn::Identity),
            other => Err(Error::config(format!("unknown link function: {other}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LinkFn::Softmax => "softmax",
            LinkFn::Swish => "swish",
            LinkFn::Relu => "relu",
            LinkFn::Relu2 => "relu2",
            LinkFn::Identity => "identity",
        }
    }

    pub fn apply_rows<T: Scalar>(self, x: &mut Tensor<T>) {
        match self {
            LinkFn::Softmax => {
                for i in 0..x.rows() {
                    softmax_row(x.row_mut(i));
                }
            }
            LinkFn::Swish => x.data_mut().iter_mut().for_each(|v| *v = swish(*v)),
            LinkFn::Relu => x
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = if *v > T::ZERO { *v } else { T::ZERO }),
            LinkFn::Relu2 => x.data_mut().iter_mut().for_each(|v| {
                let r = if *v > T::ZERO { *v } else { T::ZERO };
                *v = r * r;
            }),
            LinkFn::Identity => {}
        }
    }

    /// Pull the upstream gradient back through the link given the pre-link
    /// activations.
    fn vjp_rows<T: Scalar>(self, pre: &Tensor<T>, dpost: &Tensor<T>) -> Tensor<T> {
        let mut out = Tensor::<T>::zeros(pre.shape());
        match self {
            LinkFn::Softmax => {
                let cols = pre.cols();
                let mut y = vec![T::ZERO; cols];
                for i in 0..pre.rows() {
                    y.copy_from_slice(pre.row(i));
                    softmax_row(&mut y);
                    softmax_vjp_row(&y, dpost.row(i), out.row_mut(i));
                }
            }
            LinkFn::Swish => {
                for ((o, &x), &d) in
                    out.data_mut().iter_mut().zip(pre.data()).zip(dpost.data())
                {
                    *o = d * swish_grad(x);
                }
            }
            LinkFn::Relu => {
                for ((o, &x), &d) in
                    out.data_mut().iter_mut().zip(pre.data()).zip(dpost.data())
                {
                    *o = if x > T::ZERO { d } else { T::ZERO };
                }
            }
            LinkFn::Relu2 => {
                let two = T::from_f64(2.0);
                for ((o, &x), &d) in
                    out.data_mut().iter_mut().zip(pre.data()).zip(dpost.data())
                {
                    *o = if x > T::ZERO { two * x * d } else { T::ZERO };
                }
            }
            LinkFn::Identity => out.data_mut().copy_from_slice(dpost.data()),
        }
        out
    }
}

impl std::fmt::Display for LinkFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Forward byproducts kept for the backward: the pre-link slot scores and,
/// optionally, both passes' chunk boundary states.
#[derive(Clone, Debug)]
pub struct GsaSaved<T: Scalar> {
    pub link: LinkFn,
    pub ok: Tensor<T>,
    pub states_k: Option<Vec<Tensor<T>>>,
    pub states_v: Option<Vec<Tensor<T>>>,
}

/// Input gradients of the slot form. The write-strength gradient is reported
/// separately for callers that drive the strengths independently of the
/// gate; when the input derived them as 1 - alpha, `d_log_gate` already
/// contains that chain.
#[derive(Clone, Debug)]
pub struct GsaGrads<T: Scalar> {
    pub d_q: Tensor<T>,
    pub d_k: Tensor<T>,
    pub d_v: Tensor<T>,
    pub d_log_gate: Tensor<T>,
    pub d_write_strength: Tensor<T>,
}

fn slot_operands<'a, T: Scalar>(
    input: &'a KernelInput<T>,
) -> Result<(&'a Tensor<T>, &'a Tensor<T>)> {
    let ws = input.write_strength()?;
    let lg = input.expect_gate_dim(ws.cols(), "slot count")?;
    Ok((ws, lg))
}

/// Two-pass chunkwise forward of the gated slot form.
pub fn gsa_fwd<T: Scalar>(
    input: &KernelInput<T>,
    spec: ChunkSpec,
    link: LinkFn,
    keep_states: bool,
) -> Result<(Tensor<T>, GsaSaved<T>)> {
    let (ws, lg) = slot_operands(input)?;
    let first =
        KernelInput::gated(input.q.clone(), input.k.clone(), ws.clone(), lg.clone())?;
    let (ok, states_k) = gla_chunkwise_fwd(&first, GateSide::Value, spec)?;
    let mut qv = ok.clone();
    link.apply_rows(&mut qv);
    let second = KernelInput::gated(qv, ws.clone(), input.v.clone(), lg.clone())?;
    let (o, states_v) = gla_chunkwise_fwd(&second, GateSide::Key, spec)?;
    let saved = GsaSaved {
        link,
        ok,
        states_k: keep_states.then_some(states_k),
        states_v: keep_states.then_some(states_v),
    };
    Ok((o, saved))
}

/// Analytic backward of the two-pass forward. With `recompute` the chunk
/// boundary states are rebuilt from the inputs by the same sweep the forward
/// uses, so the gradients match the stored-state path bit for bit.
pub fn gsa_bwd<T: Scalar>(
    input: &KernelInput<T>,
    spec: ChunkSpec,
    d_o: &Tensor<T>,
    saved: &GsaSaved<T>,
    recompute: bool,
) -> Result<GsaGrads<T>> {
    let (ws, lg) = slot_operands(input)?;
    let m = ws.cols();
    if saved.ok.shape() != [input.t(), m] {
        return Err(Error::shape(format!(
            "saved slot scores shape {:?} does not match [{}, {m}]",
            saved.ok.shape(),
            input.t()
        )));
    }
    let rebuilt_k;
    let rebuilt_v;
    let (states_k, states_v) = if recompute {
        rebuilt_k = gla_chunk_states(&input.k, ws, lg, GateSide::Value, spec)?;
        rebuilt_v = gla_chunk_states(ws, &input.v, lg, GateSide::Key, spec)?;
        (&rebuilt_k, &rebuilt_v)
    } else {
        match (&saved.states_k, &saved.states_v) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(Error::config(
                    "chunk states were not kept; run the backward with recompute",
                ))
            }
        }
    };
    let mut qv = saved.ok.clone();
    saved.link.apply_rows(&mut qv);
    let second = KernelInput::gated(qv, ws.clone(), input.v.clone(), lg.clone())?;
    let (d_qv, d_i2, d_v, partial2) =
        gla_chunkwise_bwd(&second, GateSide::Key, spec, states_v, d_o)?;
    let d_ok = saved.link.vjp_rows(&saved.ok, &d_qv);
    let first =
        KernelInput::gated(input.q.clone(), input.k.clone(), ws.clone(), lg.clone())?;
    let (d_q, d_k, d_i1, partial1) =
        gla_chunkwise_bwd(&first, GateSide::Value, spec, states_k, &d_ok)?;
    let partial = partial1.add(&partial2)?;
    let d_a = log_gate_grad_from_partial(&partial);
    let d_i = d_i1.add(&d_i2)?;
    let d_log_gate = if input.coupled_write {
        // i = 1 - exp(log a): the write path contributes -alpha (.) d_i.
        let mut out = d_a;
        for ((x, &g), &di) in out.data_mut().iter_mut().zip(lg.data()).zip(d_i.data()) {
            *x = *x - g.fast_exp() * di;
        }
        out
    } else {
        d_a
    };
    Ok(GsaGrads { d_q, d_k, d_v, d_log_gate, d_write_strength: d_i })
}

/// Cumulative-softmax write strengths phi_i = exp(g_i) / sum_{j<=i} exp(g_j),
/// kept stable with a running log-sum-exp per slot.
pub fn abc_write_strengths<T: Scalar>(pre_gate: &Tensor<T>) -> Result<Tensor<T>> {
    if pre_gate.rank() != 2 || pre_gate.rows() == 0 {
        return Err(Error::shape(format!(
            "pre-gate must be rank 2 with at least one row, got {:?}",
            pre_gate.shape()
        )));
    }
    let (t, m) = (pre_gate.rows(), pre_gate.cols());
    let mut phi = Tensor::<T>::zeros(&[t, m]);
    for l in 0..m {
        let mut lse = pre_gate.get2(0, l);
        // First step: exp(g - lse) = exp(0), exactly one.
        phi.set2(0, l, (pre_gate.get2(0, l) - lse).fast_exp());
        for i in 1..t {
            let x = pre_gate.get2(i, l);
            lse = log_add_exp(lse, x);
            phi.set2(i, l, (x - lse).fast_exp());
        }
    }
    Ok(phi)
}

/// Gradient of the cumulative-softmax strengths with respect to the raw
/// pre-gate scores. Uses the backward recursion
///   R_j = d_phi_j phi_j + exp(lse_j - lse_{j+1}) R_{j+1},
///   d_g_j = phi_j (d_phi_j - R_j),
/// which only ever exponentiates nonpositive differences.
pub fn abc_write_strengths_bwd<T: Scalar>(
    pre_gate: &Tensor<T>,
    d_phi: &Tensor<T>,
) -> Result<Tensor<T>> {
    if d_phi.shape() != pre_gate.shape() {
        return Err(Error::shape("pre-gate and strength-gradient shapes must match"));
    }
    let (t, m) = (pre_gate.rows(), pre_gate.cols());
    let mut d_pre = Tensor::<T>::zeros(&[t, m]);
    let mut lse = vec![T::ZERO; t];
    let mut phi = vec![T::ZERO; t];
    for l in 0..m {
        lse[0] = pre_gate.get2(0, l);
        phi[0] = T::ONE;
        for i in 1..t {
            let x = pre_gate.get2(i, l);
            lse[i] = log_add_exp(lse[i - 1], x);
            phi[i] = (x - lse[i]).fast_exp();
        }
        let mut r = T::ZERO;
        for i in (0..t).rev() {
            let carry = if i + 1 < t { (lse[i] - lse[i + 1]).fast_exp() * r } else { T::ZERO };
            r = d_phi.get2(i, l) * phi[i] + carry;
            d_pre.set2(i, l, phi[i] * (d_phi.get2(i, l) - r));
        }
    }
    Ok(d_pre)
}

fn log_add_exp<T: Scalar>(a: T, b: T) -> T {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).fast_exp().ln_1p()
}

/// The additive slot form as two plain linear-attention passes with a
/// softmax in between, run chunkwise.
pub fn abc_two_pass<T: Scalar>(input: &KernelInput<T>, spec: ChunkSpec) -> Result<Tensor<T>> {
    let ws = input.write_strength()?;
    let m = ws.cols();
    let zero_gate = Tensor::<T>::zeros(&[input.t(), m]);
    let first =
        KernelInput::gated(input.q.clone(), input.k.clone(), ws.clone(), zero_gate.clone())?;
    let (mut scores, _) = gla_chunkwise_fwd(&first, GateSide::Value, spec)?;
    LinkFn::Softmax.apply_rows(&mut scores);
    let second = KernelInput::gated(scores, ws.clone(), input.v.clone(), zero_gate)?;
    Ok(gla_chunkwise_fwd(&second, GateSide::Key, spec)?.0)
}
