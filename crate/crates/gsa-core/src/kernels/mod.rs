//! The attention kernel family: plain linear attention, gated linear
//! attention on either state side, bounded slot memories with cumulative-
//! softmax write strengths, and the gated slot form that generalizes them.
//! Each comes in recurrent, parallel-unrolled, and chunkwise shape; the
//! chunkwise forms carry analytic backward passes.

pub mod chunkwise;
pub mod gsa;
pub mod parallel;
pub mod recurrent;

pub use chunkwise::{
    chunk_cumsum, gla_chunk_states, gla_chunkwise_bwd, gla_chunkwise_fwd,
    log_gate_grad_from_partial,
};
pub use gsa::{
    abc_two_pass, abc_write_strengths, abc_write_strengths_bwd, gsa_bwd, gsa_fwd, GsaGrads,
    GsaSaved, LinkFn,
};
pub use parallel::{abc_parallel, gla_parallel, gsa_parallel, la_parallel};
pub use recurrent::{
    abc_recurrent, gla_recurrent, gsa_recurrent, la_recurrent, retnet_style_decay,
};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{softmax_row, Tensor};

/// Which state dimension the decay multiplies: rows (key features) or
/// columns (value features).
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum GateSide {
    Key,
    Value,
}

/// Chunk length and the sub-chunk length used inside the intra-chunk
/// triangle. The sub length divides the chunk length so sub-chunk heads
/// align; a ragged final chunk keeps the same sub boundaries.
#[derive(Clone, Copy, Debug)]
pub struct ChunkSpec {
    pub chunk: usize,
    pub sub: usize,
}

impl ChunkSpec {
    /// Chunk size with the default sub length: the largest divisor of
    /// `chunk` that is at most 16.
    pub fn new(chunk: usize) -> Result<Self> {
        if chunk == 0 {
            return Err(Error::config("chunk size must be positive"));
        }
        let sub = (1..=16.min(chunk)).rev().find(|s| chunk % s == 0).unwrap();
        Ok(Self { chunk, sub })
    }

    pub fn with_sub(chunk: usize, sub: usize) -> Result<Self> {
        if chunk == 0 || sub == 0 || sub > chunk || chunk % sub != 0 {
            return Err(Error::config(format!(
                "sub-chunk {sub} must divide chunk {chunk}"
            )));
        }
        Ok(Self { chunk, sub })
    }
}

/// Per-sequence kernel operands. Gate tensors are optional: plain linear
/// attention ignores both, the gated forms need `log_gate`, the slot forms
/// need `write_strength` as well.
#[derive(Clone, Debug)]
pub struct KernelInput<T: Scalar> {
    pub q: Tensor<T>,
    pub k: Tensor<T>,
    pub v: Tensor<T>,
    pub log_gate: Option<Tensor<T>>,
    pub write_strength: Option<Tensor<T>>,
    /// True when the write strength was derived as 1 - exp(log_gate); the
    /// slot backward then folds the write-path chain into the gate gradient.
    pub coupled_write: bool,
}

impl<T: Scalar> KernelInput<T> {
    pub fn ungated(q: Tensor<T>, k: Tensor<T>, v: Tensor<T>) -> Result<Self> {
        let input = Self { q, k, v, log_gate: None, write_strength: None, coupled_write: false };
        input.check_qkv()?;
        Ok(input)
    }

    pub fn gated(q: Tensor<T>, k: Tensor<T>, v: Tensor<T>, log_gate: Tensor<T>) -> Result<Self> {
        check_log_gate(&log_gate, q.rows())?;
        let input =
            Self { q, k, v, log_gate: Some(log_gate), write_strength: None, coupled_write: false };
        input.check_qkv()?;
        Ok(input)
    }

    /// Slot-form input with write strength 1 - alpha derived from the gate.
    pub fn slot_coupled(
        q: Tensor<T>,
        k: Tensor<T>,
        v: Tensor<T>,
        log_gate: Tensor<T>,
    ) -> Result<Self> {
        check_log_gate(&log_gate, q.rows())?;
        let ws = log_gate.map(|x| T::ONE - x.fast_exp());
        let input = Self {
            q,
            k,
            v,
            log_gate: Some(log_gate),
            write_strength: Some(ws),
            coupled_write: true,
        };
        input.check_qkv()?;
        Ok(input)
    }

    /// Slot-form input with an independently supplied write strength (the
    /// cumulative-softmax variant passes phi here with a zero log-gate).
    pub fn slot_independent(
        q: Tensor<T>,
        k: Tensor<T>,
        v: Tensor<T>,
        log_gate: Tensor<T>,
        write_strength: Tensor<T>,
    ) -> Result<Self> {
        check_log_gate(&log_gate, q.rows())?;
        if write_strength.shape() != log_gate.shape() {
            return Err(Error::shape(format!(
                "write strength shape {:?} does not match gate shape {:?}",
                write_strength.shape(),
                log_gate.shape()
            )));
        }
        let input = Self {
            q,
            k,
            v,
            log_gate: Some(log_gate),
            write_strength: Some(write_strength),
            coupled_write: false,
        };
        input.check_qkv()?;
        Ok(input)
    }

    fn check_qkv(&self) -> Result<()> {
        for (name, t) in [("q", &self.q), ("k", &self.k), ("v", &self.v)] {
            if t.rank() != 2 {
                return Err(Error::shape(format!("{name} must be rank 2, got {:?}", t.shape())));
            }
        }
        let t = self.q.rows();
        if t == 0 {
            return Err(Error::shape("sequence length must be at least 1"));
        }
        if self.k.rows() != t || self.v.rows() != t {
            return Err(Error::shape(format!(
                "time dimensions disagree: q {t}, k {}, v {}",
                self.k.rows(),
                self.v.rows()
            )));
        }
        if self.k.cols() != self.q.cols() {
            return Err(Error::shape(format!(
                "q feature dim {} does not match k feature dim {}",
                self.q.cols(),
                self.k.cols()
            )));
        }
        Ok(())
    }

    pub fn t(&self) -> usize {
        self.q.rows()
    }

    pub fn d_k(&self) -> usize {
        self.q.cols()
    }

    pub fn d_v(&self) -> usize {
        self.v.cols()
    }

    /// Gate width (number of slots for the slot forms).
    pub fn gate_dim(&self) -> usize {
        self.log_gate.as_ref().map_or(0, Tensor::cols)
    }

    pub fn log_gate(&self) -> Result<&Tensor<T>> {
        self.log_gate.as_ref().ok_or_else(|| Error::config("kernel requires a log gate"))
    }

    pub fn write_strength(&self) -> Result<&Tensor<T>> {
        self.write_strength.as_ref().ok_or_else(|| Error::config("kernel requires write strengths"))
    }

    /// The gate must span the named dimension.
    pub fn expect_gate_dim(&self, want: usize, what: &str) -> Result<&Tensor<T>> {
        let lg = self.log_gate()?;
        if lg.cols() != want || lg.rows() != self.t() {
            return Err(Error::shape(format!(
                "log gate shape {:?} does not match {what} x time ({want} x {})",
                lg.shape(),
                self.t()
            )));
        }
        Ok(lg)
    }
}

fn check_log_gate<T: Scalar>(log_gate: &Tensor<T>, t: usize) -> Result<()> {
    if log_gate.rank() != 2 || log_gate.rows() != t {
        return Err(Error::shape(format!(
            "log gate must be rank 2 with {t} rows, got {:?}",
            log_gate.shape()
        )));
    }
    for &x in log_gate.data() {
        if !x.is_finite() || x > T::ZERO {
            return Err(Error::domain(format!("log gate entries must be finite and <= 0, got {x}")));
        }
    }
    Ok(())
}

/// Paired slot memories.
#[derive(Clone, Debug, PartialEq)]
pub struct GsaState<T: Scalar> {
    pub k_mem: Tensor<T>,
    pub v_mem: Tensor<T>,
}

impl<T: Scalar> GsaState<T> {
    pub fn zeros(slots: usize, d_k: usize, d_v: usize) -> Self {
        Self { k_mem: Tensor::zeros(&[slots, d_k]), v_mem: Tensor::zeros(&[slots, d_v]) }
    }
}

/// Causal softmax attention with 1/sqrt(d) logit scaling, the quadratic
/// baseline the linear forms are checked against.
pub fn softmax_attention_ref<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
) -> Result<Tensor<T>> {
    let input = KernelInput::ungated(q.clone(), k.clone(), v.clone())?;
    if input.d_v() != input.d_k() {
        return Err(Error::shape(format!(
            "reference attention expects square heads, got d_k {} d_v {}",
            input.d_k(),
            input.d_v()
        )));
    }
    let (t, d) = (input.t(), input.d_k());
    let scale = T::from_f64(1.0 / (d as f64).sqrt());
    let mut o = Tensor::zeros(&[t, d]);
    let mut logits = vec![T::ZERO; t];
    for i in 0..t {
        for s in 0..=i {
            logits[s] = scale * crate::linalg::dot(q.row(i), k.row(s));
        }
        softmax_row(&mut logits[..=i]);
        for s in 0..=i {
            crate::linalg::axpy(logits[s], v.row(s), o.row_mut(i));
        }
    }
    Ok(o)
}
