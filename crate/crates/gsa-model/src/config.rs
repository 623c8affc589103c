//! Model hyperparameters and the derived sizes every module agrees on.

use gsa_core::error::{Error, Result};
use gsa_core::kernels::LinkFn;

/// How the per-slot forget gate is produced.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum GateMode {
    /// alpha = sigmoid(x W_alpha)^(1/tau), learned per token.
    DataDependent,
    /// alpha fixed per head at 1 - 2^-(5+h); W_alpha is inert.
    DataIndependentScalar,
    /// No decay (alpha = 1); write strengths come from the cumulative
    /// softmax of x W_alpha, the additive slot-memory ablation.
    None,
}

impl GateMode {
    pub const ALL: [GateMode; 3] =
        [GateMode::DataDependent, GateMode::DataIndependentScalar, GateMode::None];

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "data-dependent" => Ok(GateMode::DataDependent),
            "data-independent-scalar" => Ok(GateMode::DataIndependentScalar),
            "none" => Ok(GateMode::None),
            other => Err(Error::config(format!(
                "unknown gate mode {other}; expected data-dependent, data-independent-scalar, or none"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GateMode::DataDependent => "data-dependent",
            GateMode::DataIndependentScalar => "data-independent-scalar",
            GateMode::None => "none",
        }
    }

    /// Fixed per-head retention for the data-independent mode.
    pub fn scalar_alpha(head: usize) -> f64 {
        1.0 - (2.0f64).powi(-(5 + head as i32))
    }
}

#[derive(Clone, PartialEq, Debug)]
pub struct ModelConfig {
    pub layers: usize,
    pub dim: usize,
    pub heads: usize,
    pub slots: usize,
    pub tau: f64,
    pub link: LinkFn,
    pub gate_mode: GateMode,
    pub glu_expansion: f64,
    pub vocab: usize,
    pub seq_len_max: usize,
    /// Chunk length for the chunkwise kernels.
    pub chunk: usize,
    /// Keep chunk boundary states in layer caches instead of recomputing
    /// them in the backward pass.
    pub cache_chunk_states: bool,
}

impl ModelConfig {
    pub fn new(layers: usize, dim: usize, heads: usize, slots: usize, vocab: usize) -> Self {
        Self {
            layers,
            dim,
            heads,
            slots,
            tau: 8.0,
            link: LinkFn::Softmax,
            gate_mode: GateMode::DataDependent,
            glu_expansion: 8.0 / 3.0,
            vocab,
            seq_len_max: 4096,
            chunk: 64,
            cache_chunk_states: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.dim == 0 || self.heads == 0 || self.slots == 0 {
            return Err(Error::config("layers, dim, heads, and slots must be positive"));
        }
        if self.dim % self.heads != 0 {
            return Err(Error::config(format!(
                "dim {} must be divisible by heads {}",
                self.dim, self.heads
            )));
        }
        if self.tau < 1.0 {
            return Err(Error::config(format!("tau must be at least 1, got {}", self.tau)));
        }
        if self.glu_expansion <= 0.0 {
            return Err(Error::config("glu expansion must be positive"));
        }
        if self.vocab < 2 {
            return Err(Error::config("vocab must hold at least the two reserved ids"));
        }
        if self.chunk == 0 || self.seq_len_max == 0 {
            return Err(Error::config("chunk size and max sequence length must be positive"));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    /// GLU inner width: expansion * dim rounded to the nearest multiple
    /// of 8.
    pub fn glu_width(&self) -> usize {
        let raw = self.glu_expansion * self.dim as f64;
        (((raw / 8.0).round() as usize).max(1)) * 8
    }

    /// Trainable scalars in one token-mixing layer: four square
    /// projections, the gate projection, and the norm gain.
    pub fn gsa_layer_param_count(&self) -> usize {
        4 * self.dim * self.dim + self.dim * self.heads * self.slots + self.dim
    }

    pub fn block_param_count(&self) -> usize {
        self.gsa_layer_param_count() + 2 * self.dim + 3 * self.dim * self.glu_width()
    }

    pub fn param_count(&self) -> usize {
        self.vocab * self.dim
            + self.layers * self.block_param_count()
            + self.dim
            + self.dim * self.vocab
    }
}
