//! Kernel throughput measurement: one training-shaped unit of work per rep
//! (forward plus backward on a T-token sequence), two untimed warmups, and
//! the median over timed reps. The recurrent form is the chunkwise sweep at
//! chunk length 1, which executes the token-by-token arithmetic order.
//!
//! `peak_bytes` is the analytic residency of one kernel application inside
//! a training step: operands, outputs, gradients on both sides, and
//! whatever the forward keeps for the backward. Backward scratch is reused
//! across layers; this resident set is what accumulates, and it is the
//! quantity the recompute flag shrinks.

use std::time::Instant;

use gsa_core::error::{Error, Result};
use gsa_core::kernels::{
    gla_chunkwise_bwd, gla_chunkwise_fwd, gsa_bwd, gsa_fwd, ChunkSpec, GateSide, KernelInput,
    LinkFn,
};
use gsa_core::rng::Rng;
use gsa_core::scalar::Scalar;
use gsa_core::tensor::Tensor;

pub const CSV_HEADER: &str = "kernel,form,T,d,m,C,dtype,recompute,tokens_per_s,peak_bytes";

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum BenchKernel {
    Gla,
    Gsa,
}

impl BenchKernel {
    pub fn name(self) -> &'static str {
        match self {
            BenchKernel::Gla => "gla",
            BenchKernel::Gsa => "gsa",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum BenchForm {
    Recurrent,
    Chunkwise,
}

impl BenchForm {
    pub fn name(self) -> &'static str {
        match self {
            BenchForm::Recurrent => "recurrent",
            BenchForm::Chunkwise => "chunkwise",
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchRecord {
    pub kernel: BenchKernel,
    pub form: BenchForm,
    pub t: usize,
    pub d: usize,
    pub m: usize,
    pub chunk: usize,
    pub dtype: &'static str,
    pub recompute: bool,
    pub tokens_per_s: f64,
    pub peak_bytes: usize,
}

impl BenchRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{:.1},{}",
            self.kernel.name(),
            self.form.name(),
            self.t,
            self.d,
            self.m,
            self.chunk,
            self.dtype,
            if self.recompute { "on" } else { "off" },
            self.tokens_per_s,
            self.peak_bytes
        )
    }
}

fn median_seconds(reps: usize, warmup: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    for _ in 0..warmup {
        f()?;
    }
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t0 = Instant::now();
        f()?;
        times.push(t0.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    Ok(if reps % 2 == 1 {
        times[reps / 2]
    } else {
        0.5 * (times[reps / 2 - 1] + times[reps / 2])
    })
}

/// Analytic peak bytes of one forward-backward application, the
/// `peak_bytes` column, computable without running the kernel.
pub fn peak_bytes_estimate(
    kernel: BenchKernel,
    t: usize,
    d: usize,
    m: usize,
    chunk: usize,
    recompute: bool,
    dtype: gsa_core::scalar::Dtype,
) -> usize {
    peak_elems(kernel, t, d, m, chunk, recompute) * dtype.size_bytes()
}

/// Resident elements of one forward-backward application, excluding reused
/// scratch. Chunk boundary states count when they persist to the backward:
/// always for the plain gated kernel, only without recompute for the slot
/// kernel (which rebuilds them on demand).
fn peak_elems(kernel: BenchKernel, t: usize, d: usize, m: usize, chunk: usize, recompute: bool) -> usize {
    let boundaries = t.div_ceil(chunk) + 1;
    match kernel {
        BenchKernel::Gla => 10 * t * d + boundaries * d * d,
        BenchKernel::Gsa => {
            let mut elems = 8 * t * d + 5 * t * m;
            if !recompute {
                elems += boundaries * 2 * d * m;
            }
            elems
        }
    }
}

/// Time one kernel configuration and return its CSV-ready record.
pub fn bench_kernel<T: Scalar>(
    kernel: BenchKernel,
    form: BenchForm,
    t: usize,
    d: usize,
    m: usize,
    chunk: usize,
    recompute: bool,
    reps: usize,
    seed: u64,
) -> Result<BenchRecord> {
    if reps == 0 {
        return Err(Error::config("benchmark needs at least one timed rep"));
    }
    let chunk = match form {
        BenchForm::Recurrent => 1,
        BenchForm::Chunkwise => chunk,
    };
    let spec = ChunkSpec::new(chunk)?;
    let mut rng = Rng::derive(seed, &[0x62656e63]);
    let mut rand = |rows: usize, cols: usize, lo: f64, hi: f64| {
        let mut x = Tensor::<T>::zeros(&[rows, cols]);
        x.fill_uniform(&mut rng, lo, hi);
        x
    };
    let q = rand(t, d, -1.0, 1.0);
    let k = rand(t, d, -1.0, 1.0);
    let v = rand(t, d, -1.0, 1.0);
    let d_o = Tensor::<T>::full(&[t, d], T::ONE);

    let (m_used, secs) = match kernel {
        BenchKernel::Gla => {
            let lg = rand(t, d, -3.0, -1e-3);
            let input = KernelInput::gated(q, k, v, lg)?;
            let secs = median_seconds(reps, 2, || {
                let (_, states) = gla_chunkwise_fwd(&input, GateSide::Key, spec)?;
                let _ = gla_chunkwise_bwd(&input, GateSide::Key, spec, &states, &d_o)?;
                Ok(())
            })?;
            (0, secs)
        }
        BenchKernel::Gsa => {
            if m == 0 {
                return Err(Error::config("the slot kernel needs a positive slot count"));
            }
            let lg = rand(t, m, -3.0, -1e-3);
            let input = KernelInput::slot_coupled(q, k, v, lg)?;
            let secs = median_seconds(reps, 2, || {
                let (_, saved) = gsa_fwd(&input, spec, LinkFn::Softmax, !recompute)?;
                let _ = gsa_bwd(&input, spec, &d_o, &saved, recompute)?;
                Ok(())
            })?;
            (m, secs)
        }
    };

    Ok(BenchRecord {
        kernel,
        form,
        t,
        d,
        m: m_used,
        chunk,
        dtype: T::DTYPE.name(),
        recompute,
        tokens_per_s: t as f64 / secs,
        peak_bytes: peak_elems(kernel, t, d, m_used, chunk, recompute) * T::DTYPE.size_bytes(),
    })
}
