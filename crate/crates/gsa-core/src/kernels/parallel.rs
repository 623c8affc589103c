//! Parallel-unrolled forms: every output computed as an explicit masked sum
//! over the past, quadratic in sequence length. They exist for the
//! equivalence suite and for small-scale inspection, not for speed.

use crate::error::Result;
use crate::kernels::{GateSide, KernelInput, LinkFn};
use crate::linalg::{axpy, dot};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// O = ((Q K^T) (.) M) V with the causal mask M.
pub fn la_parallel<T: Scalar>(input: &KernelInput<T>) -> Result<Tensor<T>> {
    let (t, dv) = (input.t(), input.d_v());
    let mut o = Tensor::<T>::zeros(&[t, dv]);
    for i in 0..t {
        for s in 0..=i {
            let w = dot(input.q.row(i), input.k.row(s));
            axpy(w, input.v.row(s), o.row_mut(i));
        }
    }
    Ok(o)
}

/// Unrolled gated form; the decay between steps s and i is
/// exp(cum_i - cum_s) of the log-gate prefix sums on the gated side.
pub fn gla_parallel<T: Scalar>(input: &KernelInput<T>, side: GateSide) -> Result<Tensor<T>> {
    let (t, dk, dv) = (input.t(), input.d_k(), input.d_v());
    let lg = match side {
        GateSide::Key => input.expect_gate_dim(dk, "key dim")?,
        GateSide::Value => input.expect_gate_dim(dv, "value dim")?,
    };
    let cum = lg.cumsum(false);
    let g = lg.cols();
    let mut o = Tensor::<T>::zeros(&[t, dv]);
    let mut ratio = vec![T::ZERO; g];
    for i in 0..t {
        for s in 0..=i {
            for (r, (&ci, &cs)) in ratio.iter_mut().zip(cum.row(i).iter().zip(cum.row(s))) {
                *r = (ci - cs).fast_exp();
            }
            match side {
                GateSide::Key => {
                    let mut w = T::ZERO;
                    for l in 0..dk {
                        w = (input.q.row(i)[l] * input.k.row(s)[l]).mul_add(ratio[l], w);
                    }
                    axpy(w, input.v.row(s), o.row_mut(i));
                }
                GateSide::Value => {
                    let w = dot(input.q.row(i), input.k.row(s));
                    let or = o.row_mut(i);
                    for j in 0..dv {
                        or[j] = (w * input.v.row(s)[j]).mul_add(ratio[j], or[j]);
                    }
                }
            }
        }
    }
    Ok(o)
}

/// Two-pass composition of the masked parallel form with write strengths as
/// first-pass values and second-pass keys, softmax in between.
pub fn abc_parallel<T: Scalar>(input: &KernelInput<T>) -> Result<Tensor<T>> {
    let ws = input.write_strength()?.clone();
    let first =
        KernelInput::ungated(input.q.clone(), input.k.clone(), ws.clone())?;
    let scores = la_parallel(&first)?.softmax_rows();
    let second = KernelInput::ungated(scores, ws, input.v.clone())?;
    la_parallel(&second)
}

/// Two-pass unrolled slot form: a value-side gated pass producing slot
/// scores, the link nonlinearity, then a key-side gated pass over the write
/// strengths.
pub fn gsa_parallel<T: Scalar>(input: &KernelInput<T>, link: LinkFn) -> Result<Tensor<T>> {
    let ws = input.write_strength()?.clone();
    let lg = input.log_gate()?.clone();
    let first = KernelInput::gated(input.q.clone(), input.k.clone(), ws.clone(), lg.clone())?;
    let mut scores = gla_parallel(&first, GateSide::Value)?;
    link.apply_rows(&mut scores);
    let second = KernelInput::gated(scores, ws, input.v.clone(), lg)?;
    gla_parallel(&second, GateSide::Key)
}
