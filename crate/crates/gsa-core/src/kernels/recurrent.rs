//! Step-by-step recurrent forms. These are the semantic ground truth the
//! chunkwise forms are checked against.
//!
//! The gated form is written in factored read-then-update shape: the output
//! at step t reads the previous state with gate-scaled queries and adds the
//! current pair's contribution separately. That ordering makes a chunk size
//! of one reproduce the recurrence bit for bit, which the equivalence suite
//! asserts as an exact-zero deviation.

use crate::error::{Error, Result};
use crate::kernels::{GateSide, GsaState, KernelInput};
use crate::linalg::{axpy, dot};
use crate::scalar::Scalar;
use crate::tensor::{softmax_row, Tensor};

/// S_t = S_{t-1} + k_t (x) v_t; o_t = S_t^T q_t.
pub fn la_recurrent<T: Scalar>(input: &KernelInput<T>) -> Result<(Tensor<T>, Tensor<T>)> {
    let (t, dk, dv) = (input.t(), input.d_k(), input.d_v());
    let mut state = Tensor::<T>::zeros(&[dk, dv]);
    let mut o = Tensor::<T>::zeros(&[t, dv]);
    for i in 0..t {
        for l in 0..dk {
            axpy(input.k.row(i)[l], input.v.row(i), state.row_mut(l));
        }
        let or = o.row_mut(i);
        for l in 0..dk {
            axpy(input.q.row(i)[l], state.row(l), or);
        }
    }
    Ok((o, state))
}

/// Gated recurrence, decay on the chosen state side; returns outputs and the
/// final state. Reads happen against the previous state in factored form:
///   key side:   o_t = (q_t (.) a_t)^T S_{t-1} + (q_t . k_t) v_t
///   value side: o_t = (q_t^T S_{t-1}) (.) a_t + (q_t . k_t) v_t
/// followed by the decay-then-write state update.
pub fn gla_recurrent<T: Scalar>(
    input: &KernelInput<T>,
    side: GateSide,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (t, dk, dv) = (input.t(), input.d_k(), input.d_v());
    let lg = match side {
        GateSide::Key => input.expect_gate_dim(dk, "key dim")?,
        GateSide::Value => input.expect_gate_dim(dv, "value dim")?,
    };
    let mut state = Tensor::<T>::zeros(&[dk, dv]);
    let mut o = Tensor::<T>::zeros(&[t, dv]);
    let gate_dim = lg.cols();
    let mut alpha = vec![T::ZERO; gate_dim];
    for i in 0..t {
        for (a, &g) in alpha.iter_mut().zip(lg.row(i)) {
            *a = g.fast_exp();
        }
        let (q, k, v) = (input.q.row(i), input.k.row(i), input.v.row(i));
        let p = dot(q, k);
        match side {
            GateSide::Key => {
                let or = o.row_mut(i);
                for l in 0..dk {
                    axpy(q[l] * alpha[l], state.row(l), or);
                }
                for (oj, &vj) in or.iter_mut().zip(v) {
                    *oj += p * vj;
                }
                for l in 0..dk {
                    let row = state.row_mut(l);
                    for x in row.iter_mut() {
                        *x *= alpha[l];
                    }
                    axpy(k[l], v, row);
                }
            }
            GateSide::Value => {
                let or = o.row_mut(i);
                for l in 0..dk {
                    axpy(q[l], state.row(l), or);
                }
                for ((oj, &aj), &vj) in or.iter_mut().zip(&alpha).zip(v) {
                    *oj = *oj * aj + p * vj;
                }
                for l in 0..dk {
                    let row = state.row_mut(l);
                    for (x, &aj) in row.iter_mut().zip(&alpha) {
                        *x *= aj;
                    }
                    axpy(k[l], v, row);
                }
            }
        }
    }
    Ok((o, state))
}

/// Gated recurrence with a constant scalar decay.
pub fn retnet_style_decay<T: Scalar>(input: &KernelInput<T>, gamma: f64) -> Result<Tensor<T>> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::config(format!("decay must lie in (0,1), got {gamma}")));
    }
    let lg = Tensor::full(&[input.t(), input.d_k()], T::from_f64(gamma.ln()));
    let gated = KernelInput::gated(input.q.clone(), input.k.clone(), input.v.clone(), lg)?;
    Ok(gla_recurrent(&gated, GateSide::Key)?.0)
}

/// Additive slot memories written with strengths phi, read through a softmax
/// over slot scores.
pub fn abc_recurrent<T: Scalar>(input: &KernelInput<T>) -> Result<Tensor<T>> {
    let (t, dk, dv) = (input.t(), input.d_k(), input.d_v());
    let ws = input.write_strength()?;
    if ws.rows() != t {
        return Err(Error::shape("write strength rows must match time"));
    }
    let m = ws.cols();
    let mut mem = GsaState::<T>::zeros(m, dk, dv);
    let mut o = Tensor::<T>::zeros(&[t, dv]);
    let mut scores = vec![T::ZERO; m];
    for i in 0..t {
        let (q, k, v) = (input.q.row(i), input.k.row(i), input.v.row(i));
        for slot in 0..m {
            let w = ws.row(i)[slot];
            axpy(w, k, mem.k_mem.row_mut(slot));
            axpy(w, v, mem.v_mem.row_mut(slot));
        }
        for (slot, s) in scores.iter_mut().enumerate() {
            *s = dot(mem.k_mem.row(slot), q);
        }
        softmax_row(&mut scores);
        let or = o.row_mut(i);
        for (slot, &w) in scores.iter().enumerate() {
            axpy(w, mem.v_mem.row(slot), or);
        }
    }
    Ok(o)
}

/// Slot memories with forget gates and write strengths:
///   Kmem_t = Diag(a_t) Kmem_{t-1} + i_t (x) k_t, likewise for Vmem,
///   o_t = Vmem_t^T softmax(Kmem_t q_t).
pub fn gsa_recurrent<T: Scalar>(input: &KernelInput<T>) -> Result<(Tensor<T>, GsaState<T>)> {
    let (t, dk, dv) = (input.t(), input.d_k(), input.d_v());
    let ws = input.write_strength()?;
    let m = ws.cols();
    let lg = input.expect_gate_dim(m, "slot count")?;
    let mut mem = GsaState::<T>::zeros(m, dk, dv);
    let mut o = Tensor::<T>::zeros(&[t, dv]);
    let mut scores = vec![T::ZERO; m];
    for i in 0..t {
        let (q, k, v) = (input.q.row(i), input.k.row(i), input.v.row(i));
        for slot in 0..m {
            let a = lg.row(i)[slot].fast_exp();
            let w = ws.row(i)[slot];
            let kr = mem.k_mem.row_mut(slot);
            for x in kr.iter_mut() {
                *x *= a;
            }
            axpy(w, k, kr);
            let vr = mem.v_mem.row_mut(slot);
            for x in vr.iter_mut() {
                *x *= a;
            }
            axpy(w, v, vr);
        }
        for (slot, s) in scores.iter_mut().enumerate() {
            *s = dot(mem.k_mem.row(slot), q);
        }
        softmax_row(&mut scores);
        let or = o.row_mut(i);
        for (slot, &w) in scores.iter().enumerate() {
            axpy(w, mem.v_mem.row(slot), or);
        }
    }
    Ok((o, mem))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn rand(rng: &mut Rng, r: usize, c: usize) -> Tensor<f64> {
        let data = (0..r * c).map(|_| rng.uniform(-1.0, 1.0)).collect();
        Tensor::from_vec(&[r, c], data).unwrap()
    }

    fn gates(rng: &mut Rng, r: usize, c: usize) -> Tensor<f64> {
        let data = (0..r * c).map(|_| rng.uniform(-2.0, -0.01)).collect();
        Tensor::from_vec(&[r, c], data).unwrap()
    }

    #[test]
    fn la_single_step_is_scaled_value() {
        let mut rng = Rng::new(4);
        let input =
            KernelInput::ungated(rand(&mut rng, 1, 3), rand(&mut rng, 1, 3), rand(&mut rng, 1, 5))
                .unwrap();
        let (o, state) = la_recurrent(&input).unwrap();
        let w = dot(input.q.row(0), input.k.row(0));
        for j in 0..5 {
            assert!((o.row(0)[j] - w * input.v.row(0)[j]).abs() < 1e-15);
            assert!((state.get2(0, j) - input.k.row(0)[0] * input.v.row(0)[j]).abs() < 1e-15);
        }
    }

    #[test]
    fn gla_with_unit_gates_equals_la() {
        let mut rng = Rng::new(5);
        let (t, dk, dv) = (9, 4, 6);
        let q = rand(&mut rng, t, dk);
        let k = rand(&mut rng, t, dk);
        let v = rand(&mut rng, t, dv);
        let plain = KernelInput::ungated(q.clone(), k.clone(), v.clone()).unwrap();
        let (o_la, s_la) = la_recurrent(&plain).unwrap();
        for (side, g) in [(GateSide::Key, dk), (GateSide::Value, dv)] {
            let gated =
                KernelInput::gated(q.clone(), k.clone(), v.clone(), Tensor::zeros(&[t, g]))
                    .unwrap();
            let (o, s) = gla_recurrent(&gated, side).unwrap();
            assert!(o.max_abs_diff(&o_la) <= 1e-12);
            assert!(s.max_abs_diff(&s_la) <= 1e-12);
        }
    }

    #[test]
    fn gla_with_vanishing_gates_is_memoryless() {
        let mut rng = Rng::new(6);
        let (t, dk, dv) = (7, 3, 4);
        let q = rand(&mut rng, t, dk);
        let k = rand(&mut rng, t, dk);
        let v = rand(&mut rng, t, dv);
        for (side, g) in [(GateSide::Key, dk), (GateSide::Value, dv)] {
            let lg = Tensor::full(&[t, g], -80.0);
            let gated = KernelInput::gated(q.clone(), k.clone(), v.clone(), lg).unwrap();
            let (o, _) = gla_recurrent(&gated, side).unwrap();
            for i in 0..t {
                let w = dot(q.row(i), k.row(i));
                for j in 0..dv {
                    assert!((o.row(i)[j] - w * v.row(i)[j]).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn retnet_two_step_hand_expansion() {
        let mut rng = Rng::new(7);
        let q = rand(&mut rng, 2, 3);
        let k = rand(&mut rng, 2, 3);
        let v = rand(&mut rng, 2, 2);
        let input = KernelInput::ungated(q.clone(), k.clone(), v.clone()).unwrap();
        let o = retnet_style_decay(&input, 0.5).unwrap();
        for j in 0..2 {
            let want = 0.5 * dot(q.row(1), k.row(0)) * v.row(0)[j]
                + dot(q.row(1), k.row(1)) * v.row(1)[j];
            assert!((o.row(1)[j] - want).abs() <= 1e-12);
        }
        assert!(retnet_style_decay(&input, 1.0).is_err());
        assert!(retnet_style_decay(&input, 0.0).is_err());
    }

    #[test]
    fn abc_first_step_fills_every_slot_with_k1() {
        let mut rng = Rng::new(8);
        let (t, d, m) = (1, 4, 3);
        let q = rand(&mut rng, t, d);
        let k = rand(&mut rng, t, d);
        let v = rand(&mut rng, t, d);
        let phi = Tensor::full(&[t, m], 1.0);
        let input = KernelInput::slot_independent(
            q,
            k.clone(),
            v.clone(),
            Tensor::zeros(&[t, m]),
            phi,
        )
        .unwrap();
        let o = abc_recurrent(&input).unwrap();
        // Every slot holds (k1, v1), so any softmax mixes copies of v1.
        for j in 0..d {
            assert!((o.row(0)[j] - v.row(0)[j]).abs() <= 1e-15);
        }
    }

    #[test]
    fn gsa_single_slot_output_follows_value_memory() {
        let mut rng = Rng::new(9);
        let (t, d) = (6, 4);
        let q = rand(&mut rng, t, d);
        let k = rand(&mut rng, t, d);
        let v = rand(&mut rng, t, d);
        let lg = gates(&mut rng, t, 1);
        let input = KernelInput::slot_coupled(q, k, v.clone(), lg.clone()).unwrap();
        let (o, _) = gsa_recurrent(&input).unwrap();
        // Independent value-memory trajectory.
        let mut vmem = vec![0.0f64; d];
        for i in 0..t {
            let a = lg.row(i)[0].fast_exp();
            let w = 1.0 - a;
            for j in 0..d {
                vmem[j] = w.mul_add(v.row(i)[j], vmem[j] * a);
            }
            for j in 0..d {
                // Scalar softmax is exactly one, so the read copies the row.
                assert!((o.row(i)[j] - vmem[j]).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn gsa_state_stays_in_unit_box_for_bounded_inputs() {
        let mut rng = Rng::new(10);
        let (t, d, m) = (40, 3, 5);
        let q = rand(&mut rng, t, d);
        let k = rand(&mut rng, t, d);
        let v = rand(&mut rng, t, d);
        let lg = gates(&mut rng, t, m);
        let input = KernelInput::slot_coupled(q, k, v, lg).unwrap();
        let (_, mem) = gsa_recurrent(&input).unwrap();
        for &x in mem.k_mem.data().iter().chain(mem.v_mem.data()) {
            assert!(x.abs() <= 1.0 + 1e-12);
        }
    }
}
