//! Naive reference evaluations of every kernel, written as direct sums over
//! the past. Quadratic in sequence length, f64 only, standard-library exp:
//! deliberately nothing in common with the implementations under test.

/// Row-major slice of a t x c matrix.
fn row(x: &[f64], c: usize, i: usize) -> &[f64] {
    &x[i * c..i * c + c]
}

fn softmax_naive(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn dotn(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Causal softmax attention with 1/sqrt(d) logit scaling, one position at a
/// time.
pub fn softmax_attention(t: usize, d: usize, q: &[f64], k: &[f64], v: &[f64]) -> Vec<f64> {
    let scale = 1.0 / (d as f64).sqrt();
    let mut o = vec![0.0; t * d];
    for i in 0..t {
        let logits: Vec<f64> = (0..=i).map(|s| scale * dotn(row(q, d, i), row(k, d, s))).collect();
        let w = softmax_naive(&logits);
        for (s, ws) in w.iter().enumerate() {
            for j in 0..d {
                o[i * d + j] += ws * v[s * d + j];
            }
        }
    }
    o
}

/// o_t = sum_{s<=t} (q_t . k_s) v_s
pub fn la(t: usize, dk: usize, dv: usize, q: &[f64], k: &[f64], v: &[f64]) -> Vec<f64> {
    let mut o = vec![0.0; t * dv];
    for i in 0..t {
        for s in 0..=i {
            let w = dotn(row(q, dk, i), row(k, dk, s));
            for j in 0..dv {
                o[i * dv + j] += w * v[s * dv + j];
            }
        }
    }
    o
}

/// S_T for plain linear attention.
pub fn la_state(t: usize, dk: usize, dv: usize, k: &[f64], v: &[f64]) -> Vec<f64> {
    let mut s = vec![0.0; dk * dv];
    for i in 0..t {
        for l in 0..dk {
            for j in 0..dv {
                s[l * dv + j] += k[i * dk + l] * v[i * dv + j];
            }
        }
    }
    s
}

/// Decay product prod_{u=s+1..=t} alpha_u[l] from log-gates.
fn decay(lg: &[f64], m: usize, s: usize, t: usize, l: usize) -> f64 {
    let mut acc = 0.0;
    for u in s + 1..=t {
        acc += lg[u * m + l];
    }
    acc.exp()
}

/// Key-side gated form: o_t[j] = sum_{s<=t} (sum_l q_t[l] k_s[l] D_{s,t,l}) v_s[j]
pub fn gla_key(t: usize, dk: usize, dv: usize, q: &[f64], k: &[f64], v: &[f64], lg: &[f64]) -> Vec<f64> {
    let mut o = vec![0.0; t * dv];
    for i in 0..t {
        for s in 0..=i {
            let mut w = 0.0;
            for l in 0..dk {
                w += q[i * dk + l] * k[s * dk + l] * decay(lg, dk, s, i, l);
            }
            for j in 0..dv {
                o[i * dv + j] += w * v[s * dv + j];
            }
        }
    }
    o
}

pub fn gla_key_state(t: usize, dk: usize, dv: usize, k: &[f64], v: &[f64], lg: &[f64]) -> Vec<f64> {
    let mut st = vec![0.0; dk * dv];
    for s in 0..t {
        for l in 0..dk {
            let w = k[s * dk + l] * decay(lg, dk, s, t - 1, l);
            for j in 0..dv {
                st[l * dv + j] += w * v[s * dv + j];
            }
        }
    }
    st
}

/// Value-side gated form: o_t[j] = sum_{s<=t} (q_t . k_s) v_s[j] D_{s,t,j}
pub fn gla_value(t: usize, dk: usize, dv: usize, q: &[f64], k: &[f64], v: &[f64], lg: &[f64]) -> Vec<f64> {
    let mut o = vec![0.0; t * dv];
    for i in 0..t {
        for s in 0..=i {
            let w = dotn(row(q, dk, i), row(k, dk, s));
            for j in 0..dv {
                o[i * dv + j] += w * v[s * dv + j] * decay(lg, dv, s, i, j);
            }
        }
    }
    o
}

pub fn gla_value_state(t: usize, dk: usize, dv: usize, k: &[f64], v: &[f64], lg: &[f64]) -> Vec<f64> {
    let mut st = vec![0.0; dk * dv];
    for s in 0..t {
        for l in 0..dk {
            for j in 0..dv {
                st[l * dv + j] += k[s * dk + l] * v[s * dv + j] * decay(lg, dv, s, t - 1, j);
            }
        }
    }
    st
}

/// Per-chunk inclusive prefix sums of log-gates.
pub fn chunk_cumsum(t: usize, m: usize, x: &[f64], c: usize) -> Vec<f64> {
    let mut out = vec![0.0; t * m];
    for i in 0..t {
        let head = (i / c) * c;
        for l in 0..m {
            let mut acc = 0.0;
            for u in head..=i {
                acc += x[u * m + l];
            }
            out[i * m + l] = acc;
        }
    }
    out
}

/// Write strengths phi_i = exp(pre_i) / sum_{j<=i} exp(pre_j), evaluated
/// directly (test scale keeps the raw exponentials in range).
pub fn abc_phi(t: usize, m: usize, pre: &[f64]) -> Vec<f64> {
    let mut phi = vec![0.0; t * m];
    for l in 0..m {
        let mut denom = 0.0;
        for i in 0..t {
            denom += pre[i * m + l].exp();
            phi[i * m + l] = pre[i * m + l].exp() / denom;
        }
    }
    phi
}

/// Slot memories as explicit sums, then the softmax read.
pub fn abc(
    t: usize,
    dk: usize,
    dv: usize,
    m: usize,
    q: &[f64],
    k: &[f64],
    v: &[f64],
    phi: &[f64],
) -> Vec<f64> {
    let mut o = vec![0.0; t * dv];
    for i in 0..t {
        let mut kmem = vec![0.0; m * dk];
        let mut vmem = vec![0.0; m * dv];
        for s in 0..=i {
            for slot in 0..m {
                let w = phi[s * m + slot];
                for l in 0..dk {
                    kmem[slot * dk + l] += w * k[s * dk + l];
                }
                for j in 0..dv {
                    vmem[slot * dv + j] += w * v[s * dv + j];
                }
            }
        }
        let scores: Vec<f64> = (0..m).map(|slot| dotn(&kmem[slot * dk..slot * dk + dk], row(q, dk, i))).collect();
        let w = softmax_naive(&scores);
        for slot in 0..m {
            for j in 0..dv {
                o[i * dv + j] += w[slot] * vmem[slot * dv + j];
            }
        }
    }
    o
}

/// Gated two-memory form via the unrolled sums
/// Kmem_t = sum_{s<=t} (prod_{u=s+1..=t} alpha_u) (1-alpha_s) (x) k_s, then
/// the softmax read. Write strength passed explicitly so the phi-driven
/// variant shares the oracle.
pub fn gsa(
    t: usize,
    dk: usize,
    dv: usize,
    m: usize,
    q: &[f64],
    k: &[f64],
    v: &[f64],
    lg: &[f64],
    ws: &[f64],
) -> Vec<f64> {
    let mut o = vec![0.0; t * dv];
    for i in 0..t {
        let mut kmem = vec![0.0; m * dk];
        let mut vmem = vec![0.0; m * dv];
        for s in 0..=i {
            for slot in 0..m {
                let w = ws[s * m + slot] * decay(lg, m, s, i, slot);
                for l in 0..dk {
                    kmem[slot * dk + l] += w * k[s * dk + l];
                }
                for j in 0..dv {
                    vmem[slot * dv + j] += w * v[s * dv + j];
                }
            }
        }
        let scores: Vec<f64> = (0..m).map(|slot| dotn(&kmem[slot * dk..slot * dk + dk], row(q, dk, i))).collect();
        let w = softmax_naive(&scores);
        for slot in 0..m {
            for j in 0..dv {
                o[i * dv + j] += w[slot] * vmem[slot * dv + j];
            }
        }
    }
    o
}

/// Analytic gradients of plain linear attention from the masked parallel
/// form O = ((QK^T) (.) M) V.
pub fn la_grads(
    t: usize,
    dk: usize,
    dv: usize,
    q: &[f64],
    k: &[f64],
    v: &[f64],
    dout: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut dq = vec![0.0; t * dk];
    let mut dk_ = vec![0.0; t * dk];
    let mut dv_ = vec![0.0; t * dv];
    for i in 0..t {
        for s in 0..=i {
            let dw = dotn(row(dout, dv, i), row(v, dv, s));
            let w = dotn(row(q, dk, i), row(k, dk, s));
            for l in 0..dk {
                dq[i * dk + l] += dw * k[s * dk + l];
                dk_[s * dk + l] += dw * q[i * dk + l];
            }
            for j in 0..dv {
                dv_[s * dv + j] += w * dout[i * dv + j];
            }
        }
    }
    (dq, dk_, dv_)
}
