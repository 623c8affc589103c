//! Dense row-major matrix primitives.
//!
//! Three GEMM layouts cover every product in the crate (plain, transposed
//! left, transposed right). The main loops accumulate a register tile whose
//! width is picked per float width (f32 tiles twice as wide as f64 so both
//! fill the vector registers); tall products additionally pack each b panel
//! into a contiguous buffer so row tiles read it from L1. Tails fall back to
//! row-at-a-time axpy. Every path accumulates each output element through a
//! single `mul_add` chain ascending in the contraction index, which keeps
//! results identical between the tiled, packed, and tail paths for a fresh
//! (zeroed) destination, a property the chunk-size-1 equivalence checks rely
//! on.
//!
//! `dot` and `dot3` stripe across eight accumulators combined in a fixed
//! tree, so the compiler can vectorize the independent chains. Every caller
//! that needs bitwise-reproducible sums uses these same helpers.

use crate::scalar::{Dtype, Scalar};

const MR: usize = 4;

/// Row count above which the plain path streams the b panel from L2 once per
/// row tile; packing the panel contiguously first is then worth the copy.
const PACK_MIN_ROWS: usize = 256;

/// c[m x n] = (or +=) a[m x k] . b[k x n]
pub fn gemm_nn<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    b: &[T],
    c: &mut [T],
    accumulate: bool,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if !accumulate {
        c.fill(T::ZERO);
    }
    // Tile width picked so the accumulator block fills the vector registers
    // without falling straight into the column tail on narrow outputs.
    let wide = matches!(T::DTYPE, Dtype::F32);
    if wide && n >= 64 {
        if m >= PACK_MIN_ROWS {
            nn_packed::<T, 64>(m, k, n, a, b, c);
        } else {
            nn_main::<T, 64>(m, k, n, a, b, c);
        }
    } else if n >= 32 {
        if m >= PACK_MIN_ROWS {
            nn_packed::<T, 32>(m, k, n, a, b, c);
        } else {
            nn_main::<T, 32>(m, k, n, a, b, c);
        }
    } else {
        nn_main::<T, 16>(m, k, n, a, b, c);
    }
}

/// One register tile: rows i0..i0+MR of a against an NR-column panel of b
/// whose rows are `stride` apart starting at `panel`. Each c element keeps a
/// single accumulation chain ascending in p, so tile shape and panel layout
/// never change the rounded result.
#[inline(always)]
fn nn_tile<T: Scalar, const NR: usize>(
    i0: usize,
    k: usize,
    n: usize,
    j0: usize,
    stride: usize,
    a: &[T],
    panel: &[T],
    c: &mut [T],
) {
    let mut acc = [[T::ZERO; NR]; MR];
    for p in 0..k {
        let br: &[T; NR] = panel[p * stride..p * stride + NR].try_into().unwrap();
        for (r, ac) in acc.iter_mut().enumerate() {
            let av = a[(i0 + r) * k + p];
            for l in 0..NR {
                ac[l] = av.mul_add(br[l], ac[l]);
            }
        }
    }
    for (r, ac) in acc.iter().enumerate() {
        let co = (i0 + r) * n + j0;
        for (cv, av) in c[co..co + NR].iter_mut().zip(ac.iter()) {
            *cv += *av;
        }
    }
}

/// Leftover rows below a full tile: ascending-p axpy per row, restricted to
/// the columns j0..j0+w.
fn nn_row_tail<T: Scalar>(
    i0: usize,
    m: usize,
    k: usize,
    n: usize,
    j0: usize,
    w: usize,
    a: &[T],
    b: &[T],
    c: &mut [T],
) {
    for i in i0..m {
        for p in 0..k {
            let av = a[i * k + p];
            let br = &b[p * n + j0..p * n + j0 + w];
            let cr = &mut c[i * n + j0..i * n + j0 + w];
            for (cv, bv) in cr.iter_mut().zip(br.iter()) {
                *cv = av.mul_add(*bv, *cv);
            }
        }
    }
}

fn nn_main<T: Scalar, const NR: usize>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    let mut i0 = 0;
    while i0 + MR <= m {
        let mut j0 = 0;
        while j0 + NR <= n {
            nn_tile::<T, NR>(i0, k, n, j0, n, a, &b[j0..], c);
            j0 += NR;
        }
        if j0 < n {
            for p in 0..k {
                let br = &b[p * n + j0..p * n + n];
                for r in 0..MR {
                    let av = a[(i0 + r) * k + p];
                    let co = (i0 + r) * n + j0;
                    for (cv, bv) in c[co..(i0 + r) * n + n].iter_mut().zip(br.iter()) {
                        *cv = av.mul_add(*bv, *cv);
                    }
                }
            }
        }
        i0 += MR;
    }
    nn_row_tail(i0, m, k, n, 0, n, a, b, c);
}

/// Tall products: copy each b panel once into a contiguous buffer, then run
/// every row tile against it. The plain path re-streams the strided panel
/// per row tile, which turns L2 bandwidth into the bottleneck when m is in
/// the thousands. Packing is a pure copy, so results match nn_main bitwise.
fn nn_packed<T: Scalar, const NR: usize>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    b: &[T],
    c: &mut [T],
) {
    let mut pack = vec![T::ZERO; k * NR];
    let mut j0 = 0;
    while j0 + NR <= n {
        for p in 0..k {
            pack[p * NR..p * NR + NR].copy_from_slice(&b[p * n + j0..p * n + j0 + NR]);
        }
        let mut i0 = 0;
        while i0 + MR <= m {
            nn_tile::<T, NR>(i0, k, n, j0, NR, a, &pack, c);
            i0 += MR;
        }
        nn_row_tail(i0, m, k, n, j0, NR, a, b, c);
        j0 += NR;
    }
    if j0 < n {
        nn_row_tail(0, m, k, n, j0, n - j0, a, b, c);
    }
}

/// c[k x n] = (or +=) a[m x k]^T . b[m x n]
pub fn gemm_tn<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    b: &[T],
    c: &mut [T],
    accumulate: bool,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(c.len(), k * n);
    if !accumulate {
        c.fill(T::ZERO);
    }
    // Row blocks keep one slice of a and b cache-resident per pass; m is the
    // long (batch*time) axis in every transposed-left product this crate does.
    const IB: usize = 512;
    let mut i0 = 0;
    while i0 < m {
        let ie = (i0 + IB).min(m);
        let wide = matches!(T::DTYPE, Dtype::F32);
        if wide && n >= 64 {
            tn_block::<T, 64>(i0, ie, k, n, a, b, c);
        } else if n >= 32 {
            tn_block::<T, 32>(i0, ie, k, n, a, b, c);
        } else {
            tn_block::<T, 16>(i0, ie, k, n, a, b, c);
        }
        i0 = ie;
    }
}

fn tn_block<T: Scalar, const NR: usize>(
    i0: usize,
    ie: usize,
    k: usize,
    n: usize,
    a: &[T],
    b: &[T],
    c: &mut [T],
) {
    let mut j0 = 0;
    while j0 + NR <= n {
        let mut q0 = 0;
        while q0 + MR <= k {
            let mut acc = [[T::ZERO; NR]; MR];
            for i in i0..ie {
                let br: &[T; NR] = b[i * n + j0..i * n + j0 + NR].try_into().unwrap();
                for (r, ac) in acc.iter_mut().enumerate() {
                    let av = a[i * k + q0 + r];
                    for l in 0..NR {
                        ac[l] = av.mul_add(br[l], ac[l]);
                    }
                }
            }
            for (r, ac) in acc.iter().enumerate() {
                let co = (q0 + r) * n + j0;
                for (cv, av) in c[co..co + NR].iter_mut().zip(ac.iter()) {
                    *cv += *av;
                }
            }
            q0 += MR;
        }
        if q0 < k {
            for i in i0..ie {
                let br = &b[i * n + j0..i * n + j0 + NR];
                for q in q0..k {
                    let av = a[i * k + q];
                    let co = q * n + j0;
                    for (cv, bv) in c[co..co + NR].iter_mut().zip(br.iter()) {
                        *cv = av.mul_add(*bv, *cv);
                    }
                }
            }
        }
        j0 += NR;
    }
    if j0 < n {
        for i in i0..ie {
            let br = &b[i * n + j0..i * n + n];
            for q in 0..k {
                let av = a[i * k + q];
                let co = q * n + j0;
                for (cv, bv) in c[co..q * n + n].iter_mut().zip(br.iter()) {
                    *cv = av.mul_add(*bv, *cv);
                }
            }
        }
    }
}

/// c[m x n] = (or +=) a[m x k] . b[n x k]^T
///
/// Small products run as plain dots; large ones transpose b once and reuse
/// the blocked row-major path, which is an order of magnitude faster than
/// latency-bound dot chains.
pub fn gemm_nt<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    b: &[T],
    c: &mut [T],
    accumulate: bool,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    if m * n >= 4096 && n >= 16 {
        let mut bt = vec![T::ZERO; k * n];
        for j in 0..n {
            for l in 0..k {
                bt[l * n + j] = b[j * k + l];
            }
        }
        if !accumulate {
            c.fill(T::ZERO);
        }
        gemm_nn(m, k, n, a, &bt, c, true);
        return;
    }
    for i in 0..m {
        let ar = &a[i * k..i * k + k];
        for j in 0..n {
            let s = dot(ar, &b[j * k..j * k + k]);
            let cv = &mut c[i * n + j];
            if accumulate {
                *cv += s;
            } else {
                *cv = s;
            }
        }
    }
}

const STRIPES: usize = 8;

/// sum_l x[l] * y[l], striped over eight accumulators, fixed combine tree.
pub fn dot<T: Scalar>(x: &[T], y: &[T]) -> T {
    debug_assert_eq!(x.len(), y.len());
    let mut acc = [T::ZERO; STRIPES];
    let mut xc = x.chunks_exact(STRIPES);
    let mut yc = y.chunks_exact(STRIPES);
    for (xs, ys) in (&mut xc).zip(&mut yc) {
        for l in 0..STRIPES {
            acc[l] = xs[l].mul_add(ys[l], acc[l]);
        }
    }
    for (l, (xv, yv)) in xc.remainder().iter().zip(yc.remainder().iter()).enumerate() {
        acc[l] = xv.mul_add(*yv, acc[l]);
    }
    combine(acc)
}

/// sum_l x[l] * y[l] * z[l]; each term rounds the x*y product first.
pub fn dot3<T: Scalar>(x: &[T], y: &[T], z: &[T]) -> T {
    debug_assert_eq!(x.len(), y.len());
    debug_assert_eq!(x.len(), z.len());
    let mut acc = [T::ZERO; STRIPES];
    let mut xc = x.chunks_exact(STRIPES);
    let mut yc = y.chunks_exact(STRIPES);
    let mut zc = z.chunks_exact(STRIPES);
    for ((xs, ys), zs) in (&mut xc).zip(&mut yc).zip(&mut zc) {
        for l in 0..STRIPES {
            acc[l] = (xs[l] * ys[l]).mul_add(zs[l], acc[l]);
        }
    }
    for (l, ((xv, yv), zv)) in xc
        .remainder()
        .iter()
        .zip(yc.remainder().iter())
        .zip(zc.remainder().iter())
        .enumerate()
    {
        acc[l] = (*xv * *yv).mul_add(*zv, acc[l]);
    }
    combine(acc)
}

#[inline(always)]
fn combine<T: Scalar>(acc: [T; STRIPES]) -> T {
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))
}

/// y += alpha * x
#[inline]
pub fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yv, xv) in y.iter_mut().zip(x.iter()) {
        *yv = alpha.mul_add(*xv, *yv);
    }
}

/// y += alpha * x . e (elementwise), rounding alpha*x first.
#[inline]
pub fn axpy_mul<T: Scalar>(alpha: T, x: &[T], e: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    debug_assert_eq!(e.len(), y.len());
    for ((yv, xv), ev) in y.iter_mut().zip(x.iter()).zip(e.iter()) {
        *yv = (alpha * *xv).mul_add(*ev, *yv);
    }
}
