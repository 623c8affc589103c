//! Temporary GEMM variant timing. Not a real test.

use std::time::Instant;

use gsa_core::linalg::gemm_nn;
use gsa_core::rng::Rng;

const MR: usize = 6;

// Current layout: i-tile outer, j-panel inner.
fn v_current<const NR: usize>(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], c: &mut [f32]) {
    c.fill(0.0);
    let mut i0 = 0;
    while i0 + MR <= m {
        let mut j0 = 0;
        while j0 + NR <= n {
            let mut acc = [[0.0f32; NR]; MR];
            for p in 0..k {
                let br: &[f32; NR] = b[p * n + j0..p * n + j0 + NR].try_into().unwrap();
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
            j0 += NR;
        }
        i0 += MR;
    }
}

// Swapped: j-panel outer, i-tile inner, b panel packed contiguously.
fn v_packed<const NR: usize>(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    b: &[f32],
    c: &mut [f32],
    pack: &mut [f32],
) {
    c.fill(0.0);
    let mut j0 = 0;
    while j0 + NR <= n {
        for p in 0..k {
            pack[p * NR..p * NR + NR].copy_from_slice(&b[p * n + j0..p * n + j0 + NR]);
        }
        let mut i0 = 0;
        while i0 + MR <= m {
            let mut acc = [[0.0f32; NR]; MR];
            for p in 0..k {
                let br: &[f32; NR] = pack[p * NR..p * NR + NR].try_into().unwrap();
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
            i0 += MR;
        }
        j0 += NR;
    }
}

// Swapped loop order without packing.
fn v_swapped<const NR: usize>(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], c: &mut [f32]) {
    c.fill(0.0);
    let mut j0 = 0;
    while j0 + NR <= n {
        let mut i0 = 0;
        while i0 + MR <= m {
            let mut acc = [[0.0f32; NR]; MR];
            for p in 0..k {
                let br: &[f32; NR] = b[p * n + j0..p * n + j0 + NR].try_into().unwrap();
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
            i0 += MR;
        }
        j0 += NR;
    }
}

// Packed with a different row count per tile.
fn v_packed_mr<const MRX: usize, const NR: usize>(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    b: &[f32],
    c: &mut [f32],
    pack: &mut [f32],
) {
    c.fill(0.0);
    let mut j0 = 0;
    while j0 + NR <= n {
        for p in 0..k {
            pack[p * NR..p * NR + NR].copy_from_slice(&b[p * n + j0..p * n + j0 + NR]);
        }
        let mut i0 = 0;
        while i0 + MRX <= m {
            let mut acc = [[0.0f32; NR]; MRX];
            for p in 0..k {
                let br: &[f32; NR] = pack[p * NR..p * NR + NR].try_into().unwrap();
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
            i0 += MRX;
        }
        j0 += NR;
    }
}

// Current layout with adjustable row count, no packing.
fn v_current_mr<const MRX: usize, const NR: usize>(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    b: &[f32],
    c: &mut [f32],
) {
    c.fill(0.0);
    let mut i0 = 0;
    while i0 + MRX <= m {
        let mut j0 = 0;
        while j0 + NR <= n {
            let mut acc = [[0.0f32; NR]; MRX];
            for p in 0..k {
                let br: &[f32; NR] = b[p * n + j0..p * n + j0 + NR].try_into().unwrap();
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
            j0 += NR;
        }
        i0 += MRX;
    }
}

// Transposed-left block with adjustable tile rows.
fn tn_mr<const MRX: usize, const NR: usize>(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    b: &[f32],
    c: &mut [f32],
) {
    c.fill(0.0);
    const IB: usize = 512;
    let mut i0 = 0;
    while i0 < m {
        let ie = (i0 + IB).min(m);
        let mut j0 = 0;
        while j0 + NR <= n {
            let mut q0 = 0;
            while q0 + MRX <= k {
                let mut acc = [[0.0f32; NR]; MRX];
                for i in i0..ie {
                    let br: &[f32; NR] = b[i * n + j0..i * n + j0 + NR].try_into().unwrap();
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
                q0 += MRX;
            }
            j0 += NR;
        }
        i0 = ie;
    }
}

fn bench(label: &str, m: usize, k: usize, n: usize, reps: usize, mut f: impl FnMut()) {
    f();
    let t0 = Instant::now();
    for _ in 0..reps {
        f();
    }
    let s = t0.elapsed().as_secs_f64() / reps as f64;
    let gf = (2.0 * m as f64 * k as f64 * n as f64) / s / 1e9;
    println!("{label} ({m}x{k}x{n}): {:.2} ms, {gf:.1} GF/s", s * 1000.0);
}

#[test]
#[ignore]
fn gemm_variants() {
    let mut rng = Rng::new(3);
    for &(m, k, n) in &[(8192usize, 128usize, 128usize), (8192, 128, 320), (8192, 320, 128)] {
        let mut a = vec![0.0f32; m * k];
        let mut b = vec![0.0f32; k * n];
        for x in a.iter_mut() {
            *x = rng.uniform(-1.0, 1.0) as f32;
        }
        for x in b.iter_mut() {
            *x = rng.uniform(-1.0, 1.0) as f32;
        }
        let mut c = vec![0.0f32; m * n];
        let mut pack = vec![0.0f32; k * 64];
        let reps = 10;

        bench("lib gemm_nn     ", m, k, n, reps, || gemm_nn(m, k, n, &a, &b, &mut c, false));
        bench("cur  MR6 NR64   ", m, k, n, reps, || v_current::<64>(m, k, n, &a, &b, &mut c));
        bench("swap MR6 NR64   ", m, k, n, reps, || v_swapped::<64>(m, k, n, &a, &b, &mut c));
        bench("pack MR6 NR64   ", m, k, n, reps, || {
            v_packed::<64>(m, k, n, &a, &b, &mut c, &mut pack)
        });
        bench("pack MR4 NR64   ", m, k, n, reps, || {
            v_packed_mr::<4, 64>(m, k, n, &a, &b, &mut c, &mut pack)
        });
        bench("pack MR8 NR64   ", m, k, n, reps, || {
            v_packed_mr::<8, 64>(m, k, n, &a, &b, &mut c, &mut pack)
        });
        bench("pack MR12 NR32  ", m, k, n, reps, || {
            v_packed_mr::<12, 32>(m, k, n, &a, &b, &mut c, &mut pack)
        });
        bench("pack MR8 NR32   ", m, k, n, reps, || {
            v_packed_mr::<8, 32>(m, k, n, &a, &b, &mut c, &mut pack)
        });
        bench("pack MR16 NR16  ", m, k, n, reps, || {
            v_packed_mr::<16, 16>(m, k, n, &a, &b, &mut c, &mut pack)
        });
        bench("cur  MR4 NR64   ", m, k, n, reps, || v_current_mr::<4, 64>(m, k, n, &a, &b, &mut c));
        bench("cur  MR5 NR64   ", m, k, n, reps, || v_current_mr::<5, 64>(m, k, n, &a, &b, &mut c));
        bench("pack MR5 NR64   ", m, k, n, reps, || {
            v_packed_mr::<5, 64>(m, k, n, &a, &b, &mut c, &mut pack)
        });
        bench("pack MR4 NR128  ", m, k, n, reps, || {
            let mut pack2 = vec![0.0f32; k * 128];
            v_packed_mr::<4, 128>(m, k, n, &a, &b, &mut c, &mut pack2)
        });
        println!();
    }

    // Small shapes from the chunk kernels: attention tiles and state updates.
    for &(m, k, n) in &[(64usize, 64usize, 32usize), (64, 64, 64), (64, 32, 64)] {
        let mut a = vec![0.0f32; m * k];
        let mut b = vec![0.0f32; k * n];
        for x in a.iter_mut() {
            *x = rng.uniform(-1.0, 1.0) as f32;
        }
        for x in b.iter_mut() {
            *x = rng.uniform(-1.0, 1.0) as f32;
        }
        let mut c = vec![0.0f32; m * n];
        let mut pack = vec![0.0f32; k * 64];
        let reps = 2000;
        bench("lib gemm_nn     ", m, k, n, reps, || gemm_nn(m, k, n, &a, &b, &mut c, false));
        if n >= 64 {
            bench("cur  MR4 NR64   ", m, k, n, reps, || {
                v_current_mr::<4, 64>(m, k, n, &a, &b, &mut c)
            });
            bench("pack MR4 NR64   ", m, k, n, reps, || {
                v_packed_mr::<4, 64>(m, k, n, &a, &b, &mut c, &mut pack)
            });
        } else {
            bench("cur  MR4 NR32   ", m, k, n, reps, || {
                v_current_mr::<4, 32>(m, k, n, &a, &b, &mut c)
            });
            bench("pack MR4 NR32   ", m, k, n, reps, || {
                v_packed_mr::<4, 32>(m, k, n, &a, &b, &mut c, &mut pack)
            });
        }
        println!();
    }

    // Transposed-left shapes from the parameter gradients.
    for &(m, k, n) in &[(8192usize, 128usize, 344usize), (8192, 344, 128), (8192, 128, 128)] {
        let mut a = vec![0.0f32; m * k];
        let mut b = vec![0.0f32; m * n];
        for x in a.iter_mut() {
            *x = rng.uniform(-1.0, 1.0) as f32;
        }
        for x in b.iter_mut() {
            *x = rng.uniform(-1.0, 1.0) as f32;
        }
        let mut c = vec![0.0f32; k * n];
        let reps = 10;
        let flops_mkn = (k, m, n);
        let _ = flops_mkn;
        bench("tn MR6 NR64     ", k, m, n, reps, || tn_mr::<6, 64>(m, k, n, &a, &b, &mut c));
        bench("tn MR4 NR64     ", k, m, n, reps, || tn_mr::<4, 64>(m, k, n, &a, &b, &mut c));
        bench("tn MR8 NR64     ", k, m, n, reps, || tn_mr::<8, 64>(m, k, n, &a, &b, &mut c));
        bench("tn MR8 NR32     ", k, m, n, reps, || tn_mr::<8, 32>(m, k, n, &a, &b, &mut c));
        println!();
    }
}
