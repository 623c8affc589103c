//! Rough throughput probe for the hot primitives. Not a test; run with
//! --release to sanity-check GEMM and exp rates on the current machine.

use std::hint::black_box;
use std::time::Instant;

use gsa_core::linalg::{gemm_nn, gemm_nt, gemm_tn};
use gsa_core::rng::Rng;
use gsa_core::scalar::{exp_slice, Scalar};

fn fill<T: Scalar>(rng: &mut Rng, len: usize) -> Vec<T> {
    (0..len).map(|_| T::from_f64(rng.uniform(-1.0, 1.0))).collect()
}

fn bench_gemm<T: Scalar>(
    name: &str,
    m: usize,
    k: usize,
    n: usize,
    f: impl Fn(&[T], &[T], &mut [T]),
    alen: usize,
    blen: usize,
) {
    let mut rng = Rng::new(42);
    let a: Vec<T> = fill(&mut rng, alen);
    let b: Vec<T> = fill(&mut rng, blen);
    let mut c = vec![T::ZERO; m * n];
    f(&a, &b, &mut c); // warm
    let flop = 2.0 * (m * k * n) as f64;
    let reps = ((2e9 / flop) as usize).clamp(1, 200);
    let t0 = Instant::now();
    for _ in 0..reps {
        f(black_box(&a), black_box(&b), &mut c);
        black_box(&c);
    }
    let dt = t0.elapsed().as_secs_f64() / reps as f64;
    println!("{name} {m}x{k}x{n}: {:.1} GFLOP/s", flop / dt / 1e9);
}

fn bench_exp<T: Scalar>(name: &str) {
    let mut rng = Rng::new(3);
    let src: Vec<T> = (0..1 << 16).map(|_| T::from_f64(rng.uniform(-20.0, 0.0))).collect();
    let mut buf = src.clone();
    let t0 = Instant::now();
    let reps = 2000;
    for _ in 0..reps {
        buf.copy_from_slice(black_box(&src));
        exp_slice(&mut buf);
        black_box(&buf);
    }
    let dt = t0.elapsed().as_secs_f64() / reps as f64;
    println!("{name}: {:.0} M elem/s", src.len() as f64 / dt / 1e6);
}

fn main() {
    // Model-shaped products (rows = batch*time).
    for &(m, k, n) in &[
        (8192usize, 128usize, 128usize),
        (8192, 128, 448),
        (8192, 344, 128),
        (128, 128, 128),
        (64, 64, 32),
        (64, 32, 64),
    ] {
        bench_gemm::<f32>("gemm_nn f32", m, k, n, |a, b, c| gemm_nn(m, k, n, a, b, c, false), m * k, k * n);
    }
    bench_gemm::<f64>("gemm_nn f64", 8192, 128, 128, |a, b, c| {
        gemm_nn(8192, 128, 128, a, b, c, false)
    }, 8192 * 128, 128 * 128);
    for &(m, k, n) in &[(8192usize, 128usize, 128usize), (8192, 128, 344)] {
        bench_gemm::<f32>("gemm_tn f32", m, k, n, |a, b, c| gemm_tn(m, k, n, a, b, c, false), m * k, m * n);
    }
    bench_gemm::<f32>("gemm_nt f32", 8192, 128, 128, |a, b, c| {
        gemm_nt(8192, 128, 128, a, b, c, false)
    }, 8192 * 128, 128 * 128);
    bench_gemm::<f32>("gemm_nt f32", 64, 64, 64, |a, b, c| {
        gemm_nt(64, 64, 64, a, b, c, false)
    }, 64 * 64, 64 * 64);
    bench_exp::<f32>("exp_slice f32");
    bench_exp::<f64>("exp_slice f64");
    // libm baseline
    {
        let mut rng = Rng::new(3);
        let src: Vec<f64> = (0..1 << 16).map(|_| rng.uniform(-20.0, 0.0)).collect();
        let mut dst = vec![0.0f64; src.len()];
        let t0 = Instant::now();
        let reps = 500;
        for _ in 0..reps {
            for (d, s) in dst.iter_mut().zip(black_box(&src).iter()) {
                *d = s.exp();
            }
            black_box(&dst);
        }
        let dt = t0.elapsed().as_secs_f64() / reps as f64;
        println!("libm exp f64: {:.0} M elem/s", src.len() as f64 / dt / 1e6);
    }
}
