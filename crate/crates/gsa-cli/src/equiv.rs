//! Form-equivalence checks: every chunkwise kernel is compared against its
//! step-by-step recurrent reference over random inputs, for each requested
//! chunk length. A chunk length of one must reproduce the gated recurrence
//! bit for bit; longer chunks must agree to numerical tolerance.

use clap::ValueEnum;
use gsa_core::error::{Error, Result};
use gsa_core::kernels::{
    abc_recurrent, abc_two_pass, abc_write_strengths, gla_chunkwise_fwd, gla_recurrent, gsa_fwd,
    gsa_recurrent, la_recurrent, ChunkSpec, GateSide, KernelInput, LinkFn,
};
use gsa_core::rng::Rng;
use gsa_core::scalar::Scalar;
use gsa_core::tensor::Tensor;

/// Absolute tolerance for f64 runs.
const F64_ABS_TOL: f64 = 1e-11;
/// Scale-relative tolerance for f32 runs, where the raw gap tracks the
/// output magnitude.
const F32_REL_TOL: f64 = 1e-3;

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
pub enum KernelChoice {
    La,
    Gla,
    Abc,
    Gsa,
    All,
}

#[derive(Copy, Clone, ValueEnum)]
pub enum DtypeChoice {
    F32,
    F64,
}

#[derive(clap::Args)]
pub struct Args {
    /// Kernel family to check.
    #[arg(long, value_enum, default_value_t = KernelChoice::All)]
    kernel: KernelChoice,
    /// Sequence length.
    #[arg(long = "T", default_value_t = 64)]
    t: usize,
    /// Key/value width.
    #[arg(long, default_value_t = 8)]
    d: usize,
    /// Slot count for the slot-memory kernels.
    #[arg(long, default_value_t = 4)]
    m: usize,
    /// Chunk lengths; the literal "T" means one chunk spanning the sequence.
    #[arg(long = "C", value_delimiter = ',', default_value = "1,8,T")]
    chunks: Vec<String>,
    #[arg(long, value_enum, default_value_t = DtypeChoice::F64)]
    dtype: DtypeChoice,
    /// Number of random input draws per (kernel, chunk) cell.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
}

/// One comparison: a recurrent reference against one chunkwise evaluation.
struct Cell {
    label: &'static str,
    max_abs: f64,
    max_rel: f64,
}

impl Cell {
    fn new(label: &'static str) -> Self {
        Cell { label, max_abs: 0.0, max_rel: 0.0 }
    }

    fn record<T: Scalar>(&mut self, reference: &Tensor<T>, candidate: &Tensor<T>) {
        let abs = reference.max_abs_diff(candidate);
        let scale = reference
            .data()
            .iter()
            .chain(candidate.data())
            .fold(0.0f64, |acc, &x| acc.max(x.to_f64().abs()));
        self.max_abs = self.max_abs.max(abs);
        if scale > 0.0 {
            self.max_rel = self.max_rel.max(abs / scale);
        }
    }

    fn passed(&self, dtype: DtypeChoice) -> bool {
        match dtype {
            DtypeChoice::F32 => self.max_rel <= F32_REL_TOL,
            DtypeChoice::F64 => self.max_abs <= F64_ABS_TOL,
        }
    }
}

fn rand<T: Scalar>(rng: &mut Rng, r: usize, c: usize, lo: f64, hi: f64) -> Tensor<T> {
    let mut out = Tensor::zeros(&[r, c]);
    out.fill_uniform(rng, lo, hi);
    out
}

/// Kernel inputs for one draw. The slot kernels reuse the gated draw's decay
/// stream so every family sees comparable magnitudes.
struct Draw<T: Scalar> {
    plain: KernelInput<T>,
    gated_k: KernelInput<T>,
    gated_v: KernelInput<T>,
    slots_additive: KernelInput<T>,
    slots_gated: KernelInput<T>,
}

fn draw_inputs<T: Scalar>(t: usize, d: usize, m: usize, seed: u64) -> Result<Draw<T>> {
    let mut rng = Rng::derive(seed, &[0x65717569]);
    let q = rand::<T>(&mut rng, t, d, -1.0, 1.0);
    let k = rand::<T>(&mut rng, t, d, -1.0, 1.0);
    let v = rand::<T>(&mut rng, t, d, -1.0, 1.0);
    let lg_k = rand::<T>(&mut rng, t, d, -3.0, -1e-3);
    let lg_v = rand::<T>(&mut rng, t, d, -3.0, -1e-3);
    let lg_m = rand::<T>(&mut rng, t, m, -3.0, -1e-3);
    let pre = rand::<T>(&mut rng, t, m, -2.0, 2.0);
    let phi = abc_write_strengths(&pre)?;
    Ok(Draw {
        plain: KernelInput::ungated(q.clone(), k.clone(), v.clone())?,
        gated_k: KernelInput::gated(q.clone(), k.clone(), v.clone(), lg_k)?,
        gated_v: KernelInput::gated(q.clone(), k.clone(), v.clone(), lg_v)?,
        slots_additive: KernelInput::slot_independent(
            q.clone(),
            k.clone(),
            v.clone(),
            Tensor::zeros(&[t, m]),
            phi,
        )?,
        slots_gated: KernelInput::slot_coupled(q, k, v, lg_m)?,
    })
}

fn check_dtype<T: Scalar>(args: &Args, chunk: usize) -> Result<Vec<Cell>> {
    let spec = ChunkSpec::new(chunk)?;
    let want = |choice| args.kernel == choice || args.kernel == KernelChoice::All;
    let mut cells = Vec::new();
    let mut la = Cell::new("la");
    let mut gla_k = Cell::new("gla(key)");
    let mut gla_v = Cell::new("gla(value)");
    let mut abc = Cell::new("abc");
    let mut gsa = Cell::new("gsa");
    for seed in 0..args.seeds {
        let draw = draw_inputs::<T>(args.t, args.d, args.m, seed)?;
        if want(KernelChoice::La) {
            let zero = Tensor::zeros(&[args.t, args.d]);
            let gated = KernelInput::gated(
                draw.plain.q.clone(),
                draw.plain.k.clone(),
                draw.plain.v.clone(),
                zero,
            )?;
            la.record(
                &la_recurrent(&draw.plain)?.0,
                &gla_chunkwise_fwd(&gated, GateSide::Key, spec)?.0,
            );
        }
        if want(KernelChoice::Gla) {
            gla_k.record(
                &gla_recurrent(&draw.gated_k, GateSide::Key)?.0,
                &gla_chunkwise_fwd(&draw.gated_k, GateSide::Key, spec)?.0,
            );
            gla_v.record(
                &gla_recurrent(&draw.gated_v, GateSide::Value)?.0,
                &gla_chunkwise_fwd(&draw.gated_v, GateSide::Value, spec)?.0,
            );
        }
        if want(KernelChoice::Abc) {
            abc.record(
                &abc_recurrent(&draw.slots_additive)?,
                &abc_two_pass(&draw.slots_additive, spec)?,
            );
        }
        if want(KernelChoice::Gsa) {
            gsa.record(
                &gsa_recurrent(&draw.slots_gated)?.0,
                &gsa_fwd(&draw.slots_gated, spec, LinkFn::Softmax, false)?.0,
            );
        }
    }
    for cell in [la, gla_k, gla_v, abc, gsa] {
        let wanted = match cell.label {
            "la" => want(KernelChoice::La),
            "abc" => want(KernelChoice::Abc),
            "gsa" => want(KernelChoice::Gsa),
            _ => want(KernelChoice::Gla),
        };
        if wanted {
            cells.push(cell);
        }
    }
    Ok(cells)
}

fn parse_chunk(raw: &str, t: usize) -> Result<usize> {
    if raw == "T" {
        return Ok(t);
    }
    let c: usize = raw
        .parse()
        .map_err(|_| Error::config(format!("chunk length must be a number or T, got {raw:?}")))?;
    if c == 0 {
        return Err(Error::config("chunk length must be positive"));
    }
    Ok(c)
}

pub fn run(args: &Args) -> Result<bool> {
    let dtype_name = match args.dtype {
        DtypeChoice::F32 => "f32",
        DtypeChoice::F64 => "f64",
    };
    let mut all_ok = true;
    for raw in &args.chunks {
        let chunk = parse_chunk(raw, args.t)?;
        let cells = match args.dtype {
            DtypeChoice::F32 => check_dtype::<f32>(args, chunk)?,
            DtypeChoice::F64 => check_dtype::<f64>(args, chunk)?,
        };
        for cell in cells {
            let ok = cell.passed(args.dtype);
            all_ok &= ok;
            println!(
                "equivcheck kernel={} C={} T={} d={} m={} dtype={} seeds={} max_abs={:.3e} max_rel={:.3e} {}",
                cell.label,
                chunk,
                args.t,
                args.d,
                args.m,
                dtype_name,
                args.seeds,
                cell.max_abs,
                cell.max_rel,
                if ok { "ok" } else { "FAIL" },
            );
        }
    }
    Ok(all_ok)
}
