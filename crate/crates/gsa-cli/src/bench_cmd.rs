//! Throughput sweep over kernel, form, sequence length, and chunk length.
//! Rows go to stdout as CSV or a JSON array; diagnostics such as the
//! recompute peak-memory ratio go to stderr so the table stays parseable.

use clap::ValueEnum;
use gsa_core::error::Result;
use gsa_core::scalar::Dtype;
use gsa_model::bench::{
    bench_kernel, peak_bytes_estimate, BenchForm, BenchKernel, BenchRecord, CSV_HEADER,
};

use crate::equiv::DtypeChoice;

#[derive(Copy, Clone, ValueEnum)]
pub enum KernelChoice {
    Gla,
    Gsa,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
pub enum FormChoice {
    Recurrent,
    Chunkwise,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
pub enum OutFormat {
    Csv,
    Json,
}

#[derive(clap::Args)]
pub struct Args {
    #[arg(long, value_enum, default_value_t = KernelChoice::Gsa)]
    kernel: KernelChoice,
    /// Evaluation forms to time. The recurrent form is the chunkwise sweep
    /// pinned to chunk length 1, so it runs the token-by-token order.
    #[arg(long, value_delimiter = ',', default_value = "recurrent,chunkwise")]
    forms: Vec<FormChoice>,
    /// Sequence lengths.
    #[arg(long = "T", value_delimiter = ',', default_value = "1024")]
    t: Vec<usize>,
    /// Key/value width.
    #[arg(long, default_value_t = 256)]
    d: usize,
    /// Slot count (ignored by the plain gated kernel).
    #[arg(long, default_value_t = 64)]
    m: usize,
    /// Chunk lengths for the chunkwise form.
    #[arg(long = "C", value_delimiter = ',', default_value = "64")]
    chunks: Vec<usize>,
    #[arg(long, value_enum, default_value_t = DtypeChoice::F32)]
    dtype: DtypeChoice,
    /// Rebuild chunk states in the backward instead of keeping them.
    #[arg(long, value_enum, default_value_t = OnOff::Off)]
    recompute: OnOff,
    /// Timed reps per row; the median is reported.
    #[arg(long, default_value_t = 5)]
    repeat: usize,
    #[arg(long, value_enum, default_value_t = OutFormat::Csv)]
    out: OutFormat,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn record_json(rec: &BenchRecord) -> serde_json::Value {
    serde_json::json!({
        "kernel": rec.kernel.name(),
        "form": rec.form.name(),
        "T": rec.t,
        "d": rec.d,
        "m": rec.m,
        "C": rec.chunk,
        "dtype": rec.dtype,
        "recompute": if rec.recompute { "on" } else { "off" },
        "tokens_per_s": rec.tokens_per_s,
        "peak_bytes": rec.peak_bytes,
    })
}

pub fn run(args: &Args) -> Result<bool> {
    let kernel = match args.kernel {
        KernelChoice::Gla => BenchKernel::Gla,
        KernelChoice::Gsa => BenchKernel::Gsa,
    };
    let (dtype, run_one): (Dtype, fn(_, _, _, _, _, _, _, _, _) -> Result<BenchRecord>) =
        match args.dtype {
            DtypeChoice::F32 => (Dtype::F32, bench_kernel::<f32>),
            DtypeChoice::F64 => (Dtype::F64, bench_kernel::<f64>),
        };
    let recompute = args.recompute == OnOff::On;
    let mut records = Vec::new();
    for &form_choice in &args.forms {
        let (form, chunks): (BenchForm, &[usize]) = match form_choice {
            FormChoice::Recurrent => (BenchForm::Recurrent, &[1]),
            FormChoice::Chunkwise => (BenchForm::Chunkwise, &args.chunks),
        };
        for &t in &args.t {
            for &chunk in chunks {
                records.push(run_one(
                    kernel,
                    form,
                    t,
                    args.d,
                    args.m,
                    chunk,
                    recompute,
                    args.repeat,
                    args.seed,
                )?);
            }
        }
    }
    match args.out {
        OutFormat::Csv => {
            println!("{CSV_HEADER}");
            for rec in &records {
                println!("{}", rec.csv_row());
            }
        }
        OutFormat::Json => {
            let rows: Vec<_> = records.iter().map(record_json).collect();
            println!("{}", serde_json::to_string_pretty(&rows)?);
        }
    }
    // The estimate needs no timing, so both settings are reported even
    // though only one was run. Only the slot kernel has a recompute path.
    if let BenchKernel::Gsa = kernel {
        for &t in &args.t {
            for &chunk in &args.chunks {
                let on = peak_bytes_estimate(kernel, t, args.d, args.m, chunk, true, dtype);
                let off = peak_bytes_estimate(kernel, t, args.d, args.m, chunk, false, dtype);
                eprintln!(
                    "peak bytes at T={t} C={chunk}: recompute on {on}, off {off}, ratio {:.3}",
                    on as f64 / off as f64
                );
            }
        }
    }
    Ok(true)
}
