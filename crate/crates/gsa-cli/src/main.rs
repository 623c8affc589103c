//! Command line front end for the gated slot attention kernels and the toy
//! model stack: equivalence checks, gradient checks, throughput benchmarks,
//! and synthetic-task training and evaluation.
//!
//! Exit codes: 0 when every requested check passes, 1 when a check fails or
//! a run errors out, 2 for malformed usage (left to the argument parser).

mod bench_cmd;
mod equiv;
mod grad;
mod train_cmd;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "gsa", version, about = "Gated slot attention toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check chunkwise kernel forms against their recurrent references.
    Equivcheck(equiv::Args),
    /// Check analytic gradients against central finite differences.
    Gradcheck(grad::Args),
    /// Measure forward+backward throughput and peak-memory estimates.
    Bench(bench_cmd::Args),
    /// Train a model on a synthetic task and write a checkpoint.
    Train {
        #[command(subcommand)]
        task: train_cmd::TrainTask,
    },
    /// Evaluate a checkpoint on freshly generated held-out data.
    Eval {
        #[command(subcommand)]
        task: train_cmd::EvalTask,
    },
}

/// Training and benchmark steps allocate multi-megabyte activation buffers
/// in a steady rhythm. Glibc serves those from fresh mmap regions by
/// default, which refaults every page on every step; raising the threshold
/// keeps them on the reusable heap. Results are unaffected.
fn tune_allocator() {
    #[cfg(target_os = "linux")]
    unsafe {
        libc::mallopt(libc::M_MMAP_THRESHOLD, 256 << 20);
        libc::mallopt(libc::M_TRIM_THRESHOLD, 256 << 20);
    }
}

/// Honors the GSA_THREADS cap before any parallel region runs. A malformed
/// value is a usage error, same class as a bad flag.
fn apply_thread_cap() -> Result<(), String> {
    let Ok(raw) = std::env::var("GSA_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| format!("GSA_THREADS must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| format!("failed to build {n}-thread pool: {e}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tune_allocator();
    if let Err(msg) = apply_thread_cap() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    let outcome = match cli.cmd {
        Cmd::Equivcheck(args) => equiv::run(&args),
        Cmd::Gradcheck(args) => grad::run(&args),
        Cmd::Bench(args) => bench_cmd::run(&args),
        Cmd::Train { task } => train_cmd::run_train(&task),
        Cmd::Eval { task } => train_cmd::run_eval(&task),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
