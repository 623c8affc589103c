//! Training and evaluation on the synthetic recall task. Training writes a
//! checkpoint and prints the report JSON on stdout; evaluation loads a
//! checkpoint and scores freshly generated instances.

use std::path::PathBuf;

use gsa_core::error::{Error, Result};
use gsa_core::kernels::LinkFn;
use gsa_model::checkpoint::load_checkpoint;
use gsa_model::train::{evaluate, train_loop, TrainConfig};
use gsa_model::{GateMode, ModelConfig, MqarSpec};

#[derive(clap::Subcommand)]
pub enum TrainTask {
    /// Multi-query associative recall over key-value token pairs.
    Mqar(TrainMqar),
}

#[derive(clap::Args)]
pub struct TrainMqar {
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 128)]
    dim: usize,
    #[arg(long, default_value_t = 2)]
    heads: usize,
    #[arg(long, default_value_t = 32)]
    slots: usize,
    /// Read nonlinearity between the two kernel passes.
    #[arg(long, value_parser = LinkFn::parse, default_value = "softmax")]
    link: LinkFn,
    /// Forget-gate parameterization.
    #[arg(long = "gate-mode", value_parser = GateMode::parse, default_value = "data-dependent")]
    gate_mode: GateMode,
    /// Gate temperature.
    #[arg(long, default_value_t = 8.0)]
    tau: f64,
    #[arg(long, default_value_t = 64)]
    chunk: usize,
    #[arg(long = "seq-len", default_value_t = 128)]
    seq_len: usize,
    /// Key-value pairs per sequence.
    #[arg(long, default_value_t = 8)]
    pairs: usize,
    /// Size of the key token alphabet.
    #[arg(long, default_value_t = 16)]
    keys: usize,
    /// Size of the value token alphabet.
    #[arg(long, default_value_t = 16)]
    values: usize,
    #[arg(long, default_value_t = 3000)]
    steps: usize,
    /// Stop after this many steps this invocation; the learning-rate
    /// schedule still spans --steps, so a resumed run continues it.
    #[arg(long = "stop-after")]
    stop_after: Option<usize>,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    /// Peak learning rate.
    #[arg(long, default_value_t = 3e-4)]
    lr: f64,
    #[arg(long = "min-lr", default_value_t = 3e-5)]
    min_lr: f64,
    #[arg(long, default_value_t = 100)]
    warmup: usize,
    /// Global gradient-norm ceiling; 0 disables clipping.
    #[arg(long, default_value_t = 1.0)]
    clip: f64,
    /// Seeds both the parameter init and the task stream.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Progress cadence in steps; 0 silences progress lines.
    #[arg(long = "log-every", default_value_t = 50)]
    log_every: usize,
    /// Held-out batches scored after the last step.
    #[arg(long = "eval-batches", default_value_t = 16)]
    eval_batches: usize,
    /// Checkpoint output path; omitted means no checkpoint is written.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Periodic checkpoint cadence; 0 writes only the final file.
    #[arg(long = "checkpoint-every", default_value_t = 0)]
    checkpoint_every: usize,
    /// Resume from this checkpoint instead of fresh parameters.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Also write the report JSON here.
    #[arg(long)]
    report: Option<PathBuf>,
}

fn model_config(a: &TrainMqar, vocab: usize) -> Result<ModelConfig> {
    let mut cfg = ModelConfig::new(a.layers, a.dim, a.heads, a.slots, vocab);
    cfg.link = a.link;
    cfg.gate_mode = a.gate_mode;
    cfg.tau = a.tau;
    cfg.chunk = a.chunk;
    cfg.seq_len_max = a.seq_len;
    // Keeping chunk boundary states from the forward pass trades a few
    // kilobytes per head for skipping their recomputation in the backward;
    // gradients are bitwise identical either way.
    cfg.cache_chunk_states = true;
    cfg.validate()?;
    Ok(cfg)
}

pub fn run_train(task: &TrainTask) -> Result<bool> {
    let TrainTask::Mqar(a) = task;
    let spec =
        MqarSpec { seq_len: a.seq_len, pairs: a.pairs, num_keys: a.keys, num_values: a.values, seed: a.seed };
    spec.validate()?;
    let cfg = model_config(a, spec.vocab())?;
    let train = TrainConfig {
        steps: a.steps,
        stop_after: a.stop_after,
        batch: a.batch,
        peak_lr: a.lr,
        min_lr: a.min_lr,
        warmup: a.warmup,
        clip: a.clip,
        log_every: a.log_every,
        checkpoint_every: a.checkpoint_every,
        checkpoint_path: a.out.clone(),
        eval_batches: a.eval_batches,
        ..TrainConfig::default()
    };
    let start = match &a.resume {
        Some(path) => {
            let ck = load_checkpoint::<f32>(path)?;
            if ck.config != cfg {
                return Err(Error::config(
                    "checkpoint model shape does not match the requested flags",
                ));
            }
            Some((ck.params, ck.opt))
        }
        None => None,
    };
    let outcome = train_loop::<f32>(&cfg, &spec, &train, start, a.seed)?;
    let json = serde_json::to_string_pretty(&outcome.report)?;
    println!("{json}");
    if let Some(path) = &a.report {
        std::fs::write(path, format!("{json}\n"))?;
    }
    Ok(true)
}

#[derive(clap::Subcommand)]
pub enum EvalTask {
    /// Multi-query associative recall over key-value token pairs.
    Mqar(EvalMqar),
}

#[derive(clap::Args)]
pub struct EvalMqar {
    /// Checkpoint to score.
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long = "seq-len", default_value_t = 128)]
    seq_len: usize,
    #[arg(long, default_value_t = 8)]
    pairs: usize,
    #[arg(long, default_value_t = 16)]
    keys: usize,
    #[arg(long, default_value_t = 16)]
    values: usize,
    /// Instance count, rounded up to whole batches.
    #[arg(long, default_value_t = 256)]
    instances: usize,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    /// Task stream seed; pick one disjoint from the training seed so no
    /// training instance can appear here.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

pub fn run_eval(task: &EvalTask) -> Result<bool> {
    let EvalTask::Mqar(a) = task;
    let ck = load_checkpoint::<f32>(&a.ckpt)?;
    let spec =
        MqarSpec { seq_len: a.seq_len, pairs: a.pairs, num_keys: a.keys, num_values: a.values, seed: a.seed };
    spec.validate()?;
    if ck.config.vocab < spec.vocab() {
        return Err(Error::config(format!(
            "checkpoint vocab {} cannot hold the task's {} token ids",
            ck.config.vocab,
            spec.vocab()
        )));
    }
    let batches = a.instances.div_ceil(a.batch).max(1);
    let report = evaluate(&ck.params, &ck.config, &spec, batches, a.batch)?;
    let mut json = serde_json::to_value(report)?;
    json["instances"] = serde_json::json!(batches * a.batch);
    println!("{}", serde_json::to_string_pretty(&json)?);
    Ok(true)
}
