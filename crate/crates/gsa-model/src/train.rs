//! The training driver: stream batches by index, step AdamW under warmup
//! plus cosine decay, clip by global norm, and abort on non-finite loss.
//! Data is a pure function of (seed, instance index) and the optimizer
//! carries the step counter, so a run resumed from a checkpoint replays
//! the exact trajectory of an uninterrupted one.

use std::path::PathBuf;
use std::time::Instant;

use gsa_core::error::{Error, Result};
use gsa_core::rng::Rng;
use gsa_core::scalar::Scalar;
use serde::Serialize;

use crate::checkpoint::save_checkpoint;
use crate::config::ModelConfig;
use crate::model::{model_bwd, model_fwd, ModelParams};
use crate::ops::cross_entropy;
use crate::optim::{adamw_step, clip_global_norm, AdamHyper, AdamState, Schedule};
use crate::tasks::{mqar_batch, MqarSpec};

#[derive(Clone, Debug)]
pub struct TrainConfig {
    /// Schedule horizon and default stopping point.
    pub steps: usize,
    /// Steps to run in this invocation; the schedule still spans `steps`,
    /// so an interrupted-and-resumed run sees the same learning rates.
    pub stop_after: Option<usize>,
    pub batch: usize,
    pub peak_lr: f64,
    pub min_lr: f64,
    pub warmup: usize,
    pub clip: f64,
    pub hyper: AdamHyper,
    /// Progress lines on stderr every this many steps; 0 silences them.
    pub log_every: usize,
    /// Periodic checkpoint cadence; 0 writes only the final file.
    pub checkpoint_every: usize,
    pub checkpoint_path: Option<PathBuf>,
    /// Held-out batches scored after the last step.
    pub eval_batches: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 3000,
            stop_after: None,
            batch: 64,
            peak_lr: 3e-4,
            min_lr: 3e-5,
            warmup: 100,
            clip: 1.0,
            hyper: AdamHyper::default(),
            log_every: 50,
            checkpoint_every: 0,
            checkpoint_path: None,
            eval_batches: 16,
        }
    }
}

/// One logging interval: mean training loss and accuracy since the last
/// record, and the learning rate at the recorded step.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TrainRecord {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    pub acc: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrainReport {
    pub steps: usize,
    pub records: Vec<TrainRecord>,
    pub final_train_loss: f64,
    pub eval_loss: f64,
    pub eval_accuracy: f64,
    pub train_seconds: f64,
}

#[derive(Debug)]
pub struct TrainOutcome<T: Scalar> {
    pub params: ModelParams<T>,
    pub opt: AdamState<T>,
    pub report: TrainReport,
}

/// Evaluation stream for a training task: same shape, disjoint seed, so no
/// training instance can leak into the held-out set.
pub fn held_out_spec(task: &MqarSpec) -> MqarSpec {
    MqarSpec { seed: Rng::derive(task.seed, &[0x6576616c]).next_u64(), ..*task }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EvalReport {
    pub loss: f64,
    pub accuracy: f64,
    pub supervised: usize,
}

pub fn evaluate<T: Scalar>(
    params: &ModelParams<T>,
    cfg: &ModelConfig,
    task: &MqarSpec,
    batches: usize,
    batch: usize,
) -> Result<EvalReport> {
    if batches == 0 || batch == 0 {
        return Err(Error::config("evaluation needs at least one batch"));
    }
    let mut loss_sum = 0.0;
    let mut supervised = 0usize;
    let mut correct = 0usize;
    for b in 0..batches {
        let (tokens, targets) = mqar_batch(task, (b * batch) as u64, batch)?;
        let (logits, _) = model_fwd(&tokens, params, cfg, batch)?;
        let ce = cross_entropy(&logits, &targets)?;
        loss_sum += ce.loss * ce.supervised as f64;
        supervised += ce.supervised;
        correct += ce.correct;
    }
    Ok(EvalReport {
        loss: loss_sum / supervised as f64,
        accuracy: correct as f64 / supervised as f64,
        supervised,
    })
}

/// Run (or resume) a training job. `start` carries parameters and optimizer
/// state from a checkpoint; step counting continues from `start.1.step`.
pub fn train_loop<T: Scalar>(
    cfg: &ModelConfig,
    task: &MqarSpec,
    train: &TrainConfig,
    start: Option<(ModelParams<T>, AdamState<T>)>,
    init_seed: u64,
) -> Result<TrainOutcome<T>> {
    task.validate()?;
    cfg.validate()?;
    if cfg.vocab < task.vocab() {
        return Err(Error::config(format!(
            "vocab {} cannot hold the task's {} token ids",
            cfg.vocab,
            task.vocab()
        )));
    }
    let schedule = Schedule::new(train.peak_lr, train.min_lr, train.warmup, train.steps)?;
    let (mut params, mut opt) = match start {
        Some((p, o)) => (p, o),
        None => (ModelParams::init(cfg, init_seed), AdamState::new(cfg)),
    };
    if opt.step >= train.steps {
        return Err(Error::config(format!(
            "checkpoint is already at step {}, nothing left of {}",
            opt.step, train.steps
        )));
    }

    let stop_at = match train.stop_after {
        Some(n) => train.steps.min(opt.step + n),
        None => train.steps,
    };
    let started = Instant::now();
    let mut records: Vec<TrainRecord> = Vec::new();
    let mut interval_loss = 0.0;
    let mut interval_steps = 0usize;
    let mut interval_correct = 0usize;
    let mut interval_supervised = 0usize;
    let mut interval_at = Instant::now();
    while opt.step < stop_at {
        let step = opt.step + 1;
        let first = ((step - 1) * train.batch) as u64;
        let (tokens, targets) = mqar_batch(task, first, train.batch)?;
        let (logits, cache) = model_fwd(&tokens, &params, cfg, train.batch)?;
        let ce = cross_entropy(&logits, &targets)?;
        if !ce.loss.is_finite() {
            return Err(Error::non_finite(format!("training loss diverged at step {step}")));
        }
        let mut grads = model_bwd(&cache, &params, cfg, &ce.d_logits)?;
        drop(cache);
        let norm = clip_global_norm(&mut grads, train.clip);
        if !norm.is_finite() {
            return Err(Error::non_finite(format!("gradient diverged at step {step}")));
        }
        let lr = schedule.lr_at(step)?;
        adamw_step(&mut params, &grads, &mut opt, &train.hyper, lr)?;

        interval_loss += ce.loss;
        interval_steps += 1;
        interval_correct += ce.correct;
        interval_supervised += ce.supervised;
        let log_due = train.log_every > 0 && step % train.log_every == 0;
        if log_due || step == stop_at {
            let rec = TrainRecord {
                step,
                lr,
                loss: interval_loss / interval_steps as f64,
                acc: interval_correct as f64 / interval_supervised as f64,
            };
            if log_due {
                let secs = interval_at.elapsed().as_secs_f64();
                let toks = (interval_steps * train.batch * task.seq_len) as f64;
                eprintln!(
                    "step {step:>6}  loss {:.4}  acc {:.3}  lr {lr:.2e}  {:.0} tok/s",
                    rec.loss,
                    rec.acc,
                    toks / secs
                );
            }
            records.push(rec);
            interval_loss = 0.0;
            interval_steps = 0;
            interval_correct = 0;
            interval_supervised = 0;
            interval_at = Instant::now();
        }
        if let Some(path) = &train.checkpoint_path {
            let due = train.checkpoint_every > 0 && step % train.checkpoint_every == 0;
            if due || step == stop_at {
                save_checkpoint(path, cfg, &params, &opt)?;
            }
        }
    }
    let train_seconds = started.elapsed().as_secs_f64();
    let final_train_loss = records.last().map_or(f64::NAN, |r| r.loss);

    let eval = evaluate(&params, cfg, &held_out_spec(task), train.eval_batches, train.batch)?;
    let report = TrainReport {
        steps: opt.step,
        records,
        final_train_loss,
        eval_loss: eval.loss,
        eval_accuracy: eval.accuracy,
        train_seconds,
    };
    Ok(TrainOutcome { params, opt, report })
}
