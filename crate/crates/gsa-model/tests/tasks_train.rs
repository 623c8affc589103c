//! End-to-end training behavior: task stream layout, initial loss scale,
//! the ability to memorize a fixed batch, divergence detection, and bitwise
//! checkpoint-resume.

use gsa_model::checkpoint::load_checkpoint;
use gsa_model::config::ModelConfig;
use gsa_model::model::{model_bwd, model_fwd, ModelParams};
use gsa_model::ops::{cross_entropy, IGNORE_TARGET};
use gsa_model::optim::{adamw_step, clip_global_norm, AdamHyper, AdamState};
use gsa_model::tasks::{mqar_batch, mqar_generate, MqarSpec};
use gsa_model::train::{evaluate, held_out_spec, train_loop, TrainConfig};

fn tiny_task() -> MqarSpec {
    MqarSpec { seq_len: 32, pairs: 4, num_keys: 8, num_values: 8, seed: 11 }
}

fn tiny_model(task: &MqarSpec) -> ModelConfig {
    let mut cfg = ModelConfig::new(1, 32, 2, 4, task.vocab());
    cfg.chunk = 16;
    cfg
}

fn quiet(steps: usize, batch: usize) -> TrainConfig {
    TrainConfig {
        steps,
        batch,
        warmup: steps.min(2),
        log_every: 0,
        eval_batches: 2,
        ..TrainConfig::default()
    }
}

/// Re-derive every query's answer from the pair region of the raw stream,
/// walking the batch layout independently of the generator's bookkeeping.
#[test]
fn batch_stream_answers_come_from_the_pair_region() {
    let task = tiny_task();
    let batch = 5;
    let (tokens, targets) = mqar_batch(&task, 20, batch).unwrap();
    assert_eq!(tokens.len(), batch * task.seq_len);
    for b in 0..batch {
        let seq = &tokens[b * task.seq_len..(b + 1) * task.seq_len];
        let tgt = &targets[b * task.seq_len..(b + 1) * task.seq_len];
        assert_eq!(seq, mqar_generate(&task, 20 + b as u64).unwrap().tokens.as_slice());
        let mut queries = 0;
        for p in 0..task.seq_len {
            if tgt[p] == IGNORE_TARGET {
                continue;
            }
            queries += 1;
            assert!(p >= 2 * task.pairs);
            let key = seq[p];
            let pair = (0..task.pairs).find(|&i| seq[2 * i] == key).expect("query key unseen");
            assert_eq!(tgt[p], seq[2 * pair + 1], "answer differs from the stored pair");
        }
        assert_eq!(queries, task.pairs);
    }
}

#[test]
fn held_out_stream_is_disjoint_from_training() {
    let task = tiny_task();
    let eval = held_out_spec(&task);
    assert_ne!(eval.seed, task.seed);
    assert_eq!(eval.seq_len, task.seq_len);
    assert_ne!(
        mqar_generate(&task, 0).unwrap(),
        mqar_generate(&eval, 0).unwrap()
    );
}

/// A fresh model scores supervised positions close to uniform, so the
/// initial loss sits near log(vocab).
#[test]
fn initial_loss_is_near_log_vocab() {
    let task = tiny_task();
    let cfg = tiny_model(&task);
    let params = ModelParams::<f32>::init(&cfg, 1);
    let (tokens, targets) = mqar_batch(&task, 0, 8).unwrap();
    let (logits, _) = model_fwd(&tokens, &params, &cfg, 8).unwrap();
    let loss = cross_entropy(&logits, &targets).unwrap().loss;
    let log_v = (task.vocab() as f64).ln();
    assert!(loss > 0.5 * log_v && loss < 1.5 * log_v, "initial loss {loss:.3} vs ln V {log_v:.3}");
}

/// Training on one fixed batch must drive the loss to memorization levels;
/// this exercises every gradient path with real optimizer dynamics.
#[test]
fn model_memorizes_a_fixed_batch() {
    let task = tiny_task();
    let cfg = tiny_model(&task);
    let batch = 8;
    let (tokens, targets) = mqar_batch(&task, 0, batch).unwrap();
    let mut params = ModelParams::<f32>::init(&cfg, 2);
    let mut opt = AdamState::new(&cfg);
    let hyper = AdamHyper::default();
    let mut final_loss = f64::INFINITY;
    for step in 1..=500 {
        let (logits, cache) = model_fwd(&tokens, &params, &cfg, batch).unwrap();
        let ce = cross_entropy(&logits, &targets).unwrap();
        final_loss = ce.loss;
        if final_loss < 0.02 {
            break;
        }
        let mut grads = model_bwd(&cache, &params, &cfg, &ce.d_logits).unwrap();
        clip_global_norm(&mut grads, 1.0);
        let lr = 1e-3 * (step as f64 / 20.0).min(1.0);
        adamw_step(&mut params, &grads, &mut opt, &hyper, lr).unwrap();
    }
    assert!(final_loss < 0.05, "failed to memorize one batch: loss {final_loss:.4}");
}

#[test]
fn train_loop_reports_and_validates() {
    let task = tiny_task();
    let cfg = tiny_model(&task);
    let out = train_loop::<f32>(&cfg, &task, &quiet(4, 4), None, 7).unwrap();
    assert_eq!(out.opt.step, 4);
    assert_eq!(out.report.steps, 4);
    assert!(out.report.final_train_loss.is_finite());
    assert!((0.0..=1.0).contains(&out.report.eval_accuracy));
    assert!(out.report.eval_loss.is_finite());

    // A model whose vocab cannot hold the task ids is rejected up front.
    let mut small = cfg.clone();
    small.vocab = task.vocab() - 1;
    assert!(train_loop::<f32>(&small, &task, &quiet(4, 4), None, 7).is_err());
}

#[test]
fn divergence_aborts_with_a_clear_error() {
    let task = tiny_task();
    let cfg = tiny_model(&task);
    let train = TrainConfig { peak_lr: 1e12, min_lr: 1e12, ..quiet(5, 4) };
    let err = train_loop::<f32>(&cfg, &task, &train, None, 7).unwrap_err();
    assert!(err.to_string().contains("diverged"), "unexpected error: {err}");
}

#[test]
fn interrupted_training_resumes_bitwise() {
    let task = tiny_task();
    let cfg = tiny_model(&task);
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("mid.ckpt");

    let full = train_loop::<f32>(&cfg, &task, &quiet(6, 4), None, 9).unwrap();

    let mut first_half = quiet(6, 4);
    first_half.stop_after = Some(3);
    first_half.checkpoint_path = Some(ck.clone());
    let mid = train_loop::<f32>(&cfg, &task, &first_half, None, 9).unwrap();
    assert_eq!(mid.opt.step, 3);

    let loaded = load_checkpoint::<f32>(&ck).unwrap();
    assert_eq!(loaded.opt.step, 3);
    let resumed =
        train_loop::<f32>(&cfg, &task, &quiet(6, 4), Some((loaded.params, loaded.opt)), 9)
            .unwrap();

    for ((name, a), (_, b)) in full.params.flat().into_iter().zip(resumed.params.flat()) {
        assert_eq!(a.data(), b.data(), "{name} differs after resume");
    }
    for ((name, a), (_, b)) in full.opt.m.flat().into_iter().zip(resumed.opt.m.flat()) {
        assert_eq!(a.data(), b.data(), "moment {name} differs after resume");
    }
    assert_eq!(full.opt.step, resumed.opt.step);
    assert_eq!(full.report.eval_accuracy, resumed.report.eval_accuracy);

    // Nothing left to do once the horizon is reached.
    let done = load_checkpoint::<f32>(&ck).unwrap();
    assert!(train_loop::<f32>(&cfg, &task, &quiet(3, 4), Some((done.params, done.opt)), 9)
        .is_err());
}

#[test]
fn evaluation_is_deterministic() {
    let task = tiny_task();
    let cfg = tiny_model(&task);
    let params = ModelParams::<f32>::init(&cfg, 3);
    let a = evaluate(&params, &cfg, &task, 2, 4).unwrap();
    let b = evaluate(&params, &cfg, &task, 2, 4).unwrap();
    assert_eq!(a.loss, b.loss);
    assert_eq!(a.accuracy, b.accuracy);
    assert_eq!(a.supervised, b.supervised);
}
