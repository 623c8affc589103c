//! Checkpoint format guarantees: bitwise round trips in both widths and
//! loud rejection of anything malformed, from a bad magic to a manifest
//! naming tensors the model does not have.

use gsa_core::rng::Rng;
use gsa_core::scalar::Scalar;
use gsa_model::checkpoint::{load_checkpoint, save_checkpoint};
use gsa_model::config::{GateMode, ModelConfig};
use gsa_model::model::ModelParams;
use gsa_model::optim::AdamState;
use gsa_core::kernels::LinkFn;
use serde_json::Value;
use std::path::Path;

fn odd_config() -> ModelConfig {
    let mut cfg = ModelConfig::new(2, 16, 2, 4, 32);
    cfg.link = LinkFn::Relu2;
    cfg.gate_mode = GateMode::None;
    cfg.tau = 4.0;
    cfg.chunk = 32;
    cfg.seq_len_max = 512;
    cfg
}

fn populated_state<T: Scalar>(cfg: &ModelConfig, seed: u64) -> (ModelParams<T>, AdamState<T>) {
    let params = ModelParams::<T>::init(cfg, seed);
    let mut opt = AdamState::<T>::new(cfg);
    opt.step = 17;
    let mut rng = Rng::new(seed ^ 0xabcd);
    for (_, t) in opt.m.flat_mut() {
        t.fill_uniform(&mut rng, -1.0, 1.0);
    }
    for (_, t) in opt.v.flat_mut() {
        t.fill_uniform(&mut rng, 0.0, 1.0);
    }
    (params, opt)
}

fn save_to(dir: &Path, name: &str) -> (ModelConfig, Vec<u8>) {
    let cfg = odd_config();
    let (params, opt) = populated_state::<f32>(&cfg, 5);
    let path = dir.join(name);
    save_checkpoint(&path, &cfg, &params, &opt).unwrap();
    (cfg, std::fs::read(&path).unwrap())
}

fn round_trip<T: Scalar>(seed: u64) {
    let cfg = odd_config();
    let (params, opt) = populated_state::<T>(&cfg, seed);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    save_checkpoint(&path, &cfg, &params, &opt).unwrap();
    let loaded = load_checkpoint::<T>(&path).unwrap();
    assert_eq!(loaded.config, cfg);
    assert_eq!(loaded.opt.step, 17);
    for ((name, a), (_, b)) in params.flat().into_iter().zip(loaded.params.flat()) {
        assert_eq!(a.data(), b.data(), "weights {name} changed in flight");
    }
    for ((name, a), (_, b)) in opt.m.flat().into_iter().zip(loaded.opt.m.flat()) {
        assert_eq!(a.data(), b.data(), "first moment {name} changed in flight");
    }
    for ((name, a), (_, b)) in opt.v.flat().into_iter().zip(loaded.opt.v.flat()) {
        assert_eq!(a.data(), b.data(), "second moment {name} changed in flight");
    }
}

#[test]
fn round_trip_is_bitwise_in_both_widths() {
    round_trip::<f32>(5);
    round_trip::<f64>(6);
}

/// Rewrite the manifest of a serialized checkpoint, keeping the payload.
fn rewrite_manifest(bytes: &[u8], edit: impl FnOnce(&mut Vec<Value>)) -> Vec<u8> {
    let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let mut entries: Vec<Value> = serde_json::from_slice(&bytes[16..16 + len]).unwrap();
    let payload = &bytes[(16 + len).div_ceil(64) * 64..];
    edit(&mut entries);
    let manifest = serde_json::to_vec(&entries).unwrap();
    let payload_start = (16 + manifest.len()).div_ceil(64) * 64;
    let mut out = Vec::with_capacity(payload_start + payload.len());
    out.extend_from_slice(&bytes[..8]);
    out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
    out.extend_from_slice(&manifest);
    out.resize(payload_start, 0);
    out.extend_from_slice(payload);
    out
}

fn expect_failure(dir: &Path, bytes: Vec<u8>, needle: &str) {
    let path = dir.join("bad.ckpt");
    std::fs::write(&path, bytes).unwrap();
    let err = load_checkpoint::<f32>(&path).unwrap_err().to_string();
    assert!(err.contains(needle), "error {err:?} does not mention {needle:?}");
}

#[test]
fn wrong_magic_and_version_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (_, good) = save_to(dir.path(), "good.ckpt");

    let mut bad_magic = good.clone();
    bad_magic[0] = b'X';
    expect_failure(dir.path(), bad_magic, "not a checkpoint");

    let mut bad_version = good.clone();
    bad_version[4..8].copy_from_slice(&2u32.to_le_bytes());
    expect_failure(dir.path(), bad_version, "version 2");
}

#[test]
fn truncated_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (_, good) = save_to(dir.path(), "good.ckpt");
    expect_failure(dir.path(), good[..10].to_vec(), "not a checkpoint");
    expect_failure(dir.path(), good[..good.len() - 64].to_vec(), "payload");
}

#[test]
fn manifest_tampering_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (_, good) = save_to(dir.path(), "good.ckpt");

    let renamed = rewrite_manifest(&good, |entries| {
        entries[0]["name"] = Value::from("model.embeddinx");
    });
    expect_failure(dir.path(), renamed, "missing tensor model.embedding");

    let extra = rewrite_manifest(&good, |entries| {
        let mut bogus = entries.last().unwrap().clone();
        let next = bogus["byteOffset"].as_u64().unwrap() + (1 << 20);
        bogus["name"] = Value::from("extra.junk");
        bogus["byteOffset"] = Value::from(next);
        entries.push(bogus);
    });
    expect_failure(dir.path(), extra, "unexpected tensor extra.junk");

    let misaligned = rewrite_manifest(&good, |entries| {
        let off = entries[1]["byteOffset"].as_u64().unwrap();
        entries[1]["byteOffset"] = Value::from(off + 1);
    });
    expect_failure(dir.path(), misaligned, "misaligned");

    let duplicated = rewrite_manifest(&good, |entries| {
        let mut copy = entries.last().unwrap().clone();
        let next = copy["byteOffset"].as_u64().unwrap() + (1 << 20);
        copy["byteOffset"] = Value::from(next);
        entries.push(copy);
    });
    expect_failure(dir.path(), duplicated, "unexpected tensor");

    let wrong_dtype = rewrite_manifest(&good, |entries| {
        entries[0]["dtype"] = Value::from("f64");
    });
    expect_failure(dir.path(), wrong_dtype, "dtype");

    let wrong_shape = rewrite_manifest(&good, |entries| {
        entries[0]["shape"] = serde_json::json!([1, 2]);
    });
    expect_failure(dir.path(), wrong_shape, "shape");
}
