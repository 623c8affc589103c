//! Single-file checkpoints: a fixed header, a JSON manifest naming every
//! tensor, and a 64-byte-aligned little-endian payload. Model weights,
//! optimizer moments, the step counter, and the architecture all live in
//! one file, so loading needs no side channel and resumed runs replay the
//! saved trajectory bit for bit.

use std::fs;
use std::path::Path;

use gsa_core::error::{Error, Result};
use gsa_core::kernels::LinkFn;
use gsa_core::scalar::{Dtype, Scalar};
use gsa_core::tensor::Tensor;
use serde::{Deserialize, Serialize};

use crate::config::{GateMode, ModelConfig};
use crate::model::ModelParams;
use crate::optim::AdamState;

const MAGIC: &[u8; 4] = b"GSA1";
const VERSION: u32 = 1;
const ALIGN: usize = 64;
/// Header bytes before the manifest: magic, version, manifest length.
const HEADER: usize = 16;
const CONFIG_FIELDS: usize = 11;

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    #[serde(rename = "byteOffset")]
    byte_offset: u64,
}

fn align_up(n: usize) -> usize {
    n.div_ceil(ALIGN) * ALIGN
}

fn gate_id(mode: GateMode) -> f64 {
    GateMode::ALL.iter().position(|&m| m == mode).unwrap() as f64
}

fn link_id(link: LinkFn) -> f64 {
    LinkFn::ALL.iter().position(|&l| l == link).unwrap() as f64
}

/// The architecture as a plain f64 vector, so the manifest format stays a
/// single tensor container. `cache_chunk_states` is a runtime choice, not
/// part of the model, and is not stored.
fn encode_config(cfg: &ModelConfig) -> Vec<f64> {
    vec![
        cfg.layers as f64,
        cfg.dim as f64,
        cfg.heads as f64,
        cfg.slots as f64,
        cfg.tau,
        link_id(cfg.link),
        gate_id(cfg.gate_mode),
        cfg.glu_expansion,
        cfg.vocab as f64,
        cfg.seq_len_max as f64,
        cfg.chunk as f64,
    ]
}

fn decode_config(v: &[f64]) -> Result<ModelConfig> {
    if v.len() != CONFIG_FIELDS {
        return Err(Error::checkpoint(format!(
            "config vector has {} fields, expected {CONFIG_FIELDS}",
            v.len()
        )));
    }
    let idx = |x: f64, what: &str, n: usize| -> Result<usize> {
        let i = x as usize;
        if x.fract() != 0.0 || i >= n {
            return Err(Error::checkpoint(format!("invalid {what} id {x}")));
        }
        Ok(i)
    };
    let cfg = ModelConfig {
        layers: v[0] as usize,
        dim: v[1] as usize,
        heads: v[2] as usize,
        slots: v[3] as usize,
        tau: v[4],
        link: LinkFn::ALL[idx(v[5], "link", LinkFn::ALL.len())?],
        gate_mode: GateMode::ALL[idx(v[6], "gate mode", GateMode::ALL.len())?],
        glu_expansion: v[7],
        vocab: v[8] as usize,
        seq_len_max: v[9] as usize,
        chunk: v[10] as usize,
        cache_chunk_states: false,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn tensor_bytes<T: Scalar>(t: &Tensor<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(t.len() * T::DTYPE.size_bytes());
    for &x in t.data() {
        match T::DTYPE {
            Dtype::F32 => out.extend_from_slice(&(x.to_f64() as f32).to_le_bytes()),
            Dtype::F64 => out.extend_from_slice(&x.to_f64().to_le_bytes()),
        }
    }
    out
}

fn fill_tensor<T: Scalar>(t: &mut Tensor<T>, bytes: &[u8]) {
    let w = T::DTYPE.size_bytes();
    for (x, chunk) in t.data_mut().iter_mut().zip(bytes.chunks_exact(w)) {
        let v = match T::DTYPE {
            Dtype::F32 => f32::from_le_bytes(chunk.try_into().unwrap()) as f64,
            Dtype::F64 => f64::from_le_bytes(chunk.try_into().unwrap()),
        };
        *x = T::from_f64(v);
    }
}

struct Writer {
    entries: Vec<ManifestEntry>,
    payload: Vec<u8>,
}

impl Writer {
    fn push(&mut self, name: String, dtype: Dtype, shape: &[usize], bytes: &[u8]) {
        let off = align_up(self.payload.len());
        self.payload.resize(off, 0);
        self.entries.push(ManifestEntry {
            name,
            dtype: dtype.name().to_string(),
            shape: shape.to_vec(),
            byte_offset: off as u64,
        });
        self.payload.extend_from_slice(bytes);
    }

    fn push_tensor<T: Scalar>(&mut self, name: String, t: &Tensor<T>) {
        self.push(name, T::DTYPE, t.shape(), &tensor_bytes(t));
    }

    fn push_meta(&mut self, name: &str, values: &[f64]) {
        let mut bytes = Vec::with_capacity(values.len() * 8);
        for v in values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        self.push(name.to_string(), Dtype::F64, &[values.len()], &bytes);
    }
}

pub fn save_checkpoint<T: Scalar>(
    path: &Path,
    cfg: &ModelConfig,
    params: &ModelParams<T>,
    opt: &AdamState<T>,
) -> Result<()> {
    let mut w = Writer { entries: Vec::new(), payload: Vec::new() };
    for (name, t) in params.flat() {
        w.push_tensor(format!("model.{name}"), t);
    }
    for (name, t) in opt.m.flat() {
        w.push_tensor(format!("opt.m.{name}"), t);
    }
    for (name, t) in opt.v.flat() {
        w.push_tensor(format!("opt.v.{name}"), t);
    }
    w.push_meta("meta.step", &[opt.step as f64]);
    w.push_meta("meta.config", &encode_config(cfg));

    let manifest = serde_json::to_vec(&w.entries)?;
    let payload_start = align_up(HEADER + manifest.len());
    let mut file = Vec::with_capacity(payload_start + w.payload.len());
    file.extend_from_slice(MAGIC);
    file.extend_from_slice(&VERSION.to_le_bytes());
    file.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
    file.extend_from_slice(&manifest);
    file.resize(payload_start, 0);
    file.extend_from_slice(&w.payload);
    fs::write(path, file)?;
    Ok(())
}

#[derive(Debug)]
pub struct Checkpoint<T: Scalar> {
    pub config: ModelConfig,
    pub params: ModelParams<T>,
    pub opt: AdamState<T>,
}

struct Reader<'a> {
    entries: Vec<ManifestEntry>,
    payload: &'a [u8],
    used: Vec<bool>,
}

impl<'a> Reader<'a> {
    fn find(&mut self, name: &str) -> Result<usize> {
        let i = self
            .entries
            .iter()
            .position(|e| e.name == name)
            .ok_or_else(|| Error::checkpoint(format!("missing tensor {name}")))?;
        if self.used[i] {
            return Err(Error::checkpoint(format!("tensor {name} read twice")));
        }
        self.used[i] = true;
        Ok(i)
    }

    fn bytes_of(&self, i: usize, dtype: Dtype, len: usize) -> Result<&'a [u8]> {
        let e = &self.entries[i];
        if e.dtype != dtype.name() {
            return Err(Error::checkpoint(format!(
                "tensor {} has dtype {}, expected {dtype}",
                e.name, e.dtype
            )));
        }
        let start = e.byte_offset as usize;
        let size = len * dtype.size_bytes();
        if start + size > self.payload.len() {
            return Err(Error::checkpoint(format!("tensor {} runs past the payload", e.name)));
        }
        Ok(&self.payload[start..start + size])
    }

    fn read_tensor<T: Scalar>(&mut self, name: &str, t: &mut Tensor<T>) -> Result<()> {
        let i = self.find(name)?;
        if self.entries[i].shape != t.shape() {
            return Err(Error::checkpoint(format!(
                "tensor {name} has shape {:?}, expected {:?}",
                self.entries[i].shape,
                t.shape()
            )));
        }
        let bytes = self.bytes_of(i, T::DTYPE, t.len())?;
        fill_tensor(t, bytes);
        Ok(())
    }

    fn read_meta(&mut self, name: &str) -> Result<Vec<f64>> {
        let i = self.find(name)?;
        let n = self.entries[i].shape.iter().product();
        let bytes = self.bytes_of(i, Dtype::F64, n)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>> {
    let file = fs::read(path)?;
    if file.len() < HEADER || &file[..4] != MAGIC {
        return Err(Error::checkpoint("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(file[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::checkpoint(format!(
            "unsupported checkpoint version {version}, this build reads {VERSION}"
        )));
    }
    let manifest_len = u64::from_le_bytes(file[8..16].try_into().unwrap()) as usize;
    let payload_start = align_up(HEADER + manifest_len);
    if HEADER + manifest_len > file.len() || payload_start > file.len() {
        return Err(Error::checkpoint("manifest runs past the end of the file"));
    }
    let entries: Vec<ManifestEntry> = serde_json::from_slice(&file[HEADER..HEADER + manifest_len])?;
    let mut prev: Option<u64> = None;
    for e in &entries {
        if e.byte_offset % ALIGN as u64 != 0 {
            return Err(Error::checkpoint(format!("tensor {} is misaligned", e.name)));
        }
        if prev.is_some_and(|p| e.byte_offset <= p) {
            return Err(Error::checkpoint("manifest offsets must strictly increase"));
        }
        prev = Some(e.byte_offset);
    }
    let used = vec![false; entries.len()];
    let mut r = Reader { entries, payload: &file[payload_start..], used };

    let config = decode_config(&r.read_meta("meta.config")?)?;
    let step_v = r.read_meta("meta.step")?;
    if step_v.len() != 1 || step_v[0].fract() != 0.0 || step_v[0] < 0.0 {
        return Err(Error::checkpoint("step counter is not a whole number"));
    }
    let mut params = ModelParams::<T>::zeros(&config);
    for (name, t) in params.flat_mut() {
        r.read_tensor(&format!("model.{name}"), t)?;
    }
    let mut opt = AdamState::<T>::new(&config);
    opt.step = step_v[0] as usize;
    for (name, t) in opt.m.flat_mut() {
        r.read_tensor(&format!("opt.m.{name}"), t)?;
    }
    for (name, t) in opt.v.flat_mut() {
        r.read_tensor(&format!("opt.v.{name}"), t)?;
    }
    if let Some(unused) = r.entries.iter().zip(&r.used).find(|(_, &u)| !u) {
        return Err(Error::checkpoint(format!("unexpected tensor {}", unused.0.name)));
    }
    Ok(Checkpoint { config, params, opt })
}
