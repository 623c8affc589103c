//! Multi-query associative recall: each sequence opens with key-value pairs
//! laid out back to back, then re-presents every key once at a random later
//! position. Supervision asks for the paired value exactly at those query
//! positions and ignores everything else.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use gsa_core::error::{Error, Result};
use gsa_core::rng::Rng;
use serde::{Deserialize, Serialize};

use crate::ops::IGNORE_TARGET;

/// Input token id used at unconstrained positions.
pub const FILLER_TOKEN: usize = 0;

/// Task shape. Token ids 0 and 1 are reserved (filler and ignore sentinel),
/// keys occupy [2, 2 + num_keys) and values the next num_values ids.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MqarSpec {
    pub seq_len: usize,
    /// Key-value pairs per sequence; every key is queried exactly once.
    pub pairs: usize,
    pub num_keys: usize,
    pub num_values: usize,
    pub seed: u64,
}

impl MqarSpec {
    pub fn vocab(&self) -> usize {
        2 + self.num_keys + self.num_values
    }

    pub fn validate(&self) -> Result<()> {
        if self.pairs == 0 || self.num_keys == 0 || self.num_values == 0 {
            return Err(Error::config("pairs, keys, and values must be positive"));
        }
        if self.pairs > self.num_keys {
            return Err(Error::config(format!(
                "{} pairs need distinct keys but only {} exist",
                self.pairs, self.num_keys
            )));
        }
        if self.seq_len < 3 * self.pairs {
            return Err(Error::config(format!(
                "length {} cannot hold {} pairs plus their queries",
                self.seq_len, self.pairs
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MqarInstance {
    pub tokens: Vec<usize>,
    pub targets: Vec<usize>,
}

/// First k entries of a random permutation of 0..n.
fn sample_distinct(rng: &mut Rng, n: usize, k: usize) -> Vec<usize> {
    debug_assert!(k <= n);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + rng.below((n - i) as u64) as usize;
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

/// Instance `index` of the stream defined by `spec`. Purely a function of
/// (seed, index), so training never materializes a dataset.
pub fn mqar_generate(spec: &MqarSpec, index: u64) -> Result<MqarInstance> {
    spec.validate()?;
    let mut rng = Rng::derive(spec.seed, &[0x6d716172, index]);
    let (t, n) = (spec.seq_len, spec.pairs);
    let mut tokens = vec![FILLER_TOKEN; t];
    let mut targets = vec![IGNORE_TARGET; t];
    let key_base = 2;
    let value_base = 2 + spec.num_keys;
    let keys = sample_distinct(&mut rng, spec.num_keys, n);
    for (i, &key) in keys.iter().enumerate() {
        tokens[2 * i] = key_base + key;
        tokens[2 * i + 1] = value_base + rng.below(spec.num_values as u64) as usize;
    }
    for (i, slot) in sample_distinct(&mut rng, t - 2 * n, n).into_iter().enumerate() {
        let p = 2 * n + slot;
        tokens[p] = tokens[2 * i];
        targets[p] = tokens[2 * i + 1];
    }
    Ok(MqarInstance { tokens, targets })
}

/// Instances [first, first + batch) concatenated row-major for the model.
pub fn mqar_batch(spec: &MqarSpec, first: u64, batch: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut tokens = Vec::with_capacity(batch * spec.seq_len);
    let mut targets = Vec::with_capacity(batch * spec.seq_len);
    for b in 0..batch {
        let inst = mqar_generate(spec, first + b as u64)?;
        tokens.extend_from_slice(&inst.tokens);
        targets.extend_from_slice(&inst.targets);
    }
    Ok((tokens, targets))
}

/// One JSON object per line, `{"tokens": [...], "targets": [...]}`.
pub fn write_jsonl(path: &Path, instances: &[MqarInstance]) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    for inst in instances {
        serde_json::to_writer(&mut f, inst)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<MqarInstance>> {
    let f = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in f.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
