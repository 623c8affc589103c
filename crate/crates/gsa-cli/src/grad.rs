//! Gradient checks: analytic backward passes compared against central
//! finite differences of a scalar loss, at kernel, layer, and model scope.
//! Everything runs in f64 so the finite-difference noise floor stays well
//! below the pass thresholds.

use std::collections::HashMap;

use clap::ValueEnum;
use gsa_core::error::{Error, Result};
use gsa_core::kernels::{gsa_bwd, gsa_fwd, ChunkSpec, KernelInput, LinkFn};
use gsa_core::rng::Rng;
use gsa_core::tensor::Tensor;
use gsa_model::layer::{gsa_layer_bwd, gsa_layer_fwd, GsaLayerParams};
use gsa_model::model::{model_bwd, model_fwd, ModelParams};
use gsa_model::ops::cross_entropy;
use gsa_model::{GateMode, ModelConfig};

/// Central-difference step. Squared truncation error ~1e-10 and roundoff
/// ~1e-11 on unit-scale losses, both far under the thresholds below.
const FD_H: f64 = 1e-5;
const KERNEL_TOL: f64 = 1e-4;
const LAYER_TOL: f64 = 1e-4;
const MODEL_TOL: f64 = 1e-3;

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
pub enum Scope {
    Kernel,
    Layer,
    Model,
    All,
}

#[derive(clap::Args)]
pub struct Args {
    /// What to differentiate: the slot kernel alone, one mixing layer, or
    /// the full model under a cross-entropy loss.
    #[arg(long, value_enum, default_value_t = Scope::All)]
    scope: Scope,
    /// Size overrides as key=value pairs, e.g. T=16,d=4,m=3. Unused keys
    /// for the chosen scope are rejected.
    #[arg(long, value_delimiter = ',')]
    dims: Vec<String>,
    /// Random draws per scope. Defaults: 20 kernel, 3 layer, 1 model.
    #[arg(long)]
    seeds: Option<u64>,
    /// Read nonlinearity between the two kernel passes.
    #[arg(long, value_parser = LinkFn::parse, default_value = "softmax")]
    link: LinkFn,
    /// Forget-gate parameterization for layer and model scope.
    #[arg(long = "gate-mode", value_parser = GateMode::parse, default_value = "data-dependent")]
    gate_mode: GateMode,
    /// Gate temperature.
    #[arg(long, default_value_t = 8.0)]
    tau: f64,
}

/// Worst deviation seen for one gradient tensor, with the coordinate that
/// produced it so failures point at a concrete number.
struct Check {
    name: &'static str,
    rel: f64,
    idx: usize,
    analytic: f64,
    fd: f64,
}

impl Check {
    fn new(name: &'static str) -> Self {
        Check { name, rel: 0.0, idx: 0, analytic: 0.0, fd: 0.0 }
    }

    /// Relative error is the largest elementwise gap over the magnitude of
    /// the larger tensor, so uniformly tiny gradients do not inflate it.
    fn record(&mut self, analytic: &Tensor<f64>, fd: &Tensor<f64>) {
        let scale = analytic
            .data()
            .iter()
            .chain(fd.data())
            .fold(0.0f64, |acc, &x| acc.max(x.abs()));
        let mut gap = 0.0f64;
        let mut idx = 0usize;
        for (i, (&a, &f)) in analytic.data().iter().zip(fd.data()).enumerate() {
            if (a - f).abs() > gap {
                gap = (a - f).abs();
                idx = i;
            }
        }
        let rel = if scale > 0.0 { gap / scale } else { 0.0 };
        if rel > self.rel {
            self.rel = rel;
            self.idx = idx;
            self.analytic = analytic.data()[idx];
            self.fd = fd.data()[idx];
        }
    }
}

fn fd_tensor(
    x: &Tensor<f64>,
    mut loss: impl FnMut(&Tensor<f64>) -> Result<f64>,
) -> Result<Tensor<f64>> {
    let mut probe = x.clone();
    let mut grad = Tensor::zeros(x.shape());
    for i in 0..x.len() {
        let keep = probe.data()[i];
        probe.data_mut()[i] = keep + FD_H;
        let up = loss(&probe)?;
        probe.data_mut()[i] = keep - FD_H;
        let down = loss(&probe)?;
        probe.data_mut()[i] = keep;
        grad.data_mut()[i] = (up - down) / (2.0 * FD_H);
    }
    Ok(grad)
}

fn weighted_sum(y: &Tensor<f64>, w: &Tensor<f64>) -> f64 {
    y.data().iter().zip(w.data()).map(|(&a, &b)| a * b).sum()
}

fn rand(rng: &mut Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let mut out = Tensor::zeros(shape);
    out.fill_uniform(rng, lo, hi);
    out
}

const KERNEL_DIMS: &[&str] = &["T", "d", "m", "C"];
const LAYER_DIMS: &[&str] = &["T", "d", "H", "m", "B", "C"];
const MODEL_DIMS: &[&str] = &["L", "T", "d", "H", "m", "V", "B", "C"];

/// Parses key=value size overrides against the keys a scope understands.
fn dims_for(args: &[String], allowed: &[&str]) -> Result<HashMap<String, usize>> {
    let mut map = HashMap::new();
    for item in args {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| Error::config(format!("dims entries look like T=16, got {item:?}")))?;
        if !allowed.contains(&key) {
            return Err(Error::config(format!(
                "unknown dim {key:?}; this scope accepts {}",
                allowed.join(", ")
            )));
        }
        let value: usize = value
            .parse()
            .map_err(|_| Error::config(format!("dim {key} needs a positive integer")))?;
        map.insert(key.to_string(), value);
    }
    Ok(map)
}

type Dims = HashMap<String, usize>;

fn dim(map: &Dims, key: &str, default: usize) -> usize {
    map.get(key).copied().unwrap_or(default)
}

/// Slot kernel with coupled write strengths: gradients for q, k, v, and the
/// log gate against a random linear readout of the outputs.
fn check_kernel(args: &Args, dims: &Dims, seeds: u64) -> Result<Vec<Check>> {
    let (t, d, m) = (dim(dims, "T", 16), dim(dims, "d", 4), dim(dims, "m", 3));
    let spec = ChunkSpec::new(dim(dims, "C", 4))?;
    let link = args.link;
    let mut checks = [
        Check::new("d_q"),
        Check::new("d_k"),
        Check::new("d_v"),
        Check::new("d_log_gate"),
    ];
    for seed in 0..seeds {
        let mut rng = Rng::derive(seed, &[0x67726164, 0]);
        let q = rand(&mut rng, &[t, d], -1.0, 1.0);
        let k = rand(&mut rng, &[t, d], -1.0, 1.0);
        let v = rand(&mut rng, &[t, d], -1.0, 1.0);
        let lg = rand(&mut rng, &[t, m], -3.0, -1e-3);
        let w = rand(&mut rng, &[t, d], -1.0, 1.0);
        let input = KernelInput::slot_coupled(q.clone(), k.clone(), v.clone(), lg.clone())?;
        let (_, saved) = gsa_fwd(&input, spec, link, false)?;
        let grads = gsa_bwd(&input, spec, &w, &saved, true)?;
        let analytic = [&grads.d_q, &grads.d_k, &grads.d_v, &grads.d_log_gate];
        let inputs = [&q, &k, &v, &lg];
        for which in 0..4 {
            let fd = fd_tensor(inputs[which], |probe| {
                let mut parts =
                    [q.clone(), k.clone(), v.clone(), lg.clone()];
                parts[which] = probe.clone();
                let [q2, k2, v2, lg2] = parts;
                let input = KernelInput::slot_coupled(q2, k2, v2, lg2)?;
                Ok(weighted_sum(&gsa_fwd(&input, spec, link, false)?.0, &w))
            })?;
            checks[which].record(analytic[which], &fd);
        }
    }
    Ok(checks.into())
}

fn layer_config(args: &Args, d: usize, heads: usize, m: usize, chunk: usize) -> Result<ModelConfig> {
    let mut cfg = ModelConfig::new(1, d, heads, m, 4);
    cfg.link = args.link;
    cfg.gate_mode = args.gate_mode;
    cfg.tau = args.tau;
    cfg.chunk = chunk;
    cfg.validate()?;
    Ok(cfg)
}

fn rand_layer(rng: &mut Rng, cfg: &ModelConfig) -> GsaLayerParams<f64> {
    let mut p = GsaLayerParams::zeros(cfg);
    for w in [&mut p.w_q, &mut p.w_k, &mut p.w_v, &mut p.w_o] {
        w.fill_uniform(rng, -0.4, 0.4);
    }
    p.w_alpha.fill_uniform(rng, -0.6, 0.6);
    p.norm_gain.fill_uniform(rng, 0.7, 1.3);
    p
}

fn layer_tensor<'a>(p: &'a mut GsaLayerParams<f64>, which: usize) -> &'a mut Tensor<f64> {
    match which {
        0 => &mut p.w_q,
        1 => &mut p.w_k,
        2 => &mut p.w_v,
        3 => &mut p.w_alpha,
        4 => &mut p.w_o,
        _ => &mut p.norm_gain,
    }
}

/// One mixing layer: gradients for the input and all six parameter tensors.
fn check_layer(args: &Args, dims: &Dims, seeds: u64) -> Result<Vec<Check>> {
    let (t, d) = (dim(dims, "T", 8), dim(dims, "d", 16));
    let (heads, m) = (dim(dims, "H", 2), dim(dims, "m", 4));
    let batch = dim(dims, "B", 1);
    let cfg = layer_config(args, d, heads, m, dim(dims, "C", 4))?;
    let names: [&'static str; 7] =
        ["d_x", "w_q", "w_k", "w_v", "w_alpha", "w_o", "norm_gain"];
    let mut checks: Vec<Check> = names.iter().map(|n| Check::new(n)).collect();
    for seed in 0..seeds {
        let mut rng = Rng::derive(seed, &[0x67726164, 1]);
        let p = rand_layer(&mut rng, &cfg);
        let x = rand(&mut rng, &[batch * t, d], -1.0, 1.0);
        let w = rand(&mut rng, &[batch * t, d], -1.0, 1.0);
        let (_, cache) = gsa_layer_fwd(&x, &p, &cfg, batch)?;
        let (d_x, grads) = gsa_layer_bwd(&cache, &p, &cfg, &w)?;
        let fd = fd_tensor(&x, |probe| {
            Ok(weighted_sum(&gsa_layer_fwd(probe, &p, &cfg, batch)?.0, &w))
        })?;
        checks[0].record(&d_x, &fd);
        let analytic =
            [&grads.w_q, &grads.w_k, &grads.w_v, &grads.w_alpha, &grads.w_o, &grads.norm_gain];
        for which in 0..6 {
            let mut probe_params = p.clone();
            let base = layer_tensor(&mut probe_params, which).clone();
            let fd = fd_tensor(&base, |probe| {
                *layer_tensor(&mut probe_params, which) = probe.clone();
                Ok(weighted_sum(&gsa_layer_fwd(&x, &probe_params, &cfg, batch)?.0, &w))
            })?;
            checks[1 + which].record(analytic[which], &fd);
        }
    }
    Ok(checks)
}

/// Full model under the masked cross-entropy loss: gradients for every
/// parameter tensor, reported under the tensor's canonical name.
fn check_model(args: &Args, dims: &Dims, seeds: u64) -> Result<Vec<(String, Check)>> {
    let (layers, t) = (dim(dims, "L", 2), dim(dims, "T", 8));
    let (d, heads, m) = (dim(dims, "d", 16), dim(dims, "H", 2), dim(dims, "m", 4));
    let (vocab, batch) = (dim(dims, "V", 32), dim(dims, "B", 2));
    let mut cfg = ModelConfig::new(layers, d, heads, m, vocab);
    cfg.link = args.link;
    cfg.gate_mode = args.gate_mode;
    cfg.tau = args.tau;
    cfg.chunk = dim(dims, "C", 4);
    cfg.validate()?;
    let mut out: Vec<(String, Check)> = Vec::new();
    for seed in 0..seeds {
        let mut rng = Rng::derive(seed, &[0x67726164, 2]);
        let params = ModelParams::<f64>::init(&cfg, rng.next_u64());
        let tokens: Vec<usize> =
            (0..batch * t).map(|_| rng.below(vocab as u64) as usize).collect();
        // Targets skip the ignore sentinel so every row is supervised.
        let targets: Vec<usize> =
            (0..batch * t).map(|_| 2 + rng.below(vocab as u64 - 2) as usize).collect();
        let (logits, cache) = model_fwd(&tokens, &params, &cfg, batch)?;
        let ce = cross_entropy(&logits, &targets)?;
        let grads = model_bwd(&cache, &params, &cfg, &ce.d_logits)?;
        let names: Vec<String> = params.flat().iter().map(|(n, _)| n.clone()).collect();
        if out.is_empty() {
            out = names.iter().map(|n| (n.clone(), Check::new(""))).collect();
        }
        for (which, _) in names.iter().enumerate() {
            let mut probe_params = params.clone();
            let base = probe_params.flat()[which].1.clone();
            let fd = fd_tensor(&base, |probe| {
                *probe_params.flat_mut()[which].1 = probe.clone();
                let (logits, _) = model_fwd(&tokens, &probe_params, &cfg, batch)?;
                Ok(cross_entropy(&logits, &targets)?.loss)
            })?;
            out[which].1.record(grads.flat()[which].1, &fd);
        }
    }
    Ok(out)
}

fn report(scope: &str, name: &str, check: &Check, tol: f64) -> bool {
    let ok = check.rel <= tol;
    println!(
        "gradcheck scope={scope} tensor={name} rel_err={:.3e} worst[{}] analytic={:.6e} fd={:.6e} {}",
        check.rel,
        check.idx,
        check.analytic,
        check.fd,
        if ok { "ok" } else { "FAIL" },
    );
    ok
}

pub fn run(args: &Args) -> Result<bool> {
    let allowed = match args.scope {
        Scope::Kernel => KERNEL_DIMS,
        Scope::Layer => LAYER_DIMS,
        // The model key set is the union, so it also serves scope "all".
        Scope::Model | Scope::All => MODEL_DIMS,
    };
    let dims = dims_for(&args.dims, allowed)?;
    let mut all_ok = true;
    let scoped = |s| args.scope == s || args.scope == Scope::All;
    if scoped(Scope::Kernel) {
        for check in check_kernel(args, &dims, args.seeds.unwrap_or(20))? {
            all_ok &= report("kernel", check.name, &check, KERNEL_TOL);
        }
    }
    if scoped(Scope::Layer) {
        for check in check_layer(args, &dims, args.seeds.unwrap_or(3))? {
            all_ok &= report("layer", check.name, &check, LAYER_TOL);
        }
    }
    if scoped(Scope::Model) {
        for (name, check) in check_model(args, &dims, args.seeds.unwrap_or(1))? {
            all_ok &= report("model", &name, &check, MODEL_TOL);
        }
    }
    Ok(all_ok)
}
