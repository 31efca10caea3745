//! Fully convolutional encoder-decoder flow map with hand-written reverse
//! mode gradients and Adam/SGD optimizers.
//!
//! Layer sequence for depth 3 and `b` base filters:
//!
//! ```text
//! enc1: conv 8→b,   ReLU, stride-2 conv b→b      n   → n/2
//! enc2: conv b→2b,  ReLU, stride-2 conv 2b→2b    n/2 → n/4
//! enc3: conv 2b→4b, ReLU, stride-2 conv 4b→4b    n/4 → n/8
//! dec1: upsample, conv 4b→4b, ReLU               n/8 → n/4
//! dec2: upsample, conv 4b→2b, ReLU               n/4 → n/2
//! dec3: upsample, conv 2b→b,  ReLU               n/2 → n
//! head: 1-wide conv b→1 (linear)
//! ```
//!
//! Activations are stored channel-major with the batch inside,
//! `[channel][sample][position]`, so every convolution is one matrix product
//! over the whole batch.

use std::path::Path;

use matrixmultiply::dgemm;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::N_HISTORY;
use crate::error::{Error, Result};
use crate::io;
use crate::rng::substream;

const OUTSIDE: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    Circular,
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub dims: usize,
    /// Grid points per axis.
    pub n: usize,
    pub in_channels: usize,
    pub base_filters: usize,
    /// Encoder blocks; the decoder mirrors them.
    pub depth: usize,
    /// Odd kernel width per axis.
    pub kernel_size: usize,
    pub padding: Padding,
}

impl ModelConfig {
    pub fn desk(dims: usize, n: usize) -> Self {
        ModelConfig {
            dims,
            n,
            in_channels: N_HISTORY,
            base_filters: 8,
            depth: 3,
            kernel_size: if dims == 2 { 3 } else { 5 },
            padding: Padding::Circular,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::config(format!("model.{field}"), msg));
        if self.dims != 1 && self.dims != 2 {
            return bad("dims", format!("must be 1 or 2, got {}", self.dims));
        }
        if self.depth == 0 || self.depth > 8 {
            return bad("depth", format!("must be in 1..=8, got {}", self.depth));
        }
        if self.n == 0 || self.n % (1 << self.depth) != 0 {
            return bad(
                "n",
                format!("{} is not divisible by 2^{}", self.n, self.depth),
            );
        }
        if self.in_channels == 0 {
            return bad("in_channels", "must be >= 1".into());
        }
        if self.base_filters == 0 {
            return bad("base_filters", "must be >= 1".into());
        }
        if self.kernel_size % 2 == 0 {
            return bad("kernel_size", format!("must be odd, got {}", self.kernel_size));
        }
        Ok(())
    }

    /// Spatial positions of one state.
    pub fn positions(&self) -> usize {
        self.n.pow(self.dims as u32)
    }

    fn taps(&self) -> usize {
        self.kernel_size.pow(self.dims as u32)
    }
}

/// A named parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Ordered weight and bias tensors of a [`Network`]; also used for
/// gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    tensors: Vec<Tensor>,
}

impl Params {
    pub fn from_tensors(tensors: Vec<Tensor>) -> Result<Self> {
        for t in &tensors {
            if t.shape.iter().product::<usize>() != t.data.len() {
                return Err(Error::ShapeMismatch {
                    left: t.shape.clone(),
                    right: vec![t.data.len()],
                });
            }
        }
        Ok(Params { tensors })
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.iter_mut().find(|t| t.name == name)
    }

    /// Total number of scalars.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn zeros_like(&self) -> Params {
        Params {
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: vec![0.0; t.data.len()],
                })
                .collect(),
        }
    }

    pub fn fill(&mut self, value: f64) {
        for t in &mut self.tensors {
            t.data.fill(value);
        }
    }

    pub fn scale(&mut self, c: f64) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|v| *v *= c);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    fn check_layout(&self, other: &Params) -> Result<()> {
        let a: Vec<_> = self.tensors.iter().map(|t| &t.shape).collect();
        let b: Vec<_> = other.tensors.iter().map(|t| &t.shape).collect();
        if a != b {
            return Err(Error::ShapeMismatch {
                left: a.iter().map(|s| s.iter().product()).collect(),
                right: b.iter().map(|s| s.iter().product()).collect(),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
enum Op {
    Conv {
        weight: usize,
        bias: usize,
        taps: usize,
        /// `table[t·m_out + i]`: input position read by tap `t` at output `i`.
        table: Vec<u32>,
    },
    Relu,
    Upsample {
        table: Vec<u32>,
    },
}

#[derive(Clone, Debug)]
struct Layer {
    name: String,
    op: Op,
    c_in: usize,
    c_out: usize,
    m_in: usize,
    m_out: usize,
}

/// Network topology built from a [`ModelConfig`].
#[derive(Clone, Debug)]
pub struct Network {
    config: ModelConfig,
    layers: Vec<Layer>,
    specs: Vec<(String, Vec<usize>)>,
    /// Per-parameter gain of the fan-in scaled initialization.
    gains: Vec<f64>,
}

fn conv_table(dims: usize, side_in: usize, stride: usize, k: usize, padding: Padding) -> Vec<u32> {
    let side_out = side_in / stride;
    let half = (k / 2) as i64;
    let wrap = |v: i64| -> Option<usize> {
        match padding {
            Padding::Circular => Some(v.rem_euclid(side_in as i64) as usize),
            Padding::Zero => (0..side_in as i64).contains(&v).then_some(v as usize),
        }
    };
    let mut table = Vec::new();
    if dims == 1 {
        for t in 0..k as i64 {
            for i in 0..side_out as i64 {
                let j = wrap(stride as i64 * i + t - half);
                table.push(j.map_or(OUTSIDE, |j| j as u32));
            }
        }
    } else {
        for ty in 0..k as i64 {
            for tx in 0..k as i64 {
                for oy in 0..side_out as i64 {
                    for ox in 0..side_out as i64 {
                        let y = wrap(stride as i64 * oy + ty - half);
                        let x = wrap(stride as i64 * ox + tx - half);
                        table.push(match (y, x) {
                            (Some(y), Some(x)) => (y * side_in + x) as u32,
                            _ => OUTSIDE,
                        });
                    }
                }
            }
        }
    }
    table
}

fn upsample_table(dims: usize, side_in: usize) -> Vec<u32> {
    let side_out = 2 * side_in;
    if dims == 1 {
        (0..side_out).map(|i| (i / 2) as u32).collect()
    } else {
        (0..side_out * side_out)
            .map(|i| ((i / side_out / 2) * side_in + (i % side_out) / 2) as u32)
            .collect()
    }
}

impl Network {
    pub fn new(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut net = Network {
            config: config.clone(),
            layers: Vec::new(),
            specs: Vec::new(),
            gains: Vec::new(),
        };
        let b = config.base_filters;
        let mut side = config.n;
        let mut c = config.in_channels;
        for s in 0..config.depth {
            let width = b << s;
            net.push_conv(format!("enc{}.conv", s + 1), c, width, side, 1, true);
            net.push_conv(format!("enc{}.down", s + 1), width, width, side, 2, false);
            c = width;
            side /= 2;
        }
        for s in 0..config.depth {
            let width = b << (config.depth - 1 - s);
            let m_in = side.pow(config.dims as u32);
            side *= 2;
            net.layers.push(Layer {
                name: format!("dec{}.up", s + 1),
                op: Op::Upsample {
                    table: upsample_table(config.dims, side / 2),
                },
                c_in: c,
                c_out: c,
                m_in,
                m_out: side.pow(config.dims as u32),
            });
            net.push_conv(format!("dec{}.conv", s + 1), c, width, side, 1, true);
            c = width;
        }
        net.push_head(c, side);
        Ok(net)
    }

    fn push_param(&mut self, name: String, shape: Vec<usize>, gain: f64) -> usize {
        self.specs.push((name, shape));
        self.gains.push(gain);
        self.specs.len() - 1
    }

    fn push_conv(&mut self, name: String, c_in: usize, c_out: usize, side_in: usize, stride: usize, relu: bool) {
        let cfg = self.config.clone();
        let taps = cfg.taps();
        let table = conv_table(cfg.dims, side_in, stride, cfg.kernel_size, cfg.padding);
        let mut wshape = vec![c_out, c_in];
        wshape.extend(std::iter::repeat(cfg.kernel_size).take(cfg.dims));
        let gain = if relu { 2.0 } else { 1.0 };
        let weight = self.push_param(format!("{name}.weight"), wshape, gain);
        let bias = self.push_param(format!("{name}.bias"), vec![c_out], 0.0);
        let dims = cfg.dims as u32;
        self.layers.push(Layer {
            name: name.clone(),
            op: Op::Conv {
                weight,
                bias,
                taps,
                table,
            },
            c_in,
            c_out,
            m_in: side_in.pow(dims),
            m_out: (side_in / stride).pow(dims),
        });
        if relu {
            let m = (side_in / stride).pow(dims);
            self.layers.push(Layer {
                name: format!("{name}.relu"),
                op: Op::Relu,
                c_in: c_out,
                c_out,
                m_in: m,
                m_out: m,
            });
        }
    }

    fn push_head(&mut self, c_in: usize, side: usize) {
        let dims = self.config.dims;
        let mut wshape = vec![1, c_in];
        wshape.extend(std::iter::repeat(1).take(dims));
        let weight = self.push_param("head.weight".into(), wshape, 1.0);
        let bias = self.push_param("head.bias".into(), vec![1], 0.0);
        let m = side.pow(dims as u32);
        self.layers.push(Layer {
            name: "head".into(),
            op: Op::Conv {
                weight,
                bias,
                taps: 1,
                table: (0..m as u32).collect(),
            },
            c_in,
            c_out: 1,
            m_in: m,
            m_out: m,
        });
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Layer names in evaluation order.
    pub fn layer_names(&self) -> Vec<&str> {
        self.layers.iter().map(|l| l.name.as_str()).collect()
    }

    /// `(channels, positions)` produced by every layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.c_out, l.m_out)).collect()
    }

    /// Parameter names and shapes.
    pub fn param_specs(&self) -> &[(String, Vec<usize>)] {
        &self.specs
    }

    pub fn zeros(&self) -> Params {
        Params {
            tensors: self
                .specs
                .iter()
                .map(|(name, shape)| Tensor {
                    name: name.clone(),
                    shape: shape.clone(),
                    data: vec![0.0; shape.iter().product()],
                })
                .collect(),
        }
    }

    /// Fan-in scaled uniform weights with variance `gain/fan_in` (gain 2
    /// before a ReLU, 1 otherwise) and zero biases.
    pub fn init(&self, seed: u64) -> Params {
        let mut p = self.zeros();
        for (i, t) in p.tensors.iter_mut().enumerate() {
            let gain = self.gains[i];
            if gain == 0.0 {
                continue;
            }
            let fan_in: usize = t.shape[1..].iter().product();
            let bound = (3.0 * gain / fan_in as f64).sqrt();
            let mut rng = substream(seed, "init", i as u64);
            for v in &mut t.data {
                *v = rng.gen_range(-bound..bound);
            }
        }
        p
    }

    /// Expected weight variance of parameter `name` under [`Network::init`].
    pub fn init_variance(&self, name: &str) -> Option<f64> {
        let i = self.specs.iter().position(|(n, _)| n == name)?;
        let fan_in: usize = self.specs[i].1[1..].iter().product();
        Some(self.gains[i] / fan_in as f64)
    }

    fn check_params(&self, params: &Params) -> Result<()> {
        let ok = params.tensors.len() == self.specs.len()
            && params
                .tensors
                .iter()
                .zip(&self.specs)
                .all(|(t, (name, shape))| &t.name == name && &t.shape == shape);
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                left: self.specs.iter().map(|(_, s)| s.iter().product()).collect(),
                right: params.tensors.iter().map(|t| t.data.len()).collect(),
            })
        }
    }

    /// Input values per sample: `in_channels` stacked states.
    pub fn input_len(&self) -> usize {
        self.config.in_channels * self.config.positions()
    }

    /// Runs the network on `batch` samples laid out `[sample][channel][position]`
    /// and returns predictions `[sample][position]` plus the activations
    /// needed by [`Network::backward`].
    pub fn forward(&self, params: &Params, input: &[f64], batch: usize) -> Result<(Vec<f64>, Cache)> {
        self.run(params, input, batch, true)
    }

    pub fn predict(&self, params: &Params, input: &[f64], batch: usize) -> Result<Vec<f64>> {
        Ok(self.run(params, input, batch, false)?.0)
    }

    fn run(&self, params: &Params, input: &[f64], batch: usize, keep: bool) -> Result<(Vec<f64>, Cache)> {
        self.check_params(params)?;
        let (c0, m0) = (self.config.in_channels, self.config.positions());
        if batch == 0 || input.len() != batch * c0 * m0 {
            return Err(Error::ShapeMismatch {
                left: vec![batch, c0, m0],
                right: vec![input.len()],
            });
        }
        let mut x = vec![0.0; input.len()];
        for b in 0..batch {
            for c in 0..c0 {
                let src = &input[(b * c0 + c) * m0..][..m0];
                x[(c * batch + b) * m0..][..m0].copy_from_slice(src);
            }
        }
        let mut saved = Vec::with_capacity(if keep { self.layers.len() } else { 0 });
        for layer in &self.layers {
            let (y, keepme) = match &layer.op {
                Op::Conv {
                    weight,
                    bias,
                    taps,
                    table,
                } => {
                    let cols = gather_cols(&x, layer, *taps, table, batch);
                    let y = conv_apply(
                        &params.tensors[*weight].data,
                        &params.tensors[*bias].data,
                        &cols,
                        layer.c_out,
                        layer.c_in * taps,
                        batch * layer.m_out,
                    );
                    (y, cols)
                }
                Op::Relu => {
                    let y = x.iter().map(|&v| v.max(0.0)).collect();
                    (y, x)
                }
                Op::Upsample { table } => {
                    let mut y = vec![0.0; layer.c_out * batch * layer.m_out];
                    for (row_in, row_out) in x.chunks_exact(layer.m_in).zip(y.chunks_exact_mut(layer.m_out)) {
                        for (o, &j) in row_out.iter_mut().zip(table) {
                            *o = row_in[j as usize];
                        }
                    }
                    (y, Vec::new())
                }
            };
            if !y.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFiniteActivation {
                    layer: layer.name.clone(),
                });
            }
            if keep {
                saved.push(keepme);
            }
            x = y;
        }
        Ok((x, Cache { batch, saved }))
    }

    /// Reverse-mode gradients of `Σ grad_out·prediction` with respect to
    /// every parameter.
    pub fn backward(&self, params: &Params, cache: &Cache, grad_out: &[f64]) -> Result<Params> {
        let mut grads = params.zeros_like();
        self.backward_into(params, cache, grad_out, &mut grads)?;
        Ok(grads)
    }

    /// Like [`Network::backward`] but adds into `grads`.
    pub fn backward_into(&self, params: &Params, cache: &Cache, grad_out: &[f64], grads: &mut Params) -> Result<()> {
        self.check_params(params)?;
        self.check_params(grads)?;
        let batch = cache.batch;
        if cache.saved.len() != self.layers.len() || grad_out.len() != batch * self.config.positions() {
            return Err(Error::ShapeMismatch {
                left: vec![self.layers.len(), batch * self.config.positions()],
                right: vec![cache.saved.len(), grad_out.len()],
            });
        }
        let mut g = grad_out.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let saved = &cache.saved[l];
            g = match &layer.op {
                Op::Conv {
                    weight,
                    bias,
                    taps,
                    table,
                } => {
                    let k = layer.c_in * taps;
                    let n = batch * layer.m_out;
                    let (c_out, c_in) = (layer.c_out, layer.c_in);
                    let dw = &mut grads.tensors[*weight].data;
                    gemm(c_out, n, k, &g, n, 1, saved, 1, n, dw, k, 1, 1.0);
                    for (db, row) in grads.tensors[*bias].data.iter_mut().zip(g.chunks_exact(n)) {
                        *db += row.iter().sum::<f64>();
                    }
                    if l == 0 {
                        Vec::new()
                    } else {
                        let w = &params.tensors[*weight].data;
                        let mut dcols = vec![0.0; k * n];
                        gemm(k, c_out, n, w, 1, k, &g, n, 1, &mut dcols, n, 1, 0.0);
                        scatter_cols(&dcols, c_in, layer, *taps, table, batch)
                    }
                }
                Op::Relu => g
                    .iter()
                    .zip(saved)
                    .map(|(&gi, &xi)| if xi > 0.0 { gi } else { 0.0 })
                    .collect(),
                Op::Upsample { table } => {
                    let mut dx = vec![0.0; layer.c_in * batch * layer.m_in];
                    for (row_out, row_in) in g.chunks_exact(layer.m_out).zip(dx.chunks_exact_mut(layer.m_in)) {
                        for (&go, &j) in row_out.iter().zip(table) {
                            row_in[j as usize] += go;
                        }
                    }
                    dx
                }
            };
        }
        Ok(())
    }
}

/// Activations kept by [`Network::forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct Cache {
    batch: usize,
    saved: Vec<Vec<f64>>,
}

fn gather_cols(x: &[f64], layer: &Layer, taps: usize, table: &[u32], batch: usize) -> Vec<f64> {
    let (m_in, m_out) = (layer.m_in, layer.m_out);
    let n = batch * m_out;
    let mut cols = vec![0.0; layer.c_in * taps * n];
    for c in 0..layer.c_in {
        for t in 0..taps {
            let idx = &table[t * m_out..][..m_out];
            let row = &mut cols[(c * taps + t) * n..][..n];
            for b in 0..batch {
                let src = &x[(c * batch + b) * m_in..][..m_in];
                for (dst, &j) in row[b * m_out..][..m_out].iter_mut().zip(idx) {
                    if j != OUTSIDE {
                        *dst = src[j as usize];
                    }
                }
            }
        }
    }
    cols
}

fn scatter_cols(dcols: &[f64], c_in: usize, layer: &Layer, taps: usize, table: &[u32], batch: usize) -> Vec<f64> {
    let (m_in, m_out) = (layer.m_in, layer.m_out);
    let n = batch * m_out;
    let mut dx = vec![0.0; c_in * batch * m_in];
    for c in 0..c_in {
        for t in 0..taps {
            let idx = &table[t * m_out..][..m_out];
            let row = &dcols[(c * taps + t) * n..][..n];
            for b in 0..batch {
                let dst = &mut dx[(c * batch + b) * m_in..][..m_in];
                for (&g, &j) in row[b * m_out..][..m_out].iter().zip(idx) {
                    if j != OUTSIDE {
                        dst[j as usize] += g;
                    }
                }
            }
        }
    }
    dx
}

fn conv_apply(w: &[f64], bias: &[f64], cols: &[f64], c_out: usize, k: usize, n: usize) -> Vec<f64> {
    let mut y = vec![0.0; c_out * n];
    for (row, &b) in y.chunks_exact_mut(n).zip(bias) {
        row.fill(b);
    }
    gemm(c_out, k, n, w, k, 1, cols, n, 1, &mut y, n, 1, 1.0);
    y
}

/// `c ← a·b + beta·c` for strided row/column layouts.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    c: &mut [f64],
    rsc: usize,
    csc: usize,
    beta: f64,
) {
    let last = |r: usize, cs: usize, rows: usize, cols: usize| (rows - 1) * r + (cols - 1) * cs;
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    assert!(a.len() > last(rsa, csa, m, k));
    assert!(b.len() > last(rsb, csb, k, n));
    assert!(c.len() > last(rsc, csc, m, n));
    // SAFETY: the asserts above keep every strided access inside the slices.
    unsafe {
        dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum OptimizerSpec {
    Adam {
        lr: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
    Sgd {
        lr: f64,
        #[serde(default)]
        momentum: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_eps() -> f64 {
    1e-8
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        OptimizerSpec::adam(1e-3)
    }
}

impl OptimizerSpec {
    pub fn adam(lr: f64) -> Self {
        OptimizerSpec::Adam {
            lr,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }

    pub fn sgd(lr: f64, momentum: f64) -> Self {
        OptimizerSpec::Sgd { lr, momentum }
    }

    pub fn validate(&self) -> Result<()> {
        let (lr, ok) = match *self {
            OptimizerSpec::Adam { lr, beta1, beta2, eps } => (
                lr,
                (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0,
            ),
            OptimizerSpec::Sgd { lr, momentum } => (lr, (0.0..1.0).contains(&momentum)),
        };
        if !(lr > 0.0) || !ok {
            return Err(Error::config("optimizer", format!("invalid settings {self:?}")));
        }
        Ok(())
    }
}

/// Optimizer accumulators for one parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct OptState {
    spec: OptimizerSpec,
    /// Adam first moment or SGD velocity.
    m: Vec<Vec<f64>>,
    /// Adam second moment.
    v: Vec<Vec<f64>>,
    step: u64,
}

impl OptState {
    pub fn new(spec: OptimizerSpec, params: &Params) -> Self {
        let zeros = || params.tensors.iter().map(|t| vec![0.0; t.data.len()]).collect();
        let v = match spec {
            OptimizerSpec::Adam { .. } => zeros(),
            OptimizerSpec::Sgd { .. } => Vec::new(),
        };
        OptState {
            spec,
            m: zeros(),
            v,
            step: 0,
        }
    }

    pub fn spec(&self) -> OptimizerSpec {
        self.spec
    }

    pub fn steps(&self) -> u64 {
        self.step
    }
}

/// One Adam (with bias correction) or SGD (with optional momentum) update.
pub fn optimizer_step(params: &mut Params, grads: &Params, state: &mut OptState) -> Result<()> {
    params.check_layout(grads)?;
    if state.m.len() != params.tensors.len()
        || state.m.iter().zip(&params.tensors).any(|(m, t)| m.len() != t.data.len())
    {
        return Err(Error::InvalidArgument("optimizer state does not match parameters".into()));
    }
    state.step += 1;
    match state.spec {
        OptimizerSpec::Adam { lr, beta1, beta2, eps } => {
            let t = state.step as i32;
            let c1 = 1.0 - beta1.powi(t);
            let c2 = 1.0 - beta2.powi(t);
            for (i, (p, g)) in params.tensors.iter_mut().zip(&grads.tensors).enumerate() {
                for (((x, &gi), m), v) in p
                    .data
                    .iter_mut()
                    .zip(&g.data)
                    .zip(state.m[i].iter_mut())
                    .zip(state.v[i].iter_mut())
                {
                    *m = beta1 * *m + (1.0 - beta1) * gi;
                    *v = beta2 * *v + (1.0 - beta2) * gi * gi;
                    *x -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                }
            }
        }
        OptimizerSpec::Sgd { lr, momentum } => {
            for (i, (p, g)) in params.tensors.iter_mut().zip(&grads.tensors).enumerate() {
                for ((x, &gi), vel) in p.data.iter_mut().zip(&g.data).zip(state.m[i].iter_mut()) {
                    *vel = momentum * *vel + gi;
                    *x -= lr * *vel;
                }
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub generator_version: String,
    pub config: ModelConfig,
    pub seed: u64,
    /// Epochs trained when the checkpoint was written.
    pub epoch: usize,
    pub tensors: Vec<TensorEntry>,
    pub payload_bytes: u64,
    pub payload_sha256: String,
}

fn params_payload(params: &Params) -> Vec<u8> {
    io::encode_f32(params.tensors.iter().flat_map(|t| t.data.iter().map(|&v| v as f32)))
}

/// Writes `path` (tensors as `f32`, in parameter order) and its manifest.
pub fn save_checkpoint(path: &Path, config: &ModelConfig, params: &Params, seed: u64, epoch: usize) -> Result<()> {
    let payload = params_payload(params);
    let manifest = CheckpointManifest {
        format_version: io::FORMAT_VERSION,
        generator_version: io::generator_version(),
        config: config.clone(),
        seed,
        epoch,
        tensors: params
            .tensors
            .iter()
            .map(|t| TensorEntry {
                name: t.name.clone(),
                shape: t.shape.clone(),
            })
            .collect(),
        payload_bytes: payload.len() as u64,
        payload_sha256: io::sha256_hex(&payload),
    };
    io::write_atomic(path, &payload)?;
    io::write_json(&io::manifest_path(path), &manifest)
}

pub fn load_checkpoint(path: &Path) -> Result<(CheckpointManifest, Params)> {
    let m: CheckpointManifest = io::read_json(&io::manifest_path(path))?;
    let bytes = io::read_bytes(path)?;
    io::verify_payload(path, &bytes, m.format_version, m.payload_bytes, &m.payload_sha256)?;
    let values = io::decode_f32(&bytes);
    let mut offset = 0;
    let mut tensors = Vec::with_capacity(m.tensors.len());
    for e in &m.tensors {
        let len: usize = e.shape.iter().product();
        let data = values
            .get(offset..offset + len)
            .ok_or_else(|| Error::LengthMismatch {
                path: path.to_path_buf(),
                expected: ((offset + len) * 4) as u64,
                found: bytes.len() as u64,
            })?
            .iter()
            .map(|&v| v as f64)
            .collect();
        offset += len;
        tensors.push(Tensor {
            name: e.name.clone(),
            shape: e.shape.clone(),
            data,
        });
    }
    let params = Params::from_tensors(tensors)?;
    Network::new(&m.config)?.check_params(&params)?;
    Ok((m, params))
}
