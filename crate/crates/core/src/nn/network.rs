use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    hardtanh01, hardtanh01_backward, relu, relu_backward, softmax, softmax_backward, BatchNorm1d, BnCache, Dense,
    Layer, LayerKind, LayerSpec,
};
use super::matrix::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Per-feature z-score applied before the first layer. Not trainable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(width: usize) -> Self {
        Standardizer {
            mean: vec![0.0; width],
            std: vec![1.0; width],
        }
    }

    /// Column statistics of `x`; constant columns get unit scale.
    pub fn fit(x: &Matrix) -> Self {
        let n = x.rows().max(1) as f64;
        let w = x.cols();
        let mut mean = vec![0.0; w];
        for row in x.row_iter() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; w];
        for row in x.row_iter() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, std }
    }

    pub fn apply(&self, x: &Matrix) -> Matrix {
        let w = x.cols();
        let mut y = x.clone();
        for row in y.data_mut().chunks_mut(w) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        y
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs_run: usize,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkModel {
    pub layers: Vec<Layer>,
    pub standardizer: Standardizer,
    pub meta: TrainingMeta,
    /// Bumped on every parameter update; ties forward caches to a parameter state.
    #[serde(skip)]
    generation: u64,
}

// Equality covers the model content only, not the cache generation.
impl PartialEq for NetworkModel {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.standardizer == other.standardizer && self.meta == other.meta
    }
}

/// Activations cached by a train-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    mode: Mode,
    generation: u64,
    /// `acts[i]` is the input of layer `i`; the last entry is the network output.
    acts: Vec<Matrix>,
    bn: Vec<Option<BnCache>>,
}

impl ForwardPass {
    pub fn output(&self) -> &Matrix {
        self.acts.last().expect("at least the input")
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub(crate) fn layer_inputs(&self) -> &[Matrix] {
        &self.acts
    }
}

/// Gradients for every trainable tensor, in [`NetworkModel::params`] order,
/// plus the gradient with respect to the (standardized) input.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Vec<f64>>,
    pub input: Matrix,
}

impl Gradients {
    pub fn is_all_zero(&self) -> bool {
        self.tensors.iter().flatten().all(|g| *g == 0.0)
    }
}

/// Which layer and which tensor a parameter array belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamTag {
    pub layer: usize,
    pub kind: LayerKind,
    pub name: &'static str,
}

impl NetworkModel {
    pub fn new(layers: Vec<Layer>, standardizer: Standardizer) -> Result<Self> {
        let m = NetworkModel {
            layers,
            standardizer,
            meta: TrainingMeta::default(),
            generation: 0,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .layers
            .first()
            .ok_or_else(|| Error::InvalidInput("network has no layers".into()))?;
        if self.standardizer.mean.len() != first.in_width() || self.standardizer.std.len() != first.in_width() {
            return Err(Error::InvalidInput(
                "standardizer width does not match the input layer".into(),
            ));
        }
        if self.standardizer.std.iter().any(|s| s.is_nan() || *s <= 0.0) {
            return Err(Error::InvalidInput("standardizer std must be positive".into()));
        }
        for pair in self.layers.windows(2) {
            if pair[0].out_width() != pair[1].in_width() {
                return Err(Error::InvalidInput(format!(
                    "layer widths do not chain: {:?} -> {:?}",
                    pair[0].spec(),
                    pair[1].spec()
                )));
            }
        }
        for l in &self.layers {
            let s = l.spec();
            if s.in_width == 0 || s.out_width == 0 {
                return Err(Error::InvalidInput("layer widths must be >= 1".into()));
            }
            match l {
                Layer::Dense(d) | Layer::LinearHead(d) => {
                    if d.weights.len() != d.in_width * d.out_width || d.bias.len() != d.out_width {
                        return Err(Error::InvalidInput("dense parameter shape mismatch".into()));
                    }
                }
                Layer::Batchnorm1d(b) => {
                    let w = b.width;
                    if [&b.gamma, &b.beta, &b.running_mean, &b.running_var]
                        .iter()
                        .any(|v| v.len() != w)
                    {
                        return Err(Error::InvalidInput("batch-norm parameter shape mismatch".into()));
                    }
                    if b.running_var.iter().any(|v| v.is_nan() || *v <= 0.0) {
                        return Err(Error::InvalidInput(
                            "batch-norm running variance must be positive".into(),
                        ));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].in_width()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().expect("validated").out_width()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn params(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in &self.layers {
            match l {
                Layer::Dense(d) | Layer::LinearHead(d) => {
                    out.push(&d.weights);
                    out.push(&d.bias);
                }
                Layer::Batchnorm1d(b) => {
                    out.push(&b.gamma);
                    out.push(&b.beta);
                }
                _ => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.generation += 1;
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.layers {
            match l {
                Layer::Dense(d) | Layer::LinearHead(d) => {
                    out.push(&mut d.weights);
                    out.push(&mut d.bias);
                }
                Layer::Batchnorm1d(b) => {
                    out.push(&mut b.gamma);
                    out.push(&mut b.beta);
                }
                _ => {}
            }
        }
        out
    }

    pub fn param_tags(&self) -> Vec<ParamTag> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            let kind = l.kind();
            let names: &[&'static str] = match l {
                Layer::Dense(_) | Layer::LinearHead(_) => &["weights", "bias"],
                Layer::Batchnorm1d(_) => &["gamma", "beta"],
                _ => &[],
            };
            out.extend(names.iter().map(|&name| ParamTag { layer: i, kind, name }));
        }
        out
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_width() {
            return Err(Error::WidthMismatch {
                expected: self.input_width(),
                got: x.cols(),
            });
        }
        Ok(())
    }

    /// Forward pass keeping every intermediate activation.
    ///
    /// Train mode normalizes with batch statistics (needs >= 2 rows) and does
    /// not touch the running statistics; see [`NetworkModel::commit_batch_stats`].
    pub fn forward(&self, x: &Matrix, mode: Mode) -> Result<ForwardPass> {
        self.check_input(x)?;
        if mode == Mode::Train && x.rows() < 2 {
            return Err(Error::BatchTooSmall);
        }
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut bn = Vec::with_capacity(self.layers.len());
        acts.push(self.standardizer.apply(x));
        for layer in &self.layers {
            let input = acts.last().expect("non-empty");
            let (out, cache) = match (layer, mode) {
                (Layer::Batchnorm1d(b), Mode::Train) => {
                    let (y, c) = b.forward_train(input);
                    (y, Some(c))
                }
                _ => (apply_infer(layer, input), None),
            };
            acts.push(out);
            bn.push(cache);
        }
        Ok(ForwardPass {
            mode,
            generation: self.generation,
            acts,
            bn,
        })
    }

    /// Inference on any number of rows, without caching intermediates.
    pub fn infer(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        const CHUNK: usize = 4096;
        let mut out = Vec::with_capacity(x.rows() * self.output_width());
        let mut start = 0;
        while start < x.rows() {
            let end = (start + CHUNK).min(x.rows());
            let mut a = self.standardizer.apply(&x.slice_rows(start, end));
            for layer in &self.layers {
                a = apply_infer(layer, &a);
            }
            out.extend_from_slice(a.data());
            start = end;
        }
        Matrix::new(x.rows(), self.output_width(), out)
    }

    /// Folds a train-mode pass's batch statistics into the running statistics.
    pub fn commit_batch_stats(&mut self, pass: &ForwardPass) {
        let batch = pass.acts[0].rows();
        for (layer, cache) in self.layers.iter_mut().zip(&pass.bn) {
            if let (Layer::Batchnorm1d(b), Some(c)) = (layer, cache) {
                b.update_running(c, batch);
            }
        }
    }

    /// Backpropagates `dout` (gradient of the loss w.r.t. the network output).
    pub fn backward(&self, pass: &ForwardPass, dout: &Matrix) -> Result<Gradients> {
        if pass.mode != Mode::Train {
            return Err(Error::StaleCache("backward needs a train-mode forward pass"));
        }
        if pass.generation != self.generation || pass.acts.len() != self.layers.len() + 1 {
            return Err(Error::StaleCache("parameters changed since the forward pass"));
        }
        let out = pass.output();
        if dout.rows() != out.rows() || dout.cols() != out.cols() {
            return Err(Error::StaleCache(
                "loss gradient shape does not match the cached output",
            ));
        }
        let mut grads: Vec<Vec<Vec<f64>>> = vec![Vec::new(); self.layers.len()];
        let mut dy = dout.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = &pass.acts[i];
            dy = match layer {
                Layer::Dense(d) | Layer::LinearHead(d) => {
                    let (dx, dw, db) = d.backward(x, &dy);
                    grads[i] = vec![dw, db];
                    dx
                }
                Layer::Batchnorm1d(b) => {
                    let cache = pass.bn[i]
                        .as_ref()
                        .ok_or(Error::StaleCache("missing batch-norm cache"))?;
                    let (dx, dg, db) = b.backward(cache, &dy);
                    grads[i] = vec![dg, db];
                    dx
                }
                Layer::Relu { .. } => relu_backward(x, &dy),
                Layer::Hardtanh01 { .. } => hardtanh01_backward(x, &dy),
                Layer::Softmax { .. } => softmax_backward(&pass.acts[i + 1], &dy),
            };
        }
        Ok(Gradients {
            tensors: grads.into_iter().flatten().collect(),
            input: dy,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: NetworkModel = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        m.validate()?;
        Ok(m)
    }
}

fn apply_infer(layer: &Layer, x: &Matrix) -> Matrix {
    match layer {
        Layer::Dense(d) | Layer::LinearHead(d) => d.forward(x),
        Layer::Batchnorm1d(b) => b.forward_infer(x),
        Layer::Relu { .. } => relu(x),
        Layer::Softmax { .. } => softmax(x),
        Layer::Hardtanh01 { .. } => hardtanh01(x),
    }
}

/// Stacks layers with uniform `±1/sqrt(fan_in)` weight initialization.
pub struct NetworkBuilder {
    layers: Vec<Layer>,
    input_width: usize,
    width: usize,
    rng: ChaCha8Rng,
}

impl NetworkBuilder {
    pub fn new(input_width: usize, seed: u64) -> Self {
        NetworkBuilder {
            layers: Vec::new(),
            input_width,
            width: input_width,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn init_dense(&mut self, out: usize, bias: f64) -> Dense {
        let mut d = Dense::zeros(self.width, out);
        let bound = 1.0 / (self.width as f64).sqrt();
        for w in &mut d.weights {
            *w = self.rng.random_range(-bound..bound);
        }
        d.bias.iter_mut().for_each(|b| *b = bias);
        self.width = out;
        d
    }

    pub fn dense(mut self, out: usize) -> Self {
        let d = self.init_dense(out, 0.0);
        self.layers.push(Layer::Dense(d));
        self
    }

    pub fn dense_with_bias(mut self, out: usize, bias: f64) -> Self {
        let d = self.init_dense(out, bias);
        self.layers.push(Layer::Dense(d));
        self
    }

    pub fn linear_head(mut self, out: usize) -> Self {
        let d = self.init_dense(out, 0.0);
        self.layers.push(Layer::LinearHead(d));
        self
    }

    pub fn batchnorm(mut self) -> Self {
        self.layers.push(Layer::Batchnorm1d(BatchNorm1d::new(self.width)));
        self
    }

    pub fn relu(mut self) -> Self {
        self.layers.push(Layer::Relu { width: self.width });
        self
    }

    pub fn softmax(mut self) -> Self {
        self.layers.push(Layer::Softmax { width: self.width });
        self
    }

    pub fn hardtanh01(mut self) -> Self {
        self.layers.push(Layer::Hardtanh01 { width: self.width });
        self
    }

    /// `dense(width) -> batchnorm -> relu`, repeated `count` times.
    pub fn hidden_blocks(mut self, count: usize, width: usize) -> Self {
        for _ in 0..count {
            self = self.dense(width).batchnorm().relu();
        }
        self
    }

    pub fn build(self) -> Result<NetworkModel> {
        NetworkModel::new(self.layers, Standardizer::identity(self.input_width))
    }
}
