use serde::{Deserialize, Serialize};

use super::matrix::{matmul, matmul_at, matmul_bt, Matrix};

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Dense,
    Batchnorm1d,
    Relu,
    Softmax,
    Hardtanh01,
    LinearHead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_width: usize,
    pub out_width: usize,
}

/// Fully connected layer, `y = x W^T + b` with `W` stored `out x in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub in_width: usize,
    pub out_width: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(in_width: usize, out_width: usize) -> Self {
        Dense {
            in_width,
            out_width,
            weights: vec![0.0; in_width * out_width],
            bias: vec![0.0; out_width],
        }
    }

    pub(crate) fn forward(&self, x: &Matrix) -> Matrix {
        let mut y = matmul_bt(x, &self.weights, self.out_width);
        for row in y.data_mut().chunks_mut(self.out_width) {
            for (v, b) in row.iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        y
    }

    /// Returns `(dx, dW, db)`.
    pub(crate) fn backward(&self, x: &Matrix, dy: &Matrix) -> (Matrix, Vec<f64>, Vec<f64>) {
        let mut dw = vec![0.0; self.weights.len()];
        matmul_at(dy, x, &mut dw);
        let mut db = vec![0.0; self.out_width];
        for row in dy.row_iter() {
            for (g, d) in db.iter_mut().zip(row) {
                *g += d;
            }
        }
        (matmul(dy, &self.weights, self.in_width), dw, db)
    }
}

/// Batch normalization over the batch axis with learnable gain and shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm1d {
    pub width: usize,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct BnCache {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub xhat: Matrix,
    pub inv_std: Vec<f64>,
}

impl BatchNorm1d {
    pub fn new(width: usize) -> Self {
        BatchNorm1d {
            width,
            gamma: vec![1.0; width],
            beta: vec![0.0; width],
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
        }
    }

    pub(crate) fn forward_train(&self, x: &Matrix) -> (Matrix, BnCache) {
        let n = x.rows() as f64;
        let w = self.width;
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
        var.iter_mut().for_each(|s| *s /= n);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let mut xhat = x.clone();
        let mut y = x.clone();
        for (hrow, yrow) in xhat.data_mut().chunks_mut(w).zip(y.data_mut().chunks_mut(w)) {
            for j in 0..w {
                let h = (hrow[j] - mean[j]) * inv_std[j];
                hrow[j] = h;
                yrow[j] = self.gamma[j] * h + self.beta[j];
            }
        }
        (
            y,
            BnCache {
                mean,
                var,
                xhat,
                inv_std,
            },
        )
    }

    pub(crate) fn forward_infer(&self, x: &Matrix) -> Matrix {
        let w = self.width;
        let scale: Vec<f64> = (0..w)
            .map(|j| self.gamma[j] / (self.running_var[j] + self.eps).sqrt())
            .collect();
        let mut y = x.clone();
        for row in y.data_mut().chunks_mut(w) {
            for j in 0..w {
                row[j] = (row[j] - self.running_mean[j]) * scale[j] + self.beta[j];
            }
        }
        y
    }

    /// Exponential moving update; the variance uses the unbiased estimate.
    pub(crate) fn update_running(&mut self, cache: &BnCache, batch: usize) {
        let unbias = if batch > 1 {
            batch as f64 / (batch as f64 - 1.0)
        } else {
            1.0
        };
        for j in 0..self.width {
            self.running_mean[j] = (1.0 - self.momentum) * self.running_mean[j] + self.momentum * cache.mean[j];
            self.running_var[j] = (1.0 - self.momentum) * self.running_var[j] + self.momentum * cache.var[j] * unbias;
        }
    }

    /// Returns `(dx, dgamma, dbeta)`.
    pub(crate) fn backward(&self, cache: &BnCache, dy: &Matrix) -> (Matrix, Vec<f64>, Vec<f64>) {
        let w = self.width;
        let n = dy.rows() as f64;
        let mut dgamma = vec![0.0; w];
        let mut dbeta = vec![0.0; w];
        for (drow, hrow) in dy.row_iter().zip(cache.xhat.row_iter()) {
            for j in 0..w {
                dgamma[j] += drow[j] * hrow[j];
                dbeta[j] += drow[j];
            }
        }
        // with dxhat = dy * gamma:
        // dx = inv_std / n * (n dxhat - sum(dxhat) - xhat * sum(dxhat * xhat))
        let mut dx = dy.clone();
        for (drow, hrow) in dx.data_mut().chunks_mut(w).zip(cache.xhat.row_iter()) {
            for j in 0..w {
                let g = self.gamma[j];
                drow[j] = cache.inv_std[j] / n * (n * g * drow[j] - g * dbeta[j] - hrow[j] * g * dgamma[j]);
            }
        }
        (dx, dgamma, dbeta)
    }
}

pub(crate) fn relu(x: &Matrix) -> Matrix {
    x.map(|v| v.max(0.0))
}

pub(crate) fn relu_backward(x: &Matrix, dy: &Matrix) -> Matrix {
    let mut dx = dy.clone();
    for (d, v) in dx.data_mut().iter_mut().zip(x.data()) {
        if *v <= 0.0 {
            *d = 0.0;
        }
    }
    dx
}

pub(crate) fn hardtanh01(x: &Matrix) -> Matrix {
    x.map(|v| v.clamp(0.0, 1.0))
}

pub(crate) fn hardtanh01_backward(x: &Matrix, dy: &Matrix) -> Matrix {
    let mut dx = dy.clone();
    for (d, v) in dx.data_mut().iter_mut().zip(x.data()) {
        if !(*v > 0.0 && *v < 1.0) {
            *d = 0.0;
        }
    }
    dx
}

pub(crate) fn softmax(x: &Matrix) -> Matrix {
    let mut y = x.clone();
    let w = x.cols();
    for row in y.data_mut().chunks_mut(w) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    y
}

/// Backward through softmax given its output `y`.
pub(crate) fn softmax_backward(y: &Matrix, dy: &Matrix) -> Matrix {
    let mut dx = dy.clone();
    let w = y.cols();
    for (drow, yrow) in dx.data_mut().chunks_mut(w).zip(y.row_iter()) {
        let dot: f64 = drow.iter().zip(yrow).map(|(d, p)| d * p).sum();
        for (d, p) in drow.iter_mut().zip(yrow) {
            *d = p * (*d - dot);
        }
    }
    dx
}

/// A network layer with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    Dense(Dense),
    Batchnorm1d(BatchNorm1d),
    Relu {
        width: usize,
    },
    Softmax {
        width: usize,
    },
    Hardtanh01 {
        width: usize,
    },
    /// Unconstrained linear output layer.
    LinearHead(Dense),
}

impl Layer {
    pub fn spec(&self) -> LayerSpec {
        let (kind, i, o) = match self {
            Layer::Dense(d) => (LayerKind::Dense, d.in_width, d.out_width),
            Layer::LinearHead(d) => (LayerKind::LinearHead, d.in_width, d.out_width),
            Layer::Batchnorm1d(b) => (LayerKind::Batchnorm1d, b.width, b.width),
            Layer::Relu { width } => (LayerKind::Relu, *width, *width),
            Layer::Softmax { width } => (LayerKind::Softmax, *width, *width),
            Layer::Hardtanh01 { width } => (LayerKind::Hardtanh01, *width, *width),
        };
        LayerSpec {
            kind,
            in_width: i,
            out_width: o,
        }
    }

    pub fn kind(&self) -> LayerKind {
        self.spec().kind
    }

    pub fn in_width(&self) -> usize {
        self.spec().in_width
    }

    pub fn out_width(&self) -> usize {
        self.spec().out_width
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Dense(d) | Layer::LinearHead(d) => d.weights.len() + d.bias.len(),
            Layer::Batchnorm1d(b) => 2 * b.width,
            _ => 0,
        }
    }
}
