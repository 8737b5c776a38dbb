use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Probabilities are floored here before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    Mse,
}

/// Training targets matching a loss kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    /// One-hot rows.
    OneHot(Matrix),
    /// One value per row.
    Values(Vec<f64>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::OneHot(m) => m.rows(),
            Targets::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// One-hot targets from 0-based class indices.
    pub fn one_hot(classes: &[usize], p: usize) -> Self {
        let mut m = Matrix::zeros(classes.len(), p);
        for (i, &c) in classes.iter().enumerate() {
            m.row_mut(i)[c] = 1.0;
        }
        Targets::OneHot(m)
    }

    pub fn gather(&self, idx: &[usize]) -> Targets {
        match self {
            Targets::OneHot(m) => Targets::OneHot(m.gather_rows(idx)),
            Targets::Values(v) => Targets::Values(idx.iter().map(|&i| v[i]).collect()),
        }
    }
}

/// Mean over rows of `-sum_j l_j log p_j`.
pub fn loss_cross_entropy(probs: &Matrix, labels: &Matrix) -> f64 {
    let n = probs.rows().max(1) as f64;
    let total: f64 = probs
        .data()
        .iter()
        .zip(labels.data())
        .filter(|(_, l)| **l != 0.0)
        .map(|(p, l)| -l * p.max(PROB_FLOOR).ln())
        .sum();
    total / n
}

pub fn cross_entropy_grad(probs: &Matrix, labels: &Matrix) -> Matrix {
    let n = probs.rows().max(1) as f64;
    let mut g = Matrix::zeros(probs.rows(), probs.cols());
    for ((d, p), l) in g.data_mut().iter_mut().zip(probs.data()).zip(labels.data()) {
        if *l != 0.0 && *p > PROB_FLOOR {
            *d = -l / (p * n);
        }
    }
    g
}

/// Mean squared error over all entries.
pub fn loss_mse(pred: &[f64], target: &[f64]) -> f64 {
    let n = pred.len().max(1) as f64;
    pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n
}

pub fn mse_grad(pred: &Matrix, target: &[f64]) -> Matrix {
    let n = pred.data().len().max(1) as f64;
    let data = pred.data().iter().zip(target).map(|(p, t)| 2.0 * (p - t) / n).collect();
    Matrix::new(pred.rows(), pred.cols(), data).expect("same shape")
}

/// Loss and its gradient w.r.t. the network output.
pub fn loss_and_grad(kind: LossKind, out: &Matrix, targets: &Targets) -> Result<(f64, Matrix)> {
    match (kind, targets) {
        (LossKind::CrossEntropy, Targets::OneHot(l)) if l.rows() == out.rows() && l.cols() == out.cols() => {
            Ok((loss_cross_entropy(out, l), cross_entropy_grad(out, l)))
        }
        (LossKind::Mse, Targets::Values(v)) if out.cols() == 1 && v.len() == out.rows() => {
            Ok((loss_mse(out.data(), v), mse_grad(out, v)))
        }
        _ => Err(Error::InvalidInput(format!(
            "{kind:?} loss does not match targets for a {} x {} output",
            out.rows(),
            out.cols()
        ))),
    }
}

pub fn loss_value(kind: LossKind, out: &Matrix, targets: &Targets) -> Result<f64> {
    match (kind, targets) {
        (LossKind::CrossEntropy, Targets::OneHot(l)) if l.rows() == out.rows() && l.cols() == out.cols() => {
            Ok(loss_cross_entropy(out, l))
        }
        (LossKind::Mse, Targets::Values(v)) if out.cols() == 1 && v.len() == out.rows() => Ok(loss_mse(out.data(), v)),
        _ => Err(Error::InvalidInput(format!("{kind:?} loss does not match targets"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, v: &[f64]) -> Matrix {
        Matrix::new(rows, cols, v.to_vec()).unwrap()
    }

    #[test]
    fn cross_entropy_values() {
        let onehot = m(1, 5, &[0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(loss_cross_entropy(&m(1, 5, &[0.0, 1.0, 0.0, 0.0, 0.0]), &onehot), 0.0);
        let uniform = loss_cross_entropy(&m(1, 5, &[0.2; 5]), &onehot);
        assert!((uniform - 5f64.ln()).abs() < 1e-12 && (uniform - 1.60944).abs() < 1e-5);
        let half = loss_cross_entropy(&m(1, 2, &[0.5, 0.5]), &m(1, 2, &[1.0, 0.0]));
        assert!((half - 2f64.ln()).abs() < 1e-12);
        let zero_prob = loss_cross_entropy(&m(1, 2, &[1.0, 0.0]), &m(1, 2, &[0.0, 1.0]));
        assert!((zero_prob + PROB_FLOOR.ln()).abs() < 1e-12);
    }

    #[test]
    fn mse_values() {
        assert_eq!(loss_mse(&[0.3, 0.7], &[0.3, 0.7]), 0.0);
        assert_eq!(loss_mse(&[0.75], &[1.0]), 0.0625);
        assert!((loss_mse(&[0.1, 0.9], &[0.0, 1.0]) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn mismatched_targets_are_rejected() {
        let out = m(2, 1, &[0.1, 0.2]);
        assert!(loss_and_grad(LossKind::CrossEntropy, &out, &Targets::Values(vec![0.0, 1.0])).is_err());
        assert!(loss_and_grad(LossKind::Mse, &out, &Targets::Values(vec![0.0])).is_err());
    }
}
