//! Predictor architectures, training and decoding for the three prediction
//! problems: current scaling, scaling `w` ticks ahead, and the mean scaling
//! over the next `w` ticks.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::{split_episodes, ClusterModel, Dataset, WindowMode, WindowSpec};
use crate::nn::{
    fit, EpochLog, Layer, LossKind, Matrix, NetworkBuilder, NetworkModel, Standardizer, Targets, TrainConfig,
};
use crate::sim::derive_seed;

pub const HIDDEN_WIDTH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    ClassifyOneStep,
    ClassifyNStep,
    RegressOneStep,
    RegressNStep,
    AverageWindow,
}

impl TaskKind {
    pub const ALL: [TaskKind; 5] = [
        TaskKind::ClassifyOneStep,
        TaskKind::ClassifyNStep,
        TaskKind::RegressOneStep,
        TaskKind::RegressNStep,
        TaskKind::AverageWindow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::ClassifyOneStep => "classify_one_step",
            TaskKind::ClassifyNStep => "classify_n_step",
            TaskKind::RegressOneStep => "regress_one_step",
            TaskKind::RegressNStep => "regress_n_step",
            TaskKind::AverageWindow => "average_window",
        }
    }

    pub fn parse(s: &str) -> Option<TaskKind> {
        let s = if s == "average" { "average_window" } else { s };
        TaskKind::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn is_classification(self) -> bool {
        matches!(self, TaskKind::ClassifyOneStep | TaskKind::ClassifyNStep)
    }

    pub fn loss(self) -> LossKind {
        if self.is_classification() {
            LossKind::CrossEntropy
        } else {
            LossKind::Mse
        }
    }

    pub fn window_mode(self) -> WindowMode {
        match self {
            TaskKind::ClassifyOneStep | TaskKind::RegressOneStep => WindowMode::OneStep,
            TaskKind::ClassifyNStep | TaskKind::RegressNStep => WindowMode::NStep,
            TaskKind::AverageWindow => WindowMode::Average,
        }
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A task kind together with its horizon `w` in ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub w: usize,
}

impl TaskSpec {
    pub fn new(kind: TaskKind, w: usize) -> Result<Self> {
        let spec = TaskSpec { kind, w };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind.window_mode() {
            WindowMode::OneStep if self.w != 0 => Err(Error::Config(format!("{} requires w = 0", self.kind))),
            WindowMode::Average if self.w == 0 => Err(Error::Config("average_window requires w >= 1".into())),
            _ => Ok(()),
        }
    }

    pub fn window(&self) -> WindowSpec {
        WindowSpec {
            w: self.w,
            mode: self.kind.window_mode(),
        }
    }
}

/// `[dense 64, batchnorm, relu] x4 -> dense p -> softmax`.
pub fn build_classification_net(input_width: usize, p: usize, seed: u64) -> Result<NetworkModel> {
    if p < 2 {
        return Err(Error::InvalidInput(format!(
            "classification needs at least 2 classes, got {p}"
        )));
    }
    NetworkBuilder::new(input_width, seed)
        .hidden_blocks(4, HIDDEN_WIDTH)
        .dense(p)
        .softmax()
        .build()
}

/// `[dense 64, batchnorm, relu] x5 -> dense 1 -> hardtanh01`, head bias 0.5.
pub fn build_regression_net(input_width: usize, seed: u64) -> Result<NetworkModel> {
    NetworkBuilder::new(input_width, seed)
        .hidden_blocks(5, HIDDEN_WIDTH)
        .dense_with_bias(1, 0.5)
        .hardtanh01()
        .build()
}

/// `[dense 64, batchnorm, relu] x5 -> dense p -> softmax -> linear head 1`.
pub fn build_mixed_net(input_width: usize, p: usize, seed: u64) -> Result<NetworkModel> {
    if p < 2 {
        return Err(Error::InvalidInput(format!(
            "mixed net needs at least 2 classes, got {p}"
        )));
    }
    NetworkBuilder::new(input_width, seed)
        .hidden_blocks(5, HIDDEN_WIDTH)
        .dense(p)
        .softmax()
        .linear_head(1)
        .build()
}

/// Architecture for `kind` at the given input width.
pub fn build_for_task(kind: TaskKind, input_width: usize, p: usize, seed: u64) -> Result<NetworkModel> {
    match kind {
        TaskKind::ClassifyOneStep | TaskKind::ClassifyNStep => build_classification_net(input_width, p, seed),
        TaskKind::RegressOneStep | TaskKind::RegressNStep => build_regression_net(input_width, seed),
        TaskKind::AverageWindow => build_mixed_net(input_width, p, seed),
    }
}

/// Centroid of the most probable class; ties go to the lower index.
pub fn decode_argmax(probs: &[f64], centroids: &[f64]) -> f64 {
    let mut best = 0;
    for (j, p) in probs.iter().enumerate() {
        if *p > probs[best] {
            best = j;
        }
    }
    centroids[best]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedPredictor {
    pub task: TaskSpec,
    pub network: NetworkModel,
    pub cluster: ClusterModel,
    /// SHA-256 of the training dataset.
    pub dataset_fingerprint: String,
}

impl TrainedPredictor {
    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        self.network.validate()?;
        self.cluster.validate()?;
        let out = self.network.output_width();
        let expected = if self.task.kind.is_classification() {
            self.cluster.p()
        } else {
            1
        };
        if out != expected {
            return Err(Error::WidthMismatch { expected, got: out });
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.network.input_width()
    }

    /// Decoded scaling estimates, one per row of `x`.
    pub fn predict_batch(&self, x: &Matrix) -> Result<Vec<f64>> {
        let out = self.network.infer(x)?;
        Ok(match self.task.kind {
            TaskKind::ClassifyOneStep | TaskKind::ClassifyNStep => out
                .row_iter()
                .map(|r| decode_argmax(r, self.cluster.centroids()))
                .collect(),
            TaskKind::RegressOneStep | TaskKind::RegressNStep => out.into_data(),
            TaskKind::AverageWindow => out.into_data().into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        })
    }

    pub fn predict_scaling(&self, x: &[f64]) -> Result<f64> {
        let m = Matrix::new(1, x.len(), x.to_vec())?;
        if x.len() != self.input_width() {
            return Err(Error::WidthMismatch {
                expected: self.input_width(),
                got: x.len(),
            });
        }
        Ok(self.predict_batch(&m)?[0])
    }

    /// Predictions for every row of a dataset built for this task.
    pub fn predict_dataset(&self, ds: &Dataset) -> Result<Vec<f64>> {
        self.check_dataset(ds)?;
        self.predict_batch(&features_matrix(ds)?)
    }

    pub fn check_dataset(&self, ds: &Dataset) -> Result<()> {
        if ds.window != self.task.window() {
            return Err(Error::TaskMismatch(format!(
                "predictor expects {:?}, dataset has {:?}",
                self.task.window(),
                ds.window
            )));
        }
        if ds.width != self.input_width() {
            return Err(Error::WidthMismatch {
                expected: self.input_width(),
                got: ds.width,
            });
        }
        if self.task.kind.is_classification() {
            let p = self.cluster.p();
            if let Some(c) = ds
                .target_cluster
                .iter()
                .find(|c| !c.is_some_and(|c| (1..=p).contains(&c)))
            {
                return Err(Error::TaskMismatch(format!("cluster label {c:?} outside 1..={p}")));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let p: TrainedPredictor = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        p.validate()?;
        Ok(p)
    }
}

pub fn features_matrix(ds: &Dataset) -> Result<Matrix> {
    Matrix::new(ds.len(), ds.width, ds.features.clone())
}

fn targets(kind: TaskKind, ds: &Dataset, p: usize) -> Result<Targets> {
    if kind.is_classification() {
        let mut classes = Vec::with_capacity(ds.len());
        for c in &ds.target_cluster {
            match c {
                Some(c) if (1..=p).contains(c) => classes.push(c - 1),
                _ => return Err(Error::TaskMismatch(format!("cluster label {c:?} outside 1..={p}"))),
            }
        }
        Ok(Targets::one_hot(&classes, p))
    } else {
        Ok(Targets::Values(ds.target_s.clone()))
    }
}

#[derive(Debug, Clone)]
pub struct TrainedTask {
    pub predictor: TrainedPredictor,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
}

/// Trains the architecture for `spec` on `ds`.
///
/// A share of the episodes is held out for early stopping, the standardizer
/// is fitted on the remaining rows and `cfg.row_stride` thins them. The
/// mixed net's head starts as the centroid mixture `Σ p_i c_i`.
pub fn train_task(spec: TaskSpec, ds: &Dataset, cluster: &ClusterModel, cfg: &TrainConfig) -> Result<TrainedTask> {
    spec.validate()?;
    cfg.validate()?;
    if ds.window != spec.window() {
        return Err(Error::TaskMismatch(format!(
            "{} expects {:?}, dataset has {:?}",
            spec.kind,
            spec.window(),
            ds.window
        )));
    }
    if ds.width != ds.window.input_width() && ds.width != 6 {
        return Err(Error::TaskMismatch(format!("unsupported feature width {}", ds.width)));
    }
    if ds.is_empty() {
        return Err(Error::EmptyDataset(format!("no rows for {}", spec.kind)));
    }
    let p = cluster.p();

    let episodes = ds.episodes();
    let (fit_ds, val_ds) = if episodes.len() >= 2 {
        let (keep, _) = split_episodes(&episodes, 1.0 - cfg.validation_fraction, derive_seed(cfg.seed, 1))?;
        let keep: HashSet<u32> = keep.into_iter().collect();
        (
            ds.filter_episodes(&keep),
            Some(ds.select(|i| !keep.contains(&ds.episode[i]))),
        )
    } else {
        (ds.clone(), None)
    };
    let fit_ds = fit_ds.subsample(cfg.row_stride);
    if fit_ds.len() < 2 {
        return Err(Error::EmptyDataset(format!(
            "fewer than two training rows for {}",
            spec.kind
        )));
    }

    let x = features_matrix(&fit_ds)?;
    let y = targets(spec.kind, &fit_ds, p)?;
    let mut model = build_for_task(spec.kind, ds.width, p, derive_seed(cfg.seed, 0))?;
    model.standardizer = Standardizer::fit(&x);
    if spec.kind == TaskKind::AverageWindow {
        if let Some(Layer::LinearHead(head)) = model.layers.last_mut() {
            head.weights.copy_from_slice(cluster.centroids());
            head.bias[0] = 0.0;
        }
    }

    let val = match &val_ds {
        Some(v) if !v.is_empty() => Some((features_matrix(v)?, targets(spec.kind, v, p)?)),
        _ => None,
    };
    let mut fit_cfg = cfg.clone();
    fit_cfg.seed = derive_seed(cfg.seed, 2);
    let outcome = fit(
        model,
        &x,
        &y,
        val.as_ref().map(|(a, b)| (a, b)),
        spec.kind.loss(),
        &fit_cfg,
    )?;
    let mut network = outcome.model;
    network.meta.seed = cfg.seed;

    let predictor = TrainedPredictor {
        task: spec,
        network,
        cluster: cluster.clone(),
        dataset_fingerprint: ds.fingerprint(),
    };
    predictor.validate()?;
    Ok(TrainedTask {
        predictor,
        log: outcome.log,
        best_epoch: outcome.best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerKind;

    const LEVELS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

    fn closed_form_params(input: usize, hidden: usize, blocks: usize, out: usize) -> (usize, usize) {
        let dense = input * hidden + hidden + (blocks - 1) * (hidden * hidden + hidden) + hidden * out + out;
        (dense, blocks * 2 * hidden)
    }

    fn count(m: &NetworkModel, kinds: &[LayerKind]) -> usize {
        m.layers
            .iter()
            .filter(|l| kinds.contains(&l.kind()))
            .map(|l| l.param_count())
            .sum()
    }

    #[test]
    fn classification_parameter_audit() {
        let m = build_classification_net(6, 5, 1).unwrap();
        let (dense, bn) = closed_form_params(6, 64, 4, 5);
        assert_eq!(dense, 13253);
        assert_eq!(bn, 512);
        assert_eq!(count(&m, &[LayerKind::Dense]), dense);
        assert_eq!(count(&m, &[LayerKind::Batchnorm1d]), bn);
        assert_eq!(m.output_width(), 5);
        assert_eq!(build_classification_net(12, 5, 1).unwrap().input_width(), 12);
    }

    #[test]
    fn untrained_classifier_rows_are_distributions() {
        let m = build_classification_net(6, 5, 3).unwrap();
        let x = Matrix::new(3, 6, (0..18).map(|i| i as f64 * 0.3 - 2.0).collect()).unwrap();
        for row in m.infer(&x).unwrap().row_iter() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_regression_net_outputs_head_bias() {
        let mut m = build_regression_net(12, 0).unwrap();
        let n = m.layers.len();
        for (i, layer) in m.layers.iter_mut().enumerate() {
            if let Layer::Dense(d) = layer {
                d.weights.iter_mut().for_each(|w| *w = 0.0);
                if i != n - 2 {
                    d.bias.iter_mut().for_each(|b| *b = 0.0);
                }
            }
        }
        let x = Matrix::new(2, 12, vec![0.4; 24]).unwrap();
        assert_eq!(m.infer(&x).unwrap().data(), &[0.5, 0.5]);
        let (dense, _) = closed_form_params(12, 64, 5, 1);
        assert_eq!(count(&m, &[LayerKind::Dense]), dense);
    }

    #[test]
    fn mixed_head_with_centroid_weights_is_mixture() {
        let mut m = build_mixed_net(12, 5, 4).unwrap();
        let n = m.layers.len();
        if let Layer::LinearHead(h) = &mut m.layers[n - 1] {
            h.weights.copy_from_slice(&LEVELS);
            h.bias[0] = 0.0;
        }
        let x = Matrix::new(4, 12, (0..48).map(|i| (i as f64).sin()).collect()).unwrap();
        let pass = m.forward(&x, crate::nn::Mode::Infer).unwrap();
        let probs = &pass.layer_inputs()[n - 1];
        for (r, out) in probs.row_iter().zip(pass.output().data()) {
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let mix: f64 = r.iter().zip(LEVELS).map(|(p, c)| p * c).sum();
            assert!((mix - out).abs() < 1e-12);
        }
    }

    #[test]
    fn argmax_decode() {
        assert_eq!(decode_argmax(&[0.1, 0.6, 0.1, 0.1, 0.1], &LEVELS), 0.25);
        assert_eq!(decode_argmax(&[0.5, 0.5, 0.0, 0.0, 0.0], &LEVELS), 0.0);
        assert_eq!(decode_argmax(&[0.0, 0.0, 0.0, 0.3, 0.3], &LEVELS), 0.75);
    }

    #[test]
    fn average_output_is_clamped() {
        let mut m = build_mixed_net(12, 5, 2).unwrap();
        let n = m.layers.len();
        if let Layer::LinearHead(h) = &mut m.layers[n - 1] {
            h.weights.iter_mut().for_each(|w| *w = 0.0);
            h.bias[0] = 1.07;
        }
        let p = TrainedPredictor {
            task: TaskSpec::new(TaskKind::AverageWindow, 140).unwrap(),
            network: m,
            cluster: ClusterModel::new(0.02, 10, LEVELS.to_vec()).unwrap(),
            dataset_fingerprint: String::new(),
        };
        assert_eq!(p.predict_scaling(&[0.0; 12]).unwrap(), 1.0);
        assert!(matches!(p.predict_scaling(&[0.0; 6]), Err(Error::WidthMismatch { .. })));
    }

    #[test]
    fn task_spec_rules() {
        assert!(TaskSpec::new(TaskKind::ClassifyOneStep, 3).is_err());
        assert!(TaskSpec::new(TaskKind::AverageWindow, 0).is_err());
        assert!(TaskSpec::new(TaskKind::RegressNStep, 20).is_ok());
        assert_eq!(TaskKind::parse("average"), Some(TaskKind::AverageWindow));
        assert_eq!(TaskKind::parse("regress_n_step"), Some(TaskKind::RegressNStep));
        assert!(build_classification_net(6, 1, 0).is_err());
    }
}
