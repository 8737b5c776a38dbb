//! Test metrics, noise sweeps, spatial heatmaps and report files.

mod heatmap;
mod report;

pub use heatmap::{make_heatmap, HeatmapGrid};
pub use report::{render_report, write_heatmap, NStepRow};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::{Dataset, NoiseSpec};
use crate::safety::StaircaseSafetyFunction;
use crate::sim::derive_seed;
use crate::tasks::{TaskSpec, TrainedPredictor};

/// Ground-truth context for boundary-excluded accuracy.
#[derive(Debug, Clone)]
pub struct EvalContext {
    pub safety: StaircaseSafetyFunction,
    /// Rows closer than this to any threshold are excluded.
    pub boundary_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub predictor: String,
    pub task: TaskSpec,
    pub dataset_fingerprint: String,
    pub delta: f64,
    pub mse: f64,
    pub accuracy: Option<f64>,
    pub boundary_excluded_accuracy: Option<f64>,
    /// Rows that entered the boundary-excluded accuracy.
    pub boundary_rows: usize,
    pub rows: usize,
}

fn evaluate_predictions(
    name: &str,
    predictor: &TrainedPredictor,
    ds: &Dataset,
    pred: &[f64],
    ctx: &EvalContext,
) -> Result<EvalReport> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset("no test rows to evaluate".into()));
    }
    let n = ds.len();
    let mse = pred
        .iter()
        .zip(&ds.target_s)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n as f64;
    let (mut accuracy, mut bea, mut boundary_rows) = (None, None, 0);
    if predictor.task.kind.is_classification() {
        let mut hits = 0usize;
        let mut far_hits = 0usize;
        for ((p, target), &sep) in pred.iter().zip(&ds.target_cluster).zip(&ds.separation) {
            let correct = target.is_some_and(|c| predictor.cluster.centroid(c) == *p);
            hits += correct as usize;
            if sep.is_finite() && ctx.safety.threshold_margin(sep) >= ctx.boundary_margin {
                boundary_rows += 1;
                far_hits += correct as usize;
            }
        }
        accuracy = Some(hits as f64 / n as f64);
        if boundary_rows > 0 {
            bea = Some(far_hits as f64 / boundary_rows as f64);
        }
    }
    Ok(EvalReport {
        predictor: name.to_string(),
        task: predictor.task,
        dataset_fingerprint: ds.fingerprint(),
        delta: 0.0,
        mse,
        accuracy,
        boundary_excluded_accuracy: bea,
        boundary_rows,
        rows: n,
    })
}

/// MSE of the decoded predictions against the scaling targets, plus exact and
/// boundary-excluded accuracy for classifiers.
pub fn evaluate(name: &str, predictor: &TrainedPredictor, ds: &Dataset, ctx: &EvalContext) -> Result<EvalReport> {
    let pred = predictor.predict_dataset(ds)?;
    evaluate_predictions(name, predictor, ds, &pred, ctx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    EvalOnly,
    Retrain,
}

/// One predictor's MSE at each noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSweep {
    pub predictor: String,
    pub mode: SweepMode,
    pub rows: Vec<EvalReport>,
}

impl NoiseSweep {
    pub fn average_mse(&self) -> f64 {
        self.rows.iter().map(|r| r.mse).sum::<f64>() / self.rows.len() as f64
    }
}

fn check_deltas(deltas: &[f64]) -> Result<()> {
    if deltas.is_empty()
        || deltas.iter().any(|d| !(d.is_finite() && *d >= 0.0))
        || deltas.windows(2).any(|w| w[0] > w[1])
    {
        return Err(Error::Config(format!(
            "deltas must be non-negative and ascending, got {deltas:?}"
        )));
    }
    Ok(())
}

/// Noise stream for the test inputs at sweep position `k`.
pub fn test_noise(delta: f64, seed: u64, k: usize) -> NoiseSpec {
    NoiseSpec {
        delta,
        seed: derive_seed(seed, 2 * k as u64 + 1),
    }
}

/// Noise stream for the training inputs at sweep position `k`.
pub fn train_noise(delta: f64, seed: u64, k: usize) -> NoiseSpec {
    NoiseSpec {
        delta,
        seed: derive_seed(seed, 2 * k as u64),
    }
}

/// Evaluates a fixed predictor on test inputs perturbed at each `delta`.
pub fn noise_sweep_eval_only(
    name: &str,
    predictor: &TrainedPredictor,
    test: &Dataset,
    deltas: &[f64],
    seed: u64,
    ctx: &EvalContext,
) -> Result<NoiseSweep> {
    check_deltas(deltas)?;
    let mut rows = Vec::with_capacity(deltas.len());
    for (k, &delta) in deltas.iter().enumerate() {
        let noisy = test.with_human_noise(&test_noise(delta, seed, k))?;
        let mut r = evaluate(name, predictor, &noisy, ctx)?;
        r.delta = delta;
        rows.push(r);
    }
    Ok(NoiseSweep {
        predictor: name.to_string(),
        mode: SweepMode::EvalOnly,
        rows,
    })
}

/// Trains and tests one model per `delta`, with noise injected into both
/// training and test inputs. `train` receives the noisy training set.
pub fn noise_sweep_retrain(
    name: &str,
    train_set: &Dataset,
    test: &Dataset,
    deltas: &[f64],
    seed: u64,
    ctx: &EvalContext,
    mut train: impl FnMut(f64, &Dataset) -> Result<TrainedPredictor>,
) -> Result<(NoiseSweep, Vec<TrainedPredictor>)> {
    check_deltas(deltas)?;
    let mut rows = Vec::with_capacity(deltas.len());
    let mut models = Vec::with_capacity(deltas.len());
    for (k, &delta) in deltas.iter().enumerate() {
        let noisy_train = train_set.with_human_noise(&train_noise(delta, seed, k))?;
        let predictor = train(delta, &noisy_train)?;
        let noisy_test = test.with_human_noise(&test_noise(delta, seed, k))?;
        let mut r = evaluate(name, &predictor, &noisy_test, ctx)?;
        r.delta = delta;
        rows.push(r);
        models.push(predictor);
    }
    Ok((
        NoiseSweep {
            predictor: name.to_string(),
            mode: SweepMode::Retrain,
            rows,
        },
        models,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeling::{ClusterModel, WindowSpec};
    use crate::nn::{Layer, NetworkBuilder};
    use crate::tasks::TaskKind;

    fn ctx() -> EvalContext {
        EvalContext {
            safety: StaircaseSafetyFunction::simulation_default(),
            boundary_margin: 0.05,
        }
    }

    /// Regressor whose output is the constant `c`.
    fn constant(c: f64) -> TrainedPredictor {
        let mut m = NetworkBuilder::new(6, 0)
            .dense_with_bias(1, c)
            .hardtanh01()
            .build()
            .unwrap();
        if let Layer::Dense(d) = &mut m.layers[0] {
            d.weights.iter_mut().for_each(|w| *w = 0.0);
        }
        TrainedPredictor {
            task: TaskSpec::new(TaskKind::RegressOneStep, 0).unwrap(),
            network: m,
            cluster: ClusterModel::new(0.02, 10, vec![0.0, 1.0]).unwrap(),
            dataset_fingerprint: String::new(),
        }
    }

    fn dataset(targets: &[f64]) -> Dataset {
        let n = targets.len();
        Dataset {
            window: WindowSpec::one_step(),
            width: 6,
            features: (0..n * 6).map(|i| i as f64 * 0.01).collect(),
            target_s: targets.to_vec(),
            target_cluster: targets.iter().map(|t| Some(if *t < 0.5 { 1 } else { 2 })).collect(),
            episode: (0..n as u32).collect(),
            t: vec![0.0; n],
            separation: vec![1.0; n],
            skipped_episodes: vec![],
        }
    }

    #[test]
    fn constant_half_on_balanced_binary_targets() {
        let r = evaluate("c", &constant(0.5), &dataset(&[0.0, 1.0, 0.0, 1.0]), &ctx()).unwrap();
        assert_eq!(r.mse, 0.25);
        assert_eq!(r.rows, 4);
        assert_eq!(r.accuracy, None);
    }

    #[test]
    fn empty_test_set_is_an_error() {
        assert!(matches!(
            evaluate("c", &constant(0.5), &dataset(&[]), &ctx()),
            Err(Error::EmptyDataset(_))
        ));
    }

    #[test]
    fn zero_delta_sweep_matches_plain_evaluation() {
        let ds = dataset(&[0.1, 0.4, 0.9]);
        let p = constant(0.3);
        let plain = evaluate("c", &p, &ds, &ctx()).unwrap();
        let sweep = noise_sweep_eval_only("c", &p, &ds, &[0.0], 9, &ctx()).unwrap();
        assert_eq!(sweep.rows[0].mse.to_bits(), plain.mse.to_bits());
        assert!(noise_sweep_eval_only("c", &p, &ds, &[0.05, 0.0], 9, &ctx()).is_err());
    }
}
