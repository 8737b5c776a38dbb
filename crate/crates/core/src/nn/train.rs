use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::loss::{loss_and_grad, loss_value, LossKind, Targets};
use super::matrix::Matrix;
use super::network::{Mode, NetworkModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping; absent disables early stopping.
    #[serde(default)]
    pub patience: Option<usize>,
    /// Share of training episodes held out for validation.
    pub validation_fraction: f64,
    /// Keep every n-th training row of each episode.
    #[serde(default = "one")]
    pub row_stride: usize,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && self.beta1 > 0.0
            && (0.0..1.0).contains(&self.beta2)
            && self.beta2 > 0.0
            && self.epsilon > 0.0
            && self.batch_size >= 2
            && self.max_epochs >= 1
            && self.patience != Some(0)
            && self.validation_fraction > 0.0
            && self.validation_fraction <= 0.5
            && self.row_stride >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid training configuration: {self:?}")))
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    /// Equals the training loss when no validation rows exist.
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: NetworkModel,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
}

/// Mini-batch Adam training with early stopping on validation loss.
///
/// Batches are reshuffled every epoch from `cfg.seed`; a trailing batch of a
/// single row is dropped since batch statistics need two rows.
pub fn fit(
    mut model: NetworkModel,
    x: &Matrix,
    y: &Targets,
    validation: Option<(&Matrix, &Targets)>,
    loss: LossKind,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if x.rows() < 2 || y.len() != x.rows() {
        return Err(Error::EmptyDataset(
            "training needs at least two rows with matching targets".into(),
        ));
    }
    let mut adam = Adam::new(cfg.adam(), &model);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..x.rows()).collect();
    let mut log = Vec::new();
    let mut best: Option<(f64, usize, NetworkModel)> = None;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut seen = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            if batch.len() < 2 {
                continue;
            }
            let bx = x.gather_rows(batch);
            let by = y.gather(batch);
            let pass = model.forward(&bx, Mode::Train)?;
            let (l, dout) = loss_and_grad(loss, pass.output(), &by)?;
            let grads = model.backward(&pass, &dout)?;
            model.commit_batch_stats(&pass);
            adam.step(&mut model, &grads);
            total += l * batch.len() as f64;
            seen += batch.len();
        }
        let train_loss = total / seen as f64;
        if !train_loss.is_finite() {
            return Err(Error::InvalidInput(format!("training diverged at epoch {epoch}")));
        }
        let val_loss = match validation {
            Some((vx, vy)) if vx.rows() > 0 => loss_value(loss, &model.infer(vx)?, vy)?,
            _ => train_loss,
        };
        log.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
        });
        if best.as_ref().is_none_or(|(b, _, _)| val_loss < *b) {
            best = Some((val_loss, epoch, model.clone()));
        }
        let best_epoch = best.as_ref().map_or(epoch, |b| b.1);
        if cfg.patience.is_some_and(|p| epoch - best_epoch >= p) {
            break;
        }
    }

    let (_, best_epoch, mut best_model) = best.expect("at least one epoch");
    best_model.meta.seed = cfg.seed;
    best_model.meta.epochs_run = log.len();
    best_model.meta.best_epoch = best_epoch;
    Ok(TrainOutcome {
        model: best_model,
        log,
        best_epoch,
    })
}
