//! Run configuration: one TOML document with named sections.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::SweepMode;
use crate::nn::TrainConfig;
use crate::sim::{derive_seed, SceneConfig};
use crate::tasks::{TaskKind, TaskSpec};

/// The configuration shipped with the crate.
pub const DEFAULT_CONFIG: &str = include_str!("../configs/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSection {
    pub episodes: usize,
    #[serde(default)]
    pub parallel: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelingSection {
    pub eps: f64,
    pub min_pts: usize,
    pub train_fraction: f64,
    pub deltas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSection {
    pub heatmap_cell: f64,
    pub boundary_margin: f64,
    pub sweep_mode: SweepMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskEntry {
    pub name: String,
    pub kind: TaskKind,
    #[serde(default)]
    pub w: usize,
    /// Run the noise sweep for this task.
    #[serde(default)]
    pub sweep: bool,
    /// Emit a spatial heatmap for this task.
    #[serde(default)]
    pub heatmap: bool,
    /// Also train a copy without the goal columns.
    #[serde(default)]
    pub goal_ablation: bool,
}

impl TaskEntry {
    pub fn spec(&self) -> Result<TaskSpec> {
        TaskSpec::new(self.kind, self.w)
    }
}

/// Externally recorded trace in the campaign CSV format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImportSection {
    pub name: String,
    /// Relative paths resolve against the config file's directory.
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub campaign: CampaignSection,
    pub scene: SceneConfig,
    pub labeling: LabelingSection,
    pub training: TrainConfig,
    pub evaluation: EvaluationSection,
    pub tasks: Vec<TaskEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub import: Option<ImportSection>,
}

/// Stage seeds derived from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSeeds {
    pub master: u64,
    pub simulate: u64,
    pub split: u64,
    pub noise: u64,
    pub train: u64,
}

impl StageSeeds {
    pub fn from_master(master: u64) -> Self {
        StageSeeds {
            master,
            simulate: derive_seed(master, 1),
            split: derive_seed(master, 2),
            noise: derive_seed(master, 3),
            train: derive_seed(master, 4),
        }
    }

    /// Training seed for the `index`-th model of a run.
    pub fn train_seed(&self, index: u64) -> u64 {
        derive_seed(self.train, index)
    }
}

impl RunConfig {
    pub fn builtin() -> Self {
        Self::from_toml_str(DEFAULT_CONFIG, Path::new("<builtin>")).expect("bundled config is valid")
    }

    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(format!("{}: {e}", origin.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text, path)?;
        if let Some(imp) = &mut cfg.import {
            if imp.path.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                imp.path = base.join(&imp.path);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidInput(e.to_string()))
    }

    pub fn seeds(&self) -> StageSeeds {
        StageSeeds::from_master(self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.campaign.episodes == 0 {
            return Err(Error::Config("campaign.episodes must be >= 1".into()));
        }
        self.scene.validate()?;
        let l = &self.labeling;
        if !(l.eps > 0.0 && l.eps.is_finite()) || l.min_pts == 0 {
            return Err(Error::Config("labeling needs eps > 0 and min_pts >= 1".into()));
        }
        if !(l.train_fraction > 0.0 && l.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction must be in (0, 1), got {}",
                l.train_fraction
            )));
        }
        if l.deltas.is_empty()
            || l.deltas.iter().any(|d| !(d.is_finite() && *d >= 0.0))
            || l.deltas.windows(2).any(|w| w[0] > w[1])
        {
            return Err(Error::Config(format!(
                "deltas must be non-negative and ascending, got {:?}",
                l.deltas
            )));
        }
        self.training.validate()?;
        let e = &self.evaluation;
        let cell_ok = e.heatmap_cell > 0.0 && e.heatmap_cell.is_finite();
        if !cell_ok || e.boundary_margin.is_nan() || e.boundary_margin < 0.0 {
            return Err(Error::Config(
                "evaluation needs heatmap_cell > 0 and boundary_margin >= 0".into(),
            ));
        }
        let mut names = HashSet::new();
        for t in &self.tasks {
            t.spec()?;
            if t.name.is_empty()
                || !t
                    .name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            {
                return Err(Error::Config(format!("task name {:?} must be [A-Za-z0-9_-]+", t.name)));
            }
            if !names.insert(t.name.as_str()) {
                return Err(Error::Config(format!("duplicate task name {:?}", t.name)));
            }
            if t.goal_ablation && t.kind.window_mode() == crate::labeling::WindowMode::OneStep {
                return Err(Error::Config(format!(
                    "task {}: one-step inputs carry no goals to ablate",
                    t.name
                )));
            }
        }
        if let Some(imp) = &self.import {
            if imp.name.is_empty() {
                return Err(Error::Config("import.name must not be empty".into()));
            }
        }
        Ok(())
    }
}
