//! Staircase safety speed-scaling law.
//!
//! The scaling factor is a piecewise-constant function of the human-robot
//! separation `d`. With thresholds `d_1 < ... < d_{P-1}` and levels
//! `s_1 < ... < s_P` the intervals are right-closed:
//!
//! ```text
//! D_1 = [0, d_1],  D_p = (d_{p-1}, d_p],  D_P = (d_{P-1}, +inf)
//! ```
//!
//! so a separation exactly on a threshold maps to the slower level.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Position3;

/// The separation measure between robot and human.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    #[default]
    Euclidean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawStaircase", into = "RawStaircase")]
pub struct StaircaseSafetyFunction {
    levels: Vec<f64>,
    thresholds: Vec<f64>,
    metric: DistanceMetric,
}

#[derive(Serialize, Deserialize)]
struct RawStaircase {
    levels: Vec<f64>,
    thresholds: Vec<f64>,
    #[serde(default)]
    metric: DistanceMetric,
}

impl TryFrom<RawStaircase> for StaircaseSafetyFunction {
    type Error = Error;
    fn try_from(raw: RawStaircase) -> Result<Self> {
        let mut f = StaircaseSafetyFunction::new(raw.levels, raw.thresholds)?;
        f.metric = raw.metric;
        Ok(f)
    }
}

impl From<StaircaseSafetyFunction> for RawStaircase {
    fn from(f: StaircaseSafetyFunction) -> Self {
        RawStaircase {
            levels: f.levels,
            thresholds: f.thresholds,
            metric: f.metric,
        }
    }
}

impl StaircaseSafetyFunction {
    pub fn new(levels: Vec<f64>, thresholds: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Config("safety function needs at least one level".into()));
        }
        if levels.len() != thresholds.len() + 1 {
            return Err(Error::Config(format!(
                "safety function has {} levels but {} thresholds; expected levels = thresholds + 1",
                levels.len(),
                thresholds.len()
            )));
        }
        if levels.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::Config("safety levels must lie in [0, 1]".into()));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("safety levels must be strictly increasing".into()));
        }
        if thresholds.iter().any(|d| !d.is_finite() || *d <= 0.0) {
            return Err(Error::Config("safety thresholds must be finite and positive".into()));
        }
        if thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("safety thresholds must be strictly increasing".into()));
        }
        Ok(StaircaseSafetyFunction {
            levels,
            thresholds,
            metric: DistanceMetric::Euclidean,
        })
    }

    /// The simulated cell's law: levels {0, .25, .5, .75, 1} split at 1.2, 1.5, 1.9 and 2.4 m.
    pub fn simulation_default() -> Self {
        StaircaseSafetyFunction::new(vec![0.0, 0.25, 0.5, 0.75, 1.0], vec![1.2, 1.5, 1.9, 2.4])
            .expect("valid built-in staircase")
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn metric(&self) -> DistanceMetric {
        self.metric
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn separation(&self, xr: &Position3, xh: &Position3) -> Result<f64> {
        if !xr.is_finite() || !xh.is_finite() {
            return Err(Error::InvalidInput("non-finite position".into()));
        }
        match self.metric {
            DistanceMetric::Euclidean => Ok(xr.distance(xh)),
        }
    }

    /// Zero-based index of the interval that contains separation `d`.
    pub fn level_index(&self, d: f64) -> Result<usize> {
        if !d.is_finite() || d < 0.0 {
            return Err(Error::InvalidInput(format!(
                "separation must be finite and non-negative, got {d}"
            )));
        }
        Ok(self.thresholds.partition_point(|&t| t < d))
    }

    pub fn eval_by_distance(&self, d: f64) -> Result<f64> {
        Ok(self.levels[self.level_index(d)?])
    }

    pub fn eval(&self, xr: &Position3, xh: &Position3) -> Result<f64> {
        self.eval_by_distance(self.separation(xr, xh)?)
    }

    /// Distance from `d` to the nearest threshold (infinite with a single level).
    pub fn threshold_margin(&self, d: f64) -> f64 {
        self.thresholds
            .iter()
            .map(|t| (d - t).abs())
            .fold(f64::INFINITY, f64::min)
    }
}
