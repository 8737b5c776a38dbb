use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::{Dataset, XH_X, XH_Y};
use crate::tasks::TrainedPredictor;

/// Per-cell statistics of a metric binned by the human's horizontal position.
///
/// The metric is `|s̃ - target|` for regression tasks and a 0/1 miss
/// indicator for classifiers, so 0 is a perfect cell either way. Cells are
/// stored row-major with `x` varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapGrid {
    pub origin: [f64; 2],
    pub cell: f64,
    pub nx: usize,
    pub ny: usize,
    pub metric: String,
    counts: Vec<usize>,
    sums: Vec<f64>,
    sq_sums: Vec<f64>,
}

impl HeatmapGrid {
    fn empty(cell: f64, metric: &str) -> Self {
        HeatmapGrid {
            origin: [0.0, 0.0],
            cell,
            nx: 0,
            ny: 0,
            metric: metric.to_string(),
            counts: Vec::new(),
            sums: Vec::new(),
            sq_sums: Vec::new(),
        }
    }

    /// Cell holding `(x, y)`; `None` outside the grid.
    pub fn cell_index(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let ix = ((x - self.origin[0]) / self.cell).floor();
        let iy = ((y - self.origin[1]) / self.cell).floor();
        if ix < 0.0 || iy < 0.0 || ix >= self.nx as f64 || iy >= self.ny as f64 {
            return None;
        }
        Some((ix as usize, iy as usize))
    }

    pub fn count(&self, ix: usize, iy: usize) -> usize {
        self.counts[iy * self.nx + ix]
    }

    /// `None` marks an empty cell.
    pub fn mean_metric(&self, ix: usize, iy: usize) -> Option<f64> {
        let k = iy * self.nx + ix;
        (self.counts[k] > 0).then(|| self.sums[k] / self.counts[k] as f64)
    }

    pub fn mean_sq_metric(&self, ix: usize, iy: usize) -> Option<f64> {
        let k = iy * self.nx + ix;
        (self.counts[k] > 0).then(|| self.sq_sums[k] / self.counts[k] as f64)
    }

    pub fn total_count(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn max_mean_metric(&self) -> Option<f64> {
        (0..self.ny)
            .flat_map(|iy| (0..self.nx).map(move |ix| (ix, iy)))
            .filter_map(|(ix, iy)| self.mean_metric(ix, iy))
            .reduce(f64::max)
    }

    /// Count-weighted mean of the per-cell mean squared metric.
    pub fn weighted_mean_sq(&self) -> f64 {
        let n = self.total_count();
        if n == 0 {
            return 0.0;
        }
        self.sq_sums.iter().sum::<f64>() / n as f64
    }
}

fn floor_to(v: f64, cell: f64) -> f64 {
    (v / cell).floor() * cell
}

/// Bins every test row by `(xh_x, xh_y)`.
///
/// The origin is the lower-left corner of the rows' bounding box floored to a
/// multiple of `cell`.
pub fn make_heatmap(predictor: &TrainedPredictor, ds: &Dataset, cell: f64) -> Result<HeatmapGrid> {
    if !(cell > 0.0 && cell.is_finite()) {
        return Err(Error::Config(format!("heatmap cell size must be > 0, got {cell}")));
    }
    let classify = predictor.task.kind.is_classification();
    let metric = if classify { "misclassified" } else { "abs_error" };
    if ds.is_empty() {
        return Ok(HeatmapGrid::empty(cell, metric));
    }
    let pred = predictor.predict_dataset(ds)?;
    let xy: Vec<(f64, f64)> = (0..ds.len()).map(|i| (ds.row(i)[XH_X], ds.row(i)[XH_Y])).collect();
    let (mut lo_x, mut lo_y, mut hi_x, mut hi_y) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &xy {
        lo_x = lo_x.min(x);
        lo_y = lo_y.min(y);
        hi_x = hi_x.max(x);
        hi_y = hi_y.max(y);
    }
    let origin = [floor_to(lo_x, cell), floor_to(lo_y, cell)];
    let nx = ((hi_x - origin[0]) / cell).floor() as usize + 1;
    let ny = ((hi_y - origin[1]) / cell).floor() as usize + 1;
    let mut grid = HeatmapGrid {
        origin,
        cell,
        nx,
        ny,
        metric: metric.to_string(),
        counts: vec![0; nx * ny],
        sums: vec![0.0; nx * ny],
        sq_sums: vec![0.0; nx * ny],
    };
    for (i, &(x, y)) in xy.iter().enumerate() {
        let ix = (((x - origin[0]) / cell).floor().max(0.0) as usize).min(nx - 1);
        let iy = (((y - origin[1]) / cell).floor().max(0.0) as usize).min(ny - 1);
        let m = if classify {
            let c = ds.target_cluster[i];
            (!c.is_some_and(|c| predictor.cluster.centroid(c) == pred[i])) as u8 as f64
        } else {
            (pred[i] - ds.target_s[i]).abs()
        };
        let k = iy * nx + ix;
        grid.counts[k] += 1;
        grid.sums[k] += m;
        grid.sq_sums[k] += m * m;
    }
    Ok(grid)
}
