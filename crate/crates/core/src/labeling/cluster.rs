//! Self-labeling of scaling observations by one-dimensional DBSCAN.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{EpisodeTrace, Sample};

/// Recovered scaling levels. Centroids are sorted ascending; cluster
/// indices are 1-based in that order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub eps: f64,
    pub min_pts: usize,
    centroids: Vec<f64>,
}

impl ClusterModel {
    pub fn new(eps: f64, min_pts: usize, centroids: Vec<f64>) -> Result<Self> {
        let m = ClusterModel {
            eps,
            min_pts,
            centroids,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.centroids.is_empty() {
            return Err(Error::InvalidInput("cluster model has no centroids".into()));
        }
        if self.centroids.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::InvalidInput("centroids must lie in [0, 1]".into()));
        }
        if self.centroids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("centroids must be strictly increasing".into()));
        }
        Ok(())
    }

    /// Number of recovered levels, P.
    pub fn p(&self) -> usize {
        self.centroids.len()
    }

    pub fn centroids(&self) -> &[f64] {
        &self.centroids
    }

    /// 1-based index of the nearest centroid; ties go to the lower index.
    pub fn nearest_index(&self, s: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (j, c) in self.centroids.iter().enumerate() {
            let d = (s - c).abs();
            if d < best_d {
                best = j;
                best_d = d;
            }
        }
        best + 1
    }

    pub fn centroid(&self, index: usize) -> f64 {
        self.centroids[index - 1]
    }
}

/// DBSCAN on scalar values.
///
/// Returns one entry per input: `Some(cluster)` with clusters numbered
/// 0.. in ascending value order, or `None` for noise. Neighborhoods are
/// closed (`|a - b| <= eps`) and a point counts itself.
pub fn dbscan_1d(values: &[f64], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();

    // neighbor counts with a sliding window over the sorted values
    let mut core = vec![false; n];
    let (mut lo, mut hi) = (0usize, 0usize);
    for k in 0..n {
        let v = sorted[k];
        while sorted[lo] < v - eps {
            lo += 1;
        }
        while hi < n && sorted[hi] <= v + eps {
            hi += 1;
        }
        core[k] = hi - lo >= min_pts;
    }

    // chain consecutive core points that are within eps of each other
    let mut cluster_of_sorted: Vec<Option<usize>> = vec![None; n];
    let mut next_id = 0;
    let mut last_core: Option<usize> = None;
    for k in (0..n).filter(|&k| core[k]) {
        let id = match last_core {
            Some(prev) if sorted[k] - sorted[prev] <= eps => cluster_of_sorted[prev].expect("core is labeled"),
            _ => {
                next_id += 1;
                next_id - 1
            }
        };
        cluster_of_sorted[k] = Some(id);
        last_core = Some(k);
    }

    // border points join the cluster of the nearest core within eps
    let core_positions: Vec<usize> = (0..n).filter(|&k| core[k]).collect();
    for k in (0..n).filter(|&k| !core[k]) {
        let at = core_positions.partition_point(|&c| sorted[c] < sorted[k]);
        let mut best: Option<(f64, usize)> = None;
        for c in [at.checked_sub(1), Some(at)].into_iter().flatten() {
            if let Some(&cp) = core_positions.get(c) {
                let d = (sorted[cp] - sorted[k]).abs();
                if d <= eps && best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, cp));
                }
            }
        }
        cluster_of_sorted[k] = best.and_then(|(_, cp)| cluster_of_sorted[cp]);
    }

    let mut out = vec![None; n];
    for (k, &i) in order.iter().enumerate() {
        out[i] = cluster_of_sorted[k];
    }
    out
}

/// Clusters the observed scaling values and returns the recovered levels.
///
/// Centroids are member means; noise points do not contribute to them and
/// are labeled later by nearest centroid.
pub fn cluster_scalings(values: &[f64], eps: f64, min_pts: usize) -> Result<ClusterModel> {
    if values.is_empty() {
        return Err(Error::InvalidInput("no scaling values to cluster".into()));
    }
    if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidInput("scaling values must lie in [0, 1]".into()));
    }
    if !(eps > 0.0 && eps.is_finite()) || min_pts == 0 {
        return Err(Error::Config("clustering needs eps > 0 and min_pts >= 1".into()));
    }
    let labels = dbscan_1d(values, eps, min_pts);
    let p = labels.iter().flatten().max().map_or(0, |m| m + 1);
    if p == 0 {
        return Err(Error::AllNoise { eps, min_pts });
    }
    let mut sums = vec![0.0; p];
    let mut counts = vec![0usize; p];
    for (v, l) in values.iter().zip(&labels) {
        if let Some(c) = l {
            sums[*c] += v;
            counts[*c] += 1;
        }
    }
    let centroids = sums.iter().zip(&counts).map(|(s, &n)| s / n as f64).collect();
    ClusterModel::new(eps, min_pts, centroids)
}

/// A sample augmented with its cluster index (1-based).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledSample {
    pub sample: Sample,
    pub cluster_index: usize,
}

impl LabeledSample {
    pub fn one_hot(&self, p: usize) -> Vec<f64> {
        let mut v = vec![0.0; p];
        v[self.cluster_index - 1] = 1.0;
        v
    }
}

pub fn assign_labels(traces: &[EpisodeTrace], model: &ClusterModel) -> Vec<LabeledSample> {
    traces
        .iter()
        .flat_map(|t| &t.samples)
        .map(|s| LabeledSample {
            sample: *s,
            cluster_index: model.nearest_index(s.s),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const LEVELS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

    #[test]
    fn single_value_gives_one_cluster() {
        let m = cluster_scalings(&[0.7; 500], 0.02, 10).unwrap();
        assert_eq!(m.p(), 1);
        assert!((m.centroids()[0] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn recovers_jittered_levels() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut values = Vec::new();
        for &l in &LEVELS {
            for _ in 0..100 {
                values.push((l + rng.random_range(-0.005..=0.005f64)).clamp(0.0, 1.0));
            }
        }
        let m = cluster_scalings(&values, 0.02, 10).unwrap();
        assert_eq!(m.p(), 5);
        // brute force: every centroid is within 0.005 of its level
        for (c, l) in m.centroids().iter().zip(LEVELS) {
            assert!((c - l).abs() <= 0.005, "{c} vs {l}");
        }
    }

    #[test]
    fn sparse_values_are_noise() {
        let values = [0.1, 0.3, 0.5, 0.7, 0.9];
        assert!(matches!(
            cluster_scalings(&values, 0.02, 2),
            Err(Error::AllNoise { .. })
        ));
    }

    #[test]
    fn noise_points_do_not_move_centroids() {
        let mut values = vec![0.0; 20];
        values.extend([0.5; 20]);
        values.push(0.3);
        let labels = dbscan_1d(&values, 0.02, 10);
        assert_eq!(labels[40], None);
        let m = cluster_scalings(&values, 0.02, 10).unwrap();
        assert_eq!(m.centroids(), &[0.0, 0.5]);
        assert_eq!(m.nearest_index(0.3), 2);
    }

    #[test]
    fn border_points_join_clusters() {
        // ten cores at 0.5, one border point at 0.515 reachable, one at 0.54 not
        let mut values = vec![0.5; 10];
        values.push(0.515);
        values.push(0.54);
        let labels = dbscan_1d(&values, 0.02, 10);
        assert_eq!(labels[10], Some(0));
        assert_eq!(labels[11], None);
    }

    #[test]
    fn chained_cores_merge() {
        let values: Vec<f64> = (0..50).map(|i| i as f64 * 0.01).collect();
        let labels = dbscan_1d(&values, 0.015, 3);
        assert!(labels.iter().all(|l| *l == Some(0)));
    }

    #[test]
    fn nearest_centroid_rules() {
        let m = ClusterModel::new(0.02, 10, LEVELS.to_vec()).unwrap();
        assert_eq!(m.nearest_index(0.25), 2);
        assert_eq!(m.nearest_index(0.37), 2);
        assert_eq!(m.nearest_index(0.375), 2);
        assert_eq!(m.nearest_index(0.3751), 3);
        assert_eq!(m.nearest_index(1.0), 5);
        assert_eq!(m.centroid(3), 0.5);
    }

    #[test]
    fn rejects_invalid_inputs() {
        assert!(cluster_scalings(&[], 0.02, 10).is_err());
        assert!(cluster_scalings(&[1.2], 0.02, 1).is_err());
        assert!(cluster_scalings(&[0.2], 0.0, 1).is_err());
        assert!(ClusterModel::new(0.02, 1, vec![0.5, 0.2]).is_err());
    }
}
