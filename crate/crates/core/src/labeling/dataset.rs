use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::cluster::LabeledSample;
use crate::error::{Error, Result};
use crate::sim::Sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowMode {
    OneStep,
    NStep,
    Average,
}

/// Prediction horizon `w` in ticks and the target construction rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub w: usize,
    pub mode: WindowMode,
}

impl WindowSpec {
    pub fn one_step() -> Self {
        WindowSpec {
            w: 0,
            mode: WindowMode::OneStep,
        }
    }

    pub fn n_step(w: usize) -> Self {
        WindowSpec {
            w,
            mode: WindowMode::NStep,
        }
    }

    pub fn average(w: usize) -> Self {
        WindowSpec {
            w,
            mode: WindowMode::Average,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == WindowMode::OneStep && self.w != 0 {
            return Err(Error::Config("one-step window must have w = 0".into()));
        }
        Ok(())
    }

    /// Input width: positions only for one-step, positions and goals otherwise.
    pub fn input_width(&self) -> usize {
        match self.mode {
            WindowMode::OneStep => 6,
            WindowMode::NStep | WindowMode::Average => 12,
        }
    }
}

/// Std of the Gaussian perturbation of the human's horizontal position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub delta: f64,
    pub seed: u64,
}

pub const FEATURE_NAMES: [&str; 12] = [
    "xr_x", "xr_y", "xr_z", "xh_x", "xh_y", "xh_z", "gr_x", "gr_y", "gr_z", "gh_x", "gh_y", "gh_z",
];

/// Column offsets of the human's horizontal position inside a feature row.
pub const XH_X: usize = 3;
pub const XH_Y: usize = 4;

/// Supervised rows, stored column-wise except for the row-major feature block.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub window: WindowSpec,
    pub width: usize,
    pub features: Vec<f64>,
    pub target_s: Vec<f64>,
    /// 1-based cluster of the target sample; `None` for window averages.
    pub target_cluster: Vec<Option<usize>>,
    pub episode: Vec<u32>,
    pub t: Vec<f64>,
    /// True human-robot separation at the target tick (NaN when unknown).
    pub separation: Vec<f64>,
    /// Episodes too short to yield a single row for this window.
    pub skipped_episodes: Vec<u32>,
}

impl Dataset {
    fn empty(window: WindowSpec, width: usize) -> Self {
        Dataset {
            window,
            width,
            features: Vec::new(),
            target_s: Vec::new(),
            target_cluster: Vec::new(),
            episode: Vec::new(),
            t: Vec::new(),
            separation: Vec::new(),
            skipped_episodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.target_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target_s.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.width..(i + 1) * self.width]
    }

    pub fn feature_names(&self) -> &'static [&'static str] {
        &FEATURE_NAMES[..self.width]
    }

    /// Distinct episode ids in first-appearance order.
    pub fn episodes(&self) -> Vec<u32> {
        let mut seen = HashSet::new();
        self.episode.iter().copied().filter(|e| seen.insert(*e)).collect()
    }

    fn push_row(&mut self, features: &[f64], s: f64, cluster: Option<usize>, episode: u32, t: f64, sep: f64) {
        debug_assert_eq!(features.len(), self.width);
        self.features.extend_from_slice(features);
        self.target_s.push(s);
        self.target_cluster.push(cluster);
        self.episode.push(episode);
        self.t.push(t);
        self.separation.push(sep);
    }

    /// Rows for which `keep(row_index)` holds.
    pub fn select(&self, mut keep: impl FnMut(usize) -> bool) -> Dataset {
        let mut out = Dataset::empty(self.window, self.width);
        out.skipped_episodes = self.skipped_episodes.clone();
        for i in 0..self.len() {
            if keep(i) {
                out.push_row(
                    self.row(i),
                    self.target_s[i],
                    self.target_cluster[i],
                    self.episode[i],
                    self.t[i],
                    self.separation[i],
                );
            }
        }
        out
    }

    pub fn filter_episodes(&self, keep: &HashSet<u32>) -> Dataset {
        self.select(|i| keep.contains(&self.episode[i]))
    }

    /// Every `stride`-th row of each episode.
    pub fn subsample(&self, stride: usize) -> Dataset {
        if stride <= 1 {
            return self.clone();
        }
        let mut pos_in_episode = 0usize;
        let mut prev = None;
        self.select(|i| {
            if prev != Some(self.episode[i]) {
                prev = Some(self.episode[i]);
                pos_in_episode = 0;
            }
            let keep = pos_in_episode.is_multiple_of(stride);
            pos_in_episode += 1;
            keep
        })
    }

    /// Goal-free ablation: keeps the six position columns.
    pub fn drop_goals(&self) -> Dataset {
        if self.width == 6 {
            return self.clone();
        }
        let mut out = self.clone();
        out.width = 6;
        out.features = self
            .features
            .chunks(self.width)
            .flat_map(|r| r[..6].iter().copied())
            .collect();
        out
    }

    /// Adds zero-mean Gaussian noise to the human's horizontal position columns.
    pub fn with_human_noise(&self, spec: &NoiseSpec) -> Result<Dataset> {
        let mut out = self.clone();
        perturb_rows(&mut out.features, self.width, spec)?;
        Ok(out)
    }

    /// SHA-256 over the rows' exact bit patterns.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("{:?}/{}/{}/{}", self.window.mode, self.window.w, self.width, self.len()).as_bytes());
        for v in self.features.iter().chain(&self.target_s) {
            h.update(v.to_bits().to_le_bytes());
        }
        for c in &self.target_cluster {
            h.update((c.unwrap_or(0) as u64).to_le_bytes());
        }
        for e in &self.episode {
            h.update(e.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

fn perturb_rows(features: &mut [f64], width: usize, spec: &NoiseSpec) -> Result<()> {
    if !(spec.delta >= 0.0 && spec.delta.is_finite()) {
        return Err(Error::Config(format!("noise delta must be >= 0, got {}", spec.delta)));
    }
    if spec.delta == 0.0 {
        return Ok(());
    }
    let normal = Normal::new(0.0, spec.delta).expect("finite std");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for row in features.chunks_mut(width) {
        row[XH_X] += normal.sample(&mut rng);
        row[XH_Y] += normal.sample(&mut rng);
    }
    Ok(())
}

/// Perturbs the observed human position of each sample; scaling, labels
/// and every other field are left as recorded.
pub fn inject_noise(samples: &[LabeledSample], spec: &NoiseSpec) -> Result<Vec<LabeledSample>> {
    let mut out = samples.to_vec();
    if !(spec.delta >= 0.0 && spec.delta.is_finite()) {
        return Err(Error::Config(format!("noise delta must be >= 0, got {}", spec.delta)));
    }
    if spec.delta == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, spec.delta).expect("finite std");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for ls in &mut out {
        ls.sample.xh.x += normal.sample(&mut rng);
        ls.sample.xh.y += normal.sample(&mut rng);
    }
    Ok(out)
}

fn feature_row(s: &Sample, width: usize, buf: &mut Vec<f64>) {
    buf.clear();
    buf.extend(s.xr.to_array());
    buf.extend(s.xh.to_array());
    if width == 12 {
        buf.extend(s.gr.to_array());
        buf.extend(s.gh.to_array());
    }
}

/// Contiguous per-episode runs; errors if an episode reappears later.
pub(crate) fn episode_runs<T>(items: &[T], episode_of: impl Fn(&T) -> u32) -> Result<Vec<&[T]>> {
    let mut runs = Vec::new();
    let mut seen = HashSet::new();
    let mut start = 0;
    for i in 1..=items.len() {
        if i == items.len() || episode_of(&items[i]) != episode_of(&items[start]) {
            if !seen.insert(episode_of(&items[start])) {
                return Err(Error::InvalidInput(format!(
                    "episode {} rows are not contiguous",
                    episode_of(&items[start])
                )));
            }
            runs.push(&items[start..i]);
            start = i;
        }
    }
    Ok(runs)
}

/// Builds supervised rows for the given window. Rows never straddle episodes;
/// the last `w` ticks of each episode have no target and are dropped.
pub fn build_dataset(samples: &[LabeledSample], window: WindowSpec) -> Result<Dataset> {
    window.validate()?;
    let width = window.input_width();
    let w = window.w;
    let mut ds = Dataset::empty(window, width);
    let mut buf = Vec::with_capacity(12);
    for run in episode_runs(samples, |ls| ls.sample.episode)? {
        if run.windows(2).any(|p| p[1].sample.t <= p[0].sample.t) {
            return Err(Error::InvalidInput(format!(
                "episode {} is not time-ordered",
                run[0].sample.episode
            )));
        }
        if run.len() < w + 1 {
            ds.skipped_episodes.push(run[0].sample.episode);
            continue;
        }
        for i in 0..run.len() - w {
            let now = &run[i].sample;
            feature_row(now, width, &mut buf);
            let target = &run[i + w];
            let (s, cluster, sep) = match window.mode {
                WindowMode::OneStep | WindowMode::NStep => (
                    target.sample.s,
                    Some(target.cluster_index),
                    target.sample.xr.distance(&target.sample.xh),
                ),
                WindowMode::Average => {
                    let sum: f64 = run[i..=i + w].iter().map(|ls| ls.sample.s).sum();
                    (sum / (w + 1) as f64, None, f64::NAN)
                }
            };
            ds.push_row(&buf, s, cluster, now.episode, now.t, sep);
        }
    }
    Ok(ds)
}

/// Splits episode ids into train and test sets. `round(fraction * n)`
/// episodes go to training, at least one to each side.
pub fn split_episodes(episodes: &[u32], train_fraction: f64, seed: u64) -> Result<(Vec<u32>, Vec<u32>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let mut ids: Vec<u32> = episodes.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() < 2 {
        return Err(Error::InvalidInput("need at least two episodes to split".into()));
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((train_fraction * ids.len() as f64).round() as usize).clamp(1, ids.len() - 1);
    let mut train = ids[..n_train].to_vec();
    let mut test = ids[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn split_dataset(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, _) = split_episodes(&ds.episodes(), train_fraction, seed)?;
    let train: HashSet<u32> = train.into_iter().collect();
    Ok((
        ds.filter_episodes(&train),
        ds.select(|i| !train.contains(&ds.episode[i])),
    ))
}
