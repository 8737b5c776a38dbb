//! Self-labeling and supervised dataset construction.

mod cluster;
mod dataset;
pub mod io;

pub use cluster::{assign_labels, cluster_scalings, dbscan_1d, ClusterModel, LabeledSample};
pub use dataset::{
    build_dataset, inject_noise, split_dataset, split_episodes, Dataset, NoiseSpec, WindowMode, WindowSpec,
    FEATURE_NAMES, XH_X, XH_Y,
};
