//! Small dense-network engine: layers, losses, Adam and a gradient checker.

pub mod adam;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod matrix;
pub mod network;
pub mod train;

pub use adam::{Adam, AdamConfig};
pub use gradcheck::{gradient_check, GradCheckOptions, GradCheckReport};
pub use layers::{Layer, LayerKind, LayerSpec};
pub use loss::{LossKind, Targets};
pub use matrix::Matrix;
pub use network::{ForwardPass, Gradients, Mode, NetworkBuilder, NetworkModel, Standardizer};
pub use train::{fit, EpochLog, TrainConfig, TrainOutcome};
