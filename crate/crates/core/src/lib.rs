//! Simulation and learning toolchain for predicting a collaborative robot's
//! safety speed-scaling factor from process execution data.
//!
//! The pipeline runs in five stages:
//!
//! 1. [`sim`] generates box-transfer episodes under a staircase safety law
//!    ([`safety`]) and records positions, goals and the applied scaling at a
//!    fixed tick.
//! 2. [`labeling`] clusters the observed scaling values to recover the level
//!    set, labels every sample and builds one-step, N-step and
//!    window-average supervised datasets.
//! 3. [`nn`] is a small dense network engine (batch norm, Adam, gradient
//!    checking) used by [`tasks`] to build and train the predictors.
//! 4. [`eval`] computes test metrics, noise sweeps and spatial heatmaps.
//! 5. [`cli`] wires everything behind the `safescale` command.

pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod geom;
pub mod labeling;
pub mod nn;
pub mod numfmt;
pub mod safety;
pub mod sim;
pub mod tasks;

pub use error::{Error, Result};
pub use geom::Position3;
pub use safety::StaircaseSafetyFunction;
