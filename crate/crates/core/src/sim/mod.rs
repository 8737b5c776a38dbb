//! Box-transfer cell simulator.

mod campaign;
mod episode;
mod motion;
mod scene;
pub mod trace_io;

pub use campaign::{derive_seed, run_campaign, Execution};
pub use episode::{simulate_episode, EpisodeTrace, Sample};
pub use motion::{advance_along, plan_human_path, robot_tick, HumanPath};
pub use scene::{DwellRange, HumanStations, RobotWaypoints, SceneConfig};
