use rayon::prelude::*;

use super::episode::{simulate_episode, EpisodeTrace};
use super::scene::SceneConfig;
use crate::error::{Error, Result};

/// How a campaign schedules its episodes. Output is identical either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-episode seed derived from the campaign master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn run_campaign(
    cfg: &SceneConfig,
    n_episodes: usize,
    master_seed: u64,
    exec: Execution,
) -> Result<Vec<EpisodeTrace>> {
    if n_episodes == 0 {
        return Err(Error::Config("campaign needs at least one episode".into()));
    }
    cfg.validate()?;
    let one = |i: usize| {
        simulate_episode(cfg, i as u32, derive_seed(master_seed, i as u64)).map_err(|e| Error::Episode {
            episode: i as u32,
            source: Box::new(e),
        })
    };
    match exec {
        Execution::Sequential => (0..n_episodes).map(one).collect(),
        Execution::Parallel => (0..n_episodes).into_par_iter().map(one).collect(),
    }
}
