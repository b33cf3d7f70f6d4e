use super::{Env, EpisodeSpec};
use crate::agents::Agent;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream};

/// Unsupervised interactions granted before evaluation.
pub const DEFAULT_CALIBRATION_BUDGET: u64 = 166_000;

/// Drive `agent.adapt` for `budget` steps in the corrupted environment.
///
/// Episodes cycle through `episodes` (restricted to the env's scene) with
/// seeds moved to a separate stream, so calibration never replays an
/// evaluation episode. Rewards and success are not exposed. Agents that do
/// not adapt are skipped entirely. Returns the number of adapt calls.
pub fn calibration_phase(env: &mut Env, agent: &mut dyn Agent, budget: u64, episodes: &[EpisodeSpec]) -> Result<u64> {
    if budget == 0 || !agent.adapts() {
        return Ok(0);
    }
    let pool: Vec<&EpisodeSpec> = episodes
        .iter()
        .filter(|e| e.scene_id == env.map().scene_id())
        .collect();
    if pool.is_empty() {
        return Err(Error::InvalidEpisode(format!(
            "no calibration episodes for scene {}",
            env.map().scene_id()
        )));
    }
    let mut k = 0u64;
    let mut next = 0usize;
    let reset = |env: &mut Env, next: &mut usize| {
        let mut spec = pool[*next % pool.len()].clone();
        *next += 1;
        spec.seed = derive_seed(spec.seed, stream::CALIBRATION);
        env.reset(&spec)
    };
    let mut obs = reset(env, &mut next)?;
    while k < budget {
        let action = agent.adapt(&obs, k)?;
        k += 1;
        let result = match env.step(action) {
            Ok(r) => r,
            Err(Error::IllegalAction(_)) => {
                obs = reset(env, &mut next)?;
                continue;
            }
            Err(e) => return Err(e),
        };
        obs = if result.done { reset(env, &mut next)? } else { result.obs };
    }
    Ok(k)
}
