//! Episode loop and parallel suite execution.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use crate::agents::{Agent, EpisodeMeta, EpisodeSummary, StepContext};
use crate::dynamics::Action;
use crate::error::{Error, Result};
use crate::metrics::{EpisodeRecord, Labels, StepRecord};
use crate::task::{calibration_phase, Env, EnvConfig, EpisodeSpec};
use crate::world::GridMap;

/// Labels for episodes run under `config`.
pub fn labels_for(config: &EnvConfig) -> Labels {
    let visual = !config.visual.is_empty();
    let dynamics = !config.dynamics.is_none();
    let corruption = match (visual, dynamics) {
        (false, false) => "clean".to_string(),
        (true, false) => config.visual.label(),
        (false, true) => config.dynamics.label(),
        (true, true) => format!("{}+{}", config.visual.label(), config.dynamics.label()),
    };
    Labels {
        corruption,
        visual,
        dynamics,
        sensor: config.sensor.name().to_string(),
    }
}

/// A finished episode plus any agent error raised after the outcome was fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub record: EpisodeRecord,
    pub late_error: Option<String>,
}

impl EpisodeOutcome {
    pub fn had_protocol_error(&self) -> bool {
        self.record.aborted.is_some() || self.late_error.is_some()
    }
}

/// Run one episode to completion. Agent errors and illegal actions abort
/// the episode as a failure instead of failing the call. `episode_end` is
/// called in every case.
pub fn run_episode(env: &mut Env, agent: &mut dyn Agent, spec: &EpisodeSpec) -> Result<EpisodeOutcome> {
    let mut obs = env.reset(spec)?;
    let meta = EpisodeMeta {
        episode_id: spec.episode_id.clone(),
        seed: spec.seed,
        task: spec.task,
        max_steps: env.config().max_steps,
        intrinsics: *env.intrinsics(),
        agent_radius: env.config().agent_radius,
        scene: env.map().clone(),
    };
    let mut aborted = agent.reset(&meta, &obs).err().map(|e| e.to_string());
    let mut ctx = StepContext {
        truth_pose: env.pose()?,
        reward: 0.0,
        failed_action: false,
    };
    let mut steps = Vec::new();
    let mut success = false;
    let mut total_reward = 0.0;
    while aborted.is_none() {
        let pose = env.pose()?;
        let in_range = env.in_range(&pose)?;
        let geodesic = env.geodesic_to_goal()?;
        let distance = env.distance_to_goal(&pose)?;
        let action = match agent.act(&obs, &ctx) {
            Ok(a) => a,
            Err(e) => {
                aborted = Some(e.to_string());
                break;
            }
        };
        if let Err(e) = env.legal(action) {
            aborted = Some(e.to_string());
            break;
        }
        let res = env.step(action)?;
        steps.push(StepRecord {
            pose,
            action,
            failed: res.info.failed_action,
            in_range,
            geodesic,
            distance,
            reward: res.reward,
        });
        total_reward += res.reward;
        ctx = StepContext {
            truth_pose: env.pose()?,
            reward: res.reward,
            failed_action: res.info.failed_action,
        };
        obs = res.obs;
        if res.done {
            success = res.success;
            break;
        }
    }
    let final_pose = env.pose()?;
    let end_invoked = steps.last().is_some_and(|s: &StepRecord| s.action == Action::End);
    let end_in_range = end_invoked && steps.last().is_some_and(|s| s.in_range);
    let mut record = EpisodeRecord {
        episode_id: spec.episode_id.clone(),
        scene_id: spec.scene_id.clone(),
        task: spec.task.kind(),
        difficulty: spec.difficulty,
        labels: labels_for(env.config()),
        l: spec.l,
        steps,
        final_pose,
        final_distance: env.distance_to_goal(&final_pose)?,
        end_invoked,
        end_in_range,
        success: success && aborted.is_none(),
        aborted,
        path_length: 0.0,
        total_reward,
    };
    record.path_length = record.recomputed_path_length();
    let summary = EpisodeSummary {
        episode_id: record.episode_id.clone(),
        success: record.success,
        aborted: record.aborted.clone(),
        steps: record.steps.len() as u32,
        total_reward: record.total_reward,
    };
    // An aborted episode already counts as a protocol error.
    let ended = agent.episode_end(&summary);
    let late_error = match record.aborted {
        None => ended.err().map(|e| e.to_string()),
        Some(_) => None,
    };
    Ok(EpisodeOutcome { record, late_error })
}

pub type AgentFactory<'a> = dyn Fn() -> Result<Box<dyn Agent>> + Sync + 'a;

/// Options for [`run_suite`].
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub workers: usize,
    pub calibration_budget: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            calibration_budget: 0,
        }
    }
}

/// Run every episode with one agent and one env per scene per worker.
///
/// Results come back in suite order whatever the worker count, since every
/// episode draws from its own seeded streams.
pub fn run_suite(
    scenes: &HashMap<String, Arc<GridMap>>,
    episodes: &[EpisodeSpec],
    config: &EnvConfig,
    factory: &AgentFactory<'_>,
    options: &RunOptions,
) -> Result<Vec<EpisodeOutcome>> {
    config.validate()?;
    for e in episodes {
        if !scenes.contains_key(&e.scene_id) {
            return Err(Error::InvalidEpisode(format!("{}: unknown scene {}", e.episode_id, e.scene_id)));
        }
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<EpisodeOutcome>>> = Mutex::new(vec![None; episodes.len()]);
    let first_error: Mutex<Option<Error>> = Mutex::new(None);
    let workers = options.workers.clamp(1, episodes.len().max(1));

    let work = || -> Result<()> {
        let mut agent = factory()?;
        let mut envs: HashMap<String, Env> = HashMap::new();
        let mut calibrated = false;
        let outcome = loop {
            if first_error.lock().expect("poisoned").is_some() {
                break Ok(());
            }
            let k = next.fetch_add(1, Ordering::SeqCst);
            let Some(spec) = episodes.get(k) else {
                break Ok(());
            };
            if !envs.contains_key(&spec.scene_id) {
                let env = Env::new(scenes[&spec.scene_id].clone(), config.clone())?;
                envs.insert(spec.scene_id.clone(), env);
            }
            let env = envs.get_mut(&spec.scene_id).expect("inserted");
            if !calibrated {
                calibrated = true;
                calibration_phase(env, agent.as_mut(), options.calibration_budget, episodes)?;
            }
            let out = run_episode(env, agent.as_mut(), spec)?;
            results.lock().expect("poisoned")[k] = Some(out);
        };
        let finished = agent.finish();
        outcome.and(finished)
    };

    std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers).map(|_| s.spawn(&work)).collect();
        for h in handles {
            let r = h.join().unwrap_or_else(|_| Err(Error::Protocol("worker panicked".into())));
            if let Err(e) = r {
                first_error.lock().expect("poisoned").get_or_insert(e);
            }
        }
    });
    if let Some(e) = first_error.into_inner().expect("poisoned") {
        return Err(e);
    }
    Ok(results
        .into_inner()
        .expect("poisoned")
        .into_iter()
        .map(|o| o.expect("every episode ran"))
        .collect())
}
