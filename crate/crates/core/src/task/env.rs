use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{EpisodeSpec, TaskKind, TaskSpec, MAX_STEPS, OBJECTNAV_SUCCESS_M, POINTNAV_SUCCESS_M, SLACK_REWARD, TERMINAL_REWARD};
use crate::dynamics::{apply_action_with_radius, step_rng, Action, ActuationModel, DynCorruption, EpisodeDynamics};
use crate::error::{Error, Result};
use crate::render::{render_unchecked, visible, CameraIntrinsics};
use crate::rng::{derive_seed, stream, SimRng};
use crate::viscorrupt::{BoundStack, CorruptionStack};
use crate::world::{wrap_degrees, Category, DistanceField, GoalRegion, GridMap, Pose, DEFAULT_AGENT_RADIUS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorConfig {
    Rgb,
    #[default]
    Rgbd,
}

impl SensorConfig {
    pub fn name(self) -> &'static str {
        match self {
            SensorConfig::Rgb => "rgb",
            SensorConfig::Rgbd => "rgbd",
        }
    }
}

impl std::str::FromStr for SensorConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rgb" => Ok(SensorConfig::Rgb),
            "rgbd" => Ok(SensorConfig::Rgbd),
            _ => Err(Error::Config(format!("unknown sensor {s:?}"))),
        }
    }
}

/// Everything about an environment that is fixed across episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub intrinsics: CameraIntrinsics,
    pub sensor: SensorConfig,
    pub visual: CorruptionStack,
    pub dynamics: DynCorruption,
    pub actuation: ActuationModel,
    pub agent_radius: f64,
    pub max_steps: u32,
    pub pointnav_success_m: f64,
    pub objectnav_success_m: f64,
    pub terminal_reward: f64,
    pub slack_reward: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            intrinsics: CameraIntrinsics::default(),
            sensor: SensorConfig::Rgbd,
            visual: CorruptionStack::default(),
            dynamics: DynCorruption::None,
            actuation: ActuationModel::default(),
            agent_radius: DEFAULT_AGENT_RADIUS,
            max_steps: MAX_STEPS,
            pointnav_success_m: POINTNAV_SUCCESS_M,
            objectnav_success_m: OBJECTNAV_SUCCESS_M,
            terminal_reward: TERMINAL_REWARD,
            slack_reward: SLACK_REWARD,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        self.actuation.validate()?;
        self.dynamics.validate()?;
        for l in &self.visual.layers {
            l.validate()?;
        }
        if !(self.agent_radius > 0.0) || self.max_steps == 0 {
            return Err(Error::Config("agent_radius and max_steps must be positive".into()));
        }
        Ok(())
    }

    /// Intrinsics the renderer uses after renderer-side corruptions.
    pub fn effective_intrinsics(&self) -> CameraIntrinsics {
        self.visual.intrinsics(&self.intrinsics)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub step_index: u32,
    pub width: usize,
    pub height: usize,
    /// Row-major RGB after the visual corruption stack.
    pub rgb: Vec<u8>,
    /// Clean depth in meters, present for RGB-D sensors.
    pub depth: Option<Vec<f32>>,
    /// (distance m, bearing deg, positive to the left) for PointNav.
    pub gps_compass: Option<[f64; 2]>,
    pub target: Option<Category>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub failed_action: bool,
    /// Success predicate at the new pose.
    pub in_range: bool,
    pub geodesic_to_goal: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub obs: Observation,
    pub reward: f64,
    pub done: bool,
    pub success: bool,
    pub info: StepInfo,
}

struct Episode {
    spec: EpisodeSpec,
    pose: Pose,
    step: u32,
    done: bool,
    field: DistanceField,
    geodesic: f64,
    bound: BoundStack,
    dynamics: EpisodeDynamics,
    rng: SimRng,
}

/// Single-episode-at-a-time environment over one scene.
pub struct Env {
    map: Arc<GridMap>,
    config: EnvConfig,
    intrinsics: CameraIntrinsics,
    episode: Option<Episode>,
}

impl Env {
    pub fn new(map: Arc<GridMap>, config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let intrinsics = config.effective_intrinsics();
        Ok(Self {
            map,
            config,
            intrinsics,
            episode: None,
        })
    }

    pub fn map(&self) -> &Arc<GridMap> {
        &self.map
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.intrinsics
    }

    fn active(&self) -> Result<&Episode> {
        self.episode.as_ref().ok_or(Error::NoEpisode)
    }

    pub fn spec(&self) -> Result<&EpisodeSpec> {
        Ok(&self.active()?.spec)
    }

    /// True pose of the agent.
    pub fn pose(&self) -> Result<Pose> {
        Ok(self.active()?.pose)
    }

    pub fn step_index(&self) -> Result<u32> {
        Ok(self.active()?.step)
    }

    pub fn is_done(&self) -> bool {
        self.episode.as_ref().is_some_and(|e| e.done)
    }

    pub fn geodesic_to_goal(&self) -> Result<f64> {
        Ok(self.active()?.geodesic)
    }

    pub fn distance_field(&self) -> Result<&DistanceField> {
        Ok(&self.active()?.field)
    }

    /// Euclidean distance to the goal point, or to the nearest footprint
    /// cell of any instance of the target category.
    pub fn distance_to_goal(&self, pose: &Pose) -> Result<f64> {
        Ok(goal_distance(&self.map, &self.active()?.spec.task, pose))
    }

    /// Success predicate at `pose`.
    pub fn in_range(&self, pose: &Pose) -> Result<bool> {
        let ep = self.active()?;
        Ok(self.in_range_for(&ep.spec.task, pose))
    }

    fn in_range_for(&self, task: &TaskSpec, pose: &Pose) -> bool {
        match task {
            TaskSpec::PointNav { goal } => pose.position().distance(goal) <= self.config.pointnav_success_m,
            TaskSpec::ObjectNav { category } => self.map.instances_of(*category).any(|o| {
                self.map.distance_to_instance(pose.position(), o) <= self.config.objectnav_success_m
                    && visible(&self.map, pose, &self.intrinsics, o.instance_id)
            }),
        }
    }

    pub fn reset(&mut self, spec: &EpisodeSpec) -> Result<Observation> {
        spec.validate()?;
        if spec.scene_id != self.map.scene_id() {
            return Err(Error::InvalidEpisode(format!(
                "{}: scene {} but env holds {}",
                spec.episode_id,
                spec.scene_id,
                self.map.scene_id()
            )));
        }
        self.map
            .validate_pose(&spec.start, self.config.agent_radius)
            .map_err(|e| Error::InvalidEpisode(format!("{}: {e}", spec.episode_id)))?;
        let goal = match spec.task {
            TaskSpec::PointNav { goal } => GoalRegion::Point(goal),
            TaskSpec::ObjectNav { category } => GoalRegion::Category {
                category,
                radius: self.config.objectnav_success_m,
            },
        };
        let field = DistanceField::with_radius(&self.map, &goal, self.config.agent_radius);
        let geodesic = field
            .distance_from(&self.map, spec.start.position())
            .ok_or_else(|| Error::InvalidEpisode(format!("{}: goal unreachable from start", spec.episode_id)))?;
        let bound = self.config.visual.bind(
            derive_seed(spec.seed, stream::VISUAL),
            self.intrinsics.width,
            self.intrinsics.height,
        );
        let episode = Episode {
            spec: spec.clone(),
            pose: spec.start,
            step: 0,
            done: false,
            field,
            geodesic,
            bound,
            dynamics: self.config.dynamics.bind(spec.seed),
            rng: step_rng(spec.seed),
        };
        self.episode = Some(episode);
        self.observe()
    }

    fn observe(&self) -> Result<Observation> {
        let ep = self.active()?;
        let frame = render_unchecked(&self.map, &ep.pose, &self.intrinsics);
        let rgb = ep.bound.apply(&frame.rgb, frame.width, frame.height, u64::from(ep.step))?;
        let (gps_compass, target) = match ep.spec.task {
            TaskSpec::PointNav { goal } => {
                let (dx, dy) = (goal.x - ep.pose.x, goal.y - ep.pose.y);
                let r = dx.hypot(dy);
                let bearing = if r > 0.0 { dy.atan2(dx).to_degrees() } else { ep.pose.heading };
                (Some([r, wrap_degrees(bearing - ep.pose.heading)]), None)
            }
            TaskSpec::ObjectNav { category } => (None, Some(category)),
        };
        Ok(Observation {
            step_index: ep.step,
            width: frame.width,
            height: frame.height,
            rgb,
            depth: (self.config.sensor == SensorConfig::Rgbd).then_some(frame.depth),
            gps_compass,
            target,
        })
    }

    pub fn legal(&self, action: Action) -> Result<()> {
        let ep = self.active()?;
        if action.is_look() && ep.spec.task.kind() == TaskKind::PointNav {
            return Err(Error::IllegalAction(format!("{action} is not available in PointNav")));
        }
        Ok(())
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult> {
        self.legal(action)?;
        if self.active()?.done {
            return Err(Error::EpisodeDone);
        }
        if action == Action::End {
            let ep = self.episode.as_mut().expect("active");
            ep.step += 1;
            ep.done = true;
            let (pose, task, geodesic) = (ep.pose, ep.spec.task, ep.geodesic);
            let success = self.in_range_for(&task, &pose);
            let reward = if success { self.config.terminal_reward } else { 0.0 };
            return Ok(StepResult {
                obs: self.observe()?,
                reward,
                done: true,
                success,
                info: StepInfo {
                    failed_action: false,
                    in_range: success,
                    geodesic_to_goal: geodesic,
                },
            });
        }

        let ep = self.episode.as_mut().expect("active");
        let outcome = apply_action_with_radius(
            &self.map,
            &ep.pose,
            action,
            &self.config.actuation,
            &ep.dynamics,
            &mut ep.rng,
            self.config.agent_radius,
        )?;
        ep.pose = outcome.new_pose;
        ep.step += 1;
        let prev = ep.geodesic;
        if let Some(g) = ep.field.distance_from(&self.map, ep.pose.position()) {
            ep.geodesic = g;
        }
        let reward = -(ep.geodesic - prev) + self.config.slack_reward;
        let forced = ep.step >= self.config.max_steps;
        ep.done = forced;
        let (pose, task, geodesic) = (ep.pose, ep.spec.task, ep.geodesic);
        let in_range = self.in_range_for(&task, &pose);
        Ok(StepResult {
            obs: self.observe()?,
            reward,
            done: forced,
            success: false,
            info: StepInfo {
                failed_action: outcome.failed,
                in_range,
                geodesic_to_goal: geodesic,
            },
        })
    }
}

pub(crate) fn goal_distance(map: &GridMap, task: &TaskSpec, pose: &Pose) -> f64 {
    match task {
        TaskSpec::PointNav { goal } => pose.position().distance(goal),
        TaskSpec::ObjectNav { category } => map
            .instances_of(*category)
            .map(|o| map.distance_to_instance(pose.position(), o))
            .fold(f64::INFINITY, f64::min),
    }
}
