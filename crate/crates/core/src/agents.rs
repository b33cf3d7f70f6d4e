//! Agent contract and the built-in scripted agents.

use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::dynamics::Action;
use crate::error::{Error, Result};
use crate::render::{CameraIntrinsics, CAMERA_HEIGHT};
use crate::rng::{derive_seed, rng_from, stream, SimRng};
use crate::task::{Observation, TaskKind, TaskSpec};
use crate::world::{normalize_heading, wrap_degrees, DistanceField, GoalRegion, GridMap, Point, Pose};

/// Distance at which the planners call `end`.
pub const PLANNER_END_M: f64 = 0.18;
/// Bearing error above which the planners turn toward the goal.
pub const PLANNER_TURN_DEG: f64 = 20.0;
/// Minimum free depth in the center window for `move_ahead`.
pub const PLANNER_CLEAR_M: f64 = 0.45;
pub const RANDOM_END_PROB: f64 = 0.02;

const ORACLE_MARGIN_M: f64 = 0.05;
const ORACLE_LOOKAHEAD: usize = 48;
const ORACLE_STEP_M: f64 = 0.25;
const ORACLE_TURN_DEG: f64 = 30.0;

/// Per-episode information given to agents at reset.
#[derive(Debug, Clone)]
pub struct EpisodeMeta {
    pub episode_id: String,
    pub seed: u64,
    pub task: TaskSpec,
    pub max_steps: u32,
    pub intrinsics: CameraIntrinsics,
    pub agent_radius: f64,
    /// Privileged scene access, used only by the oracle.
    pub scene: Arc<GridMap>,
}

impl EpisodeMeta {
    pub fn kind(&self) -> TaskKind {
        self.task.kind()
    }

    pub fn legal_actions(&self) -> &'static [Action] {
        match self.kind() {
            TaskKind::PointNav => &[Action::MoveAhead, Action::RotateLeft, Action::RotateRight, Action::End],
            TaskKind::ObjectNav => &Action::ALL,
        }
    }
}

/// Side information alongside each observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepContext {
    /// Privileged true pose, used only by the oracle.
    pub truth_pose: Pose,
    pub reward: f64,
    pub failed_action: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSummary {
    pub episode_id: String,
    pub success: bool,
    /// Abort reason, if the episode was aborted.
    pub aborted: Option<String>,
    pub steps: u32,
    pub total_reward: f64,
}

pub trait Agent: Send {
    fn name(&self) -> String;

    fn reset(&mut self, meta: &EpisodeMeta, obs: &Observation) -> Result<()>;

    fn act(&mut self, obs: &Observation, ctx: &StepContext) -> Result<Action>;

    /// Whether the agent takes part in the calibration phase.
    fn adapts(&self) -> bool {
        false
    }

    /// One unsupervised calibration interaction.
    fn adapt(&mut self, _obs: &Observation, _index: u64) -> Result<Action> {
        Err(Error::Protocol(format!("{} does not adapt", self.name())))
    }

    fn episode_end(&mut self, _summary: &EpisodeSummary) -> Result<()> {
        Ok(())
    }

    /// Called once after the last episode.
    fn finish(&mut self) -> Result<()> {
        Ok(())
    }
}

/// The shared greedy rule over per-column free distance at the horizon row.
pub fn greedy_rule(gps_compass: [f64; 2], columns: &[f64]) -> Action {
    let [r, theta] = gps_compass;
    if r <= PLANNER_END_M {
        return Action::End;
    }
    if theta.abs() > PLANNER_TURN_DEG {
        return if theta > 0.0 { Action::RotateLeft } else { Action::RotateRight };
    }
    let w = columns.len();
    let center = &columns[w / 4..(3 * w / 4).max(w / 4 + 1)];
    if center.iter().copied().fold(f64::INFINITY, f64::min) > PLANNER_CLEAR_M {
        return Action::MoveAhead;
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len().max(1) as f64;
    if mean(&columns[..w / 2]) > mean(&columns[w / 2..]) {
        Action::RotateLeft
    } else {
        Action::RotateRight
    }
}

/// Row just below the horizon at pitch 0.
pub fn horizon_row(height: usize) -> usize {
    height / 2
}

pub fn depth_columns(obs: &Observation) -> Result<Vec<f64>> {
    let depth = obs
        .depth
        .as_ref()
        .ok_or_else(|| Error::Config("depth_planner needs an RGB-D sensor".into()))?;
    let row = horizon_row(obs.height);
    Ok((0..obs.width).map(|c| f64::from(depth[row * obs.width + c])).collect())
}

/// Per-column free distance estimated from RGB alone.
///
/// Walls and objects are flat-colored per column, the floor is a gradient.
/// The run of pixels below the horizon matching the horizon pixel is the
/// projected height of the obstacle below camera height, so distance is
/// `focal * camera_height / run`.
pub fn rgb_columns(obs: &Observation, intrinsics: &CameraIntrinsics) -> Vec<f64> {
    let f = intrinsics.focal();
    let row = horizon_row(obs.height);
    let px = |r: usize, c: usize| {
        let k = (r * obs.width + c) * 3;
        [obs.rgb[k], obs.rgb[k + 1], obs.rgb[k + 2]]
    };
    (0..obs.width)
        .map(|c| {
            let base = px(row, c);
            let mut run = 0usize;
            for r in row..obs.height {
                let p = px(r, c);
                let close = (0..3).all(|k| {
                    let tol = (f64::from(base[k]) * 0.25).max(12.0);
                    f64::from(p[k].abs_diff(base[k])) <= tol
                });
                if !close {
                    break;
                }
                run += 1;
            }
            (f * CAMERA_HEIGHT / run.max(1) as f64).min(intrinsics.max_depth)
        })
        .collect()
}

fn gps(obs: &Observation) -> Result<[f64; 2]> {
    obs.gps_compass
        .ok_or_else(|| Error::Config("planner agents need PointNav gps_compass".into()))
}

/// Greedy planner on clean depth.
#[derive(Debug, Default)]
pub struct DepthPlanner;

impl Agent for DepthPlanner {
    fn name(&self) -> String {
        "depth_planner".into()
    }

    fn reset(&mut self, _meta: &EpisodeMeta, _obs: &Observation) -> Result<()> {
        Ok(())
    }

    fn act(&mut self, obs: &Observation, _ctx: &StepContext) -> Result<Action> {
        Ok(greedy_rule(gps(obs)?, &depth_columns(obs)?))
    }
}

/// The same greedy rule with obstacle distance estimated from RGB.
#[derive(Debug, Default)]
pub struct RgbPlanner {
    intrinsics: CameraIntrinsics,
}

impl Agent for RgbPlanner {
    fn name(&self) -> String {
        "rgb_planner".into()
    }

    fn reset(&mut self, meta: &EpisodeMeta, _obs: &Observation) -> Result<()> {
        self.intrinsics = meta.intrinsics;
        Ok(())
    }

    fn act(&mut self, obs: &Observation, _ctx: &StepContext) -> Result<Action> {
        let g = gps(obs)?;
        Ok(greedy_rule(g, &rgb_columns(obs, &self.intrinsics)))
    }
}

/// Uniform over legal non-end actions, `end` with small probability.
#[derive(Debug)]
pub struct RandomAgent {
    rng: SimRng,
    legal: Vec<Action>,
}

impl Default for RandomAgent {
    fn default() -> Self {
        Self {
            rng: rng_from(0),
            legal: Vec::new(),
        }
    }
}

impl RandomAgent {
    pub fn draw(&mut self) -> Action {
        if self.rng.random_bool(RANDOM_END_PROB) {
            return Action::End;
        }
        *self.legal.choose(&mut self.rng).expect("legal actions")
    }
}

impl Agent for RandomAgent {
    fn name(&self) -> String {
        "random".into()
    }

    fn reset(&mut self, meta: &EpisodeMeta, _obs: &Observation) -> Result<()> {
        self.rng = rng_from(derive_seed(meta.seed, stream::AGENT));
        self.legal = meta.legal_actions().iter().copied().filter(|a| *a != Action::End).collect();
        Ok(())
    }

    fn act(&mut self, _obs: &Observation, _ctx: &StepContext) -> Result<Action> {
        Ok(self.draw())
    }
}

/// Privileged PointNav agent following the shortest path from the true pose.
#[derive(Debug, Default)]
pub struct OracleAgent {
    state: Option<OracleState>,
}

#[derive(Debug)]
struct OracleState {
    map: Arc<GridMap>,
    goal: Point,
    radius: f64,
    fields: Vec<DistanceField>,
}

impl OracleState {
    fn path(&self, from: Point) -> Option<Vec<Point>> {
        self.fields.iter().find_map(|f| f.path_from(&self.map, from))
    }

    /// Furthest upcoming waypoint reachable along a clear straight line.
    fn target(&self, from: Point, path: &[Point]) -> Point {
        let mut best = path[path.len().min(2) - 1];
        let limit = path.len().min(ORACLE_LOOKAHEAD + 1);
        for (k, p) in path.iter().enumerate().take(limit).skip(1) {
            if k % 4 != 0 && k != limit - 1 {
                continue;
            }
            if !self.map.segment_clear(from, *p, self.radius) {
                break;
            }
            best = *p;
        }
        best
    }

    fn move_clear(&self, from: Point, heading: f64) -> bool {
        let h = heading.to_radians();
        let to = Point::new(from.x + ORACLE_STEP_M * h.cos(), from.y + ORACLE_STEP_M * h.sin());
        self.map.segment_clear(from, to, self.radius)
    }
}

impl Agent for OracleAgent {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn reset(&mut self, meta: &EpisodeMeta, _obs: &Observation) -> Result<()> {
        let TaskSpec::PointNav { goal } = meta.task else {
            return Err(Error::Config("oracle agent supports PointNav only".into()));
        };
        let region = GoalRegion::Point(goal);
        let map = meta.scene.clone();
        let fields = vec![
            DistanceField::with_radius(&map, &region, meta.agent_radius + ORACLE_MARGIN_M),
            DistanceField::with_radius(&map, &region, meta.agent_radius),
        ];
        self.state = Some(OracleState {
            map,
            goal,
            radius: meta.agent_radius,
            fields,
        });
        Ok(())
    }

    fn act(&mut self, _obs: &Observation, ctx: &StepContext) -> Result<Action> {
        let st = self.state.as_ref().ok_or(Error::NoEpisode)?;
        let pose = ctx.truth_pose;
        let here = pose.position();
        if here.distance(&st.goal) <= PLANNER_END_M {
            return Ok(Action::End);
        }
        let Some(path) = st.path(here) else {
            return Ok(Action::End);
        };
        let target = st.target(here, &path);
        let bearing = (target.y - here.y).atan2(target.x - here.x).to_degrees();
        // Among the headings reachable by whole turns, pick the clear one
        // that scores best: bearing error to the target, or landing distance
        // to the goal once the goal is within two steps. Ties prefer not
        // turning, then the smaller absolute heading, so the choice does not
        // flip after a turn.
        let endgame = here.distance(&st.goal) < 2.0 * ORACLE_STEP_M;
        let mut best: Option<((i64, bool, i64), i32)> = None;
        for k in -5..=6 {
            let h = pose.heading + f64::from(k) * ORACLE_TURN_DEG;
            if !st.move_clear(here, h) {
                continue;
            }
            let score = if endgame {
                let r = h.to_radians();
                Point::new(here.x + ORACLE_STEP_M * r.cos(), here.y + ORACLE_STEP_M * r.sin()).distance(&st.goal)
            } else {
                wrap_degrees(h - bearing).abs() / 180.0
            };
            let key = ((score * 1e9).round() as i64, k != 0, (normalize_heading(h) * 1e6).round() as i64);
            if best.is_none_or(|(b, _)| key < b) {
                best = Some((key, k));
            }
        }
        Ok(match best {
            Some((_, 0)) => Action::MoveAhead,
            Some((_, k)) if k > 0 => Action::RotateLeft,
            Some(_) => Action::RotateRight,
            None => Action::RotateLeft,
        })
    }
}

/// Always calls `end`.
#[derive(Debug, Default)]
pub struct EndAgent;

impl Agent for EndAgent {
    fn name(&self) -> String {
        "end".into()
    }

    fn reset(&mut self, _meta: &EpisodeMeta, _obs: &Observation) -> Result<()> {
        Ok(())
    }

    fn act(&mut self, _obs: &Observation, _ctx: &StepContext) -> Result<Action> {
        Ok(Action::End)
    }
}

/// Built-in agent by name.
pub fn builtin(name: &str) -> Result<Box<dyn Agent>> {
    Ok(match name {
        "oracle" => Box::new(OracleAgent::default()),
        "depth_planner" => Box::new(DepthPlanner),
        "rgb_planner" => Box::new(RgbPlanner::default()),
        "random" => Box::new(RandomAgent::default()),
        "end" => Box::new(EndAgent),
        _ => return Err(Error::Config(format!("unknown agent {name:?}"))),
    })
}
