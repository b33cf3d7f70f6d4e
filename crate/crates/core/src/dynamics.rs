//! Transition model: nominal kinematics, actuation noise, dynamics
//! corruptions, and collision resolution.

use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from, stream, SimRng};
use crate::world::{normalize_heading, GridMap, Point, Pose, DEFAULT_AGENT_RADIUS};

pub const PITCH_STEP: i32 = 30;
pub const PITCH_LIMIT: i32 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    MoveAhead,
    RotateLeft,
    RotateRight,
    LookUp,
    LookDown,
    End,
}

impl Action {
    pub const ALL: [Action; 6] = [
        Action::MoveAhead,
        Action::RotateLeft,
        Action::RotateRight,
        Action::LookUp,
        Action::LookDown,
        Action::End,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Action::MoveAhead => "move_ahead",
            Action::RotateLeft => "rotate_left",
            Action::RotateRight => "rotate_right",
            Action::LookUp => "look_up",
            Action::LookDown => "look_down",
            Action::End => "end",
        }
    }

    pub fn is_look(self) -> bool {
        matches!(self, Action::LookUp | Action::LookDown)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Action::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::IllegalAction(format!("unknown action {s:?}")))
    }
}

/// Per-step Gaussian actuation noise on translation (m) and rotation (deg).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActuationModel {
    pub trans_mean: f64,
    pub trans_std: f64,
    pub rot_mean: f64,
    pub rot_std: f64,
    pub enabled: bool,
}

impl Default for ActuationModel {
    fn default() -> Self {
        Self {
            trans_mean: 0.25,
            trans_std: 0.005,
            rot_mean: 30.0,
            rot_std: 0.5,
            enabled: true,
        }
    }
}

impl ActuationModel {
    /// Exact nominal magnitudes.
    pub fn noise_free() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.trans_mean, self.trans_std, self.rot_mean, self.rot_std]
            .iter()
            .all(|v| v.is_finite())
            && self.trans_std >= 0.0
            && self.rot_std >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid actuation model {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    fn sign(self) -> f64 {
        match self {
            Side::Left => 1.0,
            Side::Right => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Motor {
    RotateLeft,
    RotateRight,
}

impl Motor {
    fn action(self) -> Action {
        match self {
            Motor::RotateLeft => Action::RotateLeft,
            Motor::RotateRight => Action::RotateRight,
        }
    }
}

fn default_trans_biases() -> Vec<f64> {
    vec![-0.15, -0.10, -0.05, 0.05, 0.10, 0.15]
}

fn default_rot_biases() -> Vec<f64> {
    vec![-15.0, -10.0, -5.0, 5.0, 10.0, 15.0]
}

fn default_drift_alpha() -> f64 {
    10.0
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DynCorruption {
    #[default]
    None,
    /// Constant per-episode bias added to translation and rotation magnitudes.
    MotionBiasC {
        #[serde(default = "default_trans_biases")]
        trans_biases: Vec<f64>,
        #[serde(default = "default_rot_biases")]
        rot_biases: Vec<f64>,
    },
    /// Per-step magnitudes drawn from wide Gaussians, replacing actuation noise.
    MotionBiasS {
        trans_mean: f64,
        trans_std: f64,
        rot_mean: f64,
        rot_std: f64,
    },
    /// Translation direction rotated by `alpha` degrees toward one side.
    MotionDrift {
        #[serde(default = "default_drift_alpha")]
        alpha: f64,
        #[serde(default)]
        side: Option<Side>,
    },
    /// One rotation motor does nothing for the whole episode.
    MotorFailure { which: Motor },
    /// Configurable model with lateral slip, replacing actuation noise.
    Custom {
        trans_mean: f64,
        trans_std: f64,
        rot_mean: f64,
        rot_std: f64,
        lateral_std: f64,
    },
}

impl DynCorruption {
    pub fn motion_bias_c() -> Self {
        DynCorruption::MotionBiasC {
            trans_biases: default_trans_biases(),
            rot_biases: default_rot_biases(),
        }
    }

    pub fn motion_bias_s() -> Self {
        DynCorruption::MotionBiasS {
            trans_mean: 0.25,
            trans_std: 0.1,
            rot_mean: 30.0,
            rot_std: 10.0,
        }
    }

    pub fn motion_drift(side: Option<Side>) -> Self {
        DynCorruption::MotionDrift { alpha: 10.0, side }
    }

    /// Parse the short form used in labels: `none`, `motion_bias_c`,
    /// `motion_bias_s`, `motion_drift[:left|:right]`, `motor_failure:<rotate_left|rotate_right>`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::InvalidCorruption(format!("unknown dynamics corruption {s:?}"));
        let (head, arg) = match s.trim().split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s.trim(), None),
        };
        let c = match (head, arg) {
            ("none" | "clean" | "", None) => DynCorruption::None,
            ("motion_bias_c", None) => Self::motion_bias_c(),
            ("motion_bias_s", None) => Self::motion_bias_s(),
            ("motion_drift", None) => Self::motion_drift(None),
            ("motion_drift", Some("left")) => Self::motion_drift(Some(Side::Left)),
            ("motion_drift", Some("right")) => Self::motion_drift(Some(Side::Right)),
            ("motor_failure", Some("rotate_left")) => DynCorruption::MotorFailure { which: Motor::RotateLeft },
            ("motor_failure", Some("rotate_right")) => DynCorruption::MotorFailure {
                which: Motor::RotateRight,
            },
            _ => return Err(bad()),
        };
        Ok(c)
    }

    pub fn is_none(&self) -> bool {
        matches!(self, DynCorruption::None)
    }

    pub fn label(&self) -> String {
        match self {
            DynCorruption::None => "none".into(),
            DynCorruption::MotionBiasC { .. } => "motion_bias_c".into(),
            DynCorruption::MotionBiasS { .. } => "motion_bias_s".into(),
            DynCorruption::MotionDrift { .. } => "motion_drift".into(),
            DynCorruption::MotorFailure { which } => format!("motor_failure:{}", which.action()),
            DynCorruption::Custom { .. } => "custom".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidCorruption(m.to_string()));
        match self {
            DynCorruption::MotionBiasC { trans_biases, rot_biases } => {
                if trans_biases.is_empty() || rot_biases.is_empty() {
                    return bad("motion_bias_c needs non-empty bias sets");
                }
                if trans_biases.iter().chain(rot_biases).any(|v| !v.is_finite()) {
                    return bad("motion_bias_c biases must be finite");
                }
            }
            DynCorruption::MotionBiasS { trans_std, rot_std, trans_mean, rot_mean } => {
                if !(*trans_std >= 0.0 && *rot_std >= 0.0 && trans_mean.is_finite() && rot_mean.is_finite()) {
                    return bad("motion_bias_s needs finite means and non-negative stds");
                }
            }
            DynCorruption::MotionDrift { alpha, .. } => {
                if !alpha.is_finite() {
                    return bad("motion_drift alpha must be finite");
                }
            }
            DynCorruption::Custom {
                trans_mean,
                trans_std,
                rot_mean,
                rot_std,
                lateral_std,
            } => {
                let stds = [*trans_std, *rot_std, *lateral_std];
                if !(trans_mean.is_finite() && rot_mean.is_finite() && stds.iter().all(|s| *s >= 0.0 && s.is_finite())) {
                    return bad("custom dynamics needs finite means and non-negative stds");
                }
            }
            DynCorruption::None | DynCorruption::MotorFailure { .. } => {}
        }
        Ok(())
    }

    /// Sample the per-episode constants.
    pub fn bind(&self, episode_seed: u64) -> EpisodeDynamics {
        let mut rng = rng_from(derive_seed(episode_seed, stream::DYN_BIND));
        let mut out = EpisodeDynamics {
            corruption: self.clone(),
            trans_bias: 0.0,
            rot_bias: 0.0,
            drift_angle: 0.0,
        };
        match self {
            DynCorruption::MotionBiasC { trans_biases, rot_biases } => {
                out.trans_bias = *trans_biases.choose(&mut rng).unwrap_or(&0.0);
                out.rot_bias = *rot_biases.choose(&mut rng).unwrap_or(&0.0);
            }
            DynCorruption::MotionDrift { alpha, side } => {
                let side = side.unwrap_or_else(|| if rng.random_bool(0.5) { Side::Left } else { Side::Right });
                out.drift_angle = side.sign() * alpha;
            }
            _ => {}
        }
        out
    }
}

/// Dynamics constants fixed for one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeDynamics {
    pub corruption: DynCorruption,
    /// Added to every translation magnitude (MotionBiasC).
    pub trans_bias: f64,
    /// Added to every rotation magnitude (MotionBiasC).
    pub rot_bias: f64,
    /// Signed offset of the translation direction in degrees, left positive.
    pub drift_angle: f64,
}

impl EpisodeDynamics {
    pub fn identity() -> Self {
        DynCorruption::None.bind(0)
    }
}

/// Rng stream for per-step dynamics draws of an episode.
pub fn step_rng(episode_seed: u64) -> SimRng {
    rng_from(derive_seed(episode_seed, stream::DYN_STEP))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub new_pose: Pose,
    /// The action was blocked by a collision; the pose is unchanged.
    pub failed: bool,
    pub applied_translation: f64,
    pub applied_rotation: f64,
}

fn gauss(rng: &mut SimRng, mean: f64, std: f64) -> f64 {
    if std == 0.0 {
        return mean;
    }
    Normal::new(mean, std).expect("validated std").sample(rng)
}

/// Apply one non-`end` action for an agent of the default radius.
pub fn apply_action(
    map: &GridMap,
    pose: &Pose,
    action: Action,
    actuation: &ActuationModel,
    dynamics: &EpisodeDynamics,
    rng: &mut SimRng,
) -> Result<StepOutcome> {
    apply_action_with_radius(map, pose, action, actuation, dynamics, rng, DEFAULT_AGENT_RADIUS)
}

pub fn apply_action_with_radius(
    map: &GridMap,
    pose: &Pose,
    action: Action,
    actuation: &ActuationModel,
    dynamics: &EpisodeDynamics,
    rng: &mut SimRng,
    radius: f64,
) -> Result<StepOutcome> {
    let unchanged = |failed| StepOutcome {
        new_pose: *pose,
        failed,
        applied_translation: 0.0,
        applied_rotation: 0.0,
    };
    match action {
        Action::End => return Err(Error::IllegalAction("end is handled by the task, not dynamics".into())),
        Action::LookUp | Action::LookDown => {
            let delta = if action == Action::LookUp { -PITCH_STEP } else { PITCH_STEP };
            let pitch = (pose.pitch + delta).clamp(-PITCH_LIMIT, PITCH_LIMIT);
            return Ok(StepOutcome {
                new_pose: Pose { pitch, ..*pose },
                ..unchanged(false)
            });
        }
        _ => {}
    }
    if let DynCorruption::MotorFailure { which } = dynamics.corruption {
        if which.action() == action {
            return Ok(unchanged(false));
        }
    }

    let (mut trans_mean, mut trans_std, mut rot_mean, mut rot_std) = if actuation.enabled {
        (actuation.trans_mean, actuation.trans_std, actuation.rot_mean, actuation.rot_std)
    } else {
        (actuation.trans_mean, 0.0, actuation.rot_mean, 0.0)
    };
    let mut lateral_std = 0.0;
    match dynamics.corruption {
        DynCorruption::MotionBiasS {
            trans_mean: tm,
            trans_std: ts,
            rot_mean: rm,
            rot_std: rs,
        } => (trans_mean, trans_std, rot_mean, rot_std) = (tm, ts, rm, rs),
        DynCorruption::Custom {
            trans_mean: tm,
            trans_std: ts,
            rot_mean: rm,
            rot_std: rs,
            lateral_std: ls,
        } => {
            (trans_mean, trans_std, rot_mean, rot_std) = (tm, ts, rm, rs);
            lateral_std = ls;
        }
        _ => {}
    }

    if action == Action::MoveAhead {
        let d = gauss(rng, trans_mean, trans_std) + dynamics.trans_bias;
        let lateral = if lateral_std > 0.0 { gauss(rng, 0.0, lateral_std) } else { 0.0 };
        let dir = (pose.heading + dynamics.drift_angle).to_radians();
        let left = pose.heading.to_radians() + std::f64::consts::FRAC_PI_2;
        let target = Point::new(
            pose.x + d * dir.cos() + lateral * left.cos(),
            pose.y + d * dir.sin() + lateral * left.sin(),
        );
        if !map.segment_clear(pose.position(), target, radius) {
            return Ok(unchanged(true));
        }
        return Ok(StepOutcome {
            new_pose: Pose {
                x: target.x,
                y: target.y,
                ..*pose
            },
            failed: false,
            applied_translation: d,
            applied_rotation: 0.0,
        });
    }

    let theta = gauss(rng, rot_mean, rot_std) + dynamics.rot_bias;
    let signed = if action == Action::RotateLeft { theta } else { -theta };
    Ok(StepOutcome {
        new_pose: Pose {
            heading: normalize_heading(pose.heading + signed),
            ..*pose
        },
        failed: false,
        applied_translation: 0.0,
        applied_rotation: theta,
    })
}
