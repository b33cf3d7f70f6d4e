//! PointNav and ObjectNav episode semantics.

mod calibrate;
mod env;
mod suite;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::{Category, Point, Pose};

pub use calibrate::{calibration_phase, DEFAULT_CALIBRATION_BUDGET};
pub use env::{Env, EnvConfig, Observation, SensorConfig, StepInfo, StepResult};
pub use suite::{
    bin_range, difficulty_for, format_suite, generate_suite, parse_suite, SuiteParams, OBJECTNAV_BINS, POINTNAV_BINS,
};

pub const MAX_STEPS: u32 = 300;
pub const POINTNAV_SUCCESS_M: f64 = 0.2;
pub const OBJECTNAV_SUCCESS_M: f64 = 1.0;
pub const TERMINAL_REWARD: f64 = 10.0;
pub const SLACK_REWARD: f64 = -0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    PointNav,
    ObjectNav,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::PointNav => "pointnav",
            TaskKind::ObjectNav => "objectnav",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pointnav" => Ok(TaskKind::PointNav),
            "objectnav" => Ok(TaskKind::ObjectNav),
            _ => Err(Error::Config(format!("unknown task {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TaskSpec {
    PointNav { goal: Point },
    ObjectNav { category: Category },
}

impl TaskSpec {
    pub fn kind(&self) -> TaskKind {
        match self {
            TaskSpec::PointNav { .. } => TaskKind::PointNav,
            TaskSpec::ObjectNav { .. } => TaskKind::ObjectNav,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];

    pub fn name(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Difficulty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Difficulty::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown difficulty {s:?}")))
    }
}

/// One evaluation episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub episode_id: String,
    pub scene_id: String,
    pub seed: u64,
    pub task: TaskSpec,
    pub start: Pose,
    pub difficulty: Difficulty,
    /// Geodesic shortest-path length from start to goal at generation time.
    pub l: f64,
}

impl EpisodeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.episode_id.is_empty() || self.episode_id.contains(char::is_whitespace) {
            return Err(Error::InvalidEpisode(format!("bad episode id {:?}", self.episode_id)));
        }
        if !(self.l.is_finite() && self.l > 0.0) {
            return Err(Error::InvalidEpisode(format!("{}: l = {} must be positive", self.episode_id, self.l)));
        }
        if self.start.pitch != 0 {
            return Err(Error::InvalidEpisode(format!("{}: start pitch must be 0", self.episode_id)));
        }
        Ok(())
    }
}
