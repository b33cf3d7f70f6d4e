use thiserror::Error;

/// Errors produced by the simulator and harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("scene generation failed after {attempts} attempts: {reason}")]
    Generation { attempts: u32, reason: String },

    #[error("invalid scene parameters: {0}")]
    SceneParams(String),

    #[error("invalid map: {0}")]
    InvalidMap(String),

    #[error("invalid pose: {0}")]
    InvalidPose(String),

    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),

    #[error("invalid corruption: {0}")]
    InvalidCorruption(String),

    #[error("dimension mismatch: expected {expected_width}x{expected_height}, got {width}x{height}")]
    DimensionMismatch {
        expected_width: usize,
        expected_height: usize,
        width: usize,
        height: usize,
    },

    #[error("illegal action: {0}")]
    IllegalAction(String),

    #[error("episode already done")]
    EpisodeDone,

    #[error("no active episode")]
    NoEpisode,

    #[error("goal unreachable")]
    Unreachable,

    #[error("invalid episode spec: {0}")]
    InvalidEpisode(String),

    #[error("suite generation: {0}")]
    Suite(String),

    #[error("degenerate episode: {0}")]
    Degenerate(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("benchmark rule violated: {0}")]
    BenchmarkRule(String),

    #[error("unknown report format: {0}")]
    UnknownFormat(String),

    #[error("protocol: {0}")]
    Protocol(String),

    #[error("trace: {0}")]
    Trace(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
