//! Newline-delimited JSON protocol for external agents.
//!
//! The grammar, message order and error semantics are documented in
//! `docs/protocol.md`. Every message is one JSON object on one line with a
//! `type` field. Unknown fields are ignored.

mod client;
mod server;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::dynamics::Action;
use crate::error::{Error, Result};
use crate::task::Observation;

pub use client::{run_client, ClientEvent, ClientSession};
pub use server::{Connector, Endpoint, ExternalAgent, ExternalConfig, DEFAULT_DEADLINE_SECS};

pub const PROTOCOL_VERSION: u32 = 1;

/// Image payload shared by `observation` and `calibrate_step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireFrame {
    pub step_index: u32,
    pub rgb_width: usize,
    pub rgb_height: usize,
    /// Base64 of row-major RGB bytes.
    pub rgb: String,
    /// Base64 of little-endian f32 depth values, row-major.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gps_compass: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WireInfo {
    pub failed_action: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello {
        version: u32,
        sensor: String,
        task: String,
        width: usize,
        height: usize,
        h_fov: f64,
        max_depth: f64,
    },
    Reset {
        episode_id: String,
        task: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target: Option<String>,
        max_steps: u32,
    },
    Observation {
        #[serde(flatten)]
        frame: WireFrame,
        reward: f64,
        done: bool,
        info: WireInfo,
    },
    CalibrateStep {
        index: u64,
        #[serde(flatten)]
        frame: WireFrame,
    },
    EpisodeEnd {
        episode_id: String,
        success: bool,
        steps: u32,
        total_reward: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        aborted: Option<String>,
    },
    Error {
        message: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        offset: Option<usize>,
    },
    Bye,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Hello { version: u32 },
    Action { action: String },
    EpisodeEnd,
    Error { message: String },
    Bye,
}

/// Serialize one message as a line without the trailing newline.
pub fn encode_line<T: Serialize>(msg: &T) -> Result<String> {
    serde_json::to_string(msg).map_err(|e| Error::Protocol(format!("encode: {e}")))
}

/// Parse one line. Syntax errors report the byte offset within the line.
pub fn decode_line<T: for<'de> Deserialize<'de>>(line: &str) -> Result<T> {
    serde_json::from_str(line).map_err(|e| {
        let offset = line
            .split_inclusive('\n')
            .take(e.line().saturating_sub(1))
            .map(str::len)
            .sum::<usize>()
            + e.column().saturating_sub(1);
        Error::Parse {
            offset,
            message: format!("malformed message: {e}"),
        }
    })
}

pub fn frame_from_observation(obs: &Observation) -> Result<WireFrame> {
    if let Some([r, t]) = obs.gps_compass {
        if !(r.is_finite() && t.is_finite()) {
            return Err(Error::Protocol("non-finite gps_compass".into()));
        }
    }
    Ok(WireFrame {
        step_index: obs.step_index,
        rgb_width: obs.width,
        rgb_height: obs.height,
        rgb: B64.encode(&obs.rgb),
        depth: obs
            .depth
            .as_ref()
            .map(|d| B64.encode(d.iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<u8>>())),
        gps_compass: obs.gps_compass,
        target: obs.target.map(|c| c.to_string()),
    })
}

pub fn observation_from_frame(frame: &WireFrame) -> Result<Observation> {
    let rgb = B64
        .decode(&frame.rgb)
        .map_err(|e| Error::Protocol(format!("bad rgb base64: {e}")))?;
    let n = frame.rgb_width * frame.rgb_height;
    if rgb.len() != n * 3 {
        return Err(Error::Protocol(format!(
            "rgb payload has {} bytes, expected {} for {}x{}",
            rgb.len(),
            n * 3,
            frame.rgb_width,
            frame.rgb_height
        )));
    }
    let depth = match &frame.depth {
        None => None,
        Some(s) => {
            let bytes = B64.decode(s).map_err(|e| Error::Protocol(format!("bad depth base64: {e}")))?;
            if bytes.len() != n * 4 {
                return Err(Error::Protocol(format!(
                    "depth payload has {} bytes, expected {}",
                    bytes.len(),
                    n * 4
                )));
            }
            Some(
                bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            )
        }
    };
    let target = match &frame.target {
        None => None,
        Some(t) => Some(t.parse().map_err(|_| Error::Protocol(format!("unknown target {t:?}")))?),
    };
    Ok(Observation {
        step_index: frame.step_index,
        width: frame.rgb_width,
        height: frame.rgb_height,
        rgb,
        depth,
        gps_compass: frame.gps_compass,
        target,
    })
}

/// `observation` line for an env observation.
pub fn encode_observation(obs: &Observation, reward: f64, done: bool, failed_action: bool) -> Result<String> {
    if !reward.is_finite() {
        return Err(Error::Protocol("non-finite reward".into()));
    }
    encode_line(&ServerMessage::Observation {
        frame: frame_from_observation(obs)?,
        reward,
        done,
        info: WireInfo { failed_action },
    })
}

/// Inverse of [`encode_observation`].
pub fn decode_observation(line: &str) -> Result<(Observation, f64, bool, bool)> {
    match decode_line::<ServerMessage>(line)? {
        ServerMessage::Observation {
            frame,
            reward,
            done,
            info,
        } => Ok((observation_from_frame(&frame)?, reward, done, info.failed_action)),
        other => Err(Error::Protocol(format!("expected observation, got {other:?}"))),
    }
}

pub fn encode_action(action: Action) -> String {
    encode_line(&ClientMessage::Action {
        action: action.name().to_string(),
    })
    .expect("action encodes")
}

/// Parse an `action` line into an action.
pub fn decode_action(line: &str) -> Result<Action> {
    match decode_line::<ClientMessage>(line)? {
        ClientMessage::Action { action } => action.parse(),
        other => Err(Error::Protocol(format!("expected action, got {other:?}"))),
    }
}
