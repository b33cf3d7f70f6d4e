use std::io::{BufRead, Write};

use super::{decode_line, encode_line, observation_from_frame, ClientMessage, ServerMessage, PROTOCOL_VERSION};
use crate::dynamics::Action;
use crate::error::{Error, Result};
use crate::task::Observation;

/// Decoded server message as seen by an agent.
#[derive(Debug, Clone, PartialEq)]
pub enum ClientEvent {
    Reset {
        episode_id: String,
        task: String,
        target: Option<String>,
        max_steps: u32,
    },
    Observation {
        obs: Observation,
        reward: f64,
        done: bool,
        failed_action: bool,
    },
    Calibrate {
        index: u64,
        obs: Observation,
    },
    EpisodeEnd {
        episode_id: String,
        success: bool,
        aborted: Option<String>,
    },
    Bye,
}

/// Agent side of one connection.
pub struct ClientSession<R, W> {
    reader: R,
    writer: W,
    hello: Option<ServerMessage>,
    outstanding: bool,
    pub observations: u64,
    pub actions: u64,
}

impl<R: BufRead, W: Write> ClientSession<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        Self {
            reader,
            writer,
            hello: None,
            outstanding: false,
            observations: 0,
            actions: 0,
        }
    }

    /// The server's `hello`, after [`Self::handshake`].
    pub fn hello(&self) -> Option<&ServerMessage> {
        self.hello.as_ref()
    }

    fn write(&mut self, msg: &ClientMessage) -> Result<()> {
        let mut line = encode_line(msg)?;
        line.push('\n');
        self.writer.write_all(line.as_bytes())?;
        self.writer.flush()?;
        Ok(())
    }

    fn read(&mut self) -> Result<ServerMessage> {
        let mut line = String::new();
        if self.reader.read_line(&mut line)? == 0 {
            return Err(Error::Protocol("server closed the connection".into()));
        }
        match decode_line::<ServerMessage>(line.trim_end_matches(['\n', '\r']))? {
            ServerMessage::Error { message, .. } => Err(Error::Protocol(message)),
            m => Ok(m),
        }
    }

    /// Read the server `hello` and answer with ours.
    pub fn handshake(&mut self) -> Result<()> {
        match self.read()? {
            m @ ServerMessage::Hello { version, .. } => {
                if version != PROTOCOL_VERSION {
                    let message = format!("version mismatch: agent speaks {PROTOCOL_VERSION}, server speaks {version}");
                    let _ = self.write(&ClientMessage::Error {
                        message: message.clone(),
                    });
                    return Err(Error::Protocol(message));
                }
                self.hello = Some(m);
                self.write(&ClientMessage::Hello {
                    version: PROTOCOL_VERSION,
                })
            }
            other => Err(Error::Protocol(format!("expected hello, got {other:?}"))),
        }
    }

    /// Next server event. Server `error` messages surface as errors.
    pub fn next_event(&mut self) -> Result<ClientEvent> {
        if self.outstanding {
            return Err(Error::Protocol("an observation is still waiting for an action".into()));
        }
        Ok(match self.read()? {
            ServerMessage::Reset {
                episode_id,
                task,
                target,
                max_steps,
            } => ClientEvent::Reset {
                episode_id,
                task,
                target,
                max_steps,
            },
            ServerMessage::Observation {
                frame,
                reward,
                done,
                info,
            } => {
                self.outstanding = !done;
                self.observations += 1;
                ClientEvent::Observation {
                    obs: observation_from_frame(&frame)?,
                    reward,
                    done,
                    failed_action: info.failed_action,
                }
            }
            ServerMessage::CalibrateStep { index, frame } => {
                self.outstanding = true;
                self.observations += 1;
                ClientEvent::Calibrate {
                    index,
                    obs: observation_from_frame(&frame)?,
                }
            }
            ServerMessage::EpisodeEnd {
                episode_id,
                success,
                aborted,
                ..
            } => ClientEvent::EpisodeEnd {
                episode_id,
                success,
                aborted,
            },
            ServerMessage::Bye => ClientEvent::Bye,
            other => return Err(Error::Protocol(format!("unexpected {other:?}"))),
        })
    }

    pub fn send_action(&mut self, action: Action) -> Result<()> {
        self.send_raw_action(action.name())
    }

    /// Send an action by name without checking it.
    pub fn send_raw_action(&mut self, name: &str) -> Result<()> {
        self.outstanding = false;
        self.actions += 1;
        self.write(&ClientMessage::Action {
            action: name.to_string(),
        })
    }

    /// Echo `episode_end`.
    pub fn ack_episode_end(&mut self) -> Result<()> {
        self.write(&ClientMessage::EpisodeEnd)
    }

    /// Write one raw line as the answer to the pending observation, for
    /// tests of the error paths.
    pub fn send_line(&mut self, line: &str) -> Result<()> {
        self.outstanding = false;
        self.writer.write_all(line.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        Ok(())
    }
}

/// Serve a policy until the server says `bye`. The policy sees every
/// observation, including calibration frames.
pub fn run_client<R: BufRead, W: Write>(
    session: &mut ClientSession<R, W>,
    mut policy: impl FnMut(&Observation) -> Result<Action>,
) -> Result<()> {
    session.handshake()?;
    loop {
        match session.next_event()? {
            ClientEvent::Observation { done: true, .. } | ClientEvent::Reset { .. } => {}
            ClientEvent::Observation { obs, .. } | ClientEvent::Calibrate { obs, .. } => {
                let a = policy(&obs)?;
                session.send_action(a)?;
            }
            ClientEvent::EpisodeEnd { .. } => session.ack_episode_end()?,
            ClientEvent::Bye => return Ok(()),
        }
    }
}
