use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use super::{decode_line, encode_line, frame_from_observation, ClientMessage, ServerMessage, WireInfo, PROTOCOL_VERSION};
use crate::agents::{Agent, EpisodeMeta, EpisodeSummary, StepContext};
use crate::dynamics::Action;
use crate::error::{Error, Result};
use crate::render::CameraIntrinsics;
use crate::task::{Observation, SensorConfig, TaskKind, TaskSpec};

pub const DEFAULT_DEADLINE_SECS: f64 = 30.0;

/// Where external agents live.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    /// Spawn a subprocess and talk over its stdin/stdout.
    Stdio { program: String, args: Vec<String> },
    /// Listen on an address and accept one connection per worker.
    TcpListen(String),
}

impl Endpoint {
    /// Parse `stdio:<command line>` or `tcp:<host:port>`.
    pub fn parse(s: &str) -> Result<Self> {
        if let Some(cmd) = s.strip_prefix("stdio:") {
            let mut parts = cmd.split_whitespace().map(str::to_string);
            let program = parts
                .next()
                .ok_or_else(|| Error::Config("stdio endpoint needs a command".into()))?;
            Ok(Endpoint::Stdio {
                program,
                args: parts.collect(),
            })
        } else if let Some(addr) = s.strip_prefix("tcp:") {
            if addr.is_empty() {
                return Err(Error::Config("tcp endpoint needs an address".into()));
            }
            Ok(Endpoint::TcpListen(addr.to_string()))
        } else {
            Err(Error::Config(format!(
                "endpoint {s:?} must start with stdio: or tcp:"
            )))
        }
    }
}

impl std::fmt::Display for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Endpoint::Stdio { program, args } => {
                write!(f, "stdio:{program}")?;
                for a in args {
                    write!(f, " {a}")?;
                }
                Ok(())
            }
            Endpoint::TcpListen(addr) => write!(f, "tcp:{addr}"),
        }
    }
}

/// Settings sent in `hello` plus the per-step deadline.
#[derive(Debug, Clone)]
pub struct ExternalConfig {
    pub endpoint: Endpoint,
    pub deadline: Duration,
    pub sensor: SensorConfig,
    pub task: TaskKind,
    pub intrinsics: CameraIntrinsics,
}

/// Opens agent connections. Shared by all workers of a run.
pub struct Connector {
    config: ExternalConfig,
    listener: Option<Mutex<TcpListener>>,
}

impl Connector {
    /// Binds the listener for TCP endpoints.
    pub fn new(config: ExternalConfig) -> Result<Self> {
        let listener = match &config.endpoint {
            Endpoint::TcpListen(addr) => {
                let l = TcpListener::bind(addr)
                    .map_err(|e| Error::Protocol(format!("cannot listen on {addr}: {e}")))?;
                Some(Mutex::new(l))
            }
            Endpoint::Stdio { .. } => None,
        };
        Ok(Self { config, listener })
    }

    /// Bound address for TCP endpoints, useful with port 0.
    pub fn local_addr(&self) -> Option<std::net::SocketAddr> {
        self.listener
            .as_ref()
            .and_then(|l| l.lock().expect("poisoned").local_addr().ok())
    }

    /// Open a connection and complete the handshake.
    pub fn connect(&self) -> Result<ExternalAgent> {
        let link = match &self.config.endpoint {
            Endpoint::Stdio { program, args } => {
                let mut child = Command::new(program)
                    .args(args)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(|e| Error::Protocol(format!("cannot spawn {program}: {e}")))?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                Link::new(Box::new(stdin), stdout, Some(child), self.config.deadline)
            }
            Endpoint::TcpListen(addr) => {
                let listener = self.listener.as_ref().expect("bound in new").lock().expect("poisoned");
                let stream = accept_with_deadline(&listener, self.config.deadline)
                    .map_err(|e| Error::Protocol(format!("no agent connected on {addr}: {e}")))?;
                drop(listener);
                stream.set_nodelay(true).ok();
                let reader = stream.try_clone()?;
                Link::new(Box::new(stream), reader, None, self.config.deadline)
            }
        };
        ExternalAgent::handshake(link, &self.config)
    }
}

fn accept_with_deadline(listener: &TcpListener, deadline: Duration) -> std::io::Result<TcpStream> {
    listener.set_nonblocking(true)?;
    let start = Instant::now();
    let res = loop {
        match listener.accept() {
            Ok((s, _)) => break Ok(s),
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                if start.elapsed() >= deadline {
                    break Err(std::io::Error::new(std::io::ErrorKind::TimedOut, "accept deadline exceeded"));
                }
                thread::sleep(Duration::from_millis(5));
            }
            Err(e) => break Err(e),
        }
    };
    listener.set_nonblocking(false)?;
    let s = res?;
    s.set_nonblocking(false)?;
    Ok(s)
}

/// One line-oriented connection. Reads happen on a helper thread so that
/// every receive can time out.
struct Link {
    writer: Box<dyn Write + Send>,
    rx: Receiver<std::io::Result<String>>,
    child: Option<Child>,
    deadline: Duration,
    broken: Option<String>,
}

impl Link {
    fn new(writer: Box<dyn Write + Send>, reader: impl Read + Send + 'static, child: Option<Child>, deadline: Duration) -> Self {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(reader);
            loop {
                let mut line = String::new();
                match reader.read_line(&mut line) {
                    Ok(0) => break,
                    Ok(_) => {
                        let trimmed = line.trim_end_matches(['\n', '\r']).to_string();
                        if tx.send(Ok(trimmed)).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }
        });
        Self {
            writer,
            rx,
            child,
            deadline,
            broken: None,
        }
    }

    fn check(&self) -> Result<()> {
        match &self.broken {
            Some(why) => Err(Error::Protocol(format!("connection closed: {why}"))),
            None => Ok(()),
        }
    }

    fn send(&mut self, msg: &ServerMessage) -> Result<()> {
        self.check()?;
        let mut line = encode_line(msg)?;
        line.push('\n');
        let res = self.writer.write_all(line.as_bytes()).and_then(|_| self.writer.flush());
        if let Err(e) = res {
            self.broken = Some(format!("write failed: {e}"));
            return Err(Error::Protocol(format!("write failed: {e}")));
        }
        Ok(())
    }

    fn send_error(&mut self, message: String, offset: Option<usize>) {
        let _ = self.send(&ServerMessage::Error { message, offset });
    }

    /// Next client message within the deadline. Malformed lines are answered
    /// with an `error` naming the byte offset; the connection stays open.
    fn recv(&mut self) -> Result<ClientMessage> {
        self.check()?;
        let line = match self.rx.recv_timeout(self.deadline) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => {
                self.broken = Some(format!("read failed: {e}"));
                return Err(Error::Protocol(format!("read failed: {e}")));
            }
            Err(RecvTimeoutError::Timeout) => {
                let msg = format!("deadline of {:.3} s exceeded", self.deadline.as_secs_f64());
                self.send_error(msg.clone(), None);
                self.broken = Some(msg.clone());
                return Err(Error::Protocol(msg));
            }
            Err(RecvTimeoutError::Disconnected) => {
                self.broken = Some("agent closed the connection".into());
                return Err(Error::Protocol("agent closed the connection".into()));
            }
        };
        match decode_line::<ClientMessage>(&line) {
            Ok(ClientMessage::Error { message }) => Err(Error::Protocol(format!("agent error: {message}"))),
            Ok(m) => Ok(m),
            Err(Error::Parse { offset, message }) => {
                self.send_error(message.clone(), Some(offset));
                Err(Error::Parse { offset, message })
            }
            Err(e) => Err(e),
        }
    }

    fn close(&mut self) {
        if self.broken.is_none() {
            let _ = self.send(&ServerMessage::Bye);
            self.broken = Some("closed".into());
        }
        // Dropping the writer closes the agent's stdin or the socket.
        self.writer = Box::new(std::io::sink());
        if let Some(mut child) = self.child.take() {
            let start = Instant::now();
            loop {
                match child.try_wait() {
                    Ok(Some(_)) => break,
                    Ok(None) if start.elapsed() < self.deadline => thread::sleep(Duration::from_millis(5)),
                    _ => {
                        let _ = child.kill();
                        let _ = child.wait();
                        break;
                    }
                }
            }
        }
    }
}

impl Drop for Link {
    fn drop(&mut self) {
        self.close();
    }
}

/// An agent living behind the wire protocol.
pub struct ExternalAgent {
    link: Link,
    name: String,
    in_episode: bool,
}

impl ExternalAgent {
    fn handshake(mut link: Link, config: &ExternalConfig) -> Result<Self> {
        let task = match config.task {
            TaskKind::PointNav => "pointnav",
            TaskKind::ObjectNav => "objectnav",
        };
        link.send(&ServerMessage::Hello {
            version: PROTOCOL_VERSION,
            sensor: config.sensor.name().to_string(),
            task: task.to_string(),
            width: config.intrinsics.width,
            height: config.intrinsics.height,
            h_fov: config.intrinsics.h_fov,
            max_depth: config.intrinsics.max_depth,
        })?;
        match link.recv()? {
            ClientMessage::Hello { version } if version == PROTOCOL_VERSION => {}
            ClientMessage::Hello { version } => {
                let msg = format!("version mismatch: server speaks {PROTOCOL_VERSION}, agent speaks {version}");
                link.send_error(msg.clone(), None);
                link.broken = Some(msg.clone());
                return Err(Error::Protocol(msg));
            }
            other => {
                let msg = format!("expected hello, got {}", message_type(&other));
                link.send_error(msg.clone(), None);
                link.broken = Some(msg.clone());
                return Err(Error::Protocol(msg));
            }
        }
        Ok(Self {
            link,
            name: format!("external:{}", config.endpoint),
            in_episode: false,
        })
    }

    fn expect_action(&mut self) -> Result<Action> {
        match self.link.recv()? {
            ClientMessage::Action { action } => match action.parse::<Action>() {
                Ok(a) => Ok(a),
                Err(e) => {
                    self.link.send_error(format!("illegal action {action:?}"), None);
                    Err(e)
                }
            },
            other => {
                let msg = format!("expected action, got {}", message_type(&other));
                self.link.send_error(msg.clone(), None);
                Err(Error::Protocol(msg))
            }
        }
    }
}

fn message_type(m: &ClientMessage) -> &'static str {
    match m {
        ClientMessage::Hello { .. } => "hello",
        ClientMessage::Action { .. } => "action",
        ClientMessage::EpisodeEnd => "episode_end",
        ClientMessage::Error { .. } => "error",
        ClientMessage::Bye => "bye",
    }
}

impl Agent for ExternalAgent {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn reset(&mut self, meta: &EpisodeMeta, _obs: &Observation) -> Result<()> {
        let (task, target) = match meta.task {
            TaskSpec::PointNav { .. } => ("pointnav", None),
            TaskSpec::ObjectNav { category } => ("objectnav", Some(category.to_string())),
        };
        self.in_episode = true;
        self.link.send(&ServerMessage::Reset {
            episode_id: meta.episode_id.clone(),
            task: task.to_string(),
            target,
            max_steps: meta.max_steps,
        })
    }

    fn act(&mut self, obs: &Observation, ctx: &StepContext) -> Result<Action> {
        if !ctx.reward.is_finite() {
            return Err(Error::Protocol("non-finite reward".into()));
        }
        self.link.send(&ServerMessage::Observation {
            frame: frame_from_observation(obs)?,
            reward: ctx.reward,
            done: false,
            info: WireInfo {
                failed_action: ctx.failed_action,
            },
        })?;
        self.expect_action()
    }

    fn adapts(&self) -> bool {
        true
    }

    fn adapt(&mut self, obs: &Observation, index: u64) -> Result<Action> {
        self.link.send(&ServerMessage::CalibrateStep {
            index,
            frame: frame_from_observation(obs)?,
        })?;
        self.expect_action()
    }

    /// Sends `episode_end` and waits for the echo. Actions arriving first are
    /// answered with an error and reported once the echo arrives.
    fn episode_end(&mut self, summary: &EpisodeSummary) -> Result<()> {
        if !self.in_episode || self.link.broken.is_some() {
            return Ok(());
        }
        self.in_episode = false;
        self.link.send(&ServerMessage::EpisodeEnd {
            episode_id: summary.episode_id.clone(),
            success: summary.success,
            steps: summary.steps,
            total_reward: summary.total_reward,
            aborted: summary.aborted.clone(),
        })?;
        let mut stray = 0usize;
        loop {
            match self.link.recv() {
                Ok(ClientMessage::EpisodeEnd) => break,
                Ok(ClientMessage::Action { .. }) => {
                    stray += 1;
                    self.link.send_error(format!("episode {} already closed", summary.episode_id), None);
                }
                Ok(other) => {
                    return Err(Error::Protocol(format!(
                        "expected episode_end echo, got {}",
                        message_type(&other)
                    )))
                }
                Err(Error::Parse { .. }) => stray += 1,
                Err(e) => return Err(e),
            }
        }
        if stray > 0 {
            return Err(Error::Protocol(format!(
                "episode {} already closed: {stray} stray message(s)",
                summary.episode_id
            )));
        }
        Ok(())
    }

    fn finish(&mut self) -> Result<()> {
        self.link.close();
        Ok(())
    }
}
