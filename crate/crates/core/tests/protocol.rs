mod common;

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpStream};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use common::*;
use robustnav::agents::{builtin, depth_columns, greedy_rule, Agent};
use robustnav::dynamics::Action;
use robustnav::protocol::*;
use robustnav::render::CameraIntrinsics;
use robustnav::runner::{run_suite, EpisodeOutcome, RunOptions};
use robustnav::task::*;
use robustnav::world::GridMap;
use robustnav::Error;

type Session = ClientSession<BufReader<TcpStream>, TcpStream>;

fn env_config(sensor: SensorConfig) -> EnvConfig {
    EnvConfig {
        intrinsics: CameraIntrinsics::with_size(32, 32),
        sensor,
        ..EnvConfig::default()
    }
}

fn fixture(n: usize) -> (HashMap<String, Arc<GridMap>>, Vec<EpisodeSpec>) {
    let scenes = generated_scenes(3);
    let params = SuiteParams {
        n_episodes: n,
        suite_seed: 4,
        ..SuiteParams::default()
    };
    let episodes = generate_suite(&scenes, &params).unwrap();
    (scenes.iter().map(|m| (m.scene_id().to_string(), m.clone())).collect(), episodes)
}

fn connector(deadline: Duration, cfg: &EnvConfig) -> Connector {
    Connector::new(ExternalConfig {
        endpoint: Endpoint::TcpListen("127.0.0.1:0".into()),
        deadline,
        sensor: cfg.sensor,
        task: TaskKind::PointNav,
        intrinsics: cfg.intrinsics,
    })
    .unwrap()
}

fn spawn_client<T: Send + 'static>(addr: SocketAddr, body: impl FnOnce(Session) -> T + Send + 'static) -> JoinHandle<T> {
    thread::spawn(move || {
        let stream = TcpStream::connect(addr).unwrap();
        let reader = BufReader::new(stream.try_clone().unwrap());
        body(ClientSession::new(reader, stream))
    })
}

fn run_external(conn: &Connector, scenes: &HashMap<String, Arc<GridMap>>, episodes: &[EpisodeSpec], cfg: &EnvConfig, budget: u64) -> robustnav::Result<Vec<EpisodeOutcome>> {
    let factory = || conn.connect().map(|a| Box::new(a) as Box<dyn Agent>);
    run_suite(
        scenes,
        episodes,
        cfg,
        &factory,
        &RunOptions {
            workers: 1,
            calibration_budget: budget,
        },
    )
}

#[test]
fn observation_codec_round_trips() {
    let (scenes, episodes) = fixture(6);
    let mut frames = 0;
    for sensor in [SensorConfig::Rgbd, SensorConfig::Rgb] {
        for spec in &episodes {
            let mut env = Env::new(scenes[&spec.scene_id].clone(), env_config(sensor)).unwrap();
            let mut obs = env.reset(spec).unwrap();
            for k in 0..8 {
                let line = encode_observation(&obs, -0.01 * k as f64, false, k % 3 == 0).unwrap();
                assert!(!line.contains('\n'));
                assert_eq!(line.contains("\"depth\""), sensor == SensorConfig::Rgbd);
                let (back, reward, done, failed) = decode_observation(&line).unwrap();
                assert_eq!(back, obs);
                assert_eq!((reward, done, failed), (-0.01 * k as f64, false, k % 3 == 0));
                frames += 1;
                let a = [Action::MoveAhead, Action::RotateLeft][k % 2];
                obs = env.step(a).unwrap().obs;
            }
        }
    }
    assert!(frames >= 96);
    assert!(encode_observation(
        &Observation {
            step_index: 0,
            width: 1,
            height: 1,
            rgb: vec![0; 3],
            depth: None,
            gps_compass: Some([f64::NAN, 0.0]),
            target: None
        },
        0.0,
        false,
        false
    )
    .is_err());
}

#[test]
fn full_size_rgb_payload_length() {
    let obs = Observation {
        step_index: 3,
        width: 224,
        height: 224,
        rgb: (0..224 * 224 * 3).map(|k| (k % 251) as u8).collect(),
        depth: Some(vec![1.5; 224 * 224]),
        gps_compass: Some([2.0, 10.0]),
        target: None,
    };
    let frame = frame_from_observation(&obs).unwrap();
    assert_eq!(frame.rgb.len(), 200_704);
    assert_eq!(frame.depth.as_ref().unwrap().len(), 267_608);
    assert_eq!(observation_from_frame(&frame).unwrap(), obs);
}

#[test]
fn golden_lines_round_trip_exactly() {
    let text = include_str!("fixtures/messages.jsonl");
    for line in text.lines().filter(|l| !l.is_empty()) {
        let msg: ServerMessage = decode_line(line).unwrap();
        assert_eq!(encode_line(&msg).unwrap(), line);
        if let ServerMessage::Observation { frame, .. } | ServerMessage::CalibrateStep { frame, .. } = &msg {
            observation_from_frame(frame).unwrap();
        }
    }
    assert_eq!(encode_action(Action::RotateLeft), r#"{"type":"action","action":"rotate_left"}"#);
    assert_eq!(decode_action(r#"{"type":"action","action":"end","extra":1}"#).unwrap(), Action::End);
}

#[test]
fn remote_planner_matches_in_process() {
    let (scenes, episodes) = fixture(6);
    let cfg = env_config(SensorConfig::Rgbd);
    let conn = connector(Duration::from_secs(10), &cfg);
    let client = spawn_client(conn.local_addr().unwrap(), |mut s| {
        run_client(&mut s, |obs| Ok(greedy_rule(obs.gps_compass.unwrap(), &depth_columns(obs)?))).unwrap();
        (s.observations, s.actions)
    });
    let remote = run_external(&conn, &scenes, &episodes, &cfg, 0).unwrap();
    let (seen, sent) = client.join().unwrap();
    let local = run_suite(&scenes, &episodes, &cfg, &|| builtin("depth_planner"), &RunOptions::default()).unwrap();
    assert_eq!(remote.len(), local.len());
    for (r, l) in remote.iter().zip(&local) {
        assert!(!r.had_protocol_error(), "{:?} {:?}", r.record.aborted, r.late_error);
        assert_eq!(r.record, l.record);
    }
    let steps: u64 = remote.iter().map(|o| o.record.steps.len() as u64).sum();
    assert_eq!(sent, steps);
    assert_eq!(seen, steps);
}

#[test]
fn end_client_never_succeeds() {
    let (scenes, episodes) = fixture(6);
    let cfg = env_config(SensorConfig::Rgb);
    let conn = connector(Duration::from_secs(10), &cfg);
    let client = spawn_client(conn.local_addr().unwrap(), |mut s| run_client(&mut s, |_| Ok(Action::End)).unwrap());
    let out = run_external(&conn, &scenes, &episodes, &cfg, 0).unwrap();
    client.join().unwrap();
    assert!(out.iter().all(|o| !o.record.success && o.record.steps.len() == 1 && !o.had_protocol_error()));
}

#[test]
fn calibration_frames_match_budget() {
    let (scenes, episodes) = fixture(3);
    let cfg = env_config(SensorConfig::Rgbd);
    let conn = connector(Duration::from_secs(10), &cfg);
    let client = spawn_client(conn.local_addr().unwrap(), |mut s| {
        s.handshake().unwrap();
        let mut calib = Vec::new();
        loop {
            match s.next_event().unwrap() {
                ClientEvent::Calibrate { index, .. } => {
                    calib.push(index);
                    s.send_action(Action::RotateLeft).unwrap();
                }
                ClientEvent::Observation { done: false, .. } => s.send_action(Action::End).unwrap(),
                ClientEvent::EpisodeEnd { .. } => s.ack_episode_end().unwrap(),
                ClientEvent::Bye => return calib,
                _ => {}
            }
        }
    });
    run_external(&conn, &scenes, &episodes, &cfg, 40).unwrap();
    assert_eq!(client.join().unwrap(), (0..40).collect::<Vec<u64>>());
}

#[test]
fn malformed_line_gets_offset_and_aborts() {
    let (scenes, episodes) = fixture(3);
    let cfg = env_config(SensorConfig::Rgbd);
    let conn = connector(Duration::from_secs(10), &cfg);
    let bad = r#"{"type":"action","action":}"#;
    let client = spawn_client(conn.local_addr().unwrap(), move |mut s| {
        s.handshake().unwrap();
        let mut first = true;
        let mut errors = Vec::new();
        loop {
            match s.next_event() {
                Ok(ClientEvent::Observation { done: false, .. }) if first => {
                    first = false;
                    s.send_line(bad).unwrap();
                }
                Ok(ClientEvent::Observation { done: false, .. }) => s.send_action(Action::End).unwrap(),
                Ok(ClientEvent::EpisodeEnd { aborted, .. }) => {
                    errors.push(aborted);
                    s.ack_episode_end().unwrap();
                }
                Ok(ClientEvent::Bye) => return errors,
                Ok(_) => {}
                Err(Error::Protocol(m)) => errors.push(Some(m)),
                Err(e) => panic!("{e}"),
            }
        }
    });
    let out = run_external(&conn, &scenes, &episodes, &cfg, 0).unwrap();
    let seen = client.join().unwrap();
    assert!(matches!(&out[0].record.aborted, Some(m) if m.contains("byte 26")), "{:?}", out[0].record.aborted);
    assert!(!out[0].record.success);
    assert!(out[1..].iter().all(|o| !o.had_protocol_error()));
    assert!(seen[0].as_deref().is_some_and(|m| m.contains("malformed")), "{seen:?}");
}

#[test]
fn raw_error_line_carries_offset() {
    let cfg = env_config(SensorConfig::Rgbd);
    let (scenes, episodes) = fixture(3);
    let conn = connector(Duration::from_secs(10), &cfg);
    let addr = conn.local_addr().unwrap();
    let client = thread::spawn(move || {
        let mut stream = TcpStream::connect(addr).unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut line = String::new();
        let mut next = |reader: &mut BufReader<TcpStream>| {
            line.clear();
            reader.read_line(&mut line).unwrap();
            serde_json::from_str::<serde_json::Value>(&line).unwrap()
        };
        assert_eq!(next(&mut reader)["type"], "hello");
        stream.write_all(b"{\"type\":\"hello\",\"version\":1}\n").unwrap();
        assert_eq!(next(&mut reader)["type"], "reset");
        assert_eq!(next(&mut reader)["type"], "observation");
        stream.write_all(b"{\"type\": \"action\", \"action\": ]}\n").unwrap();
        let err = next(&mut reader);
        assert_eq!(err["type"], "error");
        assert_eq!(err["offset"], 29);
        drop(stream);
    });
    let out = run_external(&conn, &scenes, &episodes[..1], &cfg, 0).unwrap();
    client.join().unwrap();
    assert!(out[0].record.aborted.is_some());
}

#[test]
fn missed_deadline_aborts() {
    let (scenes, episodes) = fixture(3);
    let cfg = env_config(SensorConfig::Rgbd);
    let conn = connector(Duration::from_millis(200), &cfg);
    let client = spawn_client(conn.local_addr().unwrap(), |mut s| {
        s.handshake().unwrap();
        loop {
            match s.next_event() {
                Ok(ClientEvent::Observation { done: false, .. }) => thread::sleep(Duration::from_millis(600)),
                Ok(ClientEvent::Bye) | Err(_) => return,
                Ok(_) => {}
            }
        }
    });
    let out = run_external(&conn, &scenes, &episodes, &cfg, 0).unwrap();
    client.join().unwrap();
    assert!(matches!(&out[0].record.aborted, Some(m) if m.contains("deadline")), "{:?}", out[0].record.aborted);
    assert!(out.iter().all(|o| o.record.aborted.is_some() && !o.record.success));
}

#[test]
fn version_mismatch_is_refused() {
    let cfg = env_config(SensorConfig::Rgbd);
    let conn = connector(Duration::from_secs(5), &cfg);
    let addr = conn.local_addr().unwrap();
    let client = thread::spawn(move || {
        let mut stream = TcpStream::connect(addr).unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        stream.write_all(b"{\"type\":\"hello\",\"version\":2}\n").unwrap();
        line.clear();
        reader.read_line(&mut line).unwrap();
        line
    });
    let err = conn.connect().err().unwrap().to_string();
    assert!(err.contains("version mismatch"), "{err}");
    assert!(client.join().unwrap().contains("version mismatch"));
}

#[test]
fn stray_action_after_episode_end_is_late_error() {
    let (scenes, episodes) = fixture(3);
    let cfg = env_config(SensorConfig::Rgbd);
    let conn = connector(Duration::from_secs(10), &cfg);
    let client = spawn_client(conn.local_addr().unwrap(), |mut s| {
        s.handshake().unwrap();
        let mut errors = 0;
        let mut first = true;
        loop {
            match s.next_event() {
                Ok(ClientEvent::Observation { done: false, .. }) => s.send_action(Action::End).unwrap(),
                Ok(ClientEvent::EpisodeEnd { .. }) => {
                    if first {
                        first = false;
                        s.send_action(Action::MoveAhead).unwrap();
                    }
                    s.ack_episode_end().unwrap();
                }
                Ok(ClientEvent::Bye) => return errors,
                Ok(_) => {}
                Err(Error::Protocol(m)) => {
                    assert!(m.contains("already closed"), "{m}");
                    errors += 1;
                }
                Err(e) => panic!("{e}"),
            }
        }
    });
    let out = run_external(&conn, &scenes, &episodes, &cfg, 0).unwrap();
    assert_eq!(client.join().unwrap(), 1);
    assert!(out[0].record.aborted.is_none());
    assert!(out[0].late_error.as_deref().is_some_and(|m| m.contains("already closed")));
    assert!(out[0].had_protocol_error());
    assert!(out[1..].iter().all(|o| !o.had_protocol_error()));
}

#[test]
fn endpoints_parse() {
    assert_eq!(Endpoint::parse("tcp:127.0.0.1:7000").unwrap(), Endpoint::TcpListen("127.0.0.1:7000".into()));
    let e = Endpoint::parse("stdio:python agent.py --fast").unwrap();
    assert_eq!(e.to_string(), "stdio:python agent.py --fast");
    assert!(Endpoint::parse("stdio:").is_err());
    assert!(Endpoint::parse("http://x").is_err());
}
