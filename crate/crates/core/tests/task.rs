mod common;

use std::sync::Arc;

use proptest::prelude::*;

use common::*;
use robustnav::agents::{Agent, EpisodeMeta, StepContext};
use robustnav::dynamics::{Action, ActuationModel};
use robustnav::render::CameraIntrinsics;
use robustnav::task::*;
use robustnav::world::*;
use robustnav::{Error, Result};

fn pointnav(map: &GridMap, start: Pose, goal: Point) -> EpisodeSpec {
    let l = geodesic_distance(map, start.position(), &GoalRegion::Point(goal)).unwrap();
    EpisodeSpec {
        episode_id: "pointnav-hand".into(),
        scene_id: map.scene_id().into(),
        seed: 5,
        task: TaskSpec::PointNav { goal },
        start,
        difficulty: difficulty_for(TaskKind::PointNav, l).unwrap_or(Difficulty::Hard),
        l,
    }
}

fn env(map: GridMap, actuation: ActuationModel) -> Env {
    let cfg = EnvConfig {
        intrinsics: CameraIntrinsics::with_size(32, 32),
        actuation,
        ..EnvConfig::default()
    };
    Env::new(Arc::new(map), cfg).unwrap()
}

#[test]
fn move_ahead_toward_goal_earns_progress_minus_slack() {
    let map = open_room(6.0, 6.0);
    let spec = pointnav(&map, Pose::new(1.025, 1.025, 0.0), Point::new(3.025, 1.025));
    let mut env = env(map, ActuationModel::noise_free());
    env.reset(&spec).unwrap();
    let before = env.geodesic_to_goal().unwrap();
    let r = env.step(Action::MoveAhead).unwrap();
    assert!((before - env.geodesic_to_goal().unwrap() - 0.25).abs() < 1e-9);
    assert!((r.reward - 0.24).abs() < 1e-9, "{}", r.reward);
    assert!(!r.done && !r.success);
}

#[test]
fn end_in_range_pays_terminal_reward() {
    let map = open_room(6.0, 6.0);
    let spec = pointnav(&map, Pose::new(1.0, 1.0, 0.0), Point::new(1.15, 1.0));
    let mut env = env(map, ActuationModel::default());
    env.reset(&spec).unwrap();
    let r = env.step(Action::End).unwrap();
    assert!(r.done && r.success);
    assert_eq!(r.reward, 10.0);
    assert!(matches!(env.step(Action::MoveAhead), Err(Error::EpisodeDone)));
}

#[test]
fn end_far_from_goal_pays_nothing() {
    let map = open_room(6.0, 6.0);
    let spec = pointnav(&map, Pose::new(1.0, 1.0, 0.0), Point::new(5.0, 5.0));
    let mut env = env(map, ActuationModel::default());
    env.reset(&spec).unwrap();
    let r = env.step(Action::End).unwrap();
    assert!(r.done && !r.success);
    assert_eq!(r.reward, 0.0);
}

#[test]
fn episode_is_cut_at_max_steps() {
    let map = open_room(6.0, 6.0);
    let spec = pointnav(&map, Pose::new(1.0, 1.0, 0.0), Point::new(5.0, 5.0));
    let mut env = env(map, ActuationModel::default());
    env.reset(&spec).unwrap();
    for k in 1..=MAX_STEPS {
        let r = env.step(Action::RotateLeft).unwrap();
        assert_eq!(r.done, k == MAX_STEPS);
        assert!(!r.success);
        assert!(r.reward < 0.0 || k < MAX_STEPS);
    }
    assert!(env.is_done());
    assert!(matches!(env.step(Action::End), Err(Error::EpisodeDone)));
}

#[test]
fn pointnav_success_threshold() {
    let map = open_room(6.0, 6.0);
    let goal = Point::new(3.0, 3.0);
    let spec = pointnav(&map, Pose::new(1.0, 1.0, 0.0), goal);
    let mut env = env(map, ActuationModel::default());
    env.reset(&spec).unwrap();
    assert!(env.in_range(&Pose::new(3.19, 3.0, 0.0)).unwrap());
    assert!(!env.in_range(&Pose::new(3.21, 3.0, 0.0)).unwrap());
    assert!(env.legal(Action::LookUp).is_err());
}

#[test]
fn reset_is_reproducible_and_gps_is_polar() {
    let map = generated(3);
    let episodes = generate_suite(
        &[map.clone()],
        &SuiteParams {
            n_episodes: 3,
            ..SuiteParams::default()
        },
    )
    .unwrap();
    let mut env = env((*map).clone(), ActuationModel::default());
    for spec in &episodes {
        let a = env.reset(spec).unwrap();
        env.step(Action::MoveAhead).unwrap();
        let b = env.reset(spec).unwrap();
        assert_eq!(a, b);
        let TaskSpec::PointNav { goal } = spec.task else { unreachable!() };
        let [r, theta] = a.gps_compass.unwrap();
        assert!((r - spec.start.position().distance(&goal)).abs() < 1e-12);
        let bearing = (goal.y - spec.start.y).atan2(goal.x - spec.start.x).to_degrees();
        assert!((wrap_degrees(bearing - spec.start.heading) - theta).abs() < 1e-9);
        assert!(a.depth.is_some() && a.target.is_none());
        assert!((env.geodesic_to_goal().unwrap() - spec.l).abs() < 1e-6);
    }
}

fn vase_room(with_wall: bool) -> GridMap {
    let (w, h) = (120, 120);
    let mut sem = room_cells(w, h);
    let id = FIRST_INSTANCE_ID;
    fill(&mut sem, w, (56, 64), (56, 64), id);
    if with_wall {
        // wall at x in [2.5, 2.6) between the agent and the vase face at x = 2.8
        fill(&mut sem, w, (50, 52), (40, 80), SEMANTIC_WALL);
    }
    map(w, h, sem, vec![object(w, Category::Vase, id, (56, 64), (56, 64))])
}

fn objectnav_spec(map: &GridMap, start: Pose) -> EpisodeSpec {
    EpisodeSpec {
        episode_id: "objectnav-hand".into(),
        scene_id: map.scene_id().into(),
        seed: 1,
        task: TaskSpec::ObjectNav { category: Category::Vase },
        start,
        difficulty: Difficulty::Easy,
        l: 1.0,
    }
}

#[test]
fn objectnav_requires_a_clear_view() {
    let pose = Pose::new(2.0, 3.0, 0.0);
    let open = vase_room(false);
    let spec = objectnav_spec(&open, pose);
    let mut e = env(open, ActuationModel::default());
    let obs = e.reset(&spec).unwrap();
    assert_eq!(obs.target, Some(Category::Vase));
    assert!(obs.gps_compass.is_none());
    assert!((e.distance_to_goal(&pose).unwrap() - 0.8).abs() < 1e-9);
    assert!(e.in_range(&pose).unwrap());
    assert!(!e.in_range(&Pose::new(2.0, 3.0, 180.0)).unwrap());

    let walled = vase_room(true);
    let spec = objectnav_spec(&walled, pose);
    let mut e = env(walled, ActuationModel::default());
    e.reset(&spec).unwrap();
    assert!((e.distance_to_goal(&pose).unwrap() - 0.8).abs() < 1e-9);
    assert!(!e.in_range(&pose).unwrap());
}

#[test]
fn suites_fill_their_bins() {
    let scenes = generated_scenes(5);
    let params = SuiteParams {
        n_episodes: 30,
        suite_seed: 9,
        ..SuiteParams::default()
    };
    let a = generate_suite(&scenes, &params).unwrap();
    let b = generate_suite(&scenes, &params).unwrap();
    assert_eq!(a, b);
    for d in Difficulty::ALL {
        assert_eq!(a.iter().filter(|e| e.difficulty == d).count(), 10);
    }
    for e in &a {
        let map = scenes.iter().find(|m| m.scene_id() == e.scene_id).unwrap();
        let TaskSpec::PointNav { goal } = e.task else { unreachable!() };
        let g = geodesic_distance(map, e.start.position(), &GoalRegion::Point(goal)).unwrap();
        assert!((g - e.l).abs() < 1e-6);
        let (lo, hi) = bin_range(TaskKind::PointNav, e.difficulty);
        assert!(e.l >= lo && e.l <= hi);
    }
    assert_eq!(parse_suite(&format_suite(&a)).unwrap(), a);
}

#[test]
fn objectnav_suite_round_trips() {
    let scenes = generated_scenes(3);
    let params = SuiteParams {
        task: TaskKind::ObjectNav,
        n_episodes: 9,
        ..SuiteParams::default()
    };
    let suite = generate_suite(&scenes, &params).unwrap();
    assert_eq!(suite.len(), 9);
    assert_eq!(parse_suite(&format_suite(&suite)).unwrap(), suite);
}

#[test]
fn tiny_scene_cannot_fill_hard_bin() {
    let map = Arc::new(generate_scene(0, &SceneParams::empty_room(2.0, 2.0)).unwrap());
    let params = SuiteParams {
        n_episodes: 3,
        goal_draws_per_episode: 5,
        ..SuiteParams::default()
    };
    let err = generate_suite(&[map], &params).unwrap_err().to_string();
    assert!(err.contains("hard") || err.contains("medium"), "{err}");
}

#[test]
fn suite_parse_reports_offsets() {
    let text = "# header\npointnav-0 scene-0000 1 pointnav 1.0 1.0 0 2.0,2.0 easy 1.5\npointnav-1 scene-0000 1 pointnav 1.0 x 0 2.0,2.0 easy 1.5\n";
    match parse_suite(text) {
        Err(Error::Parse { offset, .. }) => assert_eq!(offset, text.find(" x ").unwrap() + 1),
        other => panic!("{other:?}"),
    }
}

/// Records every call it gets.
#[derive(Default)]
struct Counting {
    calls: usize,
}

impl Agent for Counting {
    fn name(&self) -> String {
        "counting".into()
    }

    fn reset(&mut self, _meta: &EpisodeMeta, _obs: &Observation) -> Result<()> {
        self.calls += 1;
        Ok(())
    }

    fn act(&mut self, _obs: &Observation, _ctx: &StepContext) -> Result<Action> {
        self.calls += 1;
        Ok(Action::MoveAhead)
    }

    fn adapts(&self) -> bool {
        true
    }

    fn adapt(&mut self, _obs: &Observation, _index: u64) -> Result<Action> {
        self.calls += 1;
        Ok(Action::RotateLeft)
    }
}

#[test]
fn calibration_budget() {
    let map = generated(0);
    let episodes = generate_suite(
        &[map.clone()],
        &SuiteParams {
            n_episodes: 3,
            ..SuiteParams::default()
        },
    )
    .unwrap();
    let mut e = Env::new(map, EnvConfig {
        intrinsics: CameraIntrinsics::with_size(16, 16),
        ..EnvConfig::default()
    })
    .unwrap();
    let mut agent = Counting::default();
    assert_eq!(calibration_phase(&mut e, &mut agent, 0, &episodes).unwrap(), 0);
    assert_eq!(agent.calls, 0);
    assert_eq!(calibration_phase(&mut e, &mut agent, 700, &episodes).unwrap(), 700);
    assert_eq!(agent.calls, 700);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn rewards_telescope_for_any_walk(seed in 0u64..6, actions in proptest::collection::vec(0usize..3, 1..80)) {
        let map = generated(seed);
        let episodes = generate_suite(&[map.clone()], &SuiteParams { n_episodes: 3, suite_seed: seed, ..SuiteParams::default() }).unwrap();
        let mut e = Env::new(map, EnvConfig { intrinsics: CameraIntrinsics::with_size(16, 16), ..EnvConfig::default() }).unwrap();
        let spec = &episodes[seed as usize % 3];
        e.reset(spec).unwrap();
        let mut total = 0.0;
        let mut n = 0.0;
        for a in actions {
            let r = e.step([Action::MoveAhead, Action::RotateLeft, Action::RotateRight][a]).unwrap();
            total += r.reward;
            n += 1.0;
            if r.done { break; }
        }
        let g = e.geodesic_to_goal().unwrap();
        prop_assert!((total - (spec.l - g - 0.01 * n)).abs() < 1e-9);
    }
}
