//! Episode suites: generation into difficulty bins and the suite file format.
//!
//! ```text
//! # comment lines and blank lines are ignored
//! <episode_id> <scene_id> <seed> <task> <start_x> <start_y> <heading> <goal_spec> <difficulty> <l>
//! ```
//!
//! `goal_spec` is `x,y` for PointNav and a category name for ObjectNav.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Difficulty, EpisodeSpec, TaskKind, TaskSpec, OBJECTNAV_SUCCESS_M, POINTNAV_SUCCESS_M};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, hash_str, rng_from};
use crate::world::{Category, DistanceField, GoalRegion, GridMap, Point, Pose, DEFAULT_AGENT_RADIUS};

/// Inclusive shortest-path-length ranges (m) for easy, medium, hard.
pub const POINTNAV_BINS: [(f64, f64); 3] = [(0.0, 2.28), (2.29, 4.39), (4.40, 9.61)];
pub const OBJECTNAV_BINS: [(f64, f64); 3] = [(0.0, 1.50), (1.51, 3.78), (3.79, 9.00)];

pub fn bin_range(task: TaskKind, difficulty: Difficulty) -> (f64, f64) {
    let bins = match task {
        TaskKind::PointNav => POINTNAV_BINS,
        TaskKind::ObjectNav => OBJECTNAV_BINS,
    };
    bins[difficulty as usize]
}

/// Bin containing `l`, or `None` when `l` falls outside every bin.
pub fn difficulty_for(task: TaskKind, l: f64) -> Option<Difficulty> {
    Difficulty::ALL.into_iter().find(|d| {
        let (lo, hi) = bin_range(task, *d);
        l >= lo && l <= hi
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteParams {
    pub task: TaskKind,
    pub n_episodes: usize,
    pub suite_seed: u64,
    /// Starts sampled per goal before a new goal is drawn.
    pub starts_per_goal: usize,
    /// Goal draws allowed per requested episode before giving up.
    pub goal_draws_per_episode: usize,
    pub agent_radius: f64,
}

impl Default for SuiteParams {
    fn default() -> Self {
        Self {
            task: TaskKind::PointNav,
            n_episodes: 1100,
            suite_seed: 0,
            starts_per_goal: 8,
            goal_draws_per_episode: 200,
            agent_radius: DEFAULT_AGENT_RADIUS,
        }
    }
}

fn quotas(n: usize) -> [usize; 3] {
    let base = n / 3;
    [base + n % 3, base, base]
}

fn random_free_center(map: &GridMap, cells: &[usize], rng: &mut impl Rng) -> Point {
    map.cell_center(*cells.choose(rng).expect("non-empty"))
}

/// Rejection-sample episodes until every bin holds its quota.
///
/// Easy, medium and hard each get `n / 3` episodes and easy takes the
/// remainder. Output order is generation order; ids are `<task>-<index>`.
pub fn generate_suite(scenes: &[Arc<GridMap>], params: &SuiteParams) -> Result<Vec<EpisodeSpec>> {
    if params.n_episodes < 3 {
        return Err(Error::Suite(format!("n_episodes = {} must be at least 3", params.n_episodes)));
    }
    if scenes.is_empty() {
        return Err(Error::Suite("no scenes".into()));
    }
    let task = params.task;
    let mut need = quotas(params.n_episodes);
    let navigable: Vec<Vec<usize>> = scenes
        .iter()
        .map(|m| {
            (0..m.width() * m.height())
                .filter(|&c| m.is_navigable(c, params.agent_radius))
                .collect()
        })
        .collect();
    let mut rng = rng_from(params.suite_seed);
    let mut out: Vec<(Difficulty, String, TaskSpec, Pose, f64)> = Vec::new();
    let budget = params.goal_draws_per_episode * params.n_episodes;
    let mut draws = 0;
    while need.iter().any(|n| *n > 0) {
        if draws >= budget {
            let missing = Difficulty::ALL
                .into_iter()
                .filter(|d| need[*d as usize] > 0)
                .map(|d| {
                    let (lo, hi) = bin_range(task, d);
                    format!("{d} [{lo:.2}, {hi:.2}] m short by {}", need[d as usize])
                })
                .collect::<Vec<_>>()
                .join(", ");
            return Err(Error::Suite(format!(
                "scenes too small to fill difficulty bins after {draws} goal draws: {missing}"
            )));
        }
        draws += 1;
        let si = rng.random_range(0..scenes.len());
        let (map, cells) = (&scenes[si], &navigable[si]);
        if cells.is_empty() {
            continue;
        }
        let (spec_task, region) = match task {
            TaskKind::PointNav => {
                let goal = random_free_center(map, cells, &mut rng);
                (TaskSpec::PointNav { goal }, GoalRegion::Point(goal))
            }
            TaskKind::ObjectNav => {
                let mut cats: Vec<Category> = map.objects().iter().map(|o| o.category).collect();
                cats.sort();
                cats.dedup();
                let Some(&category) = cats.choose(&mut rng) else {
                    continue;
                };
                (
                    TaskSpec::ObjectNav { category },
                    GoalRegion::Category {
                        category,
                        radius: OBJECTNAV_SUCCESS_M,
                    },
                )
            }
        };
        let field = DistanceField::with_radius(map, &region, params.agent_radius);
        for _ in 0..params.starts_per_goal {
            let start = random_free_center(map, cells, &mut rng);
            let heading = f64::from(rng.random_range(0..360u32));
            if let TaskSpec::PointNav { goal } = spec_task {
                if start.distance(&goal) <= POINTNAV_SUCCESS_M {
                    continue;
                }
            }
            let Some(l) = field.distance_from(map, start) else {
                continue;
            };
            if l <= 0.0 {
                continue;
            }
            let Some(d) = difficulty_for(task, l) else {
                continue;
            };
            if need[d as usize] == 0 {
                continue;
            }
            need[d as usize] -= 1;
            out.push((d, map.scene_id().to_string(), spec_task, Pose::new(start.x, start.y, heading), l));
        }
    }
    Ok(out
        .into_iter()
        .enumerate()
        .map(|(k, (difficulty, scene_id, task_spec, start, l))| {
            let episode_id = format!("{}-{k:05}", task.name());
            EpisodeSpec {
                seed: derive_seed(params.suite_seed, hash_str(&episode_id)),
                episode_id,
                scene_id,
                task: task_spec,
                start,
                difficulty,
                l,
            }
        })
        .collect())
}

pub fn format_suite(episodes: &[EpisodeSpec]) -> String {
    let mut s = String::from(
        "# episode_id scene_id seed task start_x start_y heading goal_spec difficulty l\n",
    );
    for e in episodes {
        let goal = match e.task {
            TaskSpec::PointNav { goal } => format!("{},{}", goal.x, goal.y),
            TaskSpec::ObjectNav { category } => category.to_string(),
        };
        let _ = writeln!(
            s,
            "{} {} {} {} {} {} {} {} {} {}",
            e.episode_id,
            e.scene_id,
            e.seed,
            e.task.kind(),
            e.start.x,
            e.start.y,
            e.start.heading,
            goal,
            e.difficulty,
            e.l
        );
    }
    s
}

pub fn parse_suite(text: &str) -> Result<Vec<EpisodeSpec>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let line_off = offset;
        offset += line.len();
        let body = line.trim_end_matches(['\n', '\r']);
        if body.trim().is_empty() || body.trim_start().starts_with('#') {
            continue;
        }
        let mut fields = Vec::new();
        let mut col = 0;
        for tok in body.split(' ') {
            fields.push((line_off + col, tok));
            col += tok.len() + 1;
        }
        if fields.len() != 10 {
            return Err(Error::Parse {
                offset: line_off,
                message: format!("suite record needs 10 fields, got {}", fields.len()),
            });
        }
        let bad = |k: usize, what: &str| Error::Parse {
            offset: fields[k].0,
            message: format!("bad {what} {:?}", fields[k].1),
        };
        let num = |k: usize, what: &str| fields[k].1.parse::<f64>().map_err(|_| bad(k, what));
        let task: TaskKind = fields[3].1.parse().map_err(|_| bad(3, "task"))?;
        let task_spec = match task {
            TaskKind::PointNav => {
                let (x, y) = fields[7].1.split_once(',').ok_or_else(|| bad(7, "goal"))?;
                TaskSpec::PointNav {
                    goal: Point::new(x.parse().map_err(|_| bad(7, "goal"))?, y.parse().map_err(|_| bad(7, "goal"))?),
                }
            }
            TaskKind::ObjectNav => TaskSpec::ObjectNav {
                category: fields[7].1.parse().map_err(|_| bad(7, "category"))?,
            },
        };
        let heading = num(6, "heading")?;
        if !(0.0..360.0).contains(&heading) {
            return Err(bad(6, "heading"));
        }
        let spec = EpisodeSpec {
            episode_id: fields[0].1.to_string(),
            scene_id: fields[1].1.to_string(),
            seed: fields[2].1.parse().map_err(|_| bad(2, "seed"))?,
            task: task_spec,
            start: Pose {
                x: num(4, "start_x")?,
                y: num(5, "start_y")?,
                heading,
                pitch: 0,
            },
            difficulty: fields[8].1.parse().map_err(|_| bad(8, "difficulty"))?,
            l: num(9, "l")?,
        };
        spec.validate().map_err(|e| Error::Parse {
            offset: line_off,
            message: e.to_string(),
        })?;
        out.push(spec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{generate_scene, SceneParams};

    fn scenes(n: u64) -> Vec<Arc<GridMap>> {
        (0..n).map(|s| Arc::new(generate_scene(s, &SceneParams::default()).unwrap())).collect()
    }

    #[test]
    fn quotas_give_remainder_to_easy() {
        assert_eq!(quotas(3), [1, 1, 1]);
        assert_eq!(quotas(1100), [368, 366, 366]);
        assert_eq!(quotas(1095), [365, 365, 365]);
    }

    #[test]
    fn small_suite_round_trips_through_text() {
        let sc = scenes(2);
        let params = SuiteParams {
            n_episodes: 12,
            suite_seed: 3,
            ..SuiteParams::default()
        };
        let suite = generate_suite(&sc, &params).unwrap();
        assert_eq!(suite.len(), 12);
        for d in Difficulty::ALL {
            assert_eq!(suite.iter().filter(|e| e.difficulty == d).count(), 4);
        }
        let text = format_suite(&suite);
        assert_eq!(parse_suite(&text).unwrap(), suite);
        assert_eq!(format_suite(&parse_suite(&text).unwrap()), text);
    }

    #[test]
    fn parse_errors_carry_offsets() {
        let text = "# header\nep scene 1 pointnav 1 1 0 2,2 easy\n";
        let err = parse_suite(text).unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 9, .. }), "{err}");
        let text = "ep scene 1 pointnav 1 1 0 2,2 tricky 1.5\n";
        let err = parse_suite(text).unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 30, .. }), "{err}");
    }

    #[test]
    fn tiny_scene_reports_the_missing_bin() {
        let sc = vec![Arc::new(generate_scene(1, &SceneParams::empty_room(2.5, 2.5)).unwrap())];
        let params = SuiteParams {
            n_episodes: 3,
            goal_draws_per_episode: 20,
            ..SuiteParams::default()
        };
        let err = generate_suite(&sc, &params).unwrap_err().to_string();
        assert!(err.contains("hard"), "{err}");
    }
}
