//! Run configuration and the operator commands behind the `robustnav` binary.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::agents::{builtin, Agent};
use crate::dynamics::DynCorruption;
use crate::error::{Error, Result};
use crate::metrics::{aggregate, emit_report, EpisodeRecord, GroupKey, ReportFormat, SuiteReport, CSV_HEADER};
use crate::protocol::{Connector, Endpoint, ExternalConfig, DEFAULT_DEADLINE_SECS};
use crate::render::{render, Frame};
use crate::runner::{run_suite, EpisodeOutcome, RunOptions};
use crate::task::{
    format_suite, generate_suite, parse_suite, Difficulty, EnvConfig, EpisodeSpec, SensorConfig, SuiteParams, TaskKind,
    DEFAULT_CALIBRATION_BUDGET,
};
use crate::viscorrupt::CorruptionStack;
use crate::world::{generate_scene, load_scene, GridMap, Pose, SceneParams, SEMANTIC_FLOOR, SEMANTIC_WALL};

/// Environment variable overriding the suite seed.
pub const SEED_ENV: &str = "ROBUSTNAV_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenesConfig {
    /// Seeds of procedurally generated scenes.
    pub generate: Vec<u64>,
    /// Scene files to load.
    pub paths: Vec<PathBuf>,
    pub params: SceneParams,
}

impl Default for ScenesConfig {
    fn default() -> Self {
        Self {
            generate: (0..15).collect(),
            paths: Vec::new(),
            params: SceneParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub task: TaskKind,
    pub n_episodes: usize,
    pub seed: u64,
    pub starts_per_goal: usize,
    pub goal_draws_per_episode: usize,
    /// Read the suite from this file instead of generating it.
    pub file: Option<PathBuf>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        let p = SuiteParams::default();
        Self {
            task: p.task,
            n_episodes: p.n_episodes,
            seed: p.suite_seed,
            starts_per_goal: p.starts_per_goal,
            goal_draws_per_episode: p.goal_draws_per_episode,
            file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    /// Built-in name or `external:<endpoint>`.
    pub name: String,
    /// Per-step deadline for external agents.
    pub deadline_secs: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            name: "depth_planner".into(),
            deadline_secs: DEFAULT_DEADLINE_SECS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub workers: usize,
    pub calibration_budget: u64,
    /// Benchmark mode refuses train-reserved conditions.
    pub benchmark: bool,
    pub output: PathBuf,
    pub group_by: Vec<GroupKey>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            workers: 1,
            calibration_budget: DEFAULT_CALIBRATION_BUDGET,
            benchmark: true,
            output: PathBuf::from("robustnav-out"),
            group_by: vec![GroupKey::Corruption, GroupKey::Visual, GroupKey::Dynamics, GroupKey::Sensor],
        }
    }
}

/// Dynamics corruption as a short string or a full table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DynSpec {
    Short(String),
    Full(DynCorruption),
}

impl Default for DynSpec {
    fn default() -> Self {
        DynSpec::Short("none".into())
    }
}

impl DynSpec {
    pub fn resolve(&self) -> Result<DynCorruption> {
        let c = match self {
            DynSpec::Short(s) => DynCorruption::parse(s)?,
            DynSpec::Full(c) => c.clone(),
        };
        c.validate()?;
        Ok(c)
    }
}

/// One evaluation condition.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Condition {
    /// Visual stack, e.g. `speckle:5` or `defocus_blur:3+camera_crack`.
    pub visual: String,
    pub dynamics: DynSpec,
    pub sensor: Option<SensorConfig>,
    /// Reserved for training; refused in benchmark mode.
    pub train_reserved: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenes: ScenesConfig,
    pub suite: SuiteConfig,
    /// Base environment; conditions replace its corruptions.
    pub env: EnvConfig,
    pub agent: AgentConfig,
    pub run: RunSection,
    /// Defaults to a single clean condition.
    pub conditions: Vec<Condition>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let offset = e.span().map(|s| s.start).unwrap_or(0);
            Error::Parse {
                offset,
                message: format!("config: {}", e.message()),
            }
        })?;
        cfg.env.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    /// Apply `ROBUSTNAV_SEED` if set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.suite.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn suite_params(&self) -> SuiteParams {
        SuiteParams {
            task: self.suite.task,
            n_episodes: self.suite.n_episodes,
            suite_seed: self.suite.seed,
            starts_per_goal: self.suite.starts_per_goal,
            goal_draws_per_episode: self.suite.goal_draws_per_episode,
            agent_radius: self.env.agent_radius,
        }
    }

    /// Env configs for every condition, in order.
    pub fn condition_envs(&self) -> Result<Vec<EnvConfig>> {
        let conditions = if self.conditions.is_empty() {
            vec![Condition::default()]
        } else {
            self.conditions.clone()
        };
        conditions
            .iter()
            .map(|c| {
                let mut env = self.env.clone();
                env.visual = CorruptionStack::parse(&c.visual)?;
                env.dynamics = c.dynamics.resolve()?;
                if let Some(s) = c.sensor {
                    env.sensor = s;
                }
                env.validate()?;
                Ok(env)
            })
            .collect()
    }

    /// Refuse train-reserved conditions in benchmark mode.
    pub fn check_benchmark_rule(&self) -> Result<()> {
        if !self.run.benchmark {
            return Ok(());
        }
        let reserved: Vec<String> = self
            .conditions
            .iter()
            .filter(|c| c.train_reserved)
            .map(|c| {
                let vis = if c.visual.trim().is_empty() { "clean" } else { c.visual.trim() };
                match c.dynamics.resolve() {
                    Ok(d) if !d.is_none() => format!("{vis} + {}", d.label()),
                    _ => vis.to_string(),
                }
            })
            .collect();
        if reserved.is_empty() {
            return Ok(());
        }
        Err(Error::BenchmarkRule(format!(
            "condition(s) [{}] are marked train_reserved; benchmark runs must evaluate on \
             corruptions not drawn from the training set. Remove them or set run.benchmark = false",
            reserved.join(", ")
        )))
    }
}

/// Generate and load the configured scenes, keyed by scene id.
pub fn load_scenes(cfg: &ScenesConfig) -> Result<Vec<Arc<GridMap>>> {
    let mut out: Vec<Arc<GridMap>> = std::thread::scope(|s| {
        let handles: Vec<_> = cfg
            .generate
            .iter()
            .map(|&seed| s.spawn(move || generate_scene(seed, &cfg.params)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scene generation panicked").map(Arc::new))
            .collect::<Result<Vec<_>>>()
    })?;
    for p in &cfg.paths {
        let bytes = fs::read(p).map_err(|e| Error::Config(format!("cannot read scene {}: {e}", p.display())))?;
        out.push(Arc::new(load_scene(&bytes)?));
    }
    let mut seen = HashMap::new();
    for m in &out {
        if seen.insert(m.scene_id().to_string(), ()).is_some() {
            return Err(Error::Config(format!("duplicate scene id {}", m.scene_id())));
        }
    }
    if out.is_empty() {
        return Err(Error::Config("no scenes configured".into()));
    }
    Ok(out)
}

/// Suite from the configured file, or generated from `scenes`.
pub fn load_or_generate_suite(cfg: &RunConfig, scenes: &[Arc<GridMap>]) -> Result<Vec<EpisodeSpec>> {
    match &cfg.suite.file {
        Some(p) => parse_suite(&fs::read_to_string(p)?),
        None => generate_suite(scenes, &cfg.suite_params()),
    }
}

/// Episode counts per difficulty bin.
pub fn bin_counts(episodes: &[EpisodeSpec]) -> [usize; 3] {
    let mut c = [0; 3];
    for e in episodes {
        c[Difficulty::ALL.iter().position(|d| *d == e.difficulty).expect("known bin")] += 1;
    }
    c
}

/// Write a suite file and return its bin counts.
pub fn cmd_suite_gen(cfg: &RunConfig, out: &Path) -> Result<[usize; 3]> {
    let scenes = load_scenes(&cfg.scenes)?;
    let suite = generate_suite(&scenes, &cfg.suite_params())?;
    fs::write(out, format_suite(&suite))?;
    Ok(bin_counts(&suite))
}

/// Summary of a finished run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub episodes: usize,
    pub protocol_errors: Vec<String>,
    pub report: SuiteReport,
    pub output: PathBuf,
}

fn slug(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '-' })
        .collect()
}

fn agent_factory(cfg: &RunConfig, env: &EnvConfig) -> Result<Box<dyn Fn() -> Result<Box<dyn Agent>> + Sync>> {
    match cfg.agent.name.strip_prefix("external:") {
        Some(endpoint) => {
            if !(cfg.agent.deadline_secs > 0.0) {
                return Err(Error::Config("agent.deadline_secs must be positive".into()));
            }
            let connector = Connector::new(ExternalConfig {
                endpoint: Endpoint::parse(endpoint)?,
                deadline: Duration::from_secs_f64(cfg.agent.deadline_secs),
                sensor: env.sensor,
                task: cfg.suite.task,
                intrinsics: env.effective_intrinsics(),
            })?;
            Ok(Box::new(move || Ok(Box::new(connector.connect()?) as Box<dyn Agent>)))
        }
        None => {
            let name = cfg.agent.name.clone();
            builtin(&name)?;
            Ok(Box::new(move || builtin(&name)))
        }
    }
}

/// Run every condition over the suite and write traces and reports.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.check_benchmark_rule()?;
    let envs = cfg.condition_envs()?;
    let scenes = load_scenes(&cfg.scenes)?;
    let suite = load_or_generate_suite(cfg, &scenes)?;
    let by_id: HashMap<String, Arc<GridMap>> = scenes.iter().map(|m| (m.scene_id().to_string(), m.clone())).collect();
    let options = RunOptions {
        workers: cfg.run.workers.max(1),
        calibration_budget: cfg.run.calibration_budget,
    };

    let out = &cfg.run.output;
    let traces = out.join("traces");
    if traces.exists() {
        fs::remove_dir_all(&traces)?;
    }
    fs::create_dir_all(&traces)?;

    let mut records = Vec::new();
    let mut protocol_errors = Vec::new();
    for (k, env) in envs.iter().enumerate() {
        let factory = agent_factory(cfg, env)?;
        let outcomes: Vec<EpisodeOutcome> = run_suite(&by_id, &suite, env, factory.as_ref(), &options)?;
        let dir = traces.join(format!("{k:02}-{}", slug(&crate::runner::labels_for(env).corruption)));
        fs::create_dir_all(&dir)?;
        for o in outcomes {
            write_trace(&dir, &o.record)?;
            if let Some(a) = &o.record.aborted {
                protocol_errors.push(format!("{}: aborted: {a}", o.record.episode_id));
            }
            if let Some(e) = &o.late_error {
                protocol_errors.push(format!("{}: {e}", o.record.episode_id));
            }
            records.push(o.record);
        }
    }
    let report = aggregate(&records, &cfg.run.group_by)?;
    fs::write(out.join("report.csv"), emit_report(&report, ReportFormat::Csv))?;
    fs::write(out.join("report.md"), emit_report(&report, ReportFormat::Markdown))?;
    Ok(RunSummary {
        episodes: records.len(),
        protocol_errors,
        report,
        output: out.clone(),
    })
}

/// One episode per file, one JSON record per line.
pub fn write_trace(dir: &Path, record: &EpisodeRecord) -> Result<()> {
    let mut line = serde_json::to_string(record).map_err(|e| Error::Trace(e.to_string()))?;
    line.push('\n');
    fs::write(dir.join(format!("{}.jsonl", record.episode_id)), line)?;
    Ok(())
}

fn collect_trace_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_trace_files(&path, out)?;
        } else if path.extension().is_some_and(|e| e == "jsonl") {
            out.push(path);
        }
    }
    Ok(())
}

/// Read every record under `dir`, in path order.
pub fn read_traces(dir: &Path) -> Result<Vec<EpisodeRecord>> {
    let mut files = Vec::new();
    collect_trace_files(dir, &mut files)?;
    files.sort();
    let mut records = Vec::new();
    for f in files {
        let text = fs::read_to_string(&f)?;
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let r: EpisodeRecord = serde_json::from_str(line)
                .map_err(|e| Error::Trace(format!("{}:{}: {e}", f.display(), n + 1)))?;
            records.push(r);
        }
    }
    Ok(records)
}

/// Group keys of an emitted CSV report: a key column counts as grouped
/// unless every row says `all`.
pub fn infer_group_keys(csv: &str) -> Result<Vec<GroupKey>> {
    let mut lines = csv.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Trace("report.csv has an unexpected header".into()));
    }
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    Ok(GroupKey::ALL
        .iter()
        .enumerate()
        .filter(|(i, _)| rows.iter().any(|r| r.get(*i).is_some_and(|v| *v != "all")))
        .map(|(_, k)| *k)
        .collect())
}

/// Outcome of a replay.
#[derive(Debug, Clone)]
pub struct ReplayResult {
    pub csv: Vec<u8>,
    pub markdown: Vec<u8>,
    /// Problems found; empty when the replay matches.
    pub mismatches: Vec<String>,
}

/// Recompute the report from raw traces and compare with a run directory.
///
/// `run_dir` may be a run output (with `traces/` and `report.csv`) or a bare
/// trace directory.
pub fn cmd_replay(run_dir: &Path, group_by: Option<&[GroupKey]>) -> Result<ReplayResult> {
    let traces = if run_dir.join("traces").is_dir() {
        run_dir.join("traces")
    } else {
        run_dir.to_path_buf()
    };
    let records = read_traces(&traces)?;
    let mut mismatches = Vec::new();
    for r in &records {
        if let Err(e) = r.check() {
            mismatches.push(e.to_string());
        }
    }
    let original = fs::read_to_string(run_dir.join("report.csv")).ok();
    let keys = match (group_by, &original) {
        (Some(k), _) => k.to_vec(),
        (None, Some(csv)) => infer_group_keys(csv)?,
        (None, None) => RunSection::default().group_by,
    };
    let report = aggregate(&records, &keys)?;
    for row in &report.rows {
        if row.agg.spl > row.agg.sr {
            mismatches.push(format!("row {:?}: SPL {} exceeds SR {}", row.key, row.agg.spl, row.agg.sr));
        }
    }
    let csv = emit_report(&report, ReportFormat::Csv);
    let markdown = emit_report(&report, ReportFormat::Markdown);
    if let Some(orig) = original {
        diff_lines("report.csv", &orig, &String::from_utf8_lossy(&csv), &mut mismatches);
    }
    if let Ok(orig) = fs::read_to_string(run_dir.join("report.md")) {
        diff_lines("report.md", &orig, &String::from_utf8_lossy(&markdown), &mut mismatches);
    }
    Ok(ReplayResult {
        csv,
        markdown,
        mismatches,
    })
}

fn diff_lines(name: &str, original: &str, replayed: &str, out: &mut Vec<String>) {
    if original == replayed {
        return;
    }
    let a: Vec<&str> = original.lines().collect();
    let b: Vec<&str> = replayed.lines().collect();
    for i in 0..a.len().max(b.len()) {
        let (x, y) = (a.get(i).copied().unwrap_or(""), b.get(i).copied().unwrap_or(""));
        if x != y {
            out.push(format!("{name} line {}: recorded {x:?}, replayed {y:?}", i + 1));
        }
    }
    if a == b {
        out.push(format!("{name}: trailing whitespace differs"));
    }
}

/// Re-aggregate traces with explicit keys.
pub fn cmd_report(traces: &Path, keys: &[GroupKey], format: ReportFormat) -> Result<Vec<u8>> {
    let records = read_traces(traces)?;
    Ok(emit_report(&aggregate(&records, keys)?, format))
}

/// Render one egocentric frame at `pose` through a corruption stack.
pub fn cmd_preview_corruption(map: &GridMap, pose: &Pose, env: &EnvConfig, seed: u64, frame_index: u64) -> Result<Frame> {
    env.validate()?;
    let intr = env.effective_intrinsics();
    let mut frame = render(map, pose, &intr)?;
    let bound = env.visual.bind(seed, intr.width, intr.height);
    frame.rgb = bound.apply(&frame.rgb, intr.width, intr.height, frame_index)?;
    Ok(frame)
}

/// A free pose in the middle of the largest free area, for previews.
pub fn preview_pose(map: &GridMap, radius: f64) -> Result<Pose> {
    let best = (0..map.width() * map.height())
        .filter(|&i| map.is_navigable(i, radius))
        .max_by(|&a, &b| map.clearance(a).total_cmp(&map.clearance(b)).then(b.cmp(&a)))
        .ok_or_else(|| Error::InvalidMap("no navigable cell".into()))?;
    let c = map.cell_center(best);
    Ok(Pose::new(c.x, c.y, 0.0))
}

/// Top-down ASCII view: `#` wall, `.` floor, letters for objects.
pub fn scene_ascii(map: &GridMap) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{} {}x{} cells @ {} m, {} objects",
        map.scene_id(),
        map.width(),
        map.height(),
        map.cell_size(),
        map.objects().len()
    );
    for j in (0..map.height()).rev() {
        for i in 0..map.width() {
            let v = map.semantic_at(i as i64, j as i64);
            let ch = match v {
                SEMANTIC_FLOOR => '.',
                SEMANTIC_WALL => '#',
                id => map
                    .instance(id)
                    .and_then(|o| o.category.name().chars().next())
                    .unwrap_or('?'),
            };
            s.push(ch);
        }
        s.push('\n');
    }
    s
}
