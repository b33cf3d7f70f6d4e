//! Episode records, navigation metrics, behavior analytics and reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dynamics::Action;
use crate::error::{Error, Result};
use crate::task::{Difficulty, TaskKind};
use crate::world::Pose;

pub const CSV_HEADER: &str = "corruption,visual,dynamics,sensor,difficulty,n,sr,spl,failed_actions,term_dist,min_dist,stop_fail_pos,stop_fail_neg,oracle_sr,mean_steps";

/// Condition labels an episode was run under.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Labels {
    /// Combined label of the visual stack and dynamics corruption.
    pub corruption: String,
    pub visual: bool,
    pub dynamics: bool,
    pub sensor: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Pose at which the action was chosen.
    pub pose: Pose,
    pub action: Action,
    pub failed: bool,
    /// Success predicate at `pose`.
    pub in_range: bool,
    /// Geodesic distance to the goal at `pose`.
    pub geodesic: f64,
    /// Euclidean distance to the goal at `pose`.
    pub distance: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode_id: String,
    pub scene_id: String,
    pub task: TaskKind,
    pub difficulty: Difficulty,
    pub labels: Labels,
    /// Shortest path length from the episode spec.
    pub l: f64,
    pub steps: Vec<StepRecord>,
    pub final_pose: Pose,
    pub final_distance: f64,
    pub end_invoked: bool,
    pub end_in_range: bool,
    pub success: bool,
    /// Set when the agent broke the protocol and the episode was cut short.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
    /// Sum of Euclidean distances between successive positions.
    pub path_length: f64,
    pub total_reward: f64,
}

impl EpisodeRecord {
    pub fn spl(&self) -> Result<f64> {
        spl(self.success, self.l, self.path_length)
    }

    pub fn failed_actions(&self) -> usize {
        self.steps.iter().filter(|s| s.failed).count()
    }

    pub fn min_distance(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| s.distance)
            .fold(self.final_distance, f64::min)
    }

    pub fn oracle_success(&self) -> bool {
        self.steps.iter().any(|s| s.in_range)
    }

    /// Path length recomputed from the pose sequence.
    pub fn recomputed_path_length(&self) -> f64 {
        let mut pts: Vec<(f64, f64)> = self.steps.iter().map(|s| (s.pose.x, s.pose.y)).collect();
        pts.push((self.final_pose.x, self.final_pose.y));
        pts.windows(2).map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1)).sum()
    }

    /// Internal consistency checks on a (possibly hand-edited) record.
    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Trace(format!("{}: {m}", self.episode_id)));
        if !(self.l > 0.0) {
            return bad(format!("l = {} must be positive", self.l));
        }
        let last_end = self.steps.last().is_some_and(|s| s.action == Action::End);
        if self.end_invoked != last_end {
            return bad("end_invoked disagrees with the action sequence".into());
        }
        if self.steps.iter().rev().skip(1).any(|s| s.action == Action::End) {
            return bad("end before the last step".into());
        }
        if self.end_in_range != (last_end && self.steps.last().is_some_and(|s| s.in_range)) {
            return bad("end_in_range disagrees with the step flags".into());
        }
        if self.success != (self.end_invoked && self.end_in_range && self.aborted.is_none()) {
            return bad("success disagrees with the end event".into());
        }
        if (self.recomputed_path_length() - self.path_length).abs() > 1e-9 {
            return bad("path_length disagrees with the pose sequence".into());
        }
        Ok(())
    }
}

/// Success weighted by path length.
pub fn spl(success: bool, l: f64, p: f64) -> Result<f64> {
    if !(l > 0.0) {
        return Err(Error::Degenerate(format!("shortest path length {l} must be positive")));
    }
    if !success {
        return Ok(0.0);
    }
    Ok(l / l.max(p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupKey {
    Corruption,
    Visual,
    Dynamics,
    Sensor,
    Difficulty,
}

impl GroupKey {
    pub const ALL: [GroupKey; 5] = [
        GroupKey::Corruption,
        GroupKey::Visual,
        GroupKey::Dynamics,
        GroupKey::Sensor,
        GroupKey::Difficulty,
    ];
}

impl FromStr for GroupKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "corruption" => Ok(GroupKey::Corruption),
            "visual" => Ok(GroupKey::Visual),
            "dynamics" => Ok(GroupKey::Dynamics),
            "sensor" => Ok(GroupKey::Sensor),
            "difficulty" => Ok(GroupKey::Difficulty),
            _ => Err(Error::Config(format!("unknown group key {s:?}"))),
        }
    }
}

fn flag(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

/// Row key; fields not grouped on read `all`.
pub type RowKey = [String; 5];

fn row_key(r: &EpisodeRecord, keys: &[GroupKey]) -> RowKey {
    let pick = |k: GroupKey, v: &str| if keys.contains(&k) { v.to_string() } else { "all".to_string() };
    [
        pick(GroupKey::Corruption, &r.labels.corruption),
        pick(GroupKey::Visual, flag(r.labels.visual)),
        pick(GroupKey::Dynamics, flag(r.labels.dynamics)),
        pick(GroupKey::Sensor, &r.labels.sensor),
        pick(GroupKey::Difficulty, r.difficulty.name()),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n: usize,
    pub sr: f64,
    pub spl: f64,
    pub failed_actions: f64,
    pub term_dist: f64,
    pub min_dist: f64,
    pub stop_fail_pos: f64,
    pub stop_fail_neg: f64,
    pub oracle_sr: f64,
    pub mean_steps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub key: RowKey,
    pub agg: Aggregate,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub rows: Vec<ReportRow>,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Aggregate one group of records.
pub fn aggregate_group(records: &[&EpisodeRecord]) -> Result<Aggregate> {
    let n = records.len() as f64;
    let mut agg = Aggregate {
        n: records.len(),
        sr: 0.0,
        spl: 0.0,
        failed_actions: 0.0,
        term_dist: 0.0,
        min_dist: 0.0,
        stop_fail_pos: 0.0,
        stop_fail_neg: 0.0,
        oracle_sr: 0.0,
        mean_steps: 0.0,
    };
    let (mut ends, mut bad_ends) = (0usize, 0usize);
    let (mut neg_sum, mut neg_eps) = (0.0, 0usize);
    for r in records {
        agg.sr += f64::from(u8::from(r.success));
        agg.spl += r.spl()?;
        agg.failed_actions += r.failed_actions() as f64;
        agg.term_dist += r.final_distance;
        agg.min_dist += r.min_distance();
        agg.oracle_sr += f64::from(u8::from(r.oracle_success()));
        agg.mean_steps += r.steps.len() as f64;
        if r.end_invoked {
            ends += 1;
            bad_ends += usize::from(!r.end_in_range);
        }
        let in_range = r.steps.iter().filter(|s| s.in_range).count();
        if in_range > 0 {
            let missed = r.steps.iter().filter(|s| s.in_range && s.action != Action::End).count();
            neg_sum += missed as f64 / in_range as f64;
            neg_eps += 1;
        }
    }
    for v in [
        &mut agg.sr,
        &mut agg.spl,
        &mut agg.failed_actions,
        &mut agg.term_dist,
        &mut agg.min_dist,
        &mut agg.oracle_sr,
        &mut agg.mean_steps,
    ] {
        *v = ratio(*v, n);
    }
    agg.stop_fail_pos = ratio(bad_ends as f64, ends as f64);
    agg.stop_fail_neg = ratio(neg_sum, neg_eps as f64);
    Ok(agg)
}

/// Group records and aggregate each group. Rows are sorted by SPL
/// descending, then by key.
pub fn aggregate(records: &[EpisodeRecord], keys: &[GroupKey]) -> Result<SuiteReport> {
    let mut groups: BTreeMap<RowKey, Vec<&EpisodeRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(row_key(r, keys)).or_default().push(r);
    }
    let mut rows = groups
        .into_iter()
        .map(|(key, rs)| Ok(ReportRow { key, agg: aggregate_group(&rs)? }))
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| b.agg.spl.total_cmp(&a.agg.spl).then_with(|| a.key.cmp(&b.key)));
    Ok(SuiteReport { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            _ => Err(Error::UnknownFormat(s.to_string())),
        }
    }
}

fn cells(row: &ReportRow) -> Vec<String> {
    let a = &row.agg;
    let pct = |v: f64| format!("{:.2}", 100.0 * v);
    let mut out: Vec<String> = row.key.to_vec();
    out.extend([
        a.n.to_string(),
        pct(a.sr),
        pct(a.spl),
        format!("{:.3}", a.failed_actions),
        format!("{:.3}", a.term_dist),
        format!("{:.3}", a.min_dist),
        pct(a.stop_fail_pos),
        pct(a.stop_fail_neg),
        pct(a.oracle_sr),
        format!("{:.2}", a.mean_steps),
    ]);
    out
}

pub fn emit_report(report: &SuiteReport, format: ReportFormat) -> Vec<u8> {
    let mut s = String::new();
    match format {
        ReportFormat::Csv => {
            s.push_str(CSV_HEADER);
            s.push('\n');
            for row in &report.rows {
                s.push_str(&cells(row).join(","));
                s.push('\n');
            }
        }
        ReportFormat::Markdown => {
            let cols: Vec<&str> = CSV_HEADER.split(',').collect();
            let _ = writeln!(s, "| {} |", cols.join(" | "));
            let _ = writeln!(s, "|{}", "---|".repeat(cols.len()));
            for row in &report.rows {
                let _ = writeln!(s, "| {} |", cells(row).join(" | "));
            }
        }
    }
    s.into_bytes()
}
