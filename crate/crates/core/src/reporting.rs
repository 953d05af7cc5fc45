//! Run reports, threshold verdicts and the run history.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::{ExecutionTrace, TraceEventKind};
use crate::fleet::DeviceId;
use crate::manifest::Manifest;
use crate::scheduler::SchedulePlan;
use crate::triggers::TriggerKind;
use crate::units::{Ratio, Seconds};
use crate::yaml;

/// Coverage percentages as published by the verification flow. Recorded,
/// never computed here.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageRecord {
    pub statements: f64,
    pub branches: f64,
    pub toggle: f64,
    pub total: f64,
}

impl CoverageRecord {
    pub fn fields(&self) -> [(&'static str, f64); 4] {
        [
            ("statements", self.statements),
            ("branches", self.branches),
            ("toggle", self.toggle),
            ("total", self.total),
        ]
    }

    pub fn to_yaml_flow(&self) -> String {
        let entries: Vec<(&str, String)> = self
            .fields()
            .iter()
            .map(|(k, v)| (*k, yaml::float(*v)))
            .collect();
        yaml::flow_map(&entries)
    }

    pub fn is_valid(&self) -> bool {
        self.fields().iter().all(|(_, v)| (0.0..=100.0).contains(v))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Pass iff (failed + skipped) / total ≤ threshold.
pub fn threshold_verdict(failed: u64, skipped: u64, total: u64, threshold: f64) -> Verdict {
    if total == 0 {
        return Verdict::Pass;
    }
    // compare as fractions without dividing: bad / total <= threshold
    if ((failed + skipped) as f64) <= threshold * total as f64 + 1e-9 * total as f64 {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteResult {
    pub name: String,
    pub total: u64,
    pub passed: u64,
    pub failed: u64,
    pub skipped: u64,
    pub wall_time: Seconds,
    pub threshold: f64,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub run_id: String,
    pub trigger: TriggerKind,
    pub suites: Vec<SuiteResult>,
    pub campaign_wall_time: Seconds,
    pub sequential_baseline: Seconds,
    /// `None` when the campaign took no time at all.
    pub speedup: Option<Ratio>,
    pub coverage: Option<CoverageRecord>,
    pub fleet: BTreeMap<DeviceId, String>,
    pub notes: Vec<String>,
}

impl RunReport {
    pub fn verdict(&self) -> Verdict {
        if self.suites.iter().all(|s| s.verdict == Verdict::Pass) {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn total_tests(&self) -> u64 {
        self.suites.iter().map(|s| s.total).sum()
    }

    pub fn total_failed(&self) -> u64 {
        self.suites.iter().map(|s| s.failed).sum()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("trace mentions suite `{0}` which the manifest does not define")]
    UnknownSuite(String),
    #[error("trace is incomplete: {0}")]
    IncompleteTrace(String),
    #[error("report document: {0}")]
    Document(String),
    #[error("history store {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// Stable identifier derived from the inputs of a run.
pub fn run_id(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0]);
    }
    let digest = h.finalize();
    let hex: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
    format!("run-{hex}")
}

/// Who asked for the run and what the fleet looked like afterwards.
#[derive(Clone, Debug)]
pub struct ReportContext {
    pub run_id: String,
    pub trigger: TriggerKind,
    pub fleet: BTreeMap<DeviceId, String>,
}

#[derive(Default)]
struct Tally {
    total: u64,
    failed: u64,
    skipped: u64,
    first_start: Option<Seconds>,
    last_end: Option<Seconds>,
}

/// Folds a campaign trace into one result per scheduled suite, in manifest
/// order. Tests are counted once per scheduled copy.
pub fn aggregate(
    trace: &ExecutionTrace,
    manifest: &Manifest,
    plan: &SchedulePlan,
    ctx: ReportContext,
) -> Result<RunReport, ReportError> {
    let problems = trace.problems();
    if let Some(p) = problems.first() {
        return Err(ReportError::IncompleteTrace(p.clone()));
    }
    let mut tallies: BTreeMap<&str, Tally> = BTreeMap::new();
    let mut settled = BTreeSet::new();
    for e in &trace.events {
        let Some(shard) = &e.shard else { continue };
        if manifest.suite(&shard.suite).is_none() {
            return Err(ReportError::UnknownSuite(shard.suite.clone()));
        }
        let t = tallies.entry(shard.suite.as_str()).or_default();
        match e.kind {
            TraceEventKind::ShardStart => {
                t.first_start = Some(t.first_start.map_or(e.at, |s| s.min(e.at)));
            }
            kind if kind.is_terminal() => {
                if !settled.insert((e.device, shard.clone())) {
                    return Err(ReportError::IncompleteTrace(format!(
                        "shard {}[{}..{}) settled twice on {}",
                        shard.suite, shard.lo, shard.hi, e.device
                    )));
                }
                let tests = u64::from(shard.hi - shard.lo);
                t.total += tests;
                if kind == TraceEventKind::ShardSkipped {
                    t.skipped += tests;
                } else {
                    t.failed += e.failed.len() as u64;
                    t.last_end = Some(t.last_end.map_or(e.at, |s| s.max(e.at)));
                }
            }
            _ => {}
        }
    }

    let mut scheduled: BTreeMap<&str, u64> = BTreeMap::new();
    for (_, shard) in plan.assignment.shards() {
        *scheduled.entry(shard.suite.as_str()).or_default() += u64::from(shard.tests());
    }
    let mut notes = Vec::new();
    let mut suites = Vec::new();
    for suite in &manifest.suites {
        let Some(&expected) = scheduled.get(suite.name.as_str()) else {
            continue;
        };
        let mut t = tallies.remove(suite.name.as_str()).unwrap_or_default();
        if t.total < expected {
            notes.push(format!(
                "{}: {} scheduled tests missing from the trace, counted as skipped",
                suite.name,
                expected - t.total
            ));
            t.skipped += expected - t.total;
            t.total = expected;
        }
        let wall_time = match (t.first_start, t.last_end) {
            (Some(s), Some(e)) => e.saturating_sub(s),
            _ => Seconds::ZERO,
        };
        suites.push(SuiteResult {
            name: suite.name.clone(),
            total: t.total,
            passed: t.total - t.failed - t.skipped,
            failed: t.failed,
            skipped: t.skipped,
            wall_time,
            threshold: suite.failure_threshold,
            verdict: threshold_verdict(t.failed, t.skipped, t.total, suite.failure_threshold),
        });
    }
    if let Some(name) = tallies.keys().next() {
        return Err(ReportError::UnknownSuite(format!(
            "{name} (not in the plan)"
        )));
    }

    let column_sum = manifest.sequential_total();
    let sequential_baseline = match manifest.stated_sequential_total {
        Some(stated) => {
            if stated != column_sum {
                notes.push(format!(
                    "stated sequential total {stated}s differs from the suite column sum {column_sum}s"
                ));
            }
            stated
        }
        None => column_sum,
    };
    Ok(RunReport {
        run_id: ctx.run_id,
        trigger: ctx.trigger,
        suites,
        campaign_wall_time: trace.campaign_wall_time,
        sequential_baseline,
        speedup: Ratio::of(sequential_baseline, trace.campaign_wall_time),
        coverage: manifest.coverage,
        fleet: ctx.fleet,
        notes,
    })
}

/// Canonical YAML form of a report.
pub fn emit_report(r: &RunReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("run_id: {}\n", yaml::scalar(&r.run_id)));
    out.push_str(&format!("trigger: {}\n", r.trigger.as_str()));
    out.push_str(&format!("verdict: {}\n", r.verdict()));
    out.push_str(&format!("campaign_wall_time: {}\n", r.campaign_wall_time));
    out.push_str(&format!("sequential_baseline: {}\n", r.sequential_baseline));
    match r.speedup {
        Some(s) => out.push_str(&format!("speedup: {s}\n")),
        None => out.push_str("speedup: null\n"),
    }
    if r.suites.is_empty() {
        out.push_str("suites: []\n");
    } else {
        out.push_str("suites:\n");
        for s in &r.suites {
            let fields = [
                ("name", yaml::scalar(&s.name)),
                ("total", s.total.to_string()),
                ("passed", s.passed.to_string()),
                ("failed", s.failed.to_string()),
                ("skipped", s.skipped.to_string()),
                ("wall_time", s.wall_time.to_string()),
                ("threshold", yaml::float(s.threshold)),
                ("verdict", s.verdict.to_string()),
            ];
            out.push_str(&format!("  - {}\n", yaml::flow_map(&fields)));
        }
    }
    match &r.coverage {
        Some(c) => out.push_str(&format!("coverage: {}\n", c.to_yaml_flow())),
        None => out.push_str("coverage: null\n"),
    }
    if r.fleet.is_empty() {
        out.push_str("fleet: {}\n");
    } else {
        out.push_str("fleet:\n");
        for (d, s) in &r.fleet {
            out.push_str(&format!("  {d}: {}\n", yaml::scalar(s)));
        }
    }
    if r.notes.is_empty() {
        out.push_str("notes: []\n");
    } else {
        out.push_str("notes:\n");
        for n in &r.notes {
            out.push_str(&format!("  - {}\n", yaml::scalar(n)));
        }
    }
    out
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ReportDocument {
    run_id: String,
    trigger: TriggerKind,
    verdict: Verdict,
    campaign_wall_time: Seconds,
    sequential_baseline: Seconds,
    speedup: Option<Ratio>,
    suites: Vec<SuiteDocument>,
    coverage: Option<CoverageRecord>,
    #[serde(default)]
    fleet: BTreeMap<String, String>,
    #[serde(default)]
    notes: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SuiteDocument {
    name: String,
    total: u64,
    passed: u64,
    failed: u64,
    skipped: u64,
    wall_time: Seconds,
    threshold: f64,
    verdict: Verdict,
}

/// Reads a report back, rejecting documents whose counts or verdicts are
/// inconsistent.
pub fn parse_report(text: &str) -> Result<RunReport, ReportError> {
    let doc: ReportDocument =
        serde_path_to_error::deserialize(serde_yaml::Deserializer::from_str(text))
            .map_err(|e| ReportError::Document(format!("{}: {}", e.path(), e.inner())))?;
    let mut suites = Vec::with_capacity(doc.suites.len());
    for (i, s) in doc.suites.into_iter().enumerate() {
        if s.passed + s.failed + s.skipped != s.total {
            return Err(ReportError::Document(format!(
                "suites[{i}]: counts do not add up to total"
            )));
        }
        if threshold_verdict(s.failed, s.skipped, s.total, s.threshold) != s.verdict {
            return Err(ReportError::Document(format!(
                "suites[{i}]: verdict contradicts threshold"
            )));
        }
        suites.push(SuiteResult {
            name: s.name,
            total: s.total,
            passed: s.passed,
            failed: s.failed,
            skipped: s.skipped,
            wall_time: s.wall_time,
            threshold: s.threshold,
            verdict: s.verdict,
        });
    }
    let mut fleet = BTreeMap::new();
    for (k, v) in doc.fleet {
        let d: DeviceId = k
            .parse()
            .map_err(|e| ReportError::Document(format!("fleet.{k}: {e}")))?;
        fleet.insert(d, v);
    }
    let report = RunReport {
        run_id: doc.run_id,
        trigger: doc.trigger,
        suites,
        campaign_wall_time: doc.campaign_wall_time,
        sequential_baseline: doc.sequential_baseline,
        speedup: doc.speedup,
        coverage: doc.coverage,
        fleet,
        notes: doc.notes,
    };
    if report.verdict() != doc.verdict {
        return Err(ReportError::Document(
            "verdict contradicts suite verdicts".into(),
        ));
    }
    Ok(report)
}

/// The suites table as CSV.
pub fn suites_csv(r: &RunReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "name",
        "total",
        "passed",
        "failed",
        "skipped",
        "wall_time",
        "threshold",
        "verdict",
    ])
    .expect("writing to memory");
    for s in &r.suites {
        w.write_record([
            s.name.clone(),
            s.total.to_string(),
            s.passed.to_string(),
            s.failed.to_string(),
            s.skipped.to_string(),
            s.wall_time.to_string(),
            yaml::float(s.threshold),
            s.verdict.to_string(),
        ])
        .expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv output is utf-8")
}

/// One line of the history file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistoryRecord {
    pub run_id: String,
    /// Unix time, seconds.
    pub finished_at: u64,
    pub duration: Seconds,
    pub verdict: Verdict,
    pub trigger: TriggerKind,
}

impl HistoryRecord {
    pub fn from_report(r: &RunReport, finished_at: u64) -> Self {
        HistoryRecord {
            run_id: r.run_id.clone(),
            finished_at,
            duration: r.campaign_wall_time,
            verdict: r.verdict(),
            trigger: r.trigger,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct HistoryLoad {
    pub records: Vec<HistoryRecord>,
    /// Lines that could not be decoded; they are skipped.
    pub corrupt: Vec<usize>,
}

/// Newline-delimited JSON records in a single file. Appends write a full
/// copy next to the file and rename it into place, so readers only ever see
/// complete records. One writer at a time.
#[derive(Clone, Debug)]
pub struct HistoryStore {
    path: PathBuf,
}

/// An append that has been written to a temporary file but not yet renamed
/// into place.
#[derive(Debug)]
pub struct StagedAppend {
    tmp: PathBuf,
    target: PathBuf,
}

impl StagedAppend {
    pub fn commit(self) -> Result<(), ReportError> {
        fs::rename(&self.tmp, &self.target).map_err(|source| ReportError::Io {
            path: self.target.clone(),
            source,
        })
    }

    pub fn temp_path(&self) -> &Path {
        &self.tmp
    }
}

impl HistoryStore {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        HistoryStore { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn io(&self, source: io::Error) -> ReportError {
        ReportError::Io {
            path: self.path.clone(),
            source,
        }
    }

    pub fn load(&self) -> Result<HistoryLoad, ReportError> {
        let file = match File::open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(HistoryLoad::default()),
            Err(e) => return Err(self.io(e)),
        };
        let mut load = HistoryLoad::default();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| self.io(e))?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<HistoryRecord>(&line) {
                Ok(r) => load.records.push(r),
                Err(_) => load.corrupt.push(i + 1),
            }
        }
        Ok(load)
    }

    /// Writes the new file contents beside the store without publishing them.
    pub fn stage(&self, records: &[HistoryRecord]) -> Result<StagedAppend, ReportError> {
        let name = self
            .path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "history".into());
        let tmp = self
            .path
            .with_file_name(format!(".{name}.{}.tmp", std::process::id()));
        let mut out = OpenOptions::new()
            .write(true)
            .create(true)
            .truncate(true)
            .open(&tmp)
            .map_err(|e| self.io(e))?;
        match fs::read(&self.path) {
            Ok(existing) => {
                out.write_all(&existing).map_err(|e| self.io(e))?;
                if existing.last().is_some_and(|b| *b != b'\n') {
                    out.write_all(b"\n").map_err(|e| self.io(e))?;
                }
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(self.io(e)),
        }
        for r in records {
            let line = serde_json::to_string(r).expect("history records serialize");
            out.write_all(line.as_bytes()).map_err(|e| self.io(e))?;
            out.write_all(b"\n").map_err(|e| self.io(e))?;
        }
        out.sync_all().map_err(|e| self.io(e))?;
        Ok(StagedAppend {
            tmp,
            target: self.path.clone(),
        })
    }

    pub fn append(&self, record: &HistoryRecord) -> Result<(), ReportError> {
        self.stage(std::slice::from_ref(record))?.commit()
    }

    pub fn append_all(&self, records: &[HistoryRecord]) -> Result<(), ReportError> {
        self.stage(records)?.commit()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HistoryStats {
    pub pipeline_count: usize,
    pub passed: usize,
    pub failed: usize,
    /// Mean duration of the longest tenth of passing runs (rounded up to
    /// whole runs).
    pub mean_duration_longest: Option<Seconds>,
    pub mean_duration_fastest: Option<Seconds>,
    pub window_days: u64,
}

impl HistoryStats {
    pub fn to_yaml(&self) -> String {
        let opt = |s: Option<Seconds>| s.map_or("null".to_string(), |s| s.to_string());
        format!(
            "window_days: {}\npipeline_count: {}\npassed: {}\nfailed: {}\nmean_duration_longest: {}\nmean_duration_fastest: {}\n",
            self.window_days,
            self.pipeline_count,
            self.passed,
            self.failed,
            opt(self.mean_duration_longest),
            opt(self.mean_duration_fastest),
        )
    }
}

/// Statistics over runs that finished in `[now - window, now]`. Every run
/// counts towards the total; duration deciles only consider passing runs.
pub fn history_stats(records: &[HistoryRecord], window_days: u64, now: u64) -> HistoryStats {
    let since = now.saturating_sub(window_days * 86_400);
    let mut durations: Vec<u64> = Vec::new();
    let mut count = 0;
    for r in records
        .iter()
        .filter(|r| (since..=now).contains(&r.finished_at))
    {
        count += 1;
        if r.verdict == Verdict::Pass {
            durations.push(r.duration.deci());
        }
    }
    durations.sort_unstable();
    let n = durations.len();
    let k = n.div_ceil(10);
    let mean = |xs: &[u64]| {
        (!xs.is_empty()).then(|| {
            let sum: u128 = xs.iter().map(|&x| x as u128).sum();
            let k = xs.len() as u128;
            Seconds::from_deci(((2 * sum + k) / (2 * k)) as u64)
        })
    };
    HistoryStats {
        pipeline_count: count,
        passed: n,
        failed: count - n,
        mean_duration_longest: mean(&durations[n - k..]),
        mean_duration_fastest: mean(&durations[..k]),
        window_days,
    }
}
