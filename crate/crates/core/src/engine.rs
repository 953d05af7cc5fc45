//! Campaign execution and pipeline runs.
//!
//! Simulated campaigns are a discrete-event simulation over a queue keyed by
//! (timestamp, device order); nothing sleeps. Wall-clock campaigns run one
//! thread per device and phase, with fleet updates going through a
//! [`FleetOwner`].

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;
use std::path::PathBuf;
use std::process::Command;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use sha2::{Digest, Sha256};
use wait_timeout::ChildExt;

use crate::fleet::{
    DeviceEvent, DeviceId, DeviceState, Fleet, FleetError, FleetHandle, FleetOwner,
};
use crate::manifest::{stage_topological_order, StageKind, StageSpec};
use crate::scheduler::{SchedulePlan, Shard};
use crate::triggers::JobSet;
use crate::units::Seconds;
use crate::yaml;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Clock {
    #[default]
    Simulated,
    Wall,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TraceEventKind {
    ProgramStart,
    ProgramDone,
    ShardStart,
    ShardDone,
    ShardFailed,
    ShardSkipped,
}

impl TraceEventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceEventKind::ProgramStart => "program_start",
            TraceEventKind::ProgramDone => "program_done",
            TraceEventKind::ShardStart => "shard_start",
            TraceEventKind::ShardDone => "shard_done",
            TraceEventKind::ShardFailed => "shard_failed",
            TraceEventKind::ShardSkipped => "shard_skipped",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "program_start" => TraceEventKind::ProgramStart,
            "program_done" => TraceEventKind::ProgramDone,
            "shard_start" => TraceEventKind::ShardStart,
            "shard_done" => TraceEventKind::ShardDone,
            "shard_failed" => TraceEventKind::ShardFailed,
            "shard_skipped" => TraceEventKind::ShardSkipped,
            _ => return None,
        })
    }

    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            TraceEventKind::ShardDone | TraceEventKind::ShardFailed | TraceEventKind::ShardSkipped
        )
    }
}

/// Identifies a shard inside a trace.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ShardRef {
    pub suite: String,
    pub replica: u32,
    pub lo: u32,
    pub hi: u32,
}

impl From<&Shard> for ShardRef {
    fn from(s: &Shard) -> Self {
        ShardRef {
            suite: s.suite.clone(),
            replica: s.replica,
            lo: s.lo,
            hi: s.hi,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceEvent {
    pub at: Seconds,
    pub device: DeviceId,
    pub kind: TraceEventKind,
    pub shard: Option<ShardRef>,
    /// Failed test indices (absolute within the suite) for done/failed events.
    pub failed: Vec<u32>,
    pub detail: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExecutionTrace {
    pub events: Vec<TraceEvent>,
    pub campaign_wall_time: Seconds,
}

impl ExecutionTrace {
    /// Structural problems: decreasing timestamps, unmatched or interleaved
    /// shard events, or a wall time that is not the last timestamp.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.events.windows(2).any(|w| w[1].at < w[0].at) {
            out.push("timestamps decrease".to_string());
        }
        let last = self.events.last().map(|e| e.at).unwrap_or_default();
        if last != self.campaign_wall_time {
            out.push(format!(
                "campaign_wall_time {} is not the last timestamp {last}",
                self.campaign_wall_time
            ));
        }
        let mut open: BTreeMap<DeviceId, ShardRef> = BTreeMap::new();
        for e in &self.events {
            match e.kind {
                TraceEventKind::ShardStart => {
                    let Some(shard) = &e.shard else {
                        out.push(format!("shard_start on {} has no shard", e.device));
                        continue;
                    };
                    if let Some(prev) = open.insert(e.device, shard.clone()) {
                        out.push(format!(
                            "{} started {} before finishing {}",
                            e.device, shard.suite, prev.suite
                        ));
                    }
                }
                TraceEventKind::ShardDone | TraceEventKind::ShardFailed => {
                    match open.remove(&e.device) {
                        Some(s) if Some(&s) == e.shard.as_ref() => {}
                        _ => out.push(format!(
                            "{} at {} on {} has no matching start",
                            e.kind.as_str(),
                            e.at,
                            e.device
                        )),
                    }
                }
                _ => {}
            }
        }
        for (d, s) in open {
            out.push(format!(
                "shard {}[{}..{}) on {d} never finished",
                s.suite, s.lo, s.hi
            ));
        }
        out
    }

    pub fn failed_tests(&self) -> usize {
        self.events.iter().map(|e| e.failed.len()).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShardOutcome {
    pub failed: Vec<u32>,
    pub measured: Seconds,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageOutcome {
    pub passed: bool,
    pub duration: Seconds,
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RunnerError {
    #[error("runner crashed: {0}")]
    Crash(String),
    #[error("shard timed out")]
    Timeout,
}

/// Executes shards (and non-FPGA stages) on behalf of the engine.
pub trait Runner: Sync {
    fn run_shard(
        &self,
        shard: &Shard,
        device: DeviceId,
        timeout: Seconds,
    ) -> Result<ShardOutcome, RunnerError>;

    fn run_stage(&self, stage: &StageSpec) -> Result<StageOutcome, RunnerError> {
        Ok(StageOutcome {
            passed: true,
            duration: stage.nominal_duration,
            detail: None,
        })
    }
}

/// Seeded fault injection: every test fails independently with
/// probability `fail_rate`. The outcome of test `i` of a suite copy depends
/// only on the seed, the suite, the copy and `i`.
#[derive(Debug)]
pub struct SimulatedRunner {
    seed: u64,
    fail_rate: f64,
    duration_scale: f64,
    crash_devices: BTreeSet<DeviceId>,
    failing_stages: BTreeSet<String>,
    injected: AtomicU64,
}

impl SimulatedRunner {
    pub fn new(seed: u64, fail_rate: f64) -> Self {
        SimulatedRunner {
            seed,
            fail_rate: fail_rate.clamp(0.0, 1.0),
            duration_scale: 1.0,
            crash_devices: BTreeSet::new(),
            failing_stages: BTreeSet::new(),
            injected: AtomicU64::new(0),
        }
    }

    /// Multiplies every measured duration, e.g. to provoke timeouts.
    pub fn with_duration_scale(mut self, scale: f64) -> Self {
        self.duration_scale = scale;
        self
    }

    pub fn crash_on(mut self, device: DeviceId) -> Self {
        self.crash_devices.insert(device);
        self
    }

    pub fn fail_stage(mut self, stage: &str) -> Self {
        self.failing_stages.insert(stage.to_string());
        self
    }

    /// Number of test failures injected so far.
    pub fn injected(&self) -> u64 {
        self.injected.load(Ordering::Relaxed)
    }

    fn stream(&self, suite: &str, replica: u32) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(suite.as_bytes());
        h.update([0]);
        h.update(replica.to_le_bytes());
        ChaCha8Rng::from_seed(h.finalize().into())
    }
}

impl Runner for SimulatedRunner {
    fn run_shard(
        &self,
        shard: &Shard,
        device: DeviceId,
        _timeout: Seconds,
    ) -> Result<ShardOutcome, RunnerError> {
        if self.crash_devices.contains(&device) {
            return Err(RunnerError::Crash(format!("injected crash on {device}")));
        }
        let mut rng = self.stream(&shard.suite, shard.replica);
        for _ in 0..shard.lo {
            rng.random::<f64>();
        }
        let failed: Vec<u32> = (shard.lo..shard.hi)
            .filter(|_| rng.random::<f64>() < self.fail_rate)
            .collect();
        self.injected
            .fetch_add(failed.len() as u64, Ordering::Relaxed);
        let measured = if self.duration_scale == 1.0 {
            shard.est_duration
        } else {
            Seconds::round_from_f64(shard.est_duration.as_f64() * self.duration_scale)
        };
        Ok(ShardOutcome { failed, measured })
    }

    fn run_stage(&self, stage: &StageSpec) -> Result<StageOutcome, RunnerError> {
        Ok(StageOutcome {
            passed: !self.failing_stages.contains(&stage.name),
            duration: stage.nominal_duration,
            detail: None,
        })
    }
}

/// Shells out once per shard. The template may use `{suite}`, `{lo}`,
/// `{hi}`, `{device}`, `{replica}` and `{results}`. Exit code 0 means every
/// test passed; otherwise the command may write a results document to
/// `{results}` (also exported as `FLEETREG_RESULTS`) listing failures.
#[derive(Clone, Debug)]
pub struct CommandRunner {
    template: String,
    stage_template: Option<String>,
    scratch: PathBuf,
}

#[derive(Deserialize)]
struct ResultsDocument {
    #[serde(default)]
    suites: Vec<ResultsSuite>,
}

#[derive(Deserialize)]
struct ResultsSuite {
    name: String,
    #[serde(default)]
    failed: u32,
    #[serde(default)]
    skipped: u32,
    #[serde(default)]
    failed_tests: Option<Vec<u32>>,
}

impl CommandRunner {
    pub fn new(template: &str) -> Self {
        CommandRunner {
            template: template.to_string(),
            stage_template: None,
            scratch: std::env::temp_dir(),
        }
    }

    /// Command for non-FPGA stages; may use `{stage}` and `{kind}`.
    pub fn with_stage_template(mut self, template: &str) -> Self {
        self.stage_template = Some(template.to_string());
        self
    }

    pub fn with_scratch_dir(mut self, dir: PathBuf) -> Self {
        self.scratch = dir;
        self
    }

    fn results_path(&self, shard: &Shard, device: DeviceId) -> PathBuf {
        self.scratch.join(format!(
            "fleetreg-{}-{device}-{}-{}-{}.yaml",
            std::process::id(),
            shard.suite,
            shard.replica,
            shard.lo
        ))
    }

    fn failures_from(path: &PathBuf, shard: &Shard) -> Vec<u32> {
        let all = || (shard.lo..shard.hi).collect::<Vec<u32>>();
        let Ok(text) = std::fs::read_to_string(path) else {
            return all();
        };
        let Ok(doc) = serde_yaml::from_str::<ResultsDocument>(&text) else {
            return all();
        };
        let Some(entry) = doc.suites.into_iter().find(|s| s.name == shard.suite) else {
            return all();
        };
        match entry.failed_tests {
            Some(list) => {
                let set: BTreeSet<u32> = list
                    .into_iter()
                    .filter(|i| (shard.lo..shard.hi).contains(i))
                    .collect();
                set.into_iter().collect()
            }
            None => {
                let n = (entry.failed + entry.skipped).min(shard.tests());
                (shard.lo..shard.lo + n).collect()
            }
        }
    }
}

impl Runner for CommandRunner {
    fn run_shard(
        &self,
        shard: &Shard,
        device: DeviceId,
        timeout: Seconds,
    ) -> Result<ShardOutcome, RunnerError> {
        let results = self.results_path(shard, device);
        let _ = std::fs::remove_file(&results);
        let cmd = self
            .template
            .replace("{suite}", &shard.suite)
            .replace("{lo}", &shard.lo.to_string())
            .replace("{hi}", &shard.hi.to_string())
            .replace("{device}", &device.to_string())
            .replace("{replica}", &shard.replica.to_string())
            .replace("{results}", &results.to_string_lossy());
        let started = Instant::now();
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&cmd)
            .env("FLEETREG_RESULTS", &results)
            .spawn()
            .map_err(|e| RunnerError::Crash(format!("cannot start `{cmd}`: {e}")))?;
        let limit = std::time::Duration::from_millis(timeout.deci().max(1) * 100);
        let status = match child.wait_timeout(limit) {
            Ok(Some(status)) => status,
            Ok(None) => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(RunnerError::Timeout);
            }
            Err(e) => return Err(RunnerError::Crash(e.to_string())),
        };
        let measured = Seconds::round_from_f64(started.elapsed().as_secs_f64());
        let failed = match status.code() {
            Some(0) => Vec::new(),
            Some(_) => Self::failures_from(&results, shard),
            None => {
                return Err(RunnerError::Crash(format!(
                    "`{cmd}` was killed by a signal"
                )))
            }
        };
        let _ = std::fs::remove_file(&results);
        Ok(ShardOutcome { failed, measured })
    }

    fn run_stage(&self, stage: &StageSpec) -> Result<StageOutcome, RunnerError> {
        let Some(template) = &self.stage_template else {
            return Ok(StageOutcome {
                passed: true,
                duration: stage.nominal_duration,
                detail: None,
            });
        };
        let cmd = template
            .replace("{stage}", &stage.name)
            .replace("{kind}", stage.kind.as_str());
        let started = Instant::now();
        let status = Command::new("sh")
            .arg("-c")
            .arg(&cmd)
            .status()
            .map_err(|e| RunnerError::Crash(format!("cannot start `{cmd}`: {e}")))?;
        Ok(StageOutcome {
            passed: status.success(),
            duration: Seconds::round_from_f64(started.elapsed().as_secs_f64()),
            detail: (!status.success()).then(|| format!("`{cmd}` exited with {status}")),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExecuteOptions {
    pub clock: Clock,
    /// A shard running longer than this multiple of its estimate fails.
    pub timeout_factor: u32,
}

impl Default for ExecuteOptions {
    fn default() -> Self {
        ExecuteOptions {
            clock: Clock::Simulated,
            timeout_factor: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    #[error("device {device} is unavailable ({state})")]
    DeviceUnavailable { device: DeviceId, state: String },
    #[error(transparent)]
    Fleet(#[from] FleetError),
    #[error("job {0} does not name a stage of its kind")]
    UnknownJob(String),
    #[error("stage dependencies form a cycle")]
    StageCycle,
    #[error("trace document: {0}")]
    Document(String),
}

fn timeout_for(shard: &Shard, factor: u32) -> Seconds {
    Seconds::from_deci(shard.est_duration.deci().max(1) * u64::from(factor))
}

/// Turns one runner result into the terminal event for a shard plus the
/// time the device was busy.
fn settle(
    shard: &Shard,
    result: Result<ShardOutcome, RunnerError>,
    timeout: Seconds,
) -> (TraceEventKind, Vec<u32>, Seconds, Option<String>, bool) {
    let all: Vec<u32> = (shard.lo..shard.hi).collect();
    match result {
        Ok(outcome) if outcome.measured > timeout => (
            TraceEventKind::ShardFailed,
            all,
            timeout,
            Some(format!("timed out after {timeout}s")),
            false,
        ),
        Ok(outcome) => {
            let kind = if outcome.failed.is_empty() {
                TraceEventKind::ShardDone
            } else {
                TraceEventKind::ShardFailed
            };
            (kind, outcome.failed, outcome.measured, None, false)
        }
        Err(RunnerError::Timeout) => (
            TraceEventKind::ShardFailed,
            all,
            timeout,
            Some(format!("timed out after {timeout}s")),
            false,
        ),
        Err(RunnerError::Crash(why)) => (
            TraceEventKind::ShardFailed,
            all,
            Seconds::ZERO,
            Some(why),
            true,
        ),
    }
}

fn check_devices(plan: &SchedulePlan, fleet: &Fleet) -> Result<Vec<bool>, EngineError> {
    plan.assignment
        .devices()
        .map(|d| match fleet.state(d)? {
            DeviceState::Free => Ok(true),
            DeviceState::Ready { bitstream } if *bitstream == plan.bitstream => Ok(false),
            other => Err(EngineError::DeviceUnavailable {
                device: d,
                state: other.to_string(),
            }),
        })
        .collect()
}

/// Runs a plan on the fleet. Shards keep their per-device order and each
/// phase starts when the previous one has finished everywhere. A crashing
/// runner marks its device failed; its remaining shards are skipped.
pub fn execute(
    plan: &SchedulePlan,
    fleet: &mut Fleet,
    runner: &dyn Runner,
    options: ExecuteOptions,
) -> Result<ExecutionTrace, EngineError> {
    let needs_program = check_devices(plan, fleet)?;
    match options.clock {
        Clock::Simulated => simulate(plan, fleet, runner, options, &needs_program),
        Clock::Wall => run_wall(plan, fleet, runner, options, &needs_program),
    }
}

#[derive(Debug)]
enum Step {
    Next,
    Finish {
        shard: usize,
        kind: TraceEventKind,
        failed: Vec<u32>,
        detail: Option<String>,
    },
}

fn simulate(
    plan: &SchedulePlan,
    fleet: &mut Fleet,
    runner: &dyn Runner,
    options: ExecuteOptions,
    needs_program: &[bool],
) -> Result<ExecutionTrace, EngineError> {
    let devices: Vec<DeviceId> = plan.assignment.devices().collect();
    let origin = fleet.clock();
    let mut events = Vec::new();
    let mut emit =
        |at: Seconds, device: DeviceId, kind, shard: Option<&Shard>, failed: Vec<u32>, detail| {
            events.push(TraceEvent {
                at,
                device,
                kind,
                shard: shard.map(ShardRef::from),
                failed,
                detail,
            })
        };

    let latency = plan.programming_latency;
    let mut phase_start = Seconds::ZERO;
    for (i, &d) in devices.iter().enumerate() {
        if needs_program[i] {
            fleet.set_clock(origin);
            fleet.transition(
                d,
                DeviceEvent::StartProgram {
                    bitstream: plan.bitstream.clone(),
                    latency,
                },
            )?;
            emit(
                Seconds::ZERO,
                d,
                TraceEventKind::ProgramStart,
                None,
                Vec::new(),
                Some(plan.bitstream.clone()),
            );
            phase_start = latency;
        }
    }
    for (i, &d) in devices.iter().enumerate() {
        if needs_program[i] {
            fleet.set_clock(origin + latency);
            fleet.transition(d, DeviceEvent::ProgramDone)?;
            emit(
                latency,
                d,
                TraceEventKind::ProgramDone,
                None,
                Vec::new(),
                Some(plan.bitstream.clone()),
            );
        }
    }

    let mut failed_device = vec![false; devices.len()];
    let mut seq = 0u64;
    for phase in 0..plan.assignment.phases.len() {
        let queues: Vec<Vec<&Shard>> = devices
            .iter()
            .map(|d| {
                plan.assignment.per_device[d]
                    .iter()
                    .filter(|s| s.phase == phase)
                    .collect()
            })
            .collect();
        let mut cursor = vec![0usize; devices.len()];
        let mut heap: BinaryHeap<Reverse<(Seconds, usize, u64)>> = BinaryHeap::new();
        let mut steps: BTreeMap<u64, Step> = BTreeMap::new();
        for (i, q) in queues.iter().enumerate() {
            if !q.is_empty() {
                heap.push(Reverse((phase_start, i, seq)));
                steps.insert(seq, Step::Next);
                seq += 1;
            }
        }
        let mut phase_end = phase_start;
        while let Some(Reverse((at, i, id))) = heap.pop() {
            let device = devices[i];
            fleet.set_clock(origin + at);
            match steps.remove(&id).expect("scheduled step") {
                Step::Next => {
                    let Some(shard) = queues[i].get(cursor[i]).copied() else {
                        continue;
                    };
                    cursor[i] += 1;
                    if failed_device[i] {
                        emit(
                            at,
                            device,
                            TraceEventKind::ShardSkipped,
                            Some(shard),
                            Vec::new(),
                            Some("device failed".into()),
                        );
                        heap.push(Reverse((at, i, seq)));
                        steps.insert(seq, Step::Next);
                        seq += 1;
                        continue;
                    }
                    fleet.transition(device, DeviceEvent::StartJob { job: shard.label() })?;
                    emit(
                        at,
                        device,
                        TraceEventKind::ShardStart,
                        Some(shard),
                        Vec::new(),
                        None,
                    );
                    let timeout = timeout_for(shard, options.timeout_factor);
                    let (kind, failed, busy, detail, crashed) =
                        settle(shard, runner.run_shard(shard, device, timeout), timeout);
                    if crashed {
                        failed_device[i] = true;
                    }
                    heap.push(Reverse((at + busy, i, seq)));
                    steps.insert(
                        seq,
                        Step::Finish {
                            shard: cursor[i] - 1,
                            kind,
                            failed,
                            detail,
                        },
                    );
                    seq += 1;
                }
                Step::Finish {
                    shard,
                    kind,
                    failed,
                    detail,
                } => {
                    let shard = queues[i][shard];
                    emit(at, device, kind, Some(shard), failed, detail.clone());
                    if failed_device[i] {
                        fleet.transition(
                            device,
                            DeviceEvent::Fail {
                                reason: detail.unwrap_or_else(|| "runner crash".into()),
                            },
                        )?;
                    } else {
                        fleet.transition(device, DeviceEvent::JobDone)?;
                    }
                    phase_end = phase_end.max(at);
                    heap.push(Reverse((at, i, seq)));
                    steps.insert(seq, Step::Next);
                    seq += 1;
                }
            }
        }
        phase_start = phase_end;
    }
    fleet.set_clock(origin + phase_start);
    let campaign_wall_time = events.last().map(|e| e.at).unwrap_or_default();
    Ok(ExecutionTrace {
        events,
        campaign_wall_time,
    })
}

struct DeviceLog {
    events: Vec<TraceEvent>,
    crashed: bool,
}

fn run_wall(
    plan: &SchedulePlan,
    fleet: &mut Fleet,
    runner: &dyn Runner,
    options: ExecuteOptions,
    needs_program: &[bool],
) -> Result<ExecutionTrace, EngineError> {
    let devices: Vec<DeviceId> = plan.assignment.devices().collect();
    let origin = fleet.clock();
    let placeholder = Fleet::new(*fleet.spec())?;
    let owner = FleetOwner::spawn(std::mem::replace(fleet, placeholder));
    let handle = owner.handle();
    let started = Instant::now();
    let now = |started: &Instant| Seconds::round_from_f64(started.elapsed().as_secs_f64());
    let mut events: Vec<(Seconds, usize, u64, TraceEvent)> = Vec::new();
    let mut seq = 0u64;
    let mut push =
        |events: &mut Vec<(Seconds, usize, u64, TraceEvent)>, i: usize, e: TraceEvent| {
            events.push((e.at, i, seq, e));
            seq += 1;
        };

    let result = (|| -> Result<(), EngineError> {
        if needs_program.iter().any(|p| *p) {
            for (i, &d) in devices
                .iter()
                .enumerate()
                .filter(|(i, _)| needs_program[*i])
            {
                handle.submit(
                    d,
                    DeviceEvent::StartProgram {
                        bitstream: plan.bitstream.clone(),
                        latency: plan.programming_latency,
                    },
                    Some(origin),
                )?;
                push(
                    &mut events,
                    i,
                    program_event(Seconds::ZERO, d, TraceEventKind::ProgramStart, plan),
                );
            }
            std::thread::sleep(std::time::Duration::from_millis(
                plan.programming_latency.deci() * 100,
            ));
            let at = now(&started).max(plan.programming_latency);
            for (i, &d) in devices
                .iter()
                .enumerate()
                .filter(|(i, _)| needs_program[*i])
            {
                handle.submit(d, DeviceEvent::ProgramDone, Some(origin + at))?;
                push(
                    &mut events,
                    i,
                    program_event(at, d, TraceEventKind::ProgramDone, plan),
                );
            }
        }
        let crashed: Mutex<Vec<bool>> = Mutex::new(vec![false; devices.len()]);
        for phase in 0..plan.assignment.phases.len() {
            let logs: Vec<Result<DeviceLog, EngineError>> = std::thread::scope(|scope| {
                let workers: Vec<_> = devices
                    .iter()
                    .enumerate()
                    .map(|(i, &d)| {
                        let handle = handle.clone();
                        let already_failed = crashed.lock().expect("crash flags")[i];
                        let shards: Vec<&Shard> = plan.assignment.per_device[&d]
                            .iter()
                            .filter(|s| s.phase == phase)
                            .collect();
                        let started = &started;
                        scope.spawn(move || {
                            run_device_phase(
                                d,
                                &shards,
                                already_failed,
                                runner,
                                &handle,
                                options,
                                started,
                                origin,
                            )
                        })
                    })
                    .collect();
                workers
                    .into_iter()
                    .map(|w| w.join().expect("device worker panicked"))
                    .collect()
            });
            for (i, log) in logs.into_iter().enumerate() {
                let log = log?;
                if log.crashed {
                    crashed.lock().expect("crash flags")[i] = true;
                }
                for e in log.events {
                    push(&mut events, i, e);
                }
            }
        }
        Ok(())
    })();
    drop(handle);
    *fleet = owner.into_inner();
    result?;

    events.sort_by_key(|e| (e.0, e.1, e.2));
    let events: Vec<TraceEvent> = events.into_iter().map(|(_, _, _, e)| e).collect();
    let campaign_wall_time = events.last().map(|e| e.at).unwrap_or_default();
    fleet.set_clock(origin + campaign_wall_time);
    Ok(ExecutionTrace {
        events,
        campaign_wall_time,
    })
}

fn program_event(
    at: Seconds,
    device: DeviceId,
    kind: TraceEventKind,
    plan: &SchedulePlan,
) -> TraceEvent {
    TraceEvent {
        at,
        device,
        kind,
        shard: None,
        failed: Vec::new(),
        detail: Some(plan.bitstream.clone()),
    }
}

#[allow(clippy::too_many_arguments)]
fn run_device_phase(
    device: DeviceId,
    shards: &[&Shard],
    already_failed: bool,
    runner: &dyn Runner,
    fleet: &FleetHandle,
    options: ExecuteOptions,
    started: &Instant,
    origin: Seconds,
) -> Result<DeviceLog, EngineError> {
    let now = || Seconds::round_from_f64(started.elapsed().as_secs_f64());
    let mut log = DeviceLog {
        events: Vec::new(),
        crashed: already_failed,
    };
    for shard in shards {
        let at = now();
        if log.crashed {
            log.events.push(TraceEvent {
                at,
                device,
                kind: TraceEventKind::ShardSkipped,
                shard: Some(ShardRef::from(*shard)),
                failed: Vec::new(),
                detail: Some("device failed".into()),
            });
            continue;
        }
        fleet.submit(
            device,
            DeviceEvent::StartJob { job: shard.label() },
            Some(origin + at),
        )?;
        log.events.push(TraceEvent {
            at,
            device,
            kind: TraceEventKind::ShardStart,
            shard: Some(ShardRef::from(*shard)),
            failed: Vec::new(),
            detail: None,
        });
        let timeout = timeout_for(shard, options.timeout_factor);
        let (kind, failed, _, detail, crashed) =
            settle(shard, runner.run_shard(shard, device, timeout), timeout);
        let end = now().max(at);
        let event = if crashed {
            log.crashed = true;
            DeviceEvent::Fail {
                reason: detail.clone().unwrap_or_else(|| "runner crash".into()),
            }
        } else {
            DeviceEvent::JobDone
        };
        fleet.submit(device, event, Some(origin + end))?;
        log.events.push(TraceEvent {
            at: end,
            device,
            kind,
            shard: Some(ShardRef::from(*shard)),
            failed,
            detail,
        });
    }
    Ok(log)
}

/// Canonical YAML form of a trace.
pub fn emit_trace(trace: &ExecutionTrace) -> String {
    let mut out = format!("campaign_wall_time: {}\n", trace.campaign_wall_time);
    if trace.events.is_empty() {
        out.push_str("events: []\n");
        return out;
    }
    out.push_str("events:\n");
    for e in &trace.events {
        let mut fields = vec![
            ("at", e.at.to_string()),
            ("device", e.device.to_string()),
            ("kind", e.kind.as_str().to_string()),
        ];
        if let Some(s) = &e.shard {
            fields.push(("suite", yaml::scalar(&s.suite)));
            fields.push(("replica", s.replica.to_string()));
            fields.push(("lo", s.lo.to_string()));
            fields.push(("hi", s.hi.to_string()));
        }
        if matches!(
            e.kind,
            TraceEventKind::ShardDone | TraceEventKind::ShardFailed
        ) {
            fields.push((
                "failed",
                yaml::flow_seq(e.failed.iter().map(|i| i.to_string())),
            ));
        }
        if let Some(detail) = &e.detail {
            fields.push(("detail", yaml::scalar(detail)));
        }
        out.push_str(&format!("  - {}\n", yaml::flow_map(&fields)));
    }
    out
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TraceDocument {
    campaign_wall_time: Seconds,
    events: Vec<EventDocument>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EventDocument {
    at: Seconds,
    device: String,
    kind: String,
    suite: Option<String>,
    replica: Option<u32>,
    lo: Option<u32>,
    hi: Option<u32>,
    #[serde(default)]
    failed: Vec<u32>,
    detail: Option<String>,
}

pub fn parse_trace(text: &str) -> Result<ExecutionTrace, EngineError> {
    let doc: TraceDocument =
        serde_path_to_error::deserialize(serde_yaml::Deserializer::from_str(text))
            .map_err(|e| EngineError::Document(format!("{}: {}", e.path(), e.inner())))?;
    let mut events = Vec::with_capacity(doc.events.len());
    for (i, e) in doc.events.into_iter().enumerate() {
        let bad = |msg: &str| EngineError::Document(format!("events[{i}]: {msg}"));
        let kind = TraceEventKind::parse(&e.kind).ok_or_else(|| bad("unknown event kind"))?;
        let device = e.device.parse().map_err(|_| bad("bad device id"))?;
        let shard = match (e.suite, e.replica, e.lo, e.hi) {
            (Some(suite), Some(replica), Some(lo), Some(hi)) => Some(ShardRef {
                suite,
                replica,
                lo,
                hi,
            }),
            (None, None, None, None) => None,
            _ => return Err(bad("incomplete shard reference")),
        };
        events.push(TraceEvent {
            at: e.at,
            device,
            kind,
            shard,
            failed: e.failed,
            detail: e.detail,
        });
    }
    Ok(ExecutionTrace {
        events,
        campaign_wall_time: doc.campaign_wall_time,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StageStatus {
    Passed,
    Failed,
    Skipped,
}

impl StageStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            StageStatus::Passed => "passed",
            StageStatus::Failed => "failed",
            StageStatus::Skipped => "skipped",
        }
    }
}

impl fmt::Display for StageStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageRecord {
    pub name: String,
    pub kind: StageKind,
    pub status: StageStatus,
    pub start: Seconds,
    pub duration: Seconds,
    pub detail: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PipelineResult {
    pub passed: bool,
    pub stages: Vec<StageRecord>,
    /// Trace of each FPGA test stage, by stage name.
    pub campaigns: Vec<(String, ExecutionTrace)>,
    pub wall_time: Seconds,
}

/// What FPGA test stages run, and how their traces are judged.
pub struct CampaignContext<'a> {
    pub plan: &'a SchedulePlan,
    pub fleet: &'a mut Fleet,
    pub options: ExecuteOptions,
    pub judge: Box<dyn Fn(&ExecutionTrace) -> bool + 'a>,
}

/// Runs the stages named by `jobs` in dependency order, one at a time.
/// A stage runs only if each of its dependencies that is part of this
/// pipeline passed; dependencies outside the job set count as satisfied.
pub fn run_pipeline(
    jobs: &JobSet,
    stages: &[StageSpec],
    runner: &dyn Runner,
    mut campaign: Option<CampaignContext<'_>>,
) -> Result<PipelineResult, EngineError> {
    if let Some(job) = jobs.unresolved(stages).first() {
        return Err(EngineError::UnknownJob(job.to_string()));
    }
    let order = stage_topological_order(stages).map_err(|_| EngineError::StageCycle)?;
    let selected: BTreeSet<&str> = jobs.jobs.iter().map(|j| j.variant.as_str()).collect();
    let mut status: BTreeMap<&str, StageStatus> = BTreeMap::new();
    let mut records = Vec::new();
    let mut campaigns = Vec::new();
    let mut clock = Seconds::ZERO;

    for stage in order.into_iter().map(|i| &stages[i]) {
        if !selected.contains(stage.name.as_str()) {
            continue;
        }
        let blocked = stage.depends_on.iter().find(|d| {
            status
                .get(d.as_str())
                .is_some_and(|s| *s != StageStatus::Passed)
        });
        let (st, duration, detail) = if let Some(dep) = blocked {
            (
                StageStatus::Skipped,
                Seconds::ZERO,
                Some(format!("dependency `{dep}` did not pass")),
            )
        } else if stage.kind == StageKind::FpgaTest {
            match campaign.as_mut() {
                None => (
                    StageStatus::Failed,
                    Seconds::ZERO,
                    Some("no campaign configured".into()),
                ),
                Some(ctx) => match execute(ctx.plan, ctx.fleet, runner, ctx.options) {
                    Ok(trace) => {
                        let ok = (ctx.judge)(&trace);
                        let wall = trace.campaign_wall_time;
                        campaigns.push((stage.name.clone(), trace));
                        let st = if ok {
                            StageStatus::Passed
                        } else {
                            StageStatus::Failed
                        };
                        (st, wall, (!ok).then(|| "campaign verdict failed".into()))
                    }
                    Err(e) => (StageStatus::Failed, Seconds::ZERO, Some(e.to_string())),
                },
            }
        } else {
            match runner.run_stage(stage) {
                Ok(o) => (
                    if o.passed {
                        StageStatus::Passed
                    } else {
                        StageStatus::Failed
                    },
                    o.duration,
                    o.detail,
                ),
                Err(e) => (StageStatus::Failed, Seconds::ZERO, Some(e.to_string())),
            }
        };
        status.insert(&stage.name, st);
        records.push(StageRecord {
            name: stage.name.clone(),
            kind: stage.kind,
            status: st,
            start: clock,
            duration,
            detail,
        });
        clock += duration;
    }
    Ok(PipelineResult {
        passed: records.iter().all(|r| r.status == StageStatus::Passed),
        stages: records,
        campaigns,
        wall_time: clock,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::{
        builtin_bzl_manifest, builtin_stages, Divisibility, FleetSpec, SuiteCategory, TestSuite,
    };
    use crate::scheduler::{plan, EstimateMode, PlanOptions};
    use crate::triggers::{select_jobs, JobId, TriggerConfig, TriggerKind};

    fn fleet(n: u32) -> Fleet {
        Fleet::new(FleetSpec::new(1, n)).unwrap()
    }

    fn builtin_plan(n: u32, mode: EstimateMode) -> (SchedulePlan, Fleet) {
        let f = fleet(n);
        let p = plan(
            &builtin_bzl_manifest(),
            &f,
            &PlanOptions::new(n as usize, mode).bitstream("bzl"),
        )
        .unwrap();
        (p, f)
    }

    #[test]
    fn replay_campaign_matches_table_total() {
        let (p, mut f) = builtin_plan(8, EstimateMode::Replay);
        let trace = execute(
            &p,
            &mut f,
            &SimulatedRunner::new(0, 0.0),
            ExecuteOptions::default(),
        )
        .unwrap();
        assert_eq!(trace.campaign_wall_time, Seconds::from_deci(31696));
        assert_eq!(trace.campaign_wall_time, p.est_makespan);
        assert!(trace.problems().is_empty(), "{:?}", trace.problems());
        assert!(f.snapshot().values().all(|s| s == "ready(bzl)"));
    }

    #[test]
    fn model_campaign_agrees_with_estimate() {
        for n in [1, 3, 8] {
            let (p, mut f) = builtin_plan(n, EstimateMode::Model);
            let trace = execute(
                &p,
                &mut f,
                &SimulatedRunner::new(7, 0.0),
                ExecuteOptions::default(),
            )
            .unwrap();
            assert_eq!(trace.campaign_wall_time, p.est_makespan, "n={n}");
        }
    }

    #[test]
    fn single_shard_with_latency() {
        let mut m = builtin_bzl_manifest();
        m.suites = vec![TestSuite::new(
            "one",
            SuiteCategory::Os,
            1,
            Seconds::whole(42),
            Divisibility::Unified,
        )];
        let mut spec = FleetSpec::new(1, 1);
        spec.programming_latency = Seconds::whole(30);
        let mut f = Fleet::new(spec).unwrap();
        let p = plan(&m, &f, &PlanOptions::new(1, EstimateMode::Model)).unwrap();
        let trace = execute(
            &p,
            &mut f,
            &SimulatedRunner::new(0, 0.0),
            ExecuteOptions::default(),
        )
        .unwrap();
        assert_eq!(trace.campaign_wall_time, Seconds::whole(72));
        let kinds: Vec<&str> = trace.events.iter().map(|e| e.kind.as_str()).collect();
        assert_eq!(
            kinds,
            ["program_start", "program_done", "shard_start", "shard_done"]
        );
    }

    #[test]
    fn ready_devices_skip_programming() {
        let mut spec = FleetSpec::new(1, 8);
        spec.programming_latency = Seconds::whole(30);
        let mut f = Fleet::new(spec).unwrap();
        let m = builtin_bzl_manifest();
        let opts = PlanOptions::new(8, EstimateMode::Replay).bitstream("bzl");
        let first = plan(&m, &f, &opts).unwrap();
        execute(
            &first,
            &mut f,
            &SimulatedRunner::new(0, 0.0),
            ExecuteOptions::default(),
        )
        .unwrap();
        let second = plan(&m, &f, &opts).unwrap();
        assert_eq!(second.programming_latency, Seconds::ZERO);
        let trace = execute(
            &second,
            &mut f,
            &SimulatedRunner::new(0, 0.0),
            ExecuteOptions::default(),
        )
        .unwrap();
        assert_eq!(trace.campaign_wall_time, Seconds::from_deci(31696));
    }

    #[test]
    fn fail_rate_one_fails_everything() {
        let (p, mut f) = builtin_plan(8, EstimateMode::Replay);
        let runner = SimulatedRunner::new(0, 1.0);
        let trace = execute(&p, &mut f, &runner, ExecuteOptions::default()).unwrap();
        assert!(trace
            .events
            .iter()
            .filter(|e| e.kind.is_terminal())
            .all(|e| e.kind == TraceEventKind::ShardFailed));
        assert_eq!(trace.failed_tests(), 1738);
        assert_eq!(runner.injected(), 1738);
    }

    #[test]
    fn seeded_failures_are_reproducible() {
        let (p, f) = builtin_plan(8, EstimateMode::Model);
        let run = |seed| {
            let mut f = f.clone();
            emit_trace(
                &execute(
                    &p,
                    &mut f,
                    &SimulatedRunner::new(seed, 0.1),
                    ExecuteOptions::default(),
                )
                .unwrap(),
            )
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
    }

    #[test]
    fn failures_do_not_depend_on_sharding() {
        let count = |n| {
            let (p, mut f) = builtin_plan(n, EstimateMode::Model);
            let trace = execute(
                &p,
                &mut f,
                &SimulatedRunner::new(11, 0.05),
                ExecuteOptions::default(),
            )
            .unwrap();
            let mut failed: Vec<(String, u32)> = trace
                .events
                .iter()
                .flat_map(|e| {
                    let suite = e
                        .shard
                        .as_ref()
                        .map(|s| s.suite.clone())
                        .unwrap_or_default();
                    e.failed.iter().map(move |i| (suite.clone(), *i))
                })
                .collect();
            failed.sort();
            failed
        };
        assert_eq!(count(1), count(8));
    }

    #[test]
    fn crash_fails_device_and_skips_rest() {
        let (p, mut f) = builtin_plan(8, EstimateMode::Replay);
        let crashed = DeviceId::new(0, 3);
        let trace = execute(
            &p,
            &mut f,
            &SimulatedRunner::new(0, 0.0).crash_on(crashed),
            ExecuteOptions::default(),
        )
        .unwrap();
        assert!(trace.problems().is_empty(), "{:?}", trace.problems());
        let on_dev: Vec<&TraceEvent> = trace
            .events
            .iter()
            .filter(|e| e.device == crashed && e.shard.is_some())
            .collect();
        assert_eq!(on_dev[0].kind, TraceEventKind::ShardStart);
        assert_eq!(on_dev[1].kind, TraceEventKind::ShardFailed);
        assert!(on_dev[2..]
            .iter()
            .all(|e| e.kind == TraceEventKind::ShardSkipped));
        assert!(matches!(
            f.state(crashed).unwrap(),
            DeviceState::Failed { .. }
        ));
        // the device is now excluded until reset
        let again = execute(
            &p,
            &mut f,
            &SimulatedRunner::new(0, 0.0),
            ExecuteOptions::default(),
        );
        assert!(
            matches!(again, Err(EngineError::DeviceUnavailable { device, .. }) if device == crashed)
        );
    }

    #[test]
    fn slow_shards_time_out() {
        let mut m = builtin_bzl_manifest();
        m.suites.truncate(1);
        let mut f = fleet(1);
        let p = plan(&m, &f, &PlanOptions::new(1, EstimateMode::Model)).unwrap();
        let runner = SimulatedRunner::new(0, 0.0).with_duration_scale(6.0);
        let trace = execute(&p, &mut f, &runner, ExecuteOptions::default()).unwrap();
        let done = trace.events.last().unwrap();
        assert_eq!(done.kind, TraceEventKind::ShardFailed);
        assert_eq!(done.failed, vec![0]);
        assert_eq!(trace.campaign_wall_time, Seconds::whole(59 * 5));
    }

    #[test]
    fn per_device_streams_do_not_interleave() {
        let (p, mut f) = builtin_plan(8, EstimateMode::Model);
        let trace = execute(
            &p,
            &mut f,
            &SimulatedRunner::new(1, 0.2),
            ExecuteOptions::default(),
        )
        .unwrap();
        assert!(trace.problems().is_empty());
    }

    #[test]
    fn trace_yaml_round_trip() {
        let (p, mut f) = builtin_plan(8, EstimateMode::Replay);
        let trace = execute(
            &p,
            &mut f,
            &SimulatedRunner::new(0, 0.03),
            ExecuteOptions::default(),
        )
        .unwrap();
        let text = emit_trace(&trace);
        assert_eq!(parse_trace(&text).unwrap(), trace);
    }

    #[test]
    fn wall_clock_campaign_runs_commands() {
        let mut m = builtin_bzl_manifest();
        m.suites = vec![
            TestSuite::new(
                "a",
                SuiteCategory::Os,
                4,
                Seconds::from_deci(1),
                Divisibility::Divisible,
            ),
            TestSuite::new(
                "b",
                SuiteCategory::Os,
                1,
                Seconds::from_deci(1),
                Divisibility::Unified,
            ),
        ];
        let mut f = fleet(2);
        let p = plan(&m, &f, &PlanOptions::new(2, EstimateMode::Model)).unwrap();
        let runner = CommandRunner::new("test {suite} != b");
        let trace = execute(
            &p,
            &mut f,
            &runner,
            ExecuteOptions {
                clock: Clock::Wall,
                timeout_factor: 1000,
            },
        )
        .unwrap();
        assert!(trace.problems().is_empty(), "{:?}", trace.problems());
        let failed: Vec<&TraceEvent> = trace
            .events
            .iter()
            .filter(|e| e.kind == TraceEventKind::ShardFailed)
            .collect();
        assert_eq!(failed.len(), 1);
        assert_eq!(failed[0].shard.as_ref().unwrap().suite, "b");
        assert!(f.snapshot().values().all(|s| s.starts_with("ready")));
    }

    #[test]
    fn command_runner_reads_results_file() {
        let shard = Shard {
            suite: "litmus".into(),
            phase: 0,
            replica: 0,
            lo: 10,
            hi: 20,
            est_duration: Seconds::whole(1),
        };
        let dir = tempfile::tempdir().unwrap();
        let runner = CommandRunner::new(
            "printf 'suites:\\n  - {name: litmus, failed: 2, failed_tests: [12, 15, 99]}\\n' > {results}; exit 1",
        )
        .with_scratch_dir(dir.path().to_path_buf());
        let out = runner
            .run_shard(&shard, DeviceId::new(0, 0), Seconds::whole(30))
            .unwrap();
        assert_eq!(out.failed, vec![12, 15]);

        let counts_only = CommandRunner::new(
            "printf 'suites:\\n  - {name: litmus, failed: 3}\\n' > $FLEETREG_RESULTS; exit 2",
        )
        .with_scratch_dir(dir.path().to_path_buf());
        let out = counts_only
            .run_shard(&shard, DeviceId::new(0, 0), Seconds::whole(30))
            .unwrap();
        assert_eq!(out.failed, vec![10, 11, 12]);

        let no_file = CommandRunner::new("exit 1").with_scratch_dir(dir.path().to_path_buf());
        let out = no_file
            .run_shard(&shard, DeviceId::new(0, 0), Seconds::whole(30))
            .unwrap();
        assert_eq!(out.failed.len(), 10);
    }

    #[test]
    fn command_runner_times_out() {
        let shard = Shard {
            suite: "s".into(),
            phase: 0,
            replica: 0,
            lo: 0,
            hi: 1,
            est_duration: Seconds::from_deci(1),
        };
        let runner = CommandRunner::new("sleep 5");
        assert_eq!(
            runner.run_shard(&shard, DeviceId::new(0, 0), Seconds::from_deci(2)),
            Err(RunnerError::Timeout)
        );
    }

    fn daily_context<'a>(p: &'a SchedulePlan, f: &'a mut Fleet) -> CampaignContext<'a> {
        CampaignContext {
            plan: p,
            fleet: f,
            options: ExecuteOptions::default(),
            judge: Box::new(|t: &ExecutionTrace| t.failed_tests() == 0),
        }
    }

    #[test]
    fn daily_pipeline_passes() {
        let (p, mut f) = builtin_plan(8, EstimateMode::Replay);
        let jobs = select_jobs(TriggerKind::Daily, &TriggerConfig::default()).unwrap();
        let r = run_pipeline(
            &jobs,
            &builtin_stages(),
            &SimulatedRunner::new(0, 0.0),
            Some(daily_context(&p, &mut f)),
        )
        .unwrap();
        assert!(r.passed);
        assert_eq!(r.stages.len(), 4);
        let names: Vec<&str> = r.stages.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(
            names,
            ["lint-standard", "full-sim", "bitstream-gen", "fpga-daily"]
        );
        assert_eq!(r.campaigns.len(), 1);
        assert_eq!(r.stages[3].duration, Seconds::from_deci(31696));
    }

    #[test]
    fn lint_failure_skips_dependents() {
        let (p, mut f) = builtin_plan(8, EstimateMode::Replay);
        let jobs = select_jobs(TriggerKind::Daily, &TriggerConfig::default()).unwrap();
        let runner = SimulatedRunner::new(0, 0.0).fail_stage("lint-standard");
        let r = run_pipeline(
            &jobs,
            &builtin_stages(),
            &runner,
            Some(daily_context(&p, &mut f)),
        )
        .unwrap();
        assert!(!r.passed);
        assert_eq!(r.stages[0].status, StageStatus::Failed);
        assert!(r.stages[1..]
            .iter()
            .all(|s| s.status == StageStatus::Skipped));
        assert!(r.campaigns.is_empty());
    }

    #[test]
    fn empty_pipeline_passes() {
        let r = run_pipeline(
            &JobSet::default(),
            &builtin_stages(),
            &SimulatedRunner::new(0, 0.0),
            None,
        )
        .unwrap();
        assert!(r.passed);
        assert!(r.stages.is_empty());
    }

    #[test]
    fn unknown_job_is_rejected() {
        let jobs: JobSet = [JobId::new(StageKind::Uvm, "dma")].into_iter().collect();
        assert!(matches!(
            run_pipeline(
                &jobs,
                &builtin_stages(),
                &SimulatedRunner::new(0, 0.0),
                None
            ),
            Err(EngineError::UnknownJob(_))
        ));
    }

    #[test]
    fn failing_campaign_fails_stage() {
        let (p, mut f) = builtin_plan(8, EstimateMode::Replay);
        let jobs = select_jobs(TriggerKind::Daily, &TriggerConfig::default()).unwrap();
        let r = run_pipeline(
            &jobs,
            &builtin_stages(),
            &SimulatedRunner::new(0, 1.0),
            Some(daily_context(&p, &mut f)),
        )
        .unwrap();
        assert!(!r.passed);
        assert_eq!(r.stages[3].status, StageStatus::Failed);
    }
}
