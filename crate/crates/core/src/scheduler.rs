//! Campaign planning: sharding, LPT placement and makespan estimation.
//!
//! A campaign runs its suites as consecutive phases in manifest order. Each
//! divisible suite is cut into contiguous shards placed on devices with LPT;
//! whole suites run on the first device; in stability campaigns replicated
//! suites run one copy per device. A phase starts once every device has
//! finished the previous one.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Add;

use serde::Deserialize;

use crate::fleet::{DeviceId, DeviceState, Fleet, FleetError};
use crate::manifest::{Divisibility, Manifest, TestSuite};
use crate::units::{Ratio, Seconds};
use crate::yaml;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum CampaignMode {
    #[default]
    Normal,
    Stability,
}

impl CampaignMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CampaignMode::Normal => "normal",
            CampaignMode::Stability => "stability",
        }
    }
}

/// Source of shard duration estimates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum EstimateMode {
    /// Recorded parallel durations, where the manifest has them.
    Replay,
    /// Uniform per-test durations derived from single-device totals.
    #[default]
    Model,
}

impl EstimateMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimateMode::Replay => "replay",
            EstimateMode::Model => "model",
        }
    }
}

impl std::str::FromStr for EstimateMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "replay" => Ok(EstimateMode::Replay),
            "model" => Ok(EstimateMode::Model),
            other => Err(format!(
                "unknown estimate mode `{other}` (expected replay or model)"
            )),
        }
    }
}

impl std::str::FromStr for CampaignMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "normal" => Ok(CampaignMode::Normal),
            "stability" => Ok(CampaignMode::Stability),
            other => Err(format!(
                "unknown campaign mode `{other}` (expected normal or stability)"
            )),
        }
    }
}

/// A contiguous slice `[lo, hi)` of one suite's tests.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Shard {
    pub suite: String,
    pub phase: usize,
    /// Copy number for replicated suites; 0 otherwise.
    pub replica: u32,
    pub lo: u32,
    pub hi: u32,
    pub est_duration: Seconds,
}

impl Shard {
    pub fn tests(&self) -> u32 {
        self.hi - self.lo
    }

    /// Job label used for device state and trace payloads.
    pub fn label(&self) -> String {
        if self.replica == 0 {
            format!("{}[{}..{})", self.suite, self.lo, self.hi)
        } else {
            format!("{}[{}..{})#{}", self.suite, self.lo, self.hi, self.replica)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Assignment {
    pub mode: EstimateMode,
    /// Suite executed in each phase.
    pub phases: Vec<String>,
    /// Shards per device in execution order. Every planned device is present.
    pub per_device: BTreeMap<DeviceId, Vec<Shard>>,
}

impl Assignment {
    pub fn devices(&self) -> impl Iterator<Item = DeviceId> + '_ {
        self.per_device.keys().copied()
    }

    pub fn shards(&self) -> impl Iterator<Item = (DeviceId, &Shard)> {
        self.per_device
            .iter()
            .flat_map(|(d, shards)| shards.iter().map(move |s| (*d, s)))
    }

    pub fn shard_count(&self) -> usize {
        self.per_device.values().map(Vec::len).sum()
    }

    /// Duration of each phase: the slowest device's share of it.
    pub fn phase_spans(&self) -> Vec<Seconds> {
        (0..self.phases.len())
            .map(|p| {
                self.per_device
                    .values()
                    .map(|shards| {
                        shards
                            .iter()
                            .filter(|s| s.phase == p)
                            .map(|s| s.est_duration)
                            .sum::<Seconds>()
                    })
                    .max()
                    .unwrap_or_default()
            })
            .collect()
    }

    /// Estimated `(start, end)` offsets of every shard, aligned with
    /// `per_device`.
    pub fn offsets(
        &self,
        programming_latency: Seconds,
    ) -> BTreeMap<DeviceId, Vec<(Seconds, Seconds)>> {
        let mut phase_start = Vec::with_capacity(self.phases.len());
        let mut t = programming_latency;
        for span in self.phase_spans() {
            phase_start.push(t);
            t += span;
        }
        self.per_device
            .iter()
            .map(|(d, shards)| {
                let mut cursor: Option<(usize, Seconds)> = None;
                let times = shards
                    .iter()
                    .map(|s| {
                        let start = match cursor {
                            Some((phase, end)) if phase == s.phase => end,
                            _ => phase_start[s.phase],
                        };
                        let end = start + s.est_duration;
                        cursor = Some((s.phase, end));
                        (start, end)
                    })
                    .collect();
                (*d, times)
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SchedulePlan {
    pub assignment: Assignment,
    pub campaign: CampaignMode,
    pub bitstream: String,
    /// Programming time paid before the first phase (zero when every
    /// planned device already holds the bitstream).
    pub programming_latency: Seconds,
    pub est_makespan: Seconds,
    pub est_sequential: Seconds,
    pub est_speedup: Ratio,
    /// The design spans several devices. Informational only.
    pub multi_fpga_partitioned: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlanOptions {
    pub campaign: CampaignMode,
    pub estimate: EstimateMode,
    pub n_devices: usize,
    pub bitstream: String,
    pub multi_fpga_partitioned: bool,
}

impl PlanOptions {
    pub fn new(n_devices: usize, estimate: EstimateMode) -> Self {
        PlanOptions {
            campaign: CampaignMode::Normal,
            estimate,
            n_devices,
            bitstream: "default".to_string(),
            multi_fpga_partitioned: false,
        }
    }

    pub fn stability(mut self) -> Self {
        self.campaign = CampaignMode::Stability;
        self
    }

    pub fn bitstream(mut self, bitstream: &str) -> Self {
        self.bitstream = bitstream.to_string();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScheduleError {
    #[error("manifest has no suites")]
    EmptyManifest,
    #[error("at least one device is required")]
    NoDevices,
    #[error("suite `{0}` is not divisible and cannot be sharded")]
    NotDivisible(String),
    #[error("suite `{suite}` needs {copies} distinct devices for replication, plan has {devices}")]
    ReplicationCapacity {
        suite: String,
        copies: u32,
        devices: usize,
    },
    #[error(transparent)]
    Fleet(#[from] FleetError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("plan document: {0}")]
    Document(String),
}

/// Cuts a divisible suite into `min(n_devices, total_tests)` contiguous
/// shards whose test counts differ by at most one (larger shards first).
pub fn shard_suite(suite: &TestSuite, n_devices: usize) -> Result<Vec<Shard>, ScheduleError> {
    if !suite.divisibility.is_divisible() {
        return Err(ScheduleError::NotDivisible(suite.name.clone()));
    }
    if n_devices == 0 {
        return Err(ScheduleError::NoDevices);
    }
    let counts = split_counts(suite.total_tests, n_devices);
    let mut lo = 0;
    Ok(counts
        .into_iter()
        .map(|count| {
            let hi = lo + count;
            let est_duration = if count == suite.total_tests {
                suite.seq_duration
            } else {
                suite.range_duration(lo, hi)
            };
            let shard = Shard {
                suite: suite.name.clone(),
                phase: 0,
                replica: 0,
                lo,
                hi,
                est_duration,
            };
            lo = hi;
            shard
        })
        .collect())
}

fn split_counts(total: u32, n_devices: usize) -> Vec<u32> {
    let k = (total as usize).min(n_devices) as u32;
    if k == 0 {
        return Vec::new();
    }
    let base = total / k;
    let extra = total % k;
    (0..k).map(|i| base + u32::from(i < extra)).collect()
}

/// Shards whose durations are scaled so the largest equals a recorded
/// parallel wall time.
fn replay_shards(suite: &TestSuite, n_devices: usize, recorded: Seconds) -> Vec<Shard> {
    let counts = split_counts(suite.total_tests, n_devices);
    let max = u64::from(counts.iter().copied().max().unwrap_or(1));
    let mut lo = 0;
    counts
        .into_iter()
        .map(|count| {
            let hi = lo + count;
            let shard = Shard {
                suite: suite.name.clone(),
                phase: 0,
                replica: 0,
                lo,
                hi,
                est_duration: recorded.scale(u64::from(count), max),
            };
            lo = hi;
            shard
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct LptPartition<T> {
    /// Item indices per machine, in assignment order.
    pub machines: Vec<Vec<usize>>,
    pub loads: Vec<T>,
}

impl<T: Copy + PartialOrd + Default> LptPartition<T> {
    pub fn makespan(&self) -> T {
        self.loads
            .iter()
            .copied()
            .fold(T::default(), |acc, x| if x > acc { x } else { acc })
    }
}

/// Longest-processing-time-first: items in descending duration order (ties
/// by lower index) each go to the least-loaded machine (ties by lower
/// machine index).
pub fn lpt_partition<T>(durations: &[T], m: usize) -> Result<LptPartition<T>, ScheduleError>
where
    T: Copy + PartialOrd + Default + Add<Output = T> + fmt::Debug,
{
    if m == 0 {
        return Err(ScheduleError::NoDevices);
    }
    if durations.is_empty() {
        return Err(ScheduleError::InvalidInput("no items to partition".into()));
    }
    if let Some(bad) = durations.iter().find(|d| !(**d > T::default())) {
        return Err(ScheduleError::InvalidInput(format!(
            "durations must be positive, found {bad:?}"
        )));
    }
    let mut order: Vec<usize> = (0..durations.len()).collect();
    order.sort_by(|&a, &b| {
        durations[b]
            .partial_cmp(&durations[a])
            .expect("durations are comparable")
            .then(a.cmp(&b))
    });
    let mut machines = vec![Vec::new(); m];
    let mut loads = vec![T::default(); m];
    for item in order {
        let mut target = 0;
        for k in 1..m {
            if loads[k] < loads[target] {
                target = k;
            }
        }
        machines[target].push(item);
        loads[target] = loads[target] + durations[item];
    }
    Ok(LptPartition { machines, loads })
}

/// Campaign makespan: programming latency plus, for each phase, the
/// largest per-device total within that phase.
pub fn estimate_makespan(assignment: &Assignment, programming_latency: Seconds) -> Seconds {
    programming_latency + assignment.phase_spans().into_iter().sum()
}

/// `seq / par`, rounded to hundredths.
pub fn speedup(seq: Seconds, par: Seconds) -> Result<Ratio, ScheduleError> {
    if seq == Seconds::ZERO || par == Seconds::ZERO {
        return Err(ScheduleError::InvalidInput(
            "speedup needs positive durations".into(),
        ));
    }
    Ok(Ratio::of(seq, par).expect("par is positive"))
}

/// Builds a campaign plan for `opts.n_devices` devices acquired from `fleet`.
pub fn plan(
    manifest: &Manifest,
    fleet: &Fleet,
    opts: &PlanOptions,
) -> Result<SchedulePlan, ScheduleError> {
    if manifest.suites.is_empty() {
        return Err(ScheduleError::EmptyManifest);
    }
    if opts.n_devices == 0 {
        return Err(ScheduleError::NoDevices);
    }
    let devices = fleet.acquire(opts.n_devices, &opts.bitstream)?;
    let n = devices.len();
    let needs_programming = devices
        .iter()
        .any(|d| matches!(fleet.state(*d), Ok(DeviceState::Free)));
    let programming_latency = if needs_programming {
        fleet.spec().programming_latency
    } else {
        Seconds::ZERO
    };

    let mut per_device: BTreeMap<DeviceId, Vec<Shard>> =
        devices.iter().map(|d| (*d, Vec::new())).collect();
    let mut phases = Vec::with_capacity(manifest.suites.len());
    let mut est_sequential = Seconds::ZERO;

    for (phase, suite) in manifest.suites.iter().enumerate() {
        phases.push(suite.name.clone());
        match (suite.divisibility, opts.campaign) {
            (Divisibility::Divisible, _) => {
                let recorded = match (opts.estimate, suite.recorded_parallel_duration) {
                    (EstimateMode::Replay, Some(r))
                        if n > 1 && manifest.recorded_devices == Some(n as u32) =>
                    {
                        Some(r)
                    }
                    _ => None,
                };
                let mut shards = match recorded {
                    Some(r) => replay_shards(suite, n, r),
                    None => shard_suite(suite, n)?,
                };
                let durations: Vec<u64> = shards
                    .iter()
                    .map(|s| s.est_duration.deci().max(1))
                    .collect();
                let placement = lpt_partition(&durations, n)?;
                let mut slots: Vec<Option<Shard>> = shards.drain(..).map(Some).collect();
                for (machine, items) in placement.machines.iter().enumerate() {
                    let list = per_device
                        .get_mut(&devices[machine])
                        .expect("planned device");
                    for &item in items {
                        let mut shard = slots[item].take().expect("each shard placed once");
                        shard.phase = phase;
                        list.push(shard);
                    }
                }
                est_sequential += suite.seq_duration;
            }
            (Divisibility::Replicated(copies), CampaignMode::Stability) => {
                if copies as usize > n {
                    return Err(ScheduleError::ReplicationCapacity {
                        suite: suite.name.clone(),
                        copies,
                        devices: n,
                    });
                }
                for (replica, device) in devices.iter().take(copies as usize).enumerate() {
                    per_device
                        .get_mut(device)
                        .expect("planned device")
                        .push(Shard {
                            suite: suite.name.clone(),
                            phase,
                            replica: replica as u32,
                            lo: 0,
                            hi: suite.total_tests,
                            est_duration: suite.seq_duration,
                        });
                    est_sequential += suite.seq_duration;
                }
            }
            _ => {
                per_device
                    .get_mut(&devices[0])
                    .expect("planned device")
                    .push(Shard {
                        suite: suite.name.clone(),
                        phase,
                        replica: 0,
                        lo: 0,
                        hi: suite.total_tests,
                        est_duration: suite.seq_duration,
                    });
                est_sequential += suite.seq_duration;
            }
        }
    }

    let assignment = Assignment {
        mode: opts.estimate,
        phases,
        per_device,
    };
    let est_makespan = estimate_makespan(&assignment, programming_latency);
    Ok(SchedulePlan {
        est_speedup: speedup(est_sequential, est_makespan)?,
        assignment,
        campaign: opts.campaign,
        bitstream: opts.bitstream.clone(),
        programming_latency,
        est_makespan,
        est_sequential,
        multi_fpga_partitioned: opts.multi_fpga_partitioned,
    })
}

/// Coverage problems of an assignment against its manifest: every test of a
/// sharded suite in exactly one shard, whole suites intact, and replicated
/// copies on distinct devices.
pub fn assignment_problems(assignment: &Assignment, manifest: &Manifest) -> Vec<String> {
    let mut problems = Vec::new();
    let mut by_suite: BTreeMap<&str, Vec<(DeviceId, &Shard)>> = BTreeMap::new();
    for (d, s) in assignment.shards() {
        by_suite.entry(s.suite.as_str()).or_default().push((d, s));
    }
    for (phase, name) in assignment.phases.iter().enumerate() {
        let Some(suite) = manifest.suite(name) else {
            problems.push(format!("phase {phase}: unknown suite `{name}`"));
            continue;
        };
        let shards = by_suite.remove(name.as_str()).unwrap_or_default();
        if shards.is_empty() {
            problems.push(format!("suite `{name}` has no shards"));
            continue;
        }
        for (_, s) in &shards {
            if s.phase != phase {
                problems.push(format!(
                    "shard {} is in phase {}, expected {phase}",
                    s.label(),
                    s.phase
                ));
            }
            if s.hi <= s.lo || s.hi > suite.total_tests {
                problems.push(format!("shard {} has an invalid range", s.label()));
            }
        }
        let replicas: BTreeSet<u32> = shards.iter().map(|(_, s)| s.replica).collect();
        if replicas.len() > 1 {
            let devices: BTreeSet<DeviceId> = shards.iter().map(|(d, _)| *d).collect();
            if devices.len() != shards.len() {
                problems.push(format!("copies of `{name}` share a device"));
            }
            if let Divisibility::Replicated(n) = suite.divisibility {
                if replicas.len() != n as usize {
                    problems.push(format!(
                        "`{name}` has {} copies, expected {n}",
                        replicas.len()
                    ));
                }
            }
        }
        for replica in replicas {
            let mut covered = vec![0u32; suite.total_tests as usize];
            for (_, s) in shards.iter().filter(|(_, s)| s.replica == replica) {
                for i in s.lo..s.hi.min(suite.total_tests) {
                    covered[i as usize] += 1;
                }
            }
            if let Some(i) = covered.iter().position(|&c| c != 1) {
                problems.push(format!(
                    "test {i} of `{name}` (copy {replica}) is covered {} times",
                    covered[i]
                ));
            }
        }
    }
    for name in by_suite.keys() {
        problems.push(format!(
            "shards reference suite `{name}` outside the phase list"
        ));
    }
    problems
}

/// Canonical YAML export with estimated start and end offsets per shard.
pub fn emit_plan(plan: &SchedulePlan) -> String {
    let a = &plan.assignment;
    let mut out = String::new();
    out.push_str(&format!("bitstream: {}\n", yaml::scalar(&plan.bitstream)));
    out.push_str(&format!("campaign: {}\n", plan.campaign.as_str()));
    out.push_str(&format!("mode: {}\n", a.mode.as_str()));
    out.push_str(&format!(
        "multi_fpga_partitioned: {}\n",
        plan.multi_fpga_partitioned
    ));
    out.push_str(&format!(
        "programming_latency: {}\n",
        plan.programming_latency
    ));
    out.push_str(&format!("est_makespan: {}\n", plan.est_makespan));
    out.push_str(&format!("est_sequential: {}\n", plan.est_sequential));
    out.push_str(&format!("est_speedup: {}\n", plan.est_speedup));
    out.push_str(&format!(
        "phases: {}\n",
        yaml::flow_seq(a.phases.iter().map(|p| yaml::scalar(p)))
    ));
    out.push_str("devices:\n");
    let offsets = a.offsets(plan.programming_latency);
    for (device, shards) in &a.per_device {
        out.push_str(&format!("  - device: {device}\n"));
        if shards.is_empty() {
            out.push_str("    shards: []\n");
            continue;
        }
        out.push_str("    shards:\n");
        for (shard, (start, end)) in shards.iter().zip(&offsets[device]) {
            let entry = yaml::flow_map(&[
                ("suite", yaml::scalar(&shard.suite)),
                ("phase", shard.phase.to_string()),
                ("replica", shard.replica.to_string()),
                ("lo", shard.lo.to_string()),
                ("hi", shard.hi.to_string()),
                ("est_duration", shard.est_duration.to_string()),
                ("start", start.to_string()),
                ("end", end.to_string()),
            ]);
            out.push_str(&format!("      - {entry}\n"));
        }
    }
    out
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanDocument {
    bitstream: String,
    campaign: String,
    mode: String,
    multi_fpga_partitioned: bool,
    programming_latency: Seconds,
    est_makespan: Seconds,
    est_sequential: Seconds,
    est_speedup: Ratio,
    phases: Vec<String>,
    devices: Vec<DeviceDocument>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DeviceDocument {
    device: String,
    shards: Vec<ShardDocument>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ShardDocument {
    suite: String,
    phase: usize,
    replica: u32,
    lo: u32,
    hi: u32,
    est_duration: Seconds,
    start: Seconds,
    end: Seconds,
}

/// Reads a plan written by [`emit_plan`], checking that every derived
/// figure agrees with the shard tables.
pub fn parse_plan(text: &str) -> Result<SchedulePlan, ScheduleError> {
    let doc: PlanDocument =
        serde_path_to_error::deserialize(serde_yaml::Deserializer::from_str(text))
            .map_err(|e| ScheduleError::Document(format!("{}: {}", e.path(), e.inner())))?;
    let bad = |msg: String| ScheduleError::Document(msg);
    let campaign = doc.campaign.parse::<CampaignMode>().map_err(bad)?;
    let mode = doc.mode.parse::<EstimateMode>().map_err(bad)?;
    let mut per_device = BTreeMap::new();
    let mut stated_offsets = BTreeMap::new();
    for dev in doc.devices {
        let id: DeviceId = dev
            .device
            .parse()
            .map_err(|e: crate::fleet::ParseDeviceIdError| bad(e.to_string()))?;
        let mut shards = Vec::new();
        let mut times = Vec::new();
        for s in dev.shards {
            if s.phase >= doc.phases.len() || s.hi <= s.lo {
                return Err(bad(format!(
                    "device {id}: malformed shard for `{}`",
                    s.suite
                )));
            }
            times.push((s.start, s.end));
            shards.push(Shard {
                suite: s.suite,
                phase: s.phase,
                replica: s.replica,
                lo: s.lo,
                hi: s.hi,
                est_duration: s.est_duration,
            });
        }
        if per_device.insert(id, shards).is_some() {
            return Err(bad(format!("device {id} listed twice")));
        }
        stated_offsets.insert(id, times);
    }
    if per_device.is_empty() {
        return Err(bad("plan lists no devices".into()));
    }
    let assignment = Assignment {
        mode,
        phases: doc.phases,
        per_device,
    };
    if assignment.offsets(doc.programming_latency) != stated_offsets {
        return Err(bad("shard start/end offsets disagree with durations".into()));
    }
    let est_makespan = estimate_makespan(&assignment, doc.programming_latency);
    if est_makespan != doc.est_makespan {
        return Err(bad(format!(
            "est_makespan {} disagrees with shard tables ({est_makespan})",
            doc.est_makespan
        )));
    }
    let est_speedup = speedup(doc.est_sequential, est_makespan)?;
    if est_speedup != doc.est_speedup {
        return Err(bad(format!(
            "est_speedup {} should be {est_speedup}",
            doc.est_speedup
        )));
    }
    Ok(SchedulePlan {
        assignment,
        campaign,
        bitstream: doc.bitstream,
        programming_latency: doc.programming_latency,
        est_makespan,
        est_sequential: doc.est_sequential,
        est_speedup,
        multi_fpga_partitioned: doc.multi_fpga_partitioned,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::{builtin_bzl_manifest, FleetSpec, SuiteCategory};
    use proptest::prelude::*;

    fn fleet(n: u32) -> Fleet {
        Fleet::new(FleetSpec::new(1, n)).unwrap()
    }

    /// Exhaustive optimum over all m^n placements.
    fn brute_force_makespan(durations: &[u64], m: usize) -> u64 {
        fn go(items: &[u64], loads: &mut Vec<u64>, best: &mut u64) {
            let Some((&first, rest)) = items.split_first() else {
                *best = (*best).min(loads.iter().copied().max().unwrap_or(0));
                return;
            };
            for k in 0..loads.len() {
                loads[k] += first;
                go(rest, loads, best);
                loads[k] -= first;
            }
        }
        let mut best = u64::MAX;
        go(durations, &mut vec![0; m], &mut best);
        best
    }

    #[test]
    fn lpt_suboptimal_textbook_case() {
        let p = lpt_partition(&[3u64, 3, 2, 2, 2], 2).unwrap();
        let mut loads = p.loads.clone();
        loads.sort_unstable();
        assert_eq!(loads, vec![5, 7]);
        assert_eq!(p.makespan(), 7);
        assert_eq!(brute_force_makespan(&[3, 3, 2, 2, 2], 2), 6);
    }

    #[test]
    fn lpt_optimal_case() {
        let p = lpt_partition(&[5u64, 4, 3, 3, 2], 2).unwrap();
        assert_eq!(p.makespan(), 9);
        assert_eq!(brute_force_makespan(&[5, 4, 3, 3, 2], 2), 9);
    }

    #[test]
    fn lpt_single_machine_is_sum() {
        let p = lpt_partition(&[4u64, 1, 7], 1).unwrap();
        assert_eq!(p.makespan(), 12);
        assert_eq!(p.machines, vec![vec![2, 0, 1]]);
    }

    #[test]
    fn lpt_tie_breaking() {
        let p = lpt_partition(&[2u64, 2, 2], 2).unwrap();
        assert_eq!(p.machines, vec![vec![0, 2], vec![1]]);
    }

    #[test]
    fn lpt_preconditions() {
        assert!(lpt_partition::<u64>(&[], 2).is_err());
        assert!(lpt_partition(&[1u64], 0).is_err());
        assert!(lpt_partition(&[1u64, 0], 2).is_err());
    }

    #[test]
    fn shard_litmus_over_eight() {
        let m = builtin_bzl_manifest();
        let shards = shard_suite(m.suite("litmus").unwrap(), 8).unwrap();
        assert_eq!(shards.len(), 8);
        let largest = shards.iter().max_by_key(|s| s.tests()).unwrap();
        assert_eq!(largest.tests(), 172);
        // 172 * 13892 / 1370 = 1744.08
        assert_eq!(largest.est_duration, Seconds::from_deci(17441));
        let table = 1736.5;
        assert!((largest.est_duration.as_f64() - table).abs() / table < 0.01);
    }

    #[test]
    fn shard_small_suite_one_test_each() {
        let m = builtin_bzl_manifest();
        let shards = shard_suite(m.suite("ethernet-driver").unwrap(), 8).unwrap();
        assert_eq!(shards.len(), 6);
        assert!(shards.iter().all(|s| s.tests() == 1));
    }

    #[test]
    fn shard_over_one_device_is_whole_suite() {
        for suite in builtin_bzl_manifest()
            .suites
            .iter()
            .filter(|s| s.divisibility.is_divisible())
        {
            let shards = shard_suite(suite, 1).unwrap();
            assert_eq!(shards.len(), 1);
            assert_eq!((shards[0].lo, shards[0].hi), (0, suite.total_tests));
            assert_eq!(shards[0].est_duration, suite.seq_duration);
        }
    }

    #[test]
    fn shard_unified_is_an_error() {
        let m = builtin_bzl_manifest();
        assert_eq!(
            shard_suite(m.suite("spi").unwrap(), 8),
            Err(ScheduleError::NotDivisible("spi".into()))
        );
        assert!(shard_suite(m.suite("linux-boot").unwrap(), 8).is_err());
    }

    #[test]
    fn shard_uses_per_test_durations() {
        let mut suite = TestSuite::new(
            "t",
            SuiteCategory::Os,
            4,
            Seconds::whole(10),
            Divisibility::Divisible,
        );
        suite.per_test_durations = Some(vec![
            Seconds::whole(1),
            Seconds::whole(2),
            Seconds::whole(3),
            Seconds::whole(4),
        ]);
        let shards = shard_suite(&suite, 2).unwrap();
        assert_eq!(shards[0].est_duration, Seconds::whole(3));
        assert_eq!(shards[1].est_duration, Seconds::whole(7));
    }

    #[test]
    fn builtin_replay_eight_devices() {
        let m = builtin_bzl_manifest();
        let p = plan(&m, &fleet(8), &PlanOptions::new(8, EstimateMode::Replay)).unwrap();
        assert_eq!(p.est_makespan, Seconds::from_deci(31696));
        assert_eq!(p.est_sequential, Seconds::whole(18962));
        assert!(assignment_problems(&p.assignment, &m).is_empty());
    }

    #[test]
    fn builtin_model_eight_devices() {
        let m = builtin_bzl_manifest();
        let p = plan(&m, &fleet(8), &PlanOptions::new(8, EstimateMode::Model)).unwrap();
        // Per-phase maxima of the uniform model, summed by hand:
        // 59 + 141.5 + 73.4 + 93.6 + 75 + 31.2 + 51.9 + 1744.1 + 22 + 90.2
        //    + 115 + 670 + 22 + 18 = 3206.9
        assert_eq!(p.est_makespan, Seconds::from_deci(32069));
        assert_eq!(p.est_speedup.to_string(), "5.91");
        let ratio = p.est_makespan.as_f64() / 3169.6;
        assert!((ratio - 1.0).abs() < 0.02);
    }

    #[test]
    fn builtin_one_device() {
        let m = builtin_bzl_manifest();
        for mode in [EstimateMode::Replay, EstimateMode::Model] {
            let p = plan(&m, &fleet(1), &PlanOptions::new(1, mode)).unwrap();
            assert_eq!(p.est_makespan, Seconds::whole(18962));
            assert_eq!(p.est_speedup, Ratio::ONE);
        }
    }

    #[test]
    fn stability_replicates_on_distinct_devices() {
        let m = builtin_bzl_manifest();
        let p = plan(
            &m,
            &fleet(8),
            &PlanOptions::new(8, EstimateMode::Model).stability(),
        )
        .unwrap();
        let copies: Vec<(DeviceId, &Shard)> = p
            .assignment
            .shards()
            .filter(|(_, s)| s.suite == "linux-boot")
            .collect();
        assert_eq!(copies.len(), 8);
        let devices: BTreeSet<DeviceId> = copies.iter().map(|(d, _)| *d).collect();
        assert_eq!(devices.len(), 8);
        assert!(copies.iter().all(|(_, s)| s.lo == 0 && s.hi == 1));
        let phase = p
            .assignment
            .phases
            .iter()
            .position(|n| n == "linux-boot")
            .unwrap();
        assert_eq!(p.assignment.phase_spans()[phase], Seconds::whole(115));
        assert!(assignment_problems(&p.assignment, &m).is_empty());
    }

    #[test]
    fn stability_needs_enough_devices() {
        let m = builtin_bzl_manifest();
        let err = plan(
            &m,
            &fleet(8),
            &PlanOptions::new(4, EstimateMode::Model).stability(),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            ScheduleError::ReplicationCapacity {
                copies: 8,
                devices: 4,
                ..
            }
        ));
    }

    #[test]
    fn plan_capacity_and_empty_errors() {
        let m = builtin_bzl_manifest();
        assert!(matches!(
            plan(&m, &fleet(8), &PlanOptions::new(9, EstimateMode::Model)),
            Err(ScheduleError::Fleet(FleetError::InsufficientCapacity {
                requested: 9,
                available: 8
            }))
        ));
        let mut empty = m.clone();
        empty.suites.clear();
        assert_eq!(
            plan(&empty, &fleet(8), &PlanOptions::new(8, EstimateMode::Model)),
            Err(ScheduleError::EmptyManifest)
        );
    }

    #[test]
    fn programming_latency_is_additive() {
        let m = builtin_bzl_manifest();
        let mut spec = FleetSpec::new(1, 8);
        spec.programming_latency = Seconds::whole(30);
        let f = Fleet::new(spec).unwrap();
        let p = plan(&m, &f, &PlanOptions::new(8, EstimateMode::Replay)).unwrap();
        assert_eq!(p.est_makespan, Seconds::from_deci(31696 + 300));
    }

    #[test]
    fn speedup_values() {
        assert_eq!(
            speedup(Seconds::whole(18754), Seconds::from_deci(31696))
                .unwrap()
                .to_string(),
            "5.92"
        );
        assert_eq!(
            speedup(Seconds::whole(18962), Seconds::from_deci(31696))
                .unwrap()
                .to_string(),
            "5.98"
        );
        assert_eq!(
            speedup(Seconds::whole(42), Seconds::whole(42)).unwrap(),
            Ratio::ONE
        );
        assert!(speedup(Seconds::ZERO, Seconds::whole(1)).is_err());
        assert!(speedup(Seconds::whole(1), Seconds::ZERO).is_err());
    }

    #[test]
    fn plan_yaml_round_trip() {
        let m = builtin_bzl_manifest();
        let p = plan(
            &m,
            &fleet(8),
            &PlanOptions::new(8, EstimateMode::Replay).bitstream("bzl"),
        )
        .unwrap();
        let text = emit_plan(&p);
        assert!(text.contains("est_makespan: 3169.6\n"));
        assert!(text.contains(
            "      - {suite: litmus, phase: 7, replica: 0, lo: 0, hi: 172, est_duration: 1736.5, start: 500, end: 2236.5}\n"
        ), "{text}");
        assert_eq!(parse_plan(&text).unwrap(), p);
        assert_eq!(emit_plan(&parse_plan(&text).unwrap()), text);
    }

    #[test]
    fn tampered_plan_is_rejected() {
        let m = builtin_bzl_manifest();
        let p = plan(&m, &fleet(8), &PlanOptions::new(8, EstimateMode::Replay)).unwrap();
        let text = emit_plan(&p).replace("est_makespan: 3169.6", "est_makespan: 3000");
        assert!(parse_plan(&text).is_err());
    }

    fn arb_manifest() -> impl Strategy<Value = Manifest> {
        proptest::collection::vec((1u32..60, 1u64..5000, 0u8..4), 1..8).prop_map(|rows| {
            let mut m = builtin_bzl_manifest();
            m.recorded_devices = None;
            m.suites = rows
                .into_iter()
                .enumerate()
                .map(|(i, (tests, secs, kind))| {
                    let divisibility = match kind {
                        0 => Divisibility::Unified,
                        1 => Divisibility::Replicated(2),
                        _ => Divisibility::Divisible,
                    };
                    TestSuite::new(
                        &format!("s{i}"),
                        SuiteCategory::Baremetal,
                        tests,
                        Seconds::from_deci(secs * 10 + 3),
                        divisibility,
                    )
                })
                .collect();
            m
        })
    }

    proptest! {
        #[test]
        fn lpt_within_graham_bound(durations in proptest::collection::vec(1u64..50, 1..9), m in 1usize..4) {
            let lpt = lpt_partition(&durations, m).unwrap().makespan();
            let opt = brute_force_makespan(&durations, m);
            // lpt <= (4/3 - 1/(3m)) * opt  <=>  3m * lpt <= (4m - 1) * opt
            prop_assert!(3 * m as u64 * lpt <= (4 * m as u64 - 1) * opt, "lpt {lpt} opt {opt}");
        }

        #[test]
        fn shards_cover_every_test_once(tests in 1u32..500, n in 1usize..20) {
            let suite = TestSuite::new("s", SuiteCategory::Os, tests, Seconds::whole(100), Divisibility::Divisible);
            let shards = shard_suite(&suite, n).unwrap();
            prop_assert_eq!(shards.len(), n.min(tests as usize));
            prop_assert_eq!(shards[0].lo, 0);
            prop_assert_eq!(shards.last().unwrap().hi, tests);
            prop_assert!(shards.windows(2).all(|w| w[0].hi == w[1].lo));
            let max = shards.iter().map(Shard::tests).max().unwrap();
            let min = shards.iter().map(Shard::tests).min().unwrap();
            prop_assert!(max - min <= 1);
        }

        #[test]
        fn model_plan_invariants(m in arb_manifest(), n in 2usize..9) {
            let f = fleet(8);
            let p = plan(&m, &f, &PlanOptions::new(n, EstimateMode::Model)).unwrap();
            prop_assert!(assignment_problems(&p.assignment, &m).is_empty());
            prop_assert!(p.est_makespan <= p.est_sequential);
            prop_assert_eq!(p.est_speedup, speedup(p.est_sequential, p.est_makespan).unwrap());
            let longest_test = m.suites.iter().map(TestSuite::max_test_duration).max().unwrap();
            prop_assert!(p.est_makespan >= longest_test);
            // est_sequential / n, allowing one decisecond of rounding per shard
            let slack = p.assignment.shard_count() as u64;
            prop_assert!(p.est_makespan.deci() * n as u64 + slack * n as u64 >= p.est_sequential.deci());
            let fewer = plan(&m, &f, &PlanOptions::new(n - 1, EstimateMode::Model)).unwrap();
            prop_assert!(p.est_makespan <= fewer.est_makespan);
            prop_assert_eq!(emit_plan(&p), emit_plan(&plan(&m, &f, &PlanOptions::new(n, EstimateMode::Model)).unwrap()));
        }

        #[test]
        fn stability_plan_invariants(m in arb_manifest(), n in 2usize..9) {
            let p = plan(&m, &fleet(8), &PlanOptions::new(n, EstimateMode::Model).stability()).unwrap();
            prop_assert!(assignment_problems(&p.assignment, &m).is_empty());
        }
    }
}
