//! Campaign manifests: test suites, pipeline stages and the default fleet.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::reporting::CoverageRecord;
use crate::units::Seconds;
use crate::yaml;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteCategory {
    Integration,
    Baremetal,
    Os,
}

impl SuiteCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            SuiteCategory::Integration => "integration",
            SuiteCategory::Baremetal => "baremetal",
            SuiteCategory::Os => "os",
        }
    }
}

/// How a suite may be spread over devices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Divisibility {
    /// Tests are independent and may be sharded.
    Divisible,
    /// The suite must run whole on a single device.
    Unified,
    /// Runs whole; in stability campaigns, `n` copies run side by side.
    Replicated(u32),
}

impl Divisibility {
    pub fn is_divisible(self) -> bool {
        matches!(self, Divisibility::Divisible)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ReplicatedForm {
    replicated: u32,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum DivisibilityForm {
    Name(String),
    Replicated(ReplicatedForm),
}

impl<'de> Deserialize<'de> for Divisibility {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        match DivisibilityForm::deserialize(deserializer)
            .map_err(|_| D::Error::custom("expected `divisible`, `unified` or `{replicated: N}`"))?
        {
            DivisibilityForm::Name(name) => match name.as_str() {
                "divisible" => Ok(Divisibility::Divisible),
                "unified" => Ok(Divisibility::Unified),
                other => Err(D::Error::unknown_variant(
                    other,
                    &["divisible", "unified", "replicated"],
                )),
            },
            DivisibilityForm::Replicated(r) => Ok(Divisibility::Replicated(r.replicated)),
        }
    }
}

impl fmt::Display for Divisibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Divisibility::Divisible => f.write_str("divisible"),
            Divisibility::Unified => f.write_str("unified"),
            Divisibility::Replicated(n) => write!(f, "{{replicated: {n}}}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestSuite {
    pub name: String,
    pub category: SuiteCategory,
    pub total_tests: u32,
    /// Wall time for the whole suite on one device.
    pub seq_duration: Seconds,
    pub divisibility: Divisibility,
    #[serde(default)]
    pub failure_threshold: f64,
    #[serde(default)]
    pub per_test_durations: Option<Vec<Seconds>>,
    /// Measured wall time on `Manifest::recorded_devices` devices, used by
    /// replay estimation.
    #[serde(default)]
    pub recorded_parallel_duration: Option<Seconds>,
}

impl TestSuite {
    pub fn new(
        name: &str,
        category: SuiteCategory,
        total_tests: u32,
        seq_duration: Seconds,
        divisibility: Divisibility,
    ) -> Self {
        TestSuite {
            name: name.to_string(),
            category,
            total_tests,
            seq_duration,
            divisibility,
            failure_threshold: 0.0,
            per_test_durations: None,
            recorded_parallel_duration: None,
        }
    }

    /// Estimated duration of tests `[lo, hi)`. Without per-test durations
    /// every test takes `seq_duration / total_tests`.
    pub fn range_duration(&self, lo: u32, hi: u32) -> Seconds {
        match &self.per_test_durations {
            Some(per_test) => per_test[lo as usize..hi as usize].iter().sum(),
            None => self
                .seq_duration
                .scale(u64::from(hi - lo), u64::from(self.total_tests)),
        }
    }

    pub fn max_test_duration(&self) -> Seconds {
        match &self.per_test_durations {
            Some(per_test) => per_test.iter().copied().max().unwrap_or_default(),
            None => self
                .seq_duration
                .scale(1, u64::from(self.total_tests.max(1))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    Lint,
    Simulation,
    Uvm,
    Bitstream,
    FpgaTest,
    Drops,
}

impl StageKind {
    pub const ALL: [StageKind; 6] = [
        StageKind::Lint,
        StageKind::Simulation,
        StageKind::Uvm,
        StageKind::Bitstream,
        StageKind::FpgaTest,
        StageKind::Drops,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StageKind::Lint => "lint",
            StageKind::Simulation => "simulation",
            StageKind::Uvm => "uvm",
            StageKind::Bitstream => "bitstream",
            StageKind::FpgaTest => "fpga_test",
            StageKind::Drops => "drops",
        }
    }
}

impl fmt::Display for StageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSpec {
    pub name: String,
    pub kind: StageKind,
    #[serde(default)]
    pub depends_on: Vec<String>,
    pub nominal_duration: Seconds,
}

impl StageSpec {
    pub fn new(name: &str, kind: StageKind, depends_on: &[&str], nominal_secs: u64) -> Self {
        StageSpec {
            name: name.to_string(),
            kind,
            depends_on: depends_on.iter().map(|d| d.to_string()).collect(),
            nominal_duration: Seconds::whole(nominal_secs),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetSpec {
    pub nodes: u32,
    pub devices_per_node: u32,
    #[serde(default)]
    pub programming_latency: Seconds,
}

impl FleetSpec {
    pub fn new(nodes: u32, devices_per_node: u32) -> Self {
        FleetSpec {
            nodes,
            devices_per_node,
            programming_latency: Seconds::ZERO,
        }
    }

    pub fn total_devices(&self) -> u32 {
        self.nodes * self.devices_per_node
    }

    pub fn to_yaml_flow(&self) -> String {
        yaml::flow_map(&[
            ("nodes", self.nodes.to_string()),
            ("devices_per_node", self.devices_per_node.to_string()),
            ("programming_latency", self.programming_latency.to_string()),
        ])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub schema_version: u32,
    pub fleet: FleetSpec,
    pub stages: Vec<StageSpec>,
    pub suites: Vec<TestSuite>,
    /// Device count at which `recorded_parallel_duration` values were measured.
    pub recorded_devices: Option<u32>,
    /// A published single-device total, kept next to the computed column sum.
    pub stated_sequential_total: Option<Seconds>,
    pub coverage: Option<CoverageRecord>,
}

impl Manifest {
    pub fn suite(&self, name: &str) -> Option<&TestSuite> {
        self.suites.iter().find(|s| s.name == name)
    }

    pub fn suite_index(&self, name: &str) -> Option<usize> {
        self.suites.iter().position(|s| s.name == name)
    }

    pub fn total_tests(&self) -> u64 {
        self.suites.iter().map(|s| u64::from(s.total_tests)).sum()
    }

    pub fn sequential_total(&self) -> Seconds {
        self.suites.iter().map(|s| s.seq_duration).sum()
    }

    pub fn stage(&self, name: &str) -> Option<&StageSpec> {
        self.stages.iter().find(|s| s.name == name)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestDocument {
    schema_version: u32,
    fleet: FleetSpec,
    #[serde(default)]
    stages: Vec<StageSpec>,
    suites: Vec<TestSuite>,
    #[serde(default)]
    recorded_devices: Option<u32>,
    #[serde(default)]
    stated_sequential_total: Option<Seconds>,
    #[serde(default)]
    coverage: Option<CoverageRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ViolationCode {
    SchemaVersion,
    NoSuites,
    EmptyName,
    DuplicateSuite,
    DuplicateStage,
    ZeroTests,
    NonpositiveDuration,
    ThresholdOutOfRange,
    PerTestLength,
    PerTestSum,
    ZeroReplication,
    RecordedOnWholeSuite,
    RecordedDevicesMissing,
    UnknownDependency,
    DagCycle,
    FleetZeroSize,
    CoverageOutOfRange,
}

impl ViolationCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationCode::SchemaVersion => "schema-version",
            ViolationCode::NoSuites => "no-suites",
            ViolationCode::EmptyName => "empty-name",
            ViolationCode::DuplicateSuite => "duplicate-suite",
            ViolationCode::DuplicateStage => "duplicate-stage",
            ViolationCode::ZeroTests => "zero-tests",
            ViolationCode::NonpositiveDuration => "nonpositive-duration",
            ViolationCode::ThresholdOutOfRange => "threshold-out-of-range",
            ViolationCode::PerTestLength => "per-test-length",
            ViolationCode::PerTestSum => "per-test-sum",
            ViolationCode::ZeroReplication => "zero-replication",
            ViolationCode::RecordedOnWholeSuite => "recorded-on-whole-suite",
            ViolationCode::RecordedDevicesMissing => "recorded-devices-missing",
            ViolationCode::UnknownDependency => "stage-unknown-dependency",
            ViolationCode::DagCycle => "stage-dag-cycle",
            ViolationCode::FleetZeroSize => "fleet-zero-size",
            ViolationCode::CoverageOutOfRange => "coverage-out-of-range",
        }
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub code: ViolationCode,
    pub path: String,
    pub message: String,
}

impl Violation {
    fn new(code: ViolationCode, path: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            code,
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}: {}", self.code, self.path, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("syntax error{}: {message}", location_suffix(*.line, *.column))]
    Syntax {
        line: Option<usize>,
        column: Option<usize>,
        message: String,
    },
    #[error("schema violation at {path}: {reason}")]
    Schema { path: String, reason: String },
    #[error("unsupported schema_version {found} (expected {expected})")]
    VersionMismatch { found: i64, expected: u32 },
    #[error("manifest is invalid:{}", list_violations(.0))]
    Invalid(Vec<Violation>),
}

fn location_suffix(line: Option<usize>, column: Option<usize>) -> String {
    match (line, column) {
        (Some(l), Some(c)) => format!(" at line {l} column {c}"),
        _ => String::new(),
    }
}

fn list_violations(violations: &[Violation]) -> String {
    violations.iter().map(|v| format!("\n  {v}")).collect()
}

impl ManifestError {
    /// Field path of the first problem, when one is known.
    pub fn field_path(&self) -> Option<&str> {
        match self {
            ManifestError::Schema { path, .. } => Some(path),
            ManifestError::Invalid(v) => v.first().map(|v| v.path.as_str()),
            ManifestError::VersionMismatch { .. } => Some("schema_version"),
            ManifestError::Syntax { .. } => None,
        }
    }
}

/// Parses without checking cross-field invariants.
pub fn parse_manifest_unchecked(text: &str) -> Result<Manifest, ManifestError> {
    let value: serde_yaml::Value = serde_yaml::from_str(text).map_err(|e| {
        let loc = e.location();
        ManifestError::Syntax {
            line: loc.as_ref().map(|l| l.line()),
            column: loc.as_ref().map(|l| l.column()),
            message: e.to_string(),
        }
    })?;
    if let Some(version) = value.get("schema_version").and_then(|v| v.as_i64()) {
        if version != i64::from(SCHEMA_VERSION) {
            return Err(ManifestError::VersionMismatch {
                found: version,
                expected: SCHEMA_VERSION,
            });
        }
    }
    let doc: ManifestDocument = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        ManifestError::Schema {
            path: if path == "." { "<root>".into() } else { path },
            reason: e.into_inner().to_string(),
        }
    })?;
    Ok(Manifest {
        schema_version: doc.schema_version,
        fleet: doc.fleet,
        stages: doc.stages,
        suites: doc.suites,
        recorded_devices: doc.recorded_devices,
        stated_sequential_total: doc.stated_sequential_total,
        coverage: doc.coverage,
    })
}

/// Parses a manifest document and rejects it unless every invariant holds.
pub fn parse_manifest(text: &str) -> Result<Manifest, ManifestError> {
    let manifest = parse_manifest_unchecked(text)?;
    let violations = validate_manifest(&manifest);
    if violations.is_empty() {
        Ok(manifest)
    } else {
        Err(ManifestError::Invalid(violations))
    }
}

/// Checks every manifest invariant. An empty result means the manifest is valid.
pub fn validate_manifest(m: &Manifest) -> Vec<Violation> {
    use ViolationCode as C;
    let mut out = Vec::new();

    if m.schema_version != SCHEMA_VERSION {
        out.push(Violation::new(
            C::SchemaVersion,
            "schema_version",
            format!("expected {SCHEMA_VERSION}, found {}", m.schema_version),
        ));
    }
    if m.fleet.nodes == 0 || m.fleet.devices_per_node == 0 {
        out.push(Violation::new(
            C::FleetZeroSize,
            "fleet",
            "nodes and devices_per_node must be positive",
        ));
    }
    if m.suites.is_empty() {
        out.push(Violation::new(
            C::NoSuites,
            "suites",
            "at least one suite is required",
        ));
    }

    let mut seen: HashMap<&str, usize> = HashMap::new();
    for (i, suite) in m.suites.iter().enumerate() {
        let at = |field: &str| format!("suites[{i}].{field}");
        if suite.name.trim().is_empty() {
            out.push(Violation::new(
                C::EmptyName,
                at("name"),
                "suite name is empty",
            ));
        }
        if let Some(first) = seen.get(suite.name.as_str()) {
            out.push(Violation::new(
                C::DuplicateSuite,
                at("name"),
                format!(
                    "suite `{}` is defined at suites[{first}] and suites[{i}]",
                    suite.name
                ),
            ));
        } else {
            seen.insert(&suite.name, i);
        }
        if suite.total_tests == 0 {
            out.push(Violation::new(
                C::ZeroTests,
                at("total_tests"),
                "must be at least 1",
            ));
        }
        if suite.seq_duration == Seconds::ZERO {
            out.push(Violation::new(
                C::NonpositiveDuration,
                at("seq_duration"),
                "must be greater than zero",
            ));
        }
        if !(0.0..=1.0).contains(&suite.failure_threshold) {
            out.push(Violation::new(
                C::ThresholdOutOfRange,
                at("failure_threshold"),
                format!("{} is outside [0, 1]", suite.failure_threshold),
            ));
        }
        if let Divisibility::Replicated(0) = suite.divisibility {
            out.push(Violation::new(
                C::ZeroReplication,
                at("divisibility"),
                "replication count must be at least 1",
            ));
        }
        if let Some(per_test) = &suite.per_test_durations {
            if per_test.len() != suite.total_tests as usize {
                out.push(Violation::new(
                    C::PerTestLength,
                    at("per_test_durations"),
                    format!("{} entries for {} tests", per_test.len(), suite.total_tests),
                ));
            }
            if per_test.contains(&Seconds::ZERO) {
                out.push(Violation::new(
                    C::NonpositiveDuration,
                    at("per_test_durations"),
                    "every per-test duration must be greater than zero",
                ));
            }
            let sum: Seconds = per_test.iter().sum();
            let seq = suite.seq_duration.deci();
            // |sum - seq| <= 0.5% of seq
            if sum.deci().abs_diff(seq) * 200 > seq {
                out.push(Violation::new(
                    C::PerTestSum,
                    at("per_test_durations"),
                    format!(
                        "sum {sum} differs from seq_duration {} by more than 0.5%",
                        suite.seq_duration
                    ),
                ));
            }
        }
        if let Some(recorded) = suite.recorded_parallel_duration {
            if !suite.divisibility.is_divisible() {
                out.push(Violation::new(
                    C::RecordedOnWholeSuite,
                    at("recorded_parallel_duration"),
                    "only divisible suites carry a recorded parallel duration",
                ));
            }
            if recorded == Seconds::ZERO {
                out.push(Violation::new(
                    C::NonpositiveDuration,
                    at("recorded_parallel_duration"),
                    "must be greater than zero",
                ));
            }
            if m.recorded_devices.is_none() {
                out.push(Violation::new(
                    C::RecordedDevicesMissing,
                    "recorded_devices",
                    "required when any suite has recorded_parallel_duration",
                ));
            }
        }
    }
    if m.recorded_devices == Some(0) {
        out.push(Violation::new(
            C::RecordedDevicesMissing,
            "recorded_devices",
            "must be at least 1",
        ));
    }

    let mut stage_names: HashMap<&str, usize> = HashMap::new();
    for (i, stage) in m.stages.iter().enumerate() {
        if stage.name.trim().is_empty() {
            out.push(Violation::new(
                C::EmptyName,
                format!("stages[{i}].name"),
                "stage name is empty",
            ));
        }
        if let Some(first) = stage_names.get(stage.name.as_str()) {
            out.push(Violation::new(
                C::DuplicateStage,
                format!("stages[{i}].name"),
                format!(
                    "stage `{}` is defined at stages[{first}] and stages[{i}]",
                    stage.name
                ),
            ));
        } else {
            stage_names.insert(&stage.name, i);
        }
    }
    for (i, stage) in m.stages.iter().enumerate() {
        for (j, dep) in stage.depends_on.iter().enumerate() {
            if !stage_names.contains_key(dep.as_str()) {
                out.push(Violation::new(
                    C::UnknownDependency,
                    format!("stages[{i}].depends_on[{j}]"),
                    format!("unknown stage `{dep}`"),
                ));
            }
        }
    }
    if let Err(cycle) = stage_topological_order(&m.stages) {
        let first = cycle[0];
        let names: Vec<&str> = cycle.iter().map(|&i| m.stages[i].name.as_str()).collect();
        out.push(Violation::new(
            C::DagCycle,
            format!("stages[{first}].depends_on"),
            format!("dependency cycle among stages {}", names.join(", ")),
        ));
    }

    if let Some(cov) = &m.coverage {
        for (field, value) in cov.fields() {
            if !(0.0..=100.0).contains(&value) {
                out.push(Violation::new(
                    C::CoverageOutOfRange,
                    format!("coverage.{field}"),
                    format!("{value} is outside [0, 100]"),
                ));
            }
        }
    }
    out
}

/// Orders stages so every stage follows its dependencies, breaking ties by
/// declaration order. Unknown dependencies are ignored. On a cycle, returns
/// the indices of the stages that could not be ordered.
pub fn stage_topological_order(stages: &[StageSpec]) -> Result<Vec<usize>, Vec<usize>> {
    let index: HashMap<&str, usize> = stages
        .iter()
        .enumerate()
        .map(|(i, s)| (s.name.as_str(), i))
        .collect();
    let mut indegree = vec![0usize; stages.len()];
    let mut dependents: Vec<Vec<usize>> = vec![Vec::new(); stages.len()];
    for (i, stage) in stages.iter().enumerate() {
        let deps: BTreeSet<usize> = stage
            .depends_on
            .iter()
            .filter_map(|d| index.get(d.as_str()).copied())
            .collect();
        indegree[i] = deps.len();
        for d in deps {
            dependents[d].push(i);
        }
    }
    let mut ready: BTreeSet<usize> = (0..stages.len()).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(stages.len());
    while let Some(next) = ready.pop_first() {
        order.push(next);
        for &d in &dependents[next] {
            indegree[d] -= 1;
            if indegree[d] == 0 {
                ready.insert(d);
            }
        }
    }
    if order.len() == stages.len() {
        Ok(order)
    } else {
        Err((0..stages.len()).filter(|&i| indegree[i] > 0).collect())
    }
}

/// Names of `roots` plus every stage that transitively depends on one of them.
pub fn stage_descendants(stages: &[StageSpec], roots: &BTreeSet<String>) -> BTreeSet<String> {
    let mut closed = roots.clone();
    loop {
        let before = closed.len();
        for stage in stages {
            if stage.depends_on.iter().any(|d| closed.contains(d)) {
                closed.insert(stage.name.clone());
            }
        }
        if closed.len() == before {
            return closed;
        }
    }
}

/// Canonical YAML form of a manifest.
pub fn emit_manifest(m: &Manifest) -> String {
    let mut out = String::new();
    out.push_str(&format!("schema_version: {}\n", m.schema_version));
    out.push_str(&format!("fleet: {}\n", m.fleet.to_yaml_flow()));
    if m.stages.is_empty() {
        out.push_str("stages: []\n");
    } else {
        out.push_str("stages:\n");
        for stage in &m.stages {
            let deps = yaml::flow_seq(stage.depends_on.iter().map(|d| yaml::scalar(d)));
            let entry = yaml::flow_map(&[
                ("name", yaml::scalar(&stage.name)),
                ("kind", stage.kind.as_str().to_string()),
                ("depends_on", deps),
                ("nominal_duration", stage.nominal_duration.to_string()),
            ]);
            out.push_str(&format!("  - {entry}\n"));
        }
    }
    if m.suites.is_empty() {
        out.push_str("suites: []\n");
    } else {
        out.push_str("suites:\n");
        for suite in &m.suites {
            let mut fields = vec![
                ("name", yaml::scalar(&suite.name)),
                ("category", suite.category.as_str().to_string()),
                ("total_tests", suite.total_tests.to_string()),
                ("seq_duration", suite.seq_duration.to_string()),
                ("divisibility", suite.divisibility.to_string()),
                ("failure_threshold", yaml::float(suite.failure_threshold)),
            ];
            if let Some(per_test) = &suite.per_test_durations {
                fields.push((
                    "per_test_durations",
                    yaml::flow_seq(per_test.iter().map(|d| d.to_string())),
                ));
            }
            if let Some(recorded) = suite.recorded_parallel_duration {
                fields.push(("recorded_parallel_duration", recorded.to_string()));
            }
            out.push_str(&format!("  - {}\n", yaml::flow_map(&fields)));
        }
    }
    if let Some(n) = m.recorded_devices {
        out.push_str(&format!("recorded_devices: {n}\n"));
    }
    if let Some(total) = m.stated_sequential_total {
        out.push_str(&format!("stated_sequential_total: {total}\n"));
    }
    if let Some(cov) = &m.coverage {
        out.push_str(&format!("coverage: {}\n", cov.to_yaml_flow()));
    }
    out
}

/// The FPGA campaign of the reference SoC: fourteen suites with their
/// single-device wall times and the times recorded on eight devices.
pub fn builtin_bzl_manifest() -> Manifest {
    use Divisibility::{Divisible, Replicated, Unified};
    use SuiteCategory::{Baremetal, Integration, Os};

    // (name, category, tests, 1-device deciseconds, divisibility, 8-device deciseconds)
    let rows: [(&str, SuiteCategory, u32, u64, Divisibility, Option<u64>); 14] = [
        ("spi", Integration, 1, 590, Unified, None),
        ("jtag-debug", Integration, 109, 11020, Divisible, Some(1380)),
        ("vec-axpy", Baremetal, 50, 5240, Divisible, Some(655)),
        ("vec-gemm", Baremetal, 70, 7280, Divisible, Some(910)),
        ("vec-stream", Baremetal, 50, 5360, Divisible, Some(670)),
        ("vec-somier", Baremetal, 20, 2080, Divisible, Some(260)),
        ("spmv", Baremetal, 40, 4150, Divisible, Some(535)),
        ("litmus", Baremetal, 1370, 138920, Divisible, Some(17365)),
        ("rv-tests", Baremetal, 18, 1320, Divisible, Some(165)),
        ("ethernet-driver", Os, 6, 5410, Divisible, Some(916)),
        ("linux-boot", Os, 1, 1150, Replicated(8), None),
        // stress-ng bundles its stressors into a single invocation.
        ("stress-ng", Os, 1, 6700, Replicated(8), None),
        ("test_dd", Os, 1, 220, Replicated(8), None),
        ("test_plic", Os, 1, 180, Replicated(8), None),
    ];
    let suites = rows
        .iter()
        .map(
            |&(name, category, tests, seq, divisibility, recorded)| TestSuite {
                recorded_parallel_duration: recorded.map(Seconds::from_deci),
                ..TestSuite::new(name, category, tests, Seconds::from_deci(seq), divisibility)
            },
        )
        .collect();

    Manifest {
        schema_version: SCHEMA_VERSION,
        fleet: FleetSpec::new(12, 8),
        stages: builtin_stages(),
        suites,
        recorded_devices: Some(8),
        stated_sequential_total: Some(Seconds::whole(18754)),
        coverage: Some(CoverageRecord {
            statements: 91.0,
            branches: 82.0,
            toggle: 65.0,
            total: 80.0,
        }),
    }
}

/// Stage DAG shared by the builtin manifest and the default trigger config.
/// Stage names double as job variants. Nominal durations are placeholders.
pub fn builtin_stages() -> Vec<StageSpec> {
    use StageKind::*;
    vec![
        StageSpec::new("lint", Lint, &[], 300),
        StageSpec::new("lint-standard", Lint, &[], 600),
        StageSpec::new("smoke-sim", Simulation, &["lint"], 900),
        StageSpec::new("selective-uvm", Uvm, &["lint"], 1800),
        StageSpec::new("full-sim", Simulation, &["lint-standard"], 3600),
        StageSpec::new("bitstream-gen", Bitstream, &["full-sim"], 14400),
        StageSpec::new("fpga-daily", FpgaTest, &["bitstream-gen"], 3600),
        StageSpec::new("performance-suite", FpgaTest, &["bitstream-gen"], 7200),
        StageSpec::new("performance-validation", FpgaTest, &["bitstream-gen"], 3600),
        StageSpec::new("fpga-8-cluster", FpgaTest, &["bitstream-gen"], 3600),
        StageSpec::new(
            "fpga-stability-extended",
            FpgaTest,
            &["bitstream-gen"],
            28800,
        ),
        StageSpec::new("drops", Drops, &["bitstream-gen"], 600),
    ]
}

/// Suite names grouped by category, in manifest order.
pub fn suites_by_category(m: &Manifest) -> BTreeMap<SuiteCategory, Vec<&str>> {
    let mut out: BTreeMap<SuiteCategory, Vec<&str>> = BTreeMap::new();
    for s in &m.suites {
        out.entry(s.category).or_default().push(&s.name);
    }
    out
}
