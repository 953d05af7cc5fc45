//! CI trigger rules: which configuration an event activates and which jobs
//! it runs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::manifest::{stage_descendants, StageKind, StageSpec};
use crate::yaml;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    MergeRequest,
    Commit,
    Schedule,
    Manual,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct PipelineEvent {
    pub kind: Option<EventKind>,
    pub target_branch: String,
    pub labels: BTreeSet<String>,
    pub variables: BTreeMap<String, String>,
    pub commit_message_tags: BTreeSet<String>,
    pub pinned_sha: Option<String>,
}

impl PipelineEvent {
    pub fn new(kind: EventKind, target_branch: &str) -> Self {
        PipelineEvent {
            kind: Some(kind),
            target_branch: target_branch.to_string(),
            ..Default::default()
        }
    }

    pub fn label(mut self, label: &str) -> Self {
        self.labels.insert(label.to_string());
        self
    }

    pub fn variable(mut self, key: &str, value: &str) -> Self {
        self.variables.insert(key.to_string(), value.to_string());
        self
    }

    pub fn tag(mut self, tag: &str) -> Self {
        self.commit_message_tags.insert(tag.to_string());
        self
    }

    pub fn pinned(mut self, sha: &str) -> Self {
        self.pinned_sha = Some(sha.to_string());
        self
    }

    fn variable_set(&self, name: &str) -> bool {
        self.variables.get(name).is_some_and(|v| {
            let v = v.trim().to_ascii_lowercase();
            !v.is_empty() && !matches!(v.as_str(), "0" | "false" | "no" | "off")
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerKind {
    Torture,
    Daily,
    Weekly,
    Stability,
    None,
}

impl TriggerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TriggerKind::Torture => "torture",
            TriggerKind::Daily => "daily",
            TriggerKind::Weekly => "weekly",
            TriggerKind::Stability => "stability",
            TriggerKind::None => "none",
        }
    }
}

impl fmt::Display for TriggerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TriggerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "torture" => Ok(TriggerKind::Torture),
            "daily" => Ok(TriggerKind::Daily),
            "weekly" => Ok(TriggerKind::Weekly),
            "stability" => Ok(TriggerKind::Stability),
            "none" => Ok(TriggerKind::None),
            other => Err(format!("unknown trigger kind `{other}`")),
        }
    }
}

/// A job: a stage kind plus the variant string naming the stage it runs.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobId {
    pub kind: StageKind,
    pub variant: String,
}

impl JobId {
    pub fn new(kind: StageKind, variant: &str) -> Self {
        JobId {
            kind,
            variant: variant.to_string(),
        }
    }
}

impl fmt::Display for JobId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.kind, self.variant)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct JobSet {
    pub jobs: BTreeSet<JobId>,
}

impl JobSet {
    pub fn is_empty(&self) -> bool {
        self.jobs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.jobs.len()
    }

    pub fn contains(&self, kind: StageKind, variant: &str) -> bool {
        self.jobs.contains(&JobId::new(kind, variant))
    }

    pub fn has_kind(&self, kind: StageKind) -> bool {
        self.jobs.iter().any(|j| j.kind == kind)
    }

    pub fn is_subset(&self, other: &JobSet) -> bool {
        self.jobs.is_subset(&other.jobs)
    }

    /// Jobs whose variant does not name a stage of the same kind.
    pub fn unresolved<'a>(&'a self, stages: &[StageSpec]) -> Vec<&'a JobId> {
        self.jobs
            .iter()
            .filter(|j| {
                !stages
                    .iter()
                    .any(|s| s.name == j.variant && s.kind == j.kind)
            })
            .collect()
    }
}

impl FromIterator<JobId> for JobSet {
    fn from_iter<I: IntoIterator<Item = JobId>>(iter: I) -> Self {
        JobSet {
            jobs: iter.into_iter().collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerConfig {
    pub main_branch: String,
    pub verification_tag: String,
    pub daily_variable: String,
    pub weekly_label: String,
    pub stability_variable: String,
    pub jobs: BTreeMap<TriggerKind, Vec<JobId>>,
    /// Label to the stage kinds it disables (dependents follow).
    #[serde(default)]
    pub disable_labels: BTreeMap<String, Vec<StageKind>>,
    /// Labels that restrict a pipeline to lint jobs.
    #[serde(default)]
    pub lint_only_labels: Vec<String>,
}

impl Default for TriggerConfig {
    fn default() -> Self {
        use StageKind::*;
        let job = JobId::new;
        TriggerConfig {
            main_branch: "main".into(),
            verification_tag: "verification".into(),
            daily_variable: "daily".into(),
            weekly_label: "weekly".into(),
            stability_variable: "stability_test".into(),
            jobs: BTreeMap::from([
                (
                    TriggerKind::Torture,
                    vec![
                        job(Lint, "lint"),
                        job(Simulation, "smoke-sim"),
                        job(Uvm, "selective-uvm"),
                    ],
                ),
                (
                    TriggerKind::Daily,
                    vec![
                        job(Lint, "lint-standard"),
                        job(Simulation, "full-sim"),
                        job(Bitstream, "bitstream-gen"),
                        job(FpgaTest, "fpga-daily"),
                    ],
                ),
                (
                    TriggerKind::Weekly,
                    vec![
                        job(FpgaTest, "performance-suite"),
                        job(FpgaTest, "performance-validation"),
                        job(FpgaTest, "fpga-8-cluster"),
                    ],
                ),
                (
                    TriggerKind::Stability,
                    vec![job(FpgaTest, "fpga-stability-extended")],
                ),
            ]),
            disable_labels: BTreeMap::from([
                ("disable-uvm".to_string(), vec![Uvm]),
                ("no-bitstream-gen".to_string(), vec![Bitstream]),
            ]),
            lint_only_labels: vec!["ci-test".into()],
        }
    }
}

impl TriggerConfig {
    fn recognizes(&self, label: &str) -> bool {
        label == self.weekly_label
            || self.disable_labels.contains_key(label)
            || self.lint_only_labels.iter().any(|l| l == label)
    }

    /// Canonical YAML form.
    pub fn to_yaml(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "main_branch: {}\n",
            yaml::scalar(&self.main_branch)
        ));
        out.push_str(&format!(
            "verification_tag: {}\n",
            yaml::scalar(&self.verification_tag)
        ));
        out.push_str(&format!(
            "daily_variable: {}\n",
            yaml::scalar(&self.daily_variable)
        ));
        out.push_str(&format!(
            "weekly_label: {}\n",
            yaml::scalar(&self.weekly_label)
        ));
        out.push_str(&format!(
            "stability_variable: {}\n",
            yaml::scalar(&self.stability_variable)
        ));
        out.push_str("jobs:\n");
        for (kind, jobs) in &self.jobs {
            out.push_str(&format!("  {kind}:\n"));
            for j in jobs {
                out.push_str(&format!(
                    "    - {}\n",
                    yaml::flow_map(&[
                        ("kind", j.kind.to_string()),
                        ("variant", yaml::scalar(&j.variant))
                    ])
                ));
            }
        }
        out.push_str("disable_labels:\n");
        for (label, kinds) in &self.disable_labels {
            out.push_str(&format!(
                "  {}: {}\n",
                yaml::scalar(label),
                yaml::flow_seq(kinds.iter().map(|k| k.as_str()))
            ));
        }
        out.push_str(&format!(
            "lint_only_labels: {}\n",
            yaml::flow_seq(self.lint_only_labels.iter().map(|l| yaml::scalar(l)))
        ));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TriggerError {
    #[error("no jobs are selected for trigger kind `none`")]
    NoneSelected,
    #[error("trigger kind `{0}` has no job list in the trigger config")]
    Unconfigured(TriggerKind),
    #[error("event document: {0}")]
    Event(String),
    #[error("trigger config document: {0}")]
    Config(String),
}

/// Resolves the single configuration an event activates.
/// Precedence: stability, weekly, daily, torture, none.
pub fn classify_event(e: &PipelineEvent, config: &TriggerConfig) -> TriggerKind {
    if e.variable_set(&config.stability_variable) {
        return TriggerKind::Stability;
    }
    if e.labels.contains(&config.weekly_label) {
        return TriggerKind::Weekly;
    }
    if e.kind == Some(EventKind::Schedule) && e.variable_set(&config.daily_variable) {
        return TriggerKind::Daily;
    }
    let main_mr = e.kind == Some(EventKind::MergeRequest) && e.target_branch == config.main_branch;
    let tagged_commit = e.kind == Some(EventKind::Commit)
        && e.commit_message_tags.contains(&config.verification_tag);
    if main_mr || tagged_commit {
        return TriggerKind::Torture;
    }
    TriggerKind::None
}

pub fn select_jobs(kind: TriggerKind, config: &TriggerConfig) -> Result<JobSet, TriggerError> {
    if kind == TriggerKind::None {
        return Err(TriggerError::NoneSelected);
    }
    config
        .jobs
        .get(&kind)
        .map(|jobs| jobs.iter().cloned().collect())
        .ok_or(TriggerError::Unconfigured(kind))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DisableOutcome {
    pub jobs: JobSet,
    pub removed: JobSet,
    /// Labels that neither select nor disable anything.
    pub warnings: Vec<String>,
}

/// Drops jobs excluded by labels. Disabling a stage kind also drops every
/// job whose stage depends on a stage of that kind.
pub fn apply_disable_controls(
    jobs: &JobSet,
    labels: &BTreeSet<String>,
    stages: &[StageSpec],
    config: &TriggerConfig,
) -> DisableOutcome {
    let disabled_kinds: BTreeSet<StageKind> = labels
        .iter()
        .filter_map(|l| config.disable_labels.get(l))
        .flatten()
        .copied()
        .collect();
    let roots: BTreeSet<String> = stages
        .iter()
        .filter(|s| disabled_kinds.contains(&s.kind))
        .map(|s| s.name.clone())
        .collect();
    let blocked = stage_descendants(stages, &roots);
    let lint_only = labels
        .iter()
        .any(|l| config.lint_only_labels.iter().any(|x| x == l));

    let (kept, removed): (BTreeSet<JobId>, BTreeSet<JobId>) =
        jobs.jobs.iter().cloned().partition(|j| {
            !disabled_kinds.contains(&j.kind)
                && !blocked.contains(&j.variant)
                && (!lint_only || j.kind == StageKind::Lint)
        });
    let warnings = labels
        .iter()
        .filter(|l| !config.recognizes(l))
        .map(|l| format!("ignoring unrecognized label `{l}`"))
        .collect();
    DisableOutcome {
        jobs: JobSet { jobs: kept },
        removed: JobSet { jobs: removed },
        warnings,
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EventDocument {
    kind: EventKind,
    #[serde(default)]
    target_branch: String,
    #[serde(default)]
    labels: BTreeSet<String>,
    #[serde(default)]
    variables: BTreeMap<String, serde_yaml::Value>,
    #[serde(default)]
    commit_message_tags: BTreeSet<String>,
    #[serde(default)]
    pinned_sha: Option<String>,
}

/// Parses a pipeline event document. Schedule events must name their
/// schedule through the `schedule_name` variable.
pub fn parse_event(text: &str) -> Result<PipelineEvent, TriggerError> {
    let doc: EventDocument =
        serde_path_to_error::deserialize(serde_yaml::Deserializer::from_str(text))
            .map_err(|e| TriggerError::Event(format!("{}: {}", e.path(), e.inner())))?;
    let mut variables = BTreeMap::new();
    for (k, v) in doc.variables {
        let s = match v {
            serde_yaml::Value::String(s) => s,
            serde_yaml::Value::Number(n) => n.to_string(),
            serde_yaml::Value::Bool(b) => b.to_string(),
            serde_yaml::Value::Null => String::new(),
            _ => {
                return Err(TriggerError::Event(format!(
                    "variables.{k}: expected a scalar"
                )))
            }
        };
        variables.insert(k, s);
    }
    if doc.kind == EventKind::Schedule && !variables.contains_key("schedule_name") {
        return Err(TriggerError::Event(
            "variables.schedule_name: schedule events must carry a schedule name".into(),
        ));
    }
    if let Some(sha) = &doc.pinned_sha {
        if sha.len() < 7 || sha.len() > 64 || !sha.chars().all(|c| c.is_ascii_hexdigit()) {
            return Err(TriggerError::Event(format!(
                "pinned_sha: `{sha}` is not a commit hash"
            )));
        }
    }
    Ok(PipelineEvent {
        kind: Some(doc.kind),
        target_branch: doc.target_branch,
        labels: doc.labels,
        variables,
        commit_message_tags: doc.commit_message_tags,
        pinned_sha: doc.pinned_sha,
    })
}

pub fn parse_trigger_config(text: &str) -> Result<TriggerConfig, TriggerError> {
    serde_path_to_error::deserialize(serde_yaml::Deserializer::from_str(text))
        .map_err(|e| TriggerError::Config(format!("{}: {}", e.path(), e.inner())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::builtin_stages;
    use proptest::prelude::*;

    fn cfg() -> TriggerConfig {
        TriggerConfig::default()
    }

    fn labels(ls: &[&str]) -> BTreeSet<String> {
        ls.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn main_mr_is_torture() {
        let e = PipelineEvent::new(EventKind::MergeRequest, "main");
        assert_eq!(classify_event(&e, &cfg()), TriggerKind::Torture);
        let other = PipelineEvent::new(EventKind::MergeRequest, "feature");
        assert_eq!(classify_event(&other, &cfg()), TriggerKind::None);
    }

    #[test]
    fn verification_commit_is_torture() {
        let e = PipelineEvent::new(EventKind::Commit, "dev").tag("verification");
        assert_eq!(classify_event(&e, &cfg()), TriggerKind::Torture);
        let plain = PipelineEvent::new(EventKind::Commit, "dev");
        assert_eq!(classify_event(&plain, &cfg()), TriggerKind::None);
    }

    #[test]
    fn scheduled_daily() {
        let e = PipelineEvent::new(EventKind::Schedule, "main")
            .variable("schedule_name", "nightly")
            .variable("daily", "1");
        assert_eq!(classify_event(&e, &cfg()), TriggerKind::Daily);
        let off = PipelineEvent::new(EventKind::Schedule, "main")
            .variable("schedule_name", "nightly")
            .variable("daily", "0");
        assert_eq!(classify_event(&off, &cfg()), TriggerKind::None);
    }

    #[test]
    fn weekly_label() {
        let e = PipelineEvent::new(EventKind::MergeRequest, "main").label("weekly");
        assert_eq!(classify_event(&e, &cfg()), TriggerKind::Weekly);
    }

    #[test]
    fn stability_wins() {
        let e = PipelineEvent::new(EventKind::Manual, "main")
            .variable("stability_test", "1")
            .pinned("0123abcd")
            .label("weekly");
        assert_eq!(classify_event(&e, &cfg()), TriggerKind::Stability);
    }

    #[test]
    fn daily_jobs() {
        let jobs = select_jobs(TriggerKind::Daily, &cfg()).unwrap();
        assert!(jobs.contains(StageKind::Bitstream, "bitstream-gen"));
        assert!(jobs.contains(StageKind::FpgaTest, "fpga-daily"));
        assert_eq!(jobs.len(), 4);
    }

    #[test]
    fn weekly_jobs() {
        let jobs = select_jobs(TriggerKind::Weekly, &cfg()).unwrap();
        assert!(jobs.contains(StageKind::FpgaTest, "performance-suite"));
        assert!(jobs.contains(StageKind::FpgaTest, "performance-validation"));
        assert!(jobs.contains(StageKind::FpgaTest, "fpga-8-cluster"));
    }

    #[test]
    fn torture_has_no_fpga_jobs() {
        let jobs = select_jobs(TriggerKind::Torture, &cfg()).unwrap();
        assert!(!jobs.has_kind(StageKind::FpgaTest));
        assert!(jobs.contains(StageKind::Lint, "lint"));
        assert!(jobs.contains(StageKind::Simulation, "smoke-sim"));
        assert!(jobs.contains(StageKind::Uvm, "selective-uvm"));
    }

    #[test]
    fn none_selects_nothing() {
        assert_eq!(
            select_jobs(TriggerKind::None, &cfg()),
            Err(TriggerError::NoneSelected)
        );
    }

    #[test]
    fn default_jobs_resolve_to_builtin_stages() {
        for jobs in cfg().jobs.values() {
            let set: JobSet = jobs.iter().cloned().collect();
            assert!(set.unresolved(&builtin_stages()).is_empty());
        }
    }

    #[test]
    fn no_bitstream_drops_fpga_daily() {
        let daily = select_jobs(TriggerKind::Daily, &cfg()).unwrap();
        let out = apply_disable_controls(
            &daily,
            &labels(&["no-bitstream-gen"]),
            &builtin_stages(),
            &cfg(),
        );
        assert!(!out.jobs.has_kind(StageKind::Bitstream));
        assert!(!out.jobs.contains(StageKind::FpgaTest, "fpga-daily"));
        assert!(out.jobs.contains(StageKind::Simulation, "full-sim"));
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn disable_uvm() {
        let torture = select_jobs(TriggerKind::Torture, &cfg()).unwrap();
        let out = apply_disable_controls(
            &torture,
            &labels(&["disable-uvm"]),
            &builtin_stages(),
            &cfg(),
        );
        assert!(!out.jobs.has_kind(StageKind::Uvm));
        assert_eq!(out.jobs.len(), 2);
    }

    #[test]
    fn ci_test_is_lint_only() {
        let daily = select_jobs(TriggerKind::Daily, &cfg()).unwrap();
        let out = apply_disable_controls(&daily, &labels(&["ci-test"]), &builtin_stages(), &cfg());
        assert_eq!(
            out.jobs.jobs,
            BTreeSet::from([JobId::new(StageKind::Lint, "lint-standard")])
        );
    }

    #[test]
    fn no_labels_is_identity() {
        let daily = select_jobs(TriggerKind::Daily, &cfg()).unwrap();
        let out = apply_disable_controls(&daily, &BTreeSet::new(), &builtin_stages(), &cfg());
        assert_eq!(out.jobs, daily);
        assert!(out.removed.is_empty());
    }

    #[test]
    fn unknown_label_warns() {
        let daily = select_jobs(TriggerKind::Daily, &cfg()).unwrap();
        let out = apply_disable_controls(
            &daily,
            &labels(&["shiny", "weekly"]),
            &builtin_stages(),
            &cfg(),
        );
        assert_eq!(out.jobs, daily);
        assert_eq!(
            out.warnings,
            vec!["ignoring unrecognized label `shiny`".to_string()]
        );
    }

    #[test]
    fn event_document() {
        let e = parse_event(
            "kind: schedule\ntarget_branch: main\nvariables: {schedule_name: nightly, daily: 1}\n",
        )
        .unwrap();
        assert_eq!(e.variables["daily"], "1");
        assert_eq!(classify_event(&e, &cfg()), TriggerKind::Daily);
        assert!(parse_event("kind: schedule\nvariables: {daily: 1}\n").is_err());
        assert!(parse_event("kind: manual\npinned_sha: zz\n").is_err());
        assert!(parse_event("kind: manual\ncolour: red\n").is_err());
    }

    #[test]
    fn config_round_trip() {
        let c = cfg();
        assert_eq!(parse_trigger_config(&c.to_yaml()).unwrap(), c);
    }

    fn arb_event() -> impl Strategy<Value = PipelineEvent> {
        let kind = prop_oneof![
            Just(EventKind::MergeRequest),
            Just(EventKind::Commit),
            Just(EventKind::Schedule),
            Just(EventKind::Manual)
        ];
        let label = prop_oneof![
            Just("weekly"),
            Just("ci-test"),
            Just("disable-uvm"),
            Just("no-bitstream-gen"),
            Just("other")
        ];
        (
            kind,
            prop_oneof![Just("main"), Just("dev")],
            proptest::collection::btree_set(label, 0..4),
            proptest::option::of(prop_oneof![Just("1"), Just("0")]),
            proptest::option::of(Just("1")),
            any::<bool>(),
        )
            .prop_map(|(kind, branch, labels, daily, stability, tagged)| {
                let mut e = PipelineEvent::new(kind, branch);
                e.labels = labels.into_iter().map(String::from).collect();
                e = e.variable("schedule_name", "s");
                if let Some(d) = daily {
                    e = e.variable("daily", d);
                }
                if let Some(s) = stability {
                    e = e.variable("stability_test", s);
                }
                if tagged {
                    e = e.tag("verification");
                }
                e
            })
    }

    proptest! {
        #[test]
        fn classification_is_deterministic(e in arb_event()) {
            let c = cfg();
            prop_assert_eq!(classify_event(&e, &c), classify_event(&e.clone(), &c));
        }

        #[test]
        fn disable_is_idempotent_and_shrinking(e in arb_event(), kind in 0usize..4) {
            let c = cfg();
            let k = [TriggerKind::Torture, TriggerKind::Daily, TriggerKind::Weekly, TriggerKind::Stability][kind];
            let jobs = select_jobs(k, &c).unwrap();
            let stages = builtin_stages();
            let once = apply_disable_controls(&jobs, &e.labels, &stages, &c);
            let twice = apply_disable_controls(&once.jobs, &e.labels, &stages, &c);
            prop_assert!(once.jobs.is_subset(&jobs));
            prop_assert_eq!(&twice.jobs, &once.jobs);
            // no kept job depends (transitively) on a removed one
            let removed: BTreeSet<String> = once.removed.jobs.iter().map(|j| j.variant.clone()).collect();
            let downstream = stage_descendants(&stages, &removed);
            prop_assert!(once.jobs.jobs.iter().all(|j| !downstream.contains(&j.variant)));
        }
    }
}
