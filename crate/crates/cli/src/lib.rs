//! The `fleetreg` command line: validate → plan → run → report → history.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};

use fleetreg_core::engine::{
    emit_trace, execute, parse_trace, run_pipeline, CampaignContext, Clock, CommandRunner,
    ExecuteOptions, ExecutionTrace, PipelineResult, Runner, SimulatedRunner,
};
use fleetreg_core::fleet::Fleet;
use fleetreg_core::manifest::{
    builtin_bzl_manifest, emit_manifest, parse_manifest, FleetSpec, Manifest,
};
use fleetreg_core::reporting::{
    aggregate, emit_report, history_stats, run_id, suites_csv, HistoryRecord, HistoryStore,
    ReportContext, RunReport, Verdict,
};
use fleetreg_core::scheduler::{
    emit_plan, parse_plan, plan, EstimateMode, PlanOptions, SchedulePlan,
};
use fleetreg_core::triggers::{
    apply_disable_controls, classify_event, parse_event, parse_trigger_config, select_jobs, JobSet,
    TriggerConfig, TriggerKind,
};
use fleetreg_core::yaml;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERDICT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

fn config(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Parser, Debug)]
#[command(
    name = "fleetreg",
    version,
    about = "Plan, run and report regression campaigns on an FPGA fleet"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check a manifest and print it in canonical form
    Validate(ValidateArgs),
    /// Distribute suites over devices and print the plan
    Plan(PlanArgs),
    /// Classify a pipeline event and print the selected jobs
    Trigger(TriggerArgs),
    /// Execute a plan, or a whole pipeline for an event
    Run(RunArgs),
    /// Aggregate a trace into a run report
    Report(ReportArgs),
    /// Statistics over the run history
    History(HistoryArgs),
    /// Reproduce the builtin single vs. multi-device campaign
    #[command(name = "replay-table1")]
    ReplayTable1(ReplayArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Estimate {
    Model,
    Replay,
}

impl From<Estimate> for EstimateMode {
    fn from(e: Estimate) -> Self {
        match e {
            Estimate::Model => EstimateMode::Model,
            Estimate::Replay => EstimateMode::Replay,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ExecMode {
    Sim,
    Real,
}

#[derive(Args, Debug, Clone)]
pub struct ManifestArgs {
    /// Manifest file (`-` for stdin); the builtin manifest when omitted
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Fleet description overriding the manifest's fleet
    #[arg(long)]
    pub fleet: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub inputs: ManifestArgs,
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct PlanSettings {
    /// Number of devices; defaults to the manifest's recorded device count
    #[arg(long)]
    pub devices: Option<usize>,
    /// Replicate suites as in a stability run
    #[arg(long)]
    pub stability: bool,
    #[arg(long, default_value = "default")]
    pub bitstream: String,
}

#[derive(Args, Debug)]
pub struct PlanArgs {
    #[command(flatten)]
    pub inputs: ManifestArgs,
    #[command(flatten)]
    pub settings: PlanSettings,
    #[arg(long, value_enum, default_value = "model")]
    pub mode: Estimate,
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TriggerArgs {
    #[arg(long)]
    pub event: PathBuf,
    #[arg(long = "trigger-config")]
    pub trigger_config: Option<PathBuf>,
    #[command(flatten)]
    pub inputs: ManifestArgs,
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Plan to execute
    #[arg(long, conflicts_with = "event", required_unless_present = "event")]
    pub plan: Option<PathBuf>,
    /// Event to run end to end (classify, select, plan, execute, report)
    #[arg(long)]
    pub event: Option<PathBuf>,
    #[arg(long = "trigger-config")]
    pub trigger_config: Option<PathBuf>,
    #[command(flatten)]
    pub inputs: ManifestArgs,
    #[command(flatten)]
    pub settings: PlanSettings,
    /// Duration estimates used when planning for an event
    #[arg(long, value_enum, default_value = "replay")]
    pub estimate: Estimate,
    #[arg(long, value_enum, default_value = "sim")]
    pub mode: ExecMode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Probability that any single test fails (simulated runs)
    #[arg(long = "fail-rate", default_value_t = 0.0)]
    pub fail_rate: f64,
    /// Command template for real runs: {suite} {lo} {hi} {device} {replica} {results}
    #[arg(long = "runner-cmd")]
    pub runner_cmd: Option<String>,
    /// Shards running longer than this multiple of their estimate fail
    #[arg(long = "timeout-factor", default_value_t = 5)]
    pub timeout_factor: u32,
    /// Report destination; the trace is written next to it
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long, env = "FLEETREG_HISTORY")]
    pub history: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub plan: PathBuf,
    #[command(flatten)]
    pub inputs: ManifestArgs,
    #[arg(long, default_value = "none")]
    pub trigger: String,
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct HistoryArgs {
    #[arg(long, env = "FLEETREG_HISTORY")]
    pub history: PathBuf,
    /// Window length, e.g. `21d` or `21`
    #[arg(long, default_value = "21d", value_parser = parse_days)]
    pub window: u64,
    /// End of the window as unix seconds; defaults to the current time
    #[arg(long)]
    pub now: Option<u64>,
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReplayArgs {
    #[arg(long, default_value_t = 8)]
    pub devices: usize,
    #[arg(long, value_enum, default_value = "replay")]
    pub mode: Estimate,
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

pub fn parse_days(s: &str) -> Result<u64, String> {
    let digits = s.strip_suffix('d').unwrap_or(s);
    digits
        .parse()
        .map_err(|_| format!("`{s}` is not a number of days (e.g. 21d)"))
}

fn read_input(path: &Path) -> Result<String, CliError> {
    if path == Path::new("-") {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s).map_err(runtime)?;
        Ok(s)
    } else {
        std::fs::read_to_string(path).map_err(|e| config(format!("{}: {e}", path.display())))
    }
}

fn write_output(path: &Path, text: &str) -> Result<(), CliError> {
    if path == Path::new("-") {
        let mut out = std::io::stdout().lock();
        out.write_all(text.as_bytes()).map_err(runtime)?;
        out.flush().map_err(runtime)
    } else {
        std::fs::write(path, text).map_err(|e| runtime(format!("{}: {e}", path.display())))
    }
}

/// Loads the manifest (and optional fleet override). Returns the text the
/// manifest came from too, for run ids.
fn load_manifest(args: &ManifestArgs) -> Result<(Manifest, String), CliError> {
    let (mut m, text) = match &args.manifest {
        Some(path) => {
            let text = read_input(path)?;
            let m = parse_manifest(&text).map_err(|e| {
                let at = e
                    .field_path()
                    .map(|p| format!(" [{p}]"))
                    .unwrap_or_default();
                config(format!("{}{at}: {e}", path.display()))
            })?;
            (m, text)
        }
        None => {
            let m = builtin_bzl_manifest();
            let text = emit_manifest(&m);
            (m, text)
        }
    };
    if let Some(path) = &args.fleet {
        let text = read_input(path)?;
        let spec: FleetSpec =
            serde_yaml::from_str(&text).map_err(|e| config(format!("{}: {e}", path.display())))?;
        if spec.nodes == 0 || spec.devices_per_node == 0 {
            return Err(config(format!(
                "{}: fleet must have at least one device",
                path.display()
            )));
        }
        m.fleet = spec;
    }
    Ok((m, text))
}

fn plan_options(m: &Manifest, s: &PlanSettings, estimate: EstimateMode) -> PlanOptions {
    let n = s
        .devices
        .or(m.recorded_devices.map(|d| d as usize))
        .unwrap_or(m.fleet.total_devices() as usize);
    let mut opts = PlanOptions::new(n, estimate).bitstream(&s.bitstream);
    if s.stability {
        opts = opts.stability();
    }
    opts
}

fn make_plan(m: &Manifest, fleet: &Fleet, opts: &PlanOptions) -> Result<SchedulePlan, CliError> {
    plan(m, fleet, opts).map_err(config)
}

fn load_trigger_config(path: &Option<PathBuf>) -> Result<TriggerConfig, CliError> {
    match path {
        Some(p) => parse_trigger_config(&read_input(p)?)
            .map_err(|e| config(format!("{}: {e}", p.display()))),
        None => Ok(TriggerConfig::default()),
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn verdict_code(v: Verdict) -> i32 {
    match v {
        Verdict::Pass => EXIT_OK,
        Verdict::Fail => EXIT_VERDICT_FAIL,
    }
}

/// Where the trace goes when only the report path is known.
fn trace_path(out: &Path, explicit: &Option<PathBuf>) -> Option<PathBuf> {
    if let Some(p) = explicit {
        return Some(p.clone());
    }
    if out == Path::new("-") {
        return None;
    }
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Some(out.with_file_name(format!("{stem}.trace.yaml")))
}

fn cmd_validate(a: &ValidateArgs) -> Result<i32, CliError> {
    let (m, _) = load_manifest(&a.inputs)?;
    write_output(&a.out, &emit_manifest(&m))?;
    Ok(EXIT_OK)
}

fn cmd_plan(a: &PlanArgs) -> Result<i32, CliError> {
    let (m, _) = load_manifest(&a.inputs)?;
    let fleet = Fleet::new(m.fleet).map_err(config)?;
    let p = make_plan(&m, &fleet, &plan_options(&m, &a.settings, a.mode.into()))?;
    write_output(&a.out, &emit_plan(&p))?;
    Ok(EXIT_OK)
}

struct Selection {
    kind: TriggerKind,
    jobs: JobSet,
    removed: JobSet,
    warnings: Vec<String>,
}

fn select(event_path: &Path, cfg: &TriggerConfig, m: &Manifest) -> Result<Selection, CliError> {
    let event = parse_event(&read_input(event_path)?)
        .map_err(|e| config(format!("{}: {e}", event_path.display())))?;
    let kind = classify_event(&event, cfg);
    let jobs = match kind {
        TriggerKind::None => JobSet::default(),
        k => select_jobs(k, cfg).map_err(config)?,
    };
    if let Some(j) = jobs.unresolved(&m.stages).first() {
        return Err(config(format!("job {j} does not match any manifest stage")));
    }
    let outcome = apply_disable_controls(&jobs, &event.labels, &m.stages, cfg);
    Ok(Selection {
        kind,
        jobs: outcome.jobs,
        removed: outcome.removed,
        warnings: outcome.warnings,
    })
}

fn job_list(key: &str, jobs: &JobSet) -> String {
    if jobs.is_empty() {
        return format!("{key}: []\n");
    }
    let mut out = format!("{key}:\n");
    for j in &jobs.jobs {
        out.push_str(&format!("  - {}\n", yaml::scalar(&j.to_string())));
    }
    out
}

fn cmd_trigger(a: &TriggerArgs) -> Result<i32, CliError> {
    let (m, _) = load_manifest(&a.inputs)?;
    let cfg = load_trigger_config(&a.trigger_config)?;
    let sel = select(&a.event, &cfg, &m)?;
    let mut out = format!("trigger: {}\n", sel.kind);
    out.push_str(&job_list("jobs", &sel.jobs));
    out.push_str(&job_list("removed", &sel.removed));
    out.push_str(&format!(
        "warnings: {}\n",
        yaml::flow_seq(sel.warnings.iter().map(|w| yaml::scalar(w)))
    ));
    write_output(&a.out, &out)?;
    Ok(EXIT_OK)
}

fn make_runner(a: &RunArgs) -> Result<Box<dyn Runner>, CliError> {
    match a.mode {
        ExecMode::Sim => {
            if !(0.0..=1.0).contains(&a.fail_rate) {
                return Err(config("--fail-rate must be within [0, 1]"));
            }
            Ok(Box::new(SimulatedRunner::new(a.seed, a.fail_rate)))
        }
        ExecMode::Real => {
            let cmd = a
                .runner_cmd
                .as_deref()
                .ok_or_else(|| config("--mode real requires --runner-cmd"))?;
            Ok(Box::new(CommandRunner::new(cmd)))
        }
    }
}

fn exec_options(a: &RunArgs) -> ExecuteOptions {
    ExecuteOptions {
        clock: match a.mode {
            ExecMode::Sim => Clock::Simulated,
            ExecMode::Real => Clock::Wall,
        },
        timeout_factor: a.timeout_factor.max(1),
    }
}

fn publish(
    report: &RunReport,
    trace: &ExecutionTrace,
    out: &Path,
    trace_out: &Option<PathBuf>,
    csv: &Option<PathBuf>,
) -> Result<(), CliError> {
    write_output(out, &emit_report(report))?;
    if let Some(p) = trace_path(out, trace_out) {
        write_output(&p, &emit_trace(trace))?;
    }
    if let Some(p) = csv {
        write_output(p, &suites_csv(report))?;
    }
    Ok(())
}

fn record_history(path: &Option<PathBuf>, record: HistoryRecord) -> Result<(), CliError> {
    if let Some(p) = path {
        HistoryStore::new(p).append(&record).map_err(runtime)?;
    }
    Ok(())
}

fn cmd_run(a: &RunArgs) -> Result<i32, CliError> {
    let (m, manifest_text) = load_manifest(&a.inputs)?;
    let runner = make_runner(a)?;
    let mut fleet = Fleet::new(m.fleet).map_err(config)?;
    if let Some(plan_path) = &a.plan {
        let plan_text = read_input(plan_path)?;
        let p =
            parse_plan(&plan_text).map_err(|e| config(format!("{}: {e}", plan_path.display())))?;
        let trace = execute(&p, &mut fleet, runner.as_ref(), exec_options(a)).map_err(runtime)?;
        let id = run_id(&[
            &manifest_text,
            &plan_text,
            &a.seed.to_string(),
            &a.fail_rate.to_string(),
        ]);
        let ctx = ReportContext {
            run_id: id,
            trigger: TriggerKind::None,
            fleet: fleet.snapshot(),
        };
        let report = aggregate(&trace, &m, &p, ctx).map_err(config)?;
        publish(&report, &trace, &a.out, &a.trace, &a.csv)?;
        record_history(&a.history, HistoryRecord::from_report(&report, unix_now()))?;
        return Ok(verdict_code(report.verdict()));
    }

    let event_path = a.event.as_ref().expect("clap requires --plan or --event");
    let cfg = load_trigger_config(&a.trigger_config)?;
    let sel = select(event_path, &cfg, &m)?;
    for w in &sel.warnings {
        eprintln!("warning: {w}");
    }
    let mut settings = a.settings.clone();
    settings.stability |= sel.kind == TriggerKind::Stability;
    let p = make_plan(&m, &fleet, &plan_options(&m, &settings, a.estimate.into()))?;
    let plan_text = emit_plan(&p);
    let id = run_id(&[
        &manifest_text,
        sel.kind.as_str(),
        &plan_text,
        &a.seed.to_string(),
        &a.fail_rate.to_string(),
    ]);

    let judge_manifest = m.clone();
    let judge_plan = p.clone();
    let ctx = CampaignContext {
        plan: &p,
        fleet: &mut fleet,
        options: exec_options(a),
        judge: Box::new(move |t: &ExecutionTrace| {
            let ctx = ReportContext {
                run_id: String::new(),
                trigger: TriggerKind::None,
                fleet: Default::default(),
            };
            aggregate(t, &judge_manifest, &judge_plan, ctx)
                .is_ok_and(|r| r.verdict() == Verdict::Pass)
        }),
    };
    let result = run_pipeline(&sel.jobs, &m.stages, runner.as_ref(), Some(ctx)).map_err(config)?;
    let verdict = if result.passed {
        Verdict::Pass
    } else {
        Verdict::Fail
    };

    match result.campaigns.last() {
        Some((_, trace)) => {
            let ctx = ReportContext {
                run_id: id.clone(),
                trigger: sel.kind,
                fleet: fleet.snapshot(),
            };
            let mut report = aggregate(trace, &m, &p, ctx).map_err(config)?;
            report.notes.extend(stage_notes(&result));
            publish(&report, trace, &a.out, &a.trace, &a.csv)?;
        }
        None => write_output(&a.out, &pipeline_summary(&id, sel.kind, &result))?,
    }
    record_history(
        &a.history,
        HistoryRecord {
            run_id: id,
            finished_at: unix_now(),
            duration: result.wall_time,
            verdict,
            trigger: sel.kind,
        },
    )?;
    Ok(verdict_code(verdict))
}

fn stage_notes(r: &PipelineResult) -> Vec<String> {
    r.stages
        .iter()
        .map(|s| match &s.detail {
            Some(d) => format!("stage {}: {} ({d})", s.name, s.status),
            None => format!("stage {}: {}", s.name, s.status),
        })
        .collect()
}

fn pipeline_summary(id: &str, kind: TriggerKind, r: &PipelineResult) -> String {
    let mut out = format!(
        "run_id: {}\ntrigger: {kind}\nverdict: {}\nwall_time: {}\n",
        yaml::scalar(id),
        if r.passed { "pass" } else { "fail" },
        r.wall_time
    );
    if r.stages.is_empty() {
        out.push_str("stages: []\n");
    } else {
        out.push_str("stages:\n");
        for s in &r.stages {
            let mut fields = vec![
                ("name", yaml::scalar(&s.name)),
                ("kind", s.kind.as_str().to_string()),
                ("status", s.status.to_string()),
                ("start", s.start.to_string()),
                ("duration", s.duration.to_string()),
            ];
            if let Some(d) = &s.detail {
                fields.push(("detail", yaml::scalar(d)));
            }
            out.push_str(&format!("  - {}\n", yaml::flow_map(&fields)));
        }
    }
    out
}

fn cmd_report(a: &ReportArgs) -> Result<i32, CliError> {
    let (m, _) = load_manifest(&a.inputs)?;
    let trigger: TriggerKind = a.trigger.parse().map_err(config)?;
    let trace_text = read_input(&a.trace)?;
    let plan_text = read_input(&a.plan)?;
    let trace =
        parse_trace(&trace_text).map_err(|e| config(format!("{}: {e}", a.trace.display())))?;
    let p = parse_plan(&plan_text).map_err(|e| config(format!("{}: {e}", a.plan.display())))?;
    let ctx = ReportContext {
        run_id: run_id(&[&trace_text, &plan_text]),
        trigger,
        fleet: Default::default(),
    };
    let report = aggregate(&trace, &m, &p, ctx).map_err(config)?;
    write_output(&a.out, &emit_report(&report))?;
    if let Some(csv) = &a.csv {
        write_output(csv, &suites_csv(&report))?;
    }
    Ok(verdict_code(report.verdict()))
}

fn cmd_history(a: &HistoryArgs) -> Result<i32, CliError> {
    let load = HistoryStore::new(&a.history).load().map_err(runtime)?;
    for line in &load.corrupt {
        eprintln!(
            "warning: {}: skipping corrupt record on line {line}",
            a.history.display()
        );
    }
    let stats = history_stats(&load.records, a.window, a.now.unwrap_or_else(unix_now));
    write_output(&a.out, &stats.to_yaml())?;
    Ok(EXIT_OK)
}

/// Builds, plans and simulates the builtin campaign without failures.
pub fn replay_table1(
    devices: usize,
    mode: EstimateMode,
) -> Result<(RunReport, ExecutionTrace), CliError> {
    let m = builtin_bzl_manifest();
    let mut fleet = Fleet::new(m.fleet).map_err(config)?;
    let p = make_plan(
        &m,
        &fleet,
        &PlanOptions::new(devices, mode).bitstream("bzl"),
    )?;
    let trace = execute(
        &p,
        &mut fleet,
        &SimulatedRunner::new(0, 0.0),
        ExecuteOptions::default(),
    )
    .map_err(runtime)?;
    let ctx = ReportContext {
        run_id: run_id(&["replay-table1", &devices.to_string(), mode.as_str()]),
        trigger: TriggerKind::None,
        fleet: fleet.snapshot(),
    };
    let report = aggregate(&trace, &m, &p, ctx).map_err(runtime)?;
    Ok((report, trace))
}

fn cmd_replay(a: &ReplayArgs) -> Result<i32, CliError> {
    let (report, trace) = replay_table1(a.devices, a.mode.into())?;
    write_output(&a.out, &emit_report(&report))?;
    if let Some(p) = &a.trace {
        write_output(p, &emit_trace(&trace))?;
    }
    Ok(EXIT_OK)
}

pub fn dispatch(cli: &Cli) -> Result<i32, CliError> {
    match &cli.command {
        Command::Validate(a) => cmd_validate(a),
        Command::Plan(a) => cmd_plan(a),
        Command::Trigger(a) => cmd_trigger(a),
        Command::Run(a) => cmd_run(a),
        Command::Report(a) => cmd_report(a),
        Command::History(a) => cmd_history(a),
        Command::ReplayTable1(a) => cmd_replay(a),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("fleetreg: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn days_accept_suffix() {
        assert_eq!(parse_days("21d"), Ok(21));
        assert_eq!(parse_days("7"), Ok(7));
        assert!(parse_days("3w").is_err());
    }

    #[test]
    fn trace_lands_next_to_report() {
        assert_eq!(
            trace_path(Path::new("out/report.yaml"), &None),
            Some(PathBuf::from("out/report.trace.yaml"))
        );
        assert_eq!(trace_path(Path::new("-"), &None), None);
    }

    #[test]
    fn replay_totals() {
        let (r, _) = replay_table1(8, EstimateMode::Replay).unwrap();
        assert_eq!(r.campaign_wall_time.to_string(), "3169.6");
        let (r, _) = replay_table1(1, EstimateMode::Replay).unwrap();
        assert_eq!(r.campaign_wall_time.to_string(), "18962");
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
