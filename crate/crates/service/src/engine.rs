//! Event-sourced operations state.
//!
//! Every mutation is a [`Command`]. A command is applied to the in-memory
//! state first and journaled only when it succeeds, so the journal holds
//! exactly the commands that changed state. Replaying the journal through the
//! same `apply` rebuilds an identical state. Commands carry no wall-clock
//! input: timestamps default to the scenario clock at apply time.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use gridops_core::accounting::{queue_samples, IngestOutcome, QueueSample, TrendPoint, UsageLedger, UsageRecord};
use gridops_core::fabric::{EventAction, Fabric, FabricError, FabricSpec, InfoSnapshot};
use gridops_core::incidents::{IncidentError, NewTicket, StepAction, Ticket, TicketBook, TicketKind, TicketStatus, TicketStep};
use gridops_core::probes::{evaluate_alarms, probe_cycle, Alarm, ProbeResult};
use gridops_core::storage_ops::{
    audit_from_fabric, compute_filling_rates, detect_publication_errors, execute_migration, flagged_resources,
    plan_decommission, reconcile, scan_heavy_users, DecommissionPlan, FillingRateReport, Finding, HeavyUserScan,
    PlanOptions, PlanStatus, ReconciliationReport, StorageOpsError,
};
use gridops_core::topology::{
    active_downtimes, compute_whitelist, merge_topology, registry_from_fabric, RegistryEntry, VoResourceSet, WhiteList,
};
use gridops_core::{ResourceId, ResourceKind, Timestamp};
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, ScenarioConfig};
use crate::journal::{Journal, JournalError};

pub const JOURNAL_FILE: &str = "journal.jsonl";
pub const LOG_DIR: &str = "logs";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Command {
    Init {
        config: Box<ScenarioConfig>,
    },
    Cycle,
    OpenTicket {
        kind: TicketKind,
        #[serde(default)]
        resource_id: Option<ResourceId>,
        author: String,
        #[serde(default)]
        payload: String,
        #[serde(default)]
        at: Option<Timestamp>,
        /// Alarm linked by a second step at creation.
        #[serde(default)]
        alarm_id: Option<String>,
    },
    AddStep {
        ticket_id: String,
        author: String,
        action: StepAction,
        #[serde(default)]
        payload: String,
        #[serde(default)]
        at: Option<Timestamp>,
        #[serde(default)]
        expected_version: Option<usize>,
    },
    Transition {
        ticket_id: String,
        to: TicketStatus,
        author: String,
        #[serde(default)]
        at: Option<Timestamp>,
        #[serde(default)]
        expected_version: Option<usize>,
    },
    PlanDecommission {
        source: ResourceId,
        #[serde(default)]
        options: PlanOptions,
    },
    ExecuteDecommission {
        plan_id: String,
    },
    /// Simulation-only fabric change, applied at the current clock.
    Simulate {
        event: EventAction,
    },
    IngestUsage {
        records: Vec<UsageRecord>,
    },
}

impl Command {
    fn is_write_to_simulation(&self) -> bool {
        matches!(self, Command::ExecuteDecommission { .. } | Command::Simulate { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    Invalid,
    Conflict,
    NotFound,
    Internal,
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("no scenario loaded; run one first")]
    NotInitialized,
    #[error("the store already holds a different scenario")]
    ConfigMismatch,
    #[error("the store already holds a scenario")]
    AlreadyInitialized,
    #[error(transparent)]
    Incident(#[from] IncidentError),
    #[error(transparent)]
    StorageOps(#[from] StorageOpsError),
    #[error(transparent)]
    Fabric(#[from] FabricError),
    #[error("unknown alarm {0}")]
    UnknownAlarm(String),
    #[error("alarm {alarm_id} is already linked to {ticket_id}")]
    AlarmLinked { alarm_id: String, ticket_id: String },
    #[error("unknown decommission plan {0}")]
    UnknownPlan(String),
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error("log {path}: {source}")]
    Log {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl EngineError {
    pub fn class(&self) -> ErrorClass {
        use IncidentError as I;
        match self {
            EngineError::Config(_) => ErrorClass::Invalid,
            EngineError::NotInitialized | EngineError::ConfigMismatch | EngineError::AlreadyInitialized => {
                ErrorClass::Conflict
            }
            EngineError::Incident(e) => match e {
                I::UnknownTicket(_) => ErrorClass::NotFound,
                I::OutOfOrder { .. } | I::TicketClosed(_) | I::IllegalTransition { .. } | I::VersionConflict { .. } => {
                    ErrorClass::Conflict
                }
                _ => ErrorClass::Invalid,
            },
            EngineError::StorageOps(e) => match e {
                StorageOpsError::PlanNotExecutable { .. } => ErrorClass::Conflict,
                StorageOpsError::UnknownSource(_) => ErrorClass::NotFound,
                _ => ErrorClass::Invalid,
            },
            EngineError::Fabric(FabricError::UnknownResource(_)) => ErrorClass::NotFound,
            EngineError::Fabric(_) => ErrorClass::Invalid,
            EngineError::UnknownAlarm(_) | EngineError::UnknownPlan(_) => ErrorClass::NotFound,
            EngineError::AlarmLinked { .. } => ErrorClass::Conflict,
            EngineError::Journal(_) | EngineError::Log { .. } => ErrorClass::Internal,
        }
    }

    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        use IncidentError as I;
        match self {
            EngineError::Config(ConfigError::NotFound(_)) => "file_not_found",
            EngineError::Config(_) => "invalid_config",
            EngineError::NotInitialized => "not_initialized",
            EngineError::ConfigMismatch => "config_mismatch",
            EngineError::AlreadyInitialized => "already_initialized",
            EngineError::Incident(e) => match e {
                I::MissingResource(_) => "missing_resource",
                I::MissingUserPayload => "missing_payload",
                I::EmptyAuthor => "empty_author",
                I::OutOfOrder { .. } => "out_of_order",
                I::TicketClosed(_) => "ticket_closed",
                I::IllegalTransition { .. } => "illegal_transition",
                I::StatusChangeStep => "status_change_step",
                I::UnknownTicket(_) => "unknown_ticket",
                I::VersionConflict { .. } => "version_conflict",
                _ => "invalid_schedule",
            },
            EngineError::StorageOps(e) => match e {
                StorageOpsError::PlanNotExecutable { .. } => "plan_not_executable",
                StorageOpsError::UnknownSource(_) => "unknown_source",
                _ => "invalid_parameter",
            },
            EngineError::Fabric(FabricError::UnknownResource(_)) => "unknown_resource",
            EngineError::Fabric(_) => "fabric_rejected",
            EngineError::UnknownAlarm(_) => "unknown_alarm",
            EngineError::AlarmLinked { .. } => "alarm_linked",
            EngineError::UnknownPlan(_) => "unknown_plan",
            EngineError::Journal(_) | EngineError::Log { .. } => "storage_failure",
        }
    }
}

/// What one cycle observed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: u64,
    pub at: Timestamp,
    pub probes_run: usize,
    pub probe_failures: usize,
    pub alarms_raised: Vec<String>,
    pub alarms_cleared: Vec<String>,
    pub open_alarms: usize,
    pub findings: Vec<Finding>,
    pub flagged: BTreeSet<ResourceId>,
    pub heavy_user_elements: Vec<ResourceId>,
    pub whitelist_size: usize,
    pub zombies: usize,
    pub ghosts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub cycles: u64,
    pub clock: Timestamp,
    pub alarms_raised: usize,
    pub open_alarms: usize,
    /// Findings per cycle, in cycle order.
    pub findings_per_cycle: Vec<usize>,
    pub whitelist_sizes: Vec<usize>,
}

/// Result of a successfully applied command.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Outcome {
    Initialized(RunSummary),
    Cycle(Box<CycleRecord>),
    Ticket(Box<Ticket>),
    Plan(Box<DecommissionPlan>),
    Simulated { at: Timestamp, event: EventAction },
    Ingested(IngestOutcome),
}

/// Everything the reports read. Cloned into immutable snapshots for readers.
#[derive(Debug, Clone)]
pub struct State {
    pub config: Option<ScenarioConfig>,
    pub fabric: Fabric,
    pub registry: Vec<RegistryEntry>,
    pub cycles: u64,
    pub snapshot: InfoSnapshot,
    pub vo_set: VoResourceSet,
    pub filling: FillingRateReport,
    pub findings: Vec<Finding>,
    pub heavy_users: Vec<HeavyUserScan>,
    pub whitelist: Option<WhiteList>,
    pub reconciliation: ReconciliationReport,
    pub probe_results: Vec<ProbeResult>,
    /// Raised order.
    pub alarms: Vec<Alarm>,
    pub tickets: TicketBook,
    pub plans: BTreeMap<String, DecommissionPlan>,
    pub usage: UsageLedger,
    pub queue: Vec<QueueSample>,
    pub trend: Vec<TrendPoint>,
    pub history: Vec<CycleRecord>,
    /// Commands applied so far.
    pub applied: u64,
}

impl Default for State {
    fn default() -> Self {
        let fabric = Fabric::new(&FabricSpec::default()).expect("empty fabric is valid");
        let mut s = Self {
            config: None,
            registry: Vec::new(),
            cycles: 0,
            snapshot: fabric.publish_info(),
            vo_set: VoResourceSet::empty(0),
            filling: compute_filling_rates(&fabric.publish_info()),
            findings: Vec::new(),
            heavy_users: Vec::new(),
            whitelist: None,
            reconciliation: reconcile(&[], &BTreeMap::new(), 0),
            probe_results: Vec::new(),
            alarms: Vec::new(),
            tickets: TicketBook::new(),
            plans: BTreeMap::new(),
            usage: UsageLedger::new(),
            queue: Vec::new(),
            trend: Vec::new(),
            history: Vec::new(),
            applied: 0,
            fabric,
        };
        s.observe();
        s
    }
}

impl State {
    pub fn now(&self) -> Timestamp {
        self.fabric.now()
    }

    fn config(&self) -> Result<&ScenarioConfig, EngineError> {
        self.config.as_ref().ok_or(EngineError::NotInitialized)
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary {
            cycles: self.cycles,
            clock: self.now(),
            alarms_raised: self.alarms.len(),
            open_alarms: self.alarms.iter().filter(|a| a.is_open()).count(),
            findings_per_cycle: self.history.iter().map(|c| c.findings.len()).collect(),
            whitelist_sizes: self.history.iter().map(|c| c.whitelist_size).collect(),
        }
    }

    /// Recomputes every derived view of the fabric at the current clock.
    /// Runs no probes and records nothing in the history.
    fn observe(&mut self) {
        let now = self.now();
        self.snapshot = self.fabric.publish_info();
        self.vo_set = merge_topology(&self.registry, &self.snapshot, now);
        self.refresh_views();
    }

    fn refresh_views(&mut self) {
        let now = self.now();
        let catalogue = self.fabric.catalogue_entries();
        self.filling = compute_filling_rates(&self.snapshot);
        self.reconciliation = reconcile(&catalogue, &self.fabric.inventories(), now);
        let Some(config) = &self.config else {
            return;
        };
        self.findings =
            detect_publication_errors(&self.snapshot, &audit_from_fabric(&self.fabric), &config.detection);
        self.heavy_users = scan_heavy_users(
            &self.snapshot,
            &catalogue,
            config.heavy_user_threshold,
            config.heavy_user_top_n,
        )
        .expect("validated threshold");
        self.whitelist = Some(
            compute_whitelist(
                &self.vo_set,
                &active_downtimes(&config.downtimes, now),
                &self.filling,
                &self.alarms,
                &config.whitelist,
            )
            .expect("validated policy"),
        );
    }

    fn init(&mut self, config: &ScenarioConfig) -> Result<RunSummary, EngineError> {
        if self.config.is_some() {
            return Err(EngineError::AlreadyInitialized);
        }
        config.validate()?;
        let fabric = Fabric::new(config.fabric_spec())?;
        self.registry = config.registry.clone().unwrap_or_else(|| registry_from_fabric(&fabric));
        self.fabric = fabric;
        self.usage.ingest_usage(config.usage.iter().cloned());
        self.config = Some(config.clone());
        self.observe();
        Ok(self.summary())
    }

    /// advance clock, publish, merge topology, probe, evaluate alarms,
    /// filling rates, publication audit, heavy users, whitelist, reconcile.
    fn cycle(&mut self) -> Result<CycleRecord, EngineError> {
        let config = self.config()?.clone();
        self.fabric.advance_clock(config.interval as i64)?;
        let now = self.now();
        self.snapshot = self.fabric.publish_info();
        self.vo_set = merge_topology(&self.registry, &self.snapshot, now);

        let results = probe_cycle(&self.fabric, &config.probe_specs(), &self.vo_set);
        let probe_failures = results.iter().filter(|r| !r.is_ok()).count();
        let probes_run = results.len();
        self.probe_results.extend(results);

        let (open, closed): (Vec<Alarm>, Vec<Alarm>) = std::mem::take(&mut self.alarms).into_iter().partition(Alarm::is_open);
        let was_open: BTreeSet<String> = open.iter().map(|a| a.alarm_id.clone()).collect();
        let evaluated = evaluate_alarms(&self.probe_results, &open, &config.alarms).expect("validated policy");
        let alarms_raised: Vec<String> =
            evaluated.iter().filter(|a| !was_open.contains(&a.alarm_id)).map(|a| a.alarm_id.clone()).collect();
        let alarms_cleared: Vec<String> = evaluated
            .iter()
            .filter(|a| was_open.contains(&a.alarm_id) && !a.is_open())
            .map(|a| a.alarm_id.clone())
            .collect();
        self.alarms = closed;
        self.alarms.extend(evaluated);
        self.alarms.sort_by(|a, b| a.raised_at.cmp(&b.raised_at).then_with(|| a.alarm_id.cmp(&b.alarm_id)));

        self.refresh_views();
        self.queue.extend(queue_samples(&self.snapshot));
        self.trend.extend(gridops_core::accounting::storage_trend(
            &[(self.snapshot.clone(), self.vo_set.clone())],
            None,
        ));
        self.cycles += 1;

        let record = CycleRecord {
            cycle: self.cycles,
            at: now,
            probes_run,
            probe_failures,
            alarms_raised,
            alarms_cleared,
            open_alarms: self.alarms.iter().filter(|a| a.is_open()).count(),
            flagged: flagged_resources(&self.findings),
            findings: self.findings.clone(),
            heavy_user_elements: self.heavy_users.iter().map(|s| s.storage_id.clone()).collect(),
            whitelist_size: self.whitelist.as_ref().map_or(0, |w| w.members.len()),
            zombies: self.reconciliation.zombies.len(),
            ghosts: self.reconciliation.ghosts.len(),
        };
        self.history.push(record.clone());
        Ok(record)
    }

    fn alarm_index(&self, alarm_id: &str) -> Result<usize, EngineError> {
        let i = self
            .alarms
            .iter()
            .position(|a| a.alarm_id == alarm_id)
            .ok_or_else(|| EngineError::UnknownAlarm(alarm_id.to_owned()))?;
        if let Some(t) = &self.alarms[i].linked_ticket {
            return Err(EngineError::AlarmLinked {
                alarm_id: alarm_id.to_owned(),
                ticket_id: t.clone(),
            });
        }
        Ok(i)
    }

    fn apply(&mut self, command: &Command) -> Result<Outcome, EngineError> {
        let now = self.now();
        let outcome = match command {
            Command::Init { config } => Outcome::Initialized(self.init(config)?),
            Command::Cycle => Outcome::Cycle(Box::new(self.cycle()?)),
            Command::OpenTicket {
                kind,
                resource_id,
                author,
                payload,
                at,
                alarm_id,
            } => {
                let alarm = alarm_id.as_deref().map(|id| self.alarm_index(id)).transpose()?;
                let request = NewTicket {
                    kind: *kind,
                    resource_id: resource_id.clone(),
                    opened_at: at.unwrap_or(now),
                    author: author.clone(),
                    payload: payload.clone(),
                };
                // Validate the whole operation before touching the book.
                let mut ticket = gridops_core::incidents::open_ticket("T-check", &request)?;
                if let Some(id) = alarm_id {
                    ticket = gridops_core::incidents::add_step(&ticket, link_step(&request, id))?;
                }
                drop(ticket);
                let ticket_id = self.tickets.open(&request)?.ticket_id.clone();
                if let (Some(i), Some(id)) = (alarm, alarm_id) {
                    self.tickets.add_step(&ticket_id, link_step(&request, id), None)?;
                    self.alarms[i].linked_ticket = Some(ticket_id.clone());
                }
                Outcome::Ticket(Box::new(self.tickets.get(&ticket_id).expect("just opened").clone()))
            }
            Command::AddStep {
                ticket_id,
                author,
                action,
                payload,
                at,
                expected_version,
            } => {
                let alarm = (*action == StepAction::LinkAlarm).then(|| self.alarm_index(payload)).transpose()?;
                let step = TicketStep {
                    at: at.unwrap_or(now),
                    author: author.clone(),
                    action: *action,
                    payload: payload.clone(),
                };
                let t = self.tickets.add_step(ticket_id, step, *expected_version)?.clone();
                if let Some(i) = alarm {
                    self.alarms[i].linked_ticket = Some(t.ticket_id.clone());
                }
                Outcome::Ticket(Box::new(t))
            }
            Command::Transition {
                ticket_id,
                to,
                author,
                at,
                expected_version,
            } => {
                let t = self
                    .tickets
                    .transition(ticket_id, *to, at.unwrap_or(now), author, *expected_version)?;
                Outcome::Ticket(Box::new(t.clone()))
            }
            Command::PlanDecommission { source, options } => {
                let mut options = options.clone();
                if options.eligible.is_none() {
                    options.eligible = self.whitelist.as_ref().map(|w| w.members.clone());
                }
                let mut plan = plan_decommission(
                    source,
                    &self.vo_set,
                    &self.snapshot,
                    &self.fabric.catalogue_entries(),
                    &self.reconciliation,
                    &options,
                )?;
                let base = plan.plan_id.clone();
                let mut n = 1;
                while self.plans.contains_key(&plan.plan_id) {
                    n += 1;
                    plan.plan_id = format!("{base}-{n}");
                }
                self.plans.insert(plan.plan_id.clone(), plan.clone());
                Outcome::Plan(Box::new(plan))
            }
            Command::ExecuteDecommission { plan_id } => {
                let plan = self.plans.get(plan_id).ok_or_else(|| EngineError::UnknownPlan(plan_id.clone()))?;
                if !matches!(plan.status, PlanStatus::Draft | PlanStatus::Running) {
                    return Err(StorageOpsError::PlanNotExecutable {
                        plan_id: plan_id.clone(),
                        status: plan.status,
                    }
                    .into());
                }
                let done = execute_migration(&mut self.fabric, plan.clone())?;
                self.plans.insert(plan_id.clone(), done.clone());
                Outcome::Plan(Box::new(done))
            }
            Command::Simulate { event } => {
                self.config()?;
                self.fabric.apply_action(event)?;
                Outcome::Simulated {
                    at: now,
                    event: event.clone(),
                }
            }
            Command::IngestUsage { records } => Outcome::Ingested(self.usage.ingest_usage(records.iter().cloned())),
        };
        if command.is_write_to_simulation() {
            self.observe();
        }
        self.applied += 1;
        Ok(outcome)
    }
}

fn link_step(request: &NewTicket, alarm_id: &str) -> TicketStep {
    TicketStep {
        at: request.opened_at,
        author: request.author.clone(),
        action: StepAction::LinkAlarm,
        payload: alarm_id.to_owned(),
    }
}

/// JSON-lines logs derived from the state: one line per cycle and one per
/// probe result. Rebuilt from the state on open, appended per cycle after.
struct Logs {
    dir: PathBuf,
}

impl Logs {
    const CYCLES: &'static str = "cycles.jsonl";
    const PROBES: &'static str = "probes.jsonl";
    const ALARMS: &'static str = "alarms.jsonl";

    fn io(&self, name: &str) -> impl Fn(std::io::Error) -> EngineError {
        let path = self.dir.join(name);
        move |source| EngineError::Log {
            path: path.clone(),
            source,
        }
    }

    fn writer(&self, name: &str, truncate: bool) -> Result<BufWriter<File>, EngineError> {
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .append(!truncate)
            .truncate(truncate)
            .open(self.dir.join(name))
            .map_err(self.io(name))?;
        Ok(BufWriter::new(file))
    }

    fn write_lines<T: Serialize>(&self, name: &str, items: &[T], truncate: bool) -> Result<(), EngineError> {
        let mut w = self.writer(name, truncate)?;
        for item in items {
            serde_json::to_writer(&mut w, item).expect("log records serialize");
            w.write_all(b"\n").map_err(self.io(name))?;
        }
        w.flush().map_err(self.io(name))
    }

    fn rebuild(&self, state: &State) -> Result<(), EngineError> {
        std::fs::create_dir_all(&self.dir).map_err(self.io(""))?;
        self.write_lines(Self::CYCLES, &state.history, true)?;
        self.write_lines(Self::PROBES, &state.probe_results, true)?;
        self.write_lines(Self::ALARMS, &state.alarms, true)
    }

    fn append_cycle(&self, state: &State, record: &CycleRecord, probes_before: usize) -> Result<(), EngineError> {
        self.write_lines(Self::CYCLES, std::slice::from_ref(record), false)?;
        self.write_lines(Self::PROBES, &state.probe_results[probes_before..], false)?;
        // Alarm records change in place; the file is small.
        self.write_lines(Self::ALARMS, &state.alarms, true)
    }
}

struct Store {
    dir: PathBuf,
    journal: Journal<Command>,
    logs: Logs,
}

pub struct Engine {
    state: State,
    store: Option<Store>,
}

impl Default for Engine {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl Engine {
    /// An engine without persistence.
    pub fn in_memory() -> Self {
        Self {
            state: State::default(),
            store: None,
        }
    }

    /// Opens or creates a data directory and replays its journal.
    pub fn open(dir: &Path) -> Result<Self, EngineError> {
        std::fs::create_dir_all(dir).map_err(|source| EngineError::Log {
            path: dir.to_owned(),
            source,
        })?;
        let (journal, recovered) = Journal::open(&dir.join(JOURNAL_FILE))?;
        if recovered.truncated > 0 {
            tracing::warn!(bytes = recovered.truncated, "discarded torn journal tail");
        }
        let mut state = State::default();
        for (i, command) in recovered.commands.iter().enumerate() {
            state.apply(command).map_err(|e| {
                JournalError::Corrupt {
                    path: journal.path().to_owned(),
                    line: i + 1,
                    reason: format!("replay failed: {e}"),
                }
            })?;
        }
        let logs = Logs {
            dir: dir.join(LOG_DIR),
        };
        logs.rebuild(&state)?;
        Ok(Self {
            state,
            store: Some(Store {
                dir: dir.to_owned(),
                journal,
                logs,
            }),
        })
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn data_dir(&self) -> Option<&Path> {
        self.store.as_ref().map(|s| s.dir.as_path())
    }

    /// Applies and journals one command. A failed command changes nothing.
    pub fn execute(&mut self, command: Command) -> Result<Outcome, EngineError> {
        let probes_before = self.state.probe_results.len();
        let before = self.store.is_some().then(|| self.state.clone());
        let outcome = self.state.apply(&command)?;
        if let Some(store) = &mut self.store {
            if let Err(e) = store.journal.append(&command) {
                self.state = before.expect("kept for persistent engines");
                return Err(e.into());
            }
            if let Outcome::Cycle(record) = &outcome {
                store.logs.append_cycle(&self.state, record, probes_before)?;
            }
        }
        Ok(outcome)
    }

    /// Loads `config` into an empty store, or resumes the same scenario, then
    /// runs cycles until its duration is covered.
    pub fn run(&mut self, config: &ScenarioConfig) -> Result<RunSummary, EngineError> {
        config.validate()?;
        match &self.state.config {
            None => {
                self.execute(Command::Init { config: Box::new(config.clone()) })?;
            }
            Some(existing) if existing == config => {}
            Some(_) => return Err(EngineError::ConfigMismatch),
        }
        while self.state.cycles < config.cycles() {
            self.execute(Command::Cycle)?;
        }
        Ok(self.state.summary())
    }

    /// Runs at most `n` more cycles of the loaded scenario.
    pub fn step_cycles(&mut self, n: u64) -> Result<u64, EngineError> {
        let target = self.state.config()?.cycles();
        let mut ran = 0;
        while ran < n && self.state.cycles < target {
            self.execute(Command::Cycle)?;
            ran += 1;
        }
        Ok(ran)
    }

    pub fn resources_of_kind(&self, kind: ResourceKind) -> BTreeSet<ResourceId> {
        self.state.vo_set.ids_of_kind(kind)
    }
}
