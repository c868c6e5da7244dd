//! Probe execution, alarm hysteresis and availability/reliability reports.
//!
//! Probes exercise ground-truth behaviour only: a storage element that is
//! full but publishes free space still fails its read/write probe, and one
//! that publishes garbage while working fine still passes. Publication errors
//! are caught by [`crate::storage_ops::detect_publication_errors`] instead.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fabric::{Fabric, FabricError, NodeState};
use crate::topology::{DowntimeWindow, VoResourceSet};
use crate::types::{ResourceId, ResourceKind, Timestamp, Window};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProbeError {
    #[error("unknown resource {0}")]
    UnknownResource(ResourceId),
    #[error("check {check} cannot run against {resource} ({kind})")]
    CheckMismatch {
        resource: ResourceId,
        kind: ResourceKind,
        check: Check,
    },
    #[error("probe interval must be positive")]
    ZeroInterval,
    #[error("alarm thresholds must be at least 1")]
    InvalidPolicy,
    #[error("report scope is empty")]
    EmptyScope,
    #[error("report window must start before it ends")]
    EmptyWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Check {
    SEReadWrite,
    CESubmit,
    WMSPing,
    CatalogueLookup,
    VOMSPing,
}

impl Check {
    pub fn target_kind(self) -> ResourceKind {
        match self {
            Check::SEReadWrite => ResourceKind::SE,
            Check::CESubmit => ResourceKind::CE,
            Check::WMSPing => ResourceKind::WMS,
            Check::CatalogueLookup => ResourceKind::Catalogue,
            Check::VOMSPing => ResourceKind::VOMS,
        }
    }

    pub fn for_kind(kind: ResourceKind) -> Check {
        match kind {
            ResourceKind::SE => Check::SEReadWrite,
            ResourceKind::CE => Check::CESubmit,
            ResourceKind::WMS => Check::WMSPing,
            ResourceKind::Catalogue => Check::CatalogueLookup,
            ResourceKind::VOMS => Check::VOMSPing,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub kind: ResourceKind,
    pub check: Check,
    /// Minutes between runs; a probe fires when the clock is a multiple of it.
    pub interval: u64,
}

impl ProbeSpec {
    pub fn new(kind: ResourceKind, check: Check, interval: u64) -> Result<Self, ProbeError> {
        let spec = Self {
            kind,
            check,
            interval,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ProbeError> {
        if self.interval == 0 {
            return Err(ProbeError::ZeroInterval);
        }
        if self.check.target_kind() != self.kind {
            return Err(ProbeError::CheckMismatch {
                resource: ResourceId::from("*"),
                kind: self.kind,
                check: self.check,
            });
        }
        Ok(())
    }

    /// One probe per resource kind, every `interval` minutes.
    pub fn defaults(interval: u64) -> Vec<ProbeSpec> {
        ResourceKind::ALL
            .iter()
            .map(|&kind| ProbeSpec {
                kind,
                check: Check::for_kind(kind),
                interval,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Ok,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub resource_id: ResourceId,
    pub check: Check,
    pub at: Timestamp,
    pub outcome: Outcome,
    #[serde(default)]
    pub detail: String,
}

impl ProbeResult {
    pub fn is_ok(&self) -> bool {
        self.outcome == Outcome::Ok
    }
}

fn state_detail(state: NodeState) -> Option<&'static str> {
    match state {
        NodeState::Up => None,
        NodeState::Down => Some("unavailable"),
        NodeState::Degraded => Some("degraded"),
    }
}

/// Runs one check against the fabric's ground truth.
pub fn run_probe(fabric: &Fabric, resource: &ResourceId, check: Check) -> Result<ProbeResult, ProbeError> {
    let kind = fabric
        .resource_kind(resource.as_str())
        .ok_or_else(|| ProbeError::UnknownResource(resource.clone()))?;
    if check.target_kind() != kind {
        return Err(ProbeError::CheckMismatch {
            resource: resource.clone(),
            kind,
            check,
        });
    }
    let state = fabric.node_state(resource.as_str()).expect("kind resolved");
    let failure = match state_detail(state) {
        Some(d) => Some(d.to_owned()),
        // 1-byte write, read back, delete: only the write can be refused.
        None if check == Check::SEReadWrite => match fabric.check_writable(resource.as_str(), 1) {
            Ok(()) => None,
            Err(FabricError::StorageFull { .. }) => Some("write refused: StorageFull".to_owned()),
            Err(e) => Some(format!("write refused: {e}")),
        },
        None => None,
    };
    let (outcome, detail) = match failure {
        Some(d) => (Outcome::Fail, d),
        None => (Outcome::Ok, String::new()),
    };
    Ok(ProbeResult {
        resource_id: resource.clone(),
        check,
        at: fabric.now(),
        outcome,
        detail,
    })
}

/// Runs every probe that is due at the current clock value against the
/// members of `vo_set`. Probes run in parallel; results come back ordered by
/// resource id, then check.
pub fn probe_cycle(fabric: &Fabric, specs: &[ProbeSpec], vo_set: &VoResourceSet) -> Vec<ProbeResult> {
    let now = fabric.now();
    let mut jobs: Vec<(ResourceId, Check)> = Vec::new();
    for spec in specs {
        if spec.validate().is_err() || !now.is_multiple_of(spec.interval) {
            continue;
        }
        jobs.extend(
            vo_set
                .members
                .iter()
                .filter(|m| m.kind == spec.kind)
                .map(|m| (m.resource_id.clone(), spec.check)),
        );
    }
    jobs.sort();
    jobs.dedup();
    jobs.par_iter()
        .map(|(id, check)| {
            run_probe(fabric, id, *check).unwrap_or_else(|e| ProbeResult {
                resource_id: id.clone(),
                check: *check,
                at: now,
                outcome: Outcome::Fail,
                detail: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlarmPolicy {
    /// Consecutive failures that raise an alarm.
    pub raise_after: u32,
    /// Consecutive successes that clear it.
    pub clear_after: u32,
}

impl Default for AlarmPolicy {
    fn default() -> Self {
        Self {
            raise_after: 3,
            clear_after: 2,
        }
    }
}

impl AlarmPolicy {
    pub fn validate(&self) -> Result<(), ProbeError> {
        if self.raise_after == 0 || self.clear_after == 0 {
            return Err(ProbeError::InvalidPolicy);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alarm {
    pub alarm_id: String,
    pub resource_id: ResourceId,
    pub check: Check,
    pub raised_at: Timestamp,
    pub cleared_at: Option<Timestamp>,
    pub consecutive_failures: u32,
    pub linked_ticket: Option<String>,
}

impl Alarm {
    pub fn is_open(&self) -> bool {
        self.cleared_at.is_none()
    }
}

fn alarm_id(resource: &ResourceId, check: Check, raised_at: Timestamp) -> String {
    format!("ALM-{resource}-{check}-{raised_at}")
}

/// The trailing run of identical outcomes in a time-ordered series.
fn trailing_run<'a>(series: &[&'a ProbeResult]) -> (Option<Outcome>, Vec<&'a ProbeResult>) {
    let Some(last) = series.last() else {
        return (None, Vec::new());
    };
    let start = series
        .iter()
        .rposition(|r| r.outcome != last.outcome)
        .map_or(0, |i| i + 1);
    (Some(last.outcome), series[start..].to_vec())
}

/// Applies run-length hysteresis to a probe history.
///
/// `history` must contain at least the results since the previous call for
/// every (resource, check) pair; `open_alarms` are the alarms currently open.
/// Returns the passed alarms (cleared or with updated failure counts) followed
/// by newly raised ones. An alarm is raised at the k-th consecutive failure
/// and cleared at the m-th consecutive success.
pub fn evaluate_alarms(
    history: &[ProbeResult],
    open_alarms: &[Alarm],
    policy: &AlarmPolicy,
) -> Result<Vec<Alarm>, ProbeError> {
    policy.validate()?;
    let mut series: BTreeMap<(&ResourceId, Check), Vec<&ProbeResult>> = BTreeMap::new();
    for r in history {
        series.entry((&r.resource_id, r.check)).or_default().push(r);
    }
    for s in series.values_mut() {
        s.sort_by_key(|r| r.at);
    }

    let mut out = Vec::with_capacity(open_alarms.len());
    let mut covered: BTreeSet<(ResourceId, Check)> = BTreeSet::new();
    for alarm in open_alarms {
        let mut alarm = alarm.clone();
        if alarm.is_open() {
            covered.insert((alarm.resource_id.clone(), alarm.check));
            if let Some(s) = series.get(&(&alarm.resource_id, alarm.check)) {
                let since: Vec<&ProbeResult> =
                    s.iter().copied().filter(|r| r.at >= alarm.raised_at).collect();
                match trailing_run(&since) {
                    (Some(Outcome::Ok), run) if run.len() >= policy.clear_after as usize => {
                        alarm.cleared_at = Some(run[policy.clear_after as usize - 1].at);
                    }
                    (Some(Outcome::Fail), _) => {
                        let (_, run) = trailing_run(s);
                        alarm.consecutive_failures = alarm.consecutive_failures.max(run.len() as u32);
                    }
                    _ => {}
                }
            }
        }
        out.push(alarm);
    }

    for ((resource, check), s) in &series {
        if covered.contains(&((*resource).clone(), *check)) {
            continue;
        }
        if let (Some(Outcome::Fail), run) = trailing_run(s) {
            if run.len() >= policy.raise_after as usize {
                let raised_at = run[policy.raise_after as usize - 1].at;
                out.push(Alarm {
                    alarm_id: alarm_id(resource, *check, raised_at),
                    resource_id: (*resource).clone(),
                    check: *check,
                    raised_at,
                    cleared_at: None,
                    consecutive_failures: run.len() as u32,
                    linked_ticket: None,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Figures {
    pub availability: f64,
    pub reliability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceAvailability {
    pub resource_id: ResourceId,
    pub total: u64,
    pub ok: u64,
    /// Failures that fell inside a declared downtime.
    pub excused: u64,
    /// `None` when the resource has no results in the window.
    pub availability: Option<f64>,
    /// `None` when no result counts towards reliability.
    pub reliability: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvailabilityReport {
    pub window: Window,
    pub resources: Vec<ResourceAvailability>,
    /// Unweighted means over resources with known figures.
    pub aggregate_availability: Option<f64>,
    pub aggregate_reliability: Option<f64>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Availability and reliability restricted to the resources in `scope`.
///
/// Availability is the fraction of successful results. Reliability excuses
/// failures that happen during a declared downtime of the resource: it is
/// successes over results minus excused failures, hence never below
/// availability.
pub fn availability_report(
    results: &[ProbeResult],
    scope: &BTreeSet<ResourceId>,
    window: Window,
    downtimes: &[DowntimeWindow],
) -> Result<AvailabilityReport, ProbeError> {
    if scope.is_empty() {
        return Err(ProbeError::EmptyScope);
    }
    if window.is_empty() {
        return Err(ProbeError::EmptyWindow);
    }
    let mut tallies: BTreeMap<&ResourceId, (u64, u64, u64)> =
        scope.iter().map(|id| (id, (0, 0, 0))).collect();
    for r in results {
        if !window.contains(r.at) {
            continue;
        }
        let Some((total, ok, excused)) = tallies.get_mut(&r.resource_id) else {
            continue;
        };
        *total += 1;
        if r.is_ok() {
            *ok += 1;
        } else if downtimes
            .iter()
            .any(|d| d.resource_id == r.resource_id && d.covers(r.at))
        {
            *excused += 1;
        }
    }

    let resources: Vec<ResourceAvailability> = tallies
        .into_iter()
        .map(|(id, (total, ok, excused))| {
            let counted = total - excused;
            ResourceAvailability {
                resource_id: id.clone(),
                total,
                ok,
                excused,
                availability: (total > 0).then(|| ok as f64 / total as f64),
                reliability: (counted > 0).then(|| ok as f64 / counted as f64),
            }
        })
        .collect();

    Ok(AvailabilityReport {
        window,
        aggregate_availability: mean(resources.iter().filter_map(|r| r.availability)),
        aggregate_reliability: mean(resources.iter().filter_map(|r| r.reliability)),
        resources,
    })
}

impl AvailabilityReport {
    /// CSV with columns resource_id, window_start, window_end, availability,
    /// reliability, ending with an `(aggregate)` row.
    pub fn to_csv(&self) -> String {
        fn cell(v: Option<f64>) -> String {
            v.map_or_else(|| "unknown".to_owned(), |x| x.to_string())
        }
        let mut out = String::from("resource_id,window_start,window_end,availability,reliability\n");
        let rows = self
            .resources
            .iter()
            .map(|r| (r.resource_id.as_str(), r.availability, r.reliability))
            .chain(std::iter::once((
                "(aggregate)",
                self.aggregate_availability,
                self.aggregate_reliability,
            )));
        for (id, a, r) in rows {
            out.push_str(&format!(
                "{id},{},{},{},{}\n",
                self.window.start,
                self.window.end,
                cell(a),
                cell(r)
            ));
        }
        out
    }
}
