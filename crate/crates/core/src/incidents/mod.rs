//! Ticket lifecycle, duty-shift rotation with takeover reports, and support
//! metrics.

mod metrics;
mod shifts;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{ResourceId, Timestamp};

pub use metrics::{compute_support_metrics, month_of, HistogramBin, SupportMetrics};
pub use shifts::{on_duty, takeover_report, ShiftSchedule, TakeoverReport, TicketSummary, STALL_AFTER};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IncidentError {
    #[error("{0:?} tickets need a resource id")]
    MissingResource(TicketKind),
    #[error("a User ticket without a resource must name the user in its payload")]
    MissingUserPayload,
    #[error("author must not be empty")]
    EmptyAuthor,
    #[error("step at {at} precedes the last step at {last}")]
    OutOfOrder { at: Timestamp, last: Timestamp },
    #[error("ticket {0} is closed")]
    TicketClosed(String),
    #[error("illegal transition {from:?} -> {to:?}")]
    IllegalTransition { from: TicketStatus, to: TicketStatus },
    #[error("StatusChange steps are recorded through transitions")]
    StatusChangeStep,
    #[error("unknown ticket {0}")]
    UnknownTicket(String),
    #[error("ticket {ticket_id} is at version {actual}, not {expected}")]
    VersionConflict {
        ticket_id: String,
        expected: usize,
        actual: usize,
    },
    #[error("a shift schedule needs at least one team")]
    NoTeams,
    #[error("shift length must be at least one day")]
    ZeroShiftLength,
    #[error("{date} is before the schedule epoch {epoch}")]
    BeforeEpoch {
        date: chrono::NaiveDate,
        epoch: chrono::NaiveDate,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TicketKind {
    SE,
    CE,
    WMS,
    User,
    Other,
}

impl TicketKind {
    pub const ALL: [TicketKind; 5] = [
        TicketKind::SE,
        TicketKind::CE,
        TicketKind::WMS,
        TicketKind::User,
        TicketKind::Other,
    ];

    fn needs_resource(self) -> bool {
        matches!(self, TicketKind::SE | TicketKind::CE | TicketKind::WMS)
    }
}

impl fmt::Display for TicketKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TicketStatus {
    Open,
    InProgress,
    OnHold,
    Solved,
    Closed,
}

impl TicketStatus {
    pub fn is_active(self) -> bool {
        matches!(self, TicketStatus::Open | TicketStatus::InProgress | TicketStatus::OnHold)
    }

    pub fn can_become(self, to: TicketStatus) -> bool {
        use TicketStatus::*;
        matches!(
            (self, to),
            (Open, InProgress | OnHold | Solved)
                | (InProgress, OnHold | Solved)
                | (OnHold, InProgress)
                | (Solved, Closed | InProgress)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepAction {
    Comment,
    Assign,
    StatusChange,
    /// Payload is an alarm id.
    LinkAlarm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TicketStep {
    pub at: Timestamp,
    pub author: String,
    pub action: StepAction,
    #[serde(default)]
    pub payload: String,
}

/// `participants` is always the set of distinct step authors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ticket {
    pub ticket_id: String,
    pub kind: TicketKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resource_id: Option<ResourceId>,
    pub opened_at: Timestamp,
    pub closed_at: Option<Timestamp>,
    pub status: TicketStatus,
    pub steps: Vec<TicketStep>,
    pub participants: BTreeSet<String>,
}

impl Ticket {
    /// Number of steps; changes with every accepted mutation.
    pub fn version(&self) -> usize {
        self.steps.len()
    }

    pub fn last_step_at(&self) -> Timestamp {
        self.steps.last().map_or(self.opened_at, |s| s.at)
    }

    pub fn linked_alarms(&self) -> impl Iterator<Item = &str> {
        self.steps
            .iter()
            .filter(|s| s.action == StepAction::LinkAlarm)
            .map(|s| s.payload.as_str())
    }

    fn push(&mut self, step: TicketStep) {
        self.participants.insert(step.author.clone());
        self.steps.push(step);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewTicket {
    pub kind: TicketKind,
    #[serde(default)]
    pub resource_id: Option<ResourceId>,
    pub opened_at: Timestamp,
    pub author: String,
    #[serde(default)]
    pub payload: String,
}

/// An Open ticket whose creation step is a comment carrying `payload`.
pub fn open_ticket(ticket_id: impl Into<String>, req: &NewTicket) -> Result<Ticket, IncidentError> {
    if req.author.trim().is_empty() {
        return Err(IncidentError::EmptyAuthor);
    }
    if req.kind.needs_resource() && req.resource_id.is_none() {
        return Err(IncidentError::MissingResource(req.kind));
    }
    if req.kind == TicketKind::User && req.resource_id.is_none() && req.payload.trim().is_empty() {
        return Err(IncidentError::MissingUserPayload);
    }
    let mut t = Ticket {
        ticket_id: ticket_id.into(),
        kind: req.kind,
        resource_id: req.resource_id.clone(),
        opened_at: req.opened_at,
        closed_at: None,
        status: TicketStatus::Open,
        steps: Vec::new(),
        participants: BTreeSet::new(),
    };
    t.push(TicketStep {
        at: req.opened_at,
        author: req.author.clone(),
        action: StepAction::Comment,
        payload: req.payload.clone(),
    });
    Ok(t)
}

fn check_step(ticket: &Ticket, at: Timestamp, author: &str) -> Result<(), IncidentError> {
    if ticket.status == TicketStatus::Closed {
        return Err(IncidentError::TicketClosed(ticket.ticket_id.clone()));
    }
    if author.trim().is_empty() {
        return Err(IncidentError::EmptyAuthor);
    }
    let last = ticket.last_step_at();
    if at < last {
        return Err(IncidentError::OutOfOrder { at, last });
    }
    Ok(())
}

pub fn add_step(ticket: &Ticket, step: TicketStep) -> Result<Ticket, IncidentError> {
    check_step(ticket, step.at, &step.author)?;
    if step.action == StepAction::StatusChange {
        return Err(IncidentError::StatusChangeStep);
    }
    let mut t = ticket.clone();
    t.push(step);
    Ok(t)
}

/// Records a StatusChange step. Solved sets `closed_at`; reopening clears it.
pub fn transition(
    ticket: &Ticket,
    to: TicketStatus,
    at: Timestamp,
    author: &str,
) -> Result<Ticket, IncidentError> {
    check_step(ticket, at, author)?;
    if !ticket.status.can_become(to) {
        return Err(IncidentError::IllegalTransition {
            from: ticket.status,
            to,
        });
    }
    let mut t = ticket.clone();
    t.push(TicketStep {
        at,
        author: author.to_owned(),
        action: StepAction::StatusChange,
        payload: format!("{:?} -> {:?}", ticket.status, to),
    });
    match to {
        TicketStatus::Solved => t.closed_at = Some(at),
        TicketStatus::Closed => {}
        _ => t.closed_at = None,
    }
    t.status = to;
    Ok(t)
}

/// Tickets keyed by id, with sequential ids and optimistic version checks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TicketBook {
    tickets: BTreeMap<String, Ticket>,
    next: u64,
}

impl TicketBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: &str) -> Option<&Ticket> {
        self.tickets.get(id)
    }

    pub fn tickets(&self) -> impl Iterator<Item = &Ticket> {
        self.tickets.values()
    }

    pub fn to_vec(&self) -> Vec<Ticket> {
        self.tickets.values().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.tickets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tickets.is_empty()
    }

    pub fn open(&mut self, req: &NewTicket) -> Result<&Ticket, IncidentError> {
        let id = format!("T-{:06}", self.next + 1);
        let t = open_ticket(id.clone(), req)?;
        self.next += 1;
        Ok(self.tickets.entry(id).or_insert(t))
    }

    pub fn add_step(
        &mut self,
        id: &str,
        step: TicketStep,
        expected_version: Option<usize>,
    ) -> Result<&Ticket, IncidentError> {
        let t = self.checked(id, expected_version)?;
        let updated = add_step(t, step)?;
        Ok(self.replace(updated))
    }

    pub fn transition(
        &mut self,
        id: &str,
        to: TicketStatus,
        at: Timestamp,
        author: &str,
        expected_version: Option<usize>,
    ) -> Result<&Ticket, IncidentError> {
        let t = self.checked(id, expected_version)?;
        let updated = transition(t, to, at, author)?;
        Ok(self.replace(updated))
    }

    fn checked(&self, id: &str, expected: Option<usize>) -> Result<&Ticket, IncidentError> {
        let t = self
            .tickets
            .get(id)
            .ok_or_else(|| IncidentError::UnknownTicket(id.to_owned()))?;
        match expected {
            Some(v) if v != t.version() => Err(IncidentError::VersionConflict {
                ticket_id: id.to_owned(),
                expected: v,
                actual: t.version(),
            }),
            _ => Ok(t),
        }
    }

    fn replace(&mut self, t: Ticket) -> &Ticket {
        let id = t.ticket_id.clone();
        self.tickets.insert(id.clone(), t);
        &self.tickets[&id]
    }
}
