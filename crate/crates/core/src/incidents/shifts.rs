use std::collections::BTreeSet;
use std::fmt::Write as _;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{IncidentError, Ticket, TicketKind, TicketStatus};
use crate::probes::Alarm;
use crate::types::{ResourceId, Timestamp, MINUTES_PER_DAY};

/// Rotation of duty teams. Team `i` covers shifts `i`, `i + n`, `i + 2n`...
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftSchedule {
    teams: Vec<String>,
    shift_length_days: u32,
    epoch: NaiveDate,
}

impl ShiftSchedule {
    pub fn new(teams: Vec<String>, shift_length_days: u32, epoch: NaiveDate) -> Result<Self, IncidentError> {
        if teams.is_empty() {
            return Err(IncidentError::NoTeams);
        }
        if shift_length_days == 0 {
            return Err(IncidentError::ZeroShiftLength);
        }
        Ok(Self {
            teams,
            shift_length_days,
            epoch,
        })
    }

    pub fn teams(&self) -> &[String] {
        &self.teams
    }

    pub fn shift_length_days(&self) -> u32 {
        self.shift_length_days
    }

    pub fn epoch(&self) -> NaiveDate {
        self.epoch
    }

    /// Days after which the rotation repeats.
    pub fn period_days(&self) -> u64 {
        self.teams.len() as u64 * self.shift_length_days as u64
    }
}

pub fn on_duty(schedule: &ShiftSchedule, date: NaiveDate) -> Result<&str, IncidentError> {
    if date < schedule.epoch {
        return Err(IncidentError::BeforeEpoch {
            date,
            epoch: schedule.epoch,
        });
    }
    let days = (date - schedule.epoch).num_days() as u64;
    let shift = days / schedule.shift_length_days as u64;
    Ok(&schedule.teams[(shift % schedule.teams.len() as u64) as usize])
}

/// Minutes without a step after which an active ticket is stalled.
pub const STALL_AFTER: u64 = 7 * MINUTES_PER_DAY;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TicketSummary {
    pub ticket_id: String,
    pub kind: TicketKind,
    pub resource_id: Option<ResourceId>,
    pub status: TicketStatus,
    pub opened_at: Timestamp,
    pub last_step_at: Timestamp,
}

impl TicketSummary {
    fn of(t: &Ticket) -> Self {
        Self {
            ticket_id: t.ticket_id.clone(),
            kind: t.kind,
            resource_id: t.resource_id.clone(),
            status: t.status,
            opened_at: t.opened_at,
            last_step_at: t.last_step_at(),
        }
    }

    fn line(&self) -> String {
        let resource = self
            .resource_id
            .as_ref()
            .map_or(String::new(), |r| format!(" {r}"));
        format!(
            "{} [{}{}] {:?} opened {} last step {}",
            self.ticket_id, self.kind, resource, self.status, self.opened_at, self.last_step_at
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TakeoverReport {
    pub at: Timestamp,
    /// Active tickets, oldest first.
    pub open_tickets: Vec<TicketSummary>,
    pub unticketed_alarms: Vec<Alarm>,
    /// Active tickets without a step for more than [`STALL_AFTER`].
    pub stalled: Vec<TicketSummary>,
}

impl TakeoverReport {
    pub fn is_empty(&self) -> bool {
        self.open_tickets.is_empty() && self.unticketed_alarms.is_empty() && self.stalled.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "takeover report at {}", self.at);
        let _ = writeln!(out, "open tickets: {}", self.open_tickets.len());
        for t in &self.open_tickets {
            let _ = writeln!(out, "  {}", t.line());
        }
        let _ = writeln!(out, "unticketed alarms: {}", self.unticketed_alarms.len());
        for a in &self.unticketed_alarms {
            let _ = writeln!(
                out,
                "  {} {} {} raised {} ({} consecutive failures)",
                a.alarm_id, a.resource_id, a.check, a.raised_at, a.consecutive_failures
            );
        }
        let _ = writeln!(out, "stalled tickets: {}", self.stalled.len());
        for t in &self.stalled {
            let _ = writeln!(out, "  {}", t.line());
        }
        out
    }
}

pub fn takeover_report(tickets: &[Ticket], alarms: &[Alarm], at: Timestamp) -> TakeoverReport {
    let mut active: Vec<&Ticket> = tickets.iter().filter(|t| t.status.is_active()).collect();
    active.sort_by(|a, b| a.opened_at.cmp(&b.opened_at).then_with(|| a.ticket_id.cmp(&b.ticket_id)));

    let linked: BTreeSet<&str> = tickets.iter().flat_map(|t| t.linked_alarms()).collect();
    let mut unticketed: Vec<Alarm> = alarms
        .iter()
        .filter(|a| a.is_open() && a.linked_ticket.is_none() && !linked.contains(a.alarm_id.as_str()))
        .cloned()
        .collect();
    unticketed.sort_by(|a, b| a.raised_at.cmp(&b.raised_at).then_with(|| a.alarm_id.cmp(&b.alarm_id)));

    TakeoverReport {
        at,
        open_tickets: active.iter().map(|t| TicketSummary::of(t)).collect(),
        unticketed_alarms: unticketed,
        stalled: active
            .iter()
            .filter(|t| at.saturating_sub(t.last_step_at()) > STALL_AFTER)
            .map(|t| TicketSummary::of(t))
            .collect(),
    }
}
