//! Report rendering shared by the API and the CLI. Both emit exactly the
//! string returned by [`render`].

use std::str::FromStr;

use gridops_core::accounting::{aggregate, waiting_running_ratio, AccountingReport, GroupBy, QueueRatio, RatioMode};
use gridops_core::incidents::{compute_support_metrics, takeover_report};
use gridops_core::probes::{availability_report, AvailabilityReport};
use gridops_core::storage_ops::SortMode;
use gridops_core::topology::{WhiteList, WhitelistPolicy};
use gridops_core::{Timestamp, Window};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::State;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(format!("unknown format {other:?} (expected json or csv)")),
        }
    }
}

/// `sum` (Σ waiting / Σ running) or `mean` (mean of per-sample ratios).
pub fn parse_ratio_mode(s: &str) -> Result<RatioMode, String> {
    match s {
        "sum" => Ok(RatioMode::SumOfCounts),
        "mean" => Ok(RatioMode::MeanOfRatios),
        other => Err(format!("unknown ratio mode {other:?} (expected sum or mean)")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WindowArg {
    pub start: Option<Timestamp>,
    pub end: Option<Timestamp>,
}

impl WindowArg {
    /// Defaults to `[0, now]`, closed on the right so the current cycle counts.
    pub fn resolve(self, now: Timestamp) -> Result<Window, ReportError> {
        let start = self.start.unwrap_or(0);
        let end = self.end.unwrap_or(now + 1);
        Window::new(start, end).ok_or(ReportError::EmptyWindow { start, end })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Report {
    Topology,
    Whitelist,
    Filling { sort: SortMode },
    Findings,
    HeavyUsers,
    Reconciliation,
    Alarms,
    Availability { window: WindowArg },
    Tickets,
    Takeover,
    SupportMetrics { window: WindowArg },
    Accounting { group_by: GroupBy, mode: RatioMode, window: WindowArg },
    Trend,
    Plans,
    Summary,
}

impl Report {
    /// Every report with default parameters, in digest order.
    pub fn all() -> Vec<Report> {
        vec![
            Report::Topology,
            Report::Whitelist,
            Report::Filling { sort: SortMode::Rate },
            Report::Findings,
            Report::HeavyUsers,
            Report::Reconciliation,
            Report::Alarms,
            Report::Availability { window: WindowArg::default() },
            Report::Tickets,
            Report::Takeover,
            Report::SupportMetrics { window: WindowArg::default() },
            Report::Accounting {
                group_by: GroupBy::WholeVO,
                mode: RatioMode::SumOfCounts,
                window: WindowArg::default(),
            },
            Report::Trend,
            Report::Plans,
            Report::Summary,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReportError {
    #[error("window [{start}, {end}) is empty")]
    EmptyWindow { start: Timestamp, end: Timestamp },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccountingView {
    pub report: AccountingReport,
    pub queue_ratio: QueueRatio,
    pub ratio_mode: RatioMode,
    pub rejected_records: usize,
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

fn csv<I, R>(header: &[&str], rows: I) -> String
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = ::csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn whitelist(state: &State) -> WhiteList {
    state.whitelist.clone().unwrap_or_else(|| WhiteList {
        computed_at: state.now(),
        members: Default::default(),
        criteria: state.config.as_ref().map_or_else(WhitelistPolicy::default, |c| c.whitelist.clone()),
    })
}

fn availability(state: &State, window: Window) -> AvailabilityReport {
    let downtimes = state.config.as_ref().map_or(&[][..], |c| c.downtimes.as_slice());
    availability_report(&state.probe_results, &state.vo_set.ids(), window, downtimes).unwrap_or(AvailabilityReport {
        window,
        resources: Vec::new(),
        aggregate_availability: None,
        aggregate_reliability: None,
    })
}

pub fn render(state: &State, report: &Report, format: Format) -> Result<String, ReportError> {
    let now = state.now();
    let out = match (report, format) {
        (Report::Topology, Format::Json) => json(&state.vo_set),
        (Report::Topology, Format::Csv) => csv(
            &["resource_id", "kind", "presence"],
            state
                .vo_set
                .members
                .iter()
                .map(|m| [m.resource_id.to_string(), m.kind.to_string(), format!("{:?}", m.presence)]),
        ),
        (Report::Whitelist, Format::Json) => json(&whitelist(state)),
        (Report::Whitelist, Format::Csv) => {
            let wl = whitelist(state);
            csv(
                &["resource_id", "kind"],
                wl.members.iter().map(|id| {
                    let kind = state.vo_set.member(id.as_str()).map_or(String::new(), |m| m.kind.to_string());
                    [id.to_string(), kind]
                }),
            )
        }
        (Report::Filling { sort }, Format::Json) => json(&state.filling.sorted_report(*sort)),
        (Report::Filling { sort }, Format::Csv) => state.filling.to_csv(*sort),
        (Report::Findings, Format::Json) => json(&state.findings),
        (Report::Findings, Format::Csv) => csv(
            &["resource_id", "kind", "detail"],
            state
                .findings
                .iter()
                .map(|f| [f.resource_id.to_string(), format!("{:?}", f.kind), f.detail.clone()]),
        ),
        (Report::HeavyUsers, Format::Json) => json(&state.heavy_users),
        (Report::HeavyUsers, Format::Csv) => csv(
            &["storage_id", "rate", "rank", "owner", "bytes_owned"],
            state.heavy_users.iter().flat_map(|s| {
                s.entries.iter().map(move |e| {
                    [
                        s.storage_id.to_string(),
                        s.rate.to_string(),
                        e.rank.to_string(),
                        e.owner.clone(),
                        e.bytes_owned.to_string(),
                    ]
                })
            }),
        ),
        (Report::Reconciliation, Format::Json) => json(&state.reconciliation),
        (Report::Reconciliation, Format::Csv) => {
            let r = &state.reconciliation;
            let zombies = r.zombies.iter().map(|z| {
                [
                    "zombie".to_owned(),
                    z.storage_id.to_string(),
                    z.pfn.clone(),
                    String::new(),
                    z.size.to_string(),
                    z.owner.clone(),
                ]
            });
            let ghosts = r.ghosts.iter().map(|g| {
                [
                    "ghost".to_owned(),
                    g.storage_id.to_string(),
                    g.pfn.clone(),
                    g.lfn.clone(),
                    String::new(),
                    String::new(),
                ]
            });
            csv(&["kind", "storage_id", "pfn", "lfn", "size", "owner"], zombies.chain(ghosts))
        }
        (Report::Alarms, format) => {
            // Newest first.
            let mut alarms = state.alarms.clone();
            alarms.sort_by(|a, b| b.raised_at.cmp(&a.raised_at).then_with(|| a.alarm_id.cmp(&b.alarm_id)));
            match format {
                Format::Json => json(&alarms),
                Format::Csv => csv(
                    &[
                        "alarm_id",
                        "resource_id",
                        "check",
                        "raised_at",
                        "cleared_at",
                        "consecutive_failures",
                        "linked_ticket",
                    ],
                    alarms.iter().map(|a| {
                        [
                            a.alarm_id.clone(),
                            a.resource_id.to_string(),
                            a.check.to_string(),
                            a.raised_at.to_string(),
                            opt(a.cleared_at),
                            a.consecutive_failures.to_string(),
                            opt(a.linked_ticket.clone()),
                        ]
                    }),
                ),
            }
        }
        (Report::Availability { window }, format) => {
            let r = availability(state, window.resolve(now)?);
            match format {
                Format::Json => json(&r),
                Format::Csv => r.to_csv(),
            }
        }
        (Report::Tickets, Format::Json) => json(&state.tickets.to_vec()),
        (Report::Tickets, Format::Csv) => csv(
            &[
                "ticket_id",
                "kind",
                "resource_id",
                "status",
                "opened_at",
                "closed_at",
                "version",
                "participants",
            ],
            state.tickets.tickets().map(|t| {
                [
                    t.ticket_id.clone(),
                    t.kind.to_string(),
                    opt(t.resource_id.clone()),
                    format!("{:?}", t.status),
                    t.opened_at.to_string(),
                    opt(t.closed_at),
                    t.version().to_string(),
                    t.participants.iter().cloned().collect::<Vec<_>>().join(";"),
                ]
            }),
        ),
        (Report::Takeover, format) => {
            let r = takeover_report(&state.tickets.to_vec(), &state.alarms, now);
            match format {
                Format::Json => json(&r),
                Format::Csv => {
                    let row = |section: &str, id: &str, resource: String, status: String, at: Timestamp| {
                        [section.to_owned(), id.to_owned(), resource, status, at.to_string()]
                    };
                    let open = r.open_tickets.iter().map(|t| {
                        row("open", &t.ticket_id, opt(t.resource_id.clone()), format!("{:?}", t.status), t.last_step_at)
                    });
                    let alarms = r
                        .unticketed_alarms
                        .iter()
                        .map(|a| row("unticketed_alarm", &a.alarm_id, a.resource_id.to_string(), "open".into(), a.raised_at));
                    let stalled = r.stalled.iter().map(|t| {
                        row("stalled", &t.ticket_id, opt(t.resource_id.clone()), format!("{:?}", t.status), t.last_step_at)
                    });
                    csv(&["section", "id", "resource_id", "status", "at"], open.chain(alarms).chain(stalled))
                }
            }
        }
        (Report::SupportMetrics { window }, format) => {
            let m = compute_support_metrics(&state.tickets.to_vec(), &window.resolve(now)?);
            match format {
                Format::Json => json(&m),
                Format::Csv => m.to_csv(),
            }
        }
        (Report::Accounting { group_by, mode, window }, format) => {
            let w = window.resolve(now)?;
            let view = AccountingView {
                report: aggregate(state.usage.records(), &w, *group_by),
                queue_ratio: waiting_running_ratio(&state.queue, &w, *mode),
                ratio_mode: *mode,
                rejected_records: state.usage.rejected_total(),
            };
            match format {
                Format::Json => json(&view),
                Format::Csv => view.report.to_csv(),
            }
        }
        (Report::Trend, Format::Json) => json(&state.trend),
        (Report::Trend, Format::Csv) => csv(
            &["at", "total_used", "total_capacity", "suspect_count"],
            state.trend.iter().map(|p| {
                [
                    p.at.to_string(),
                    p.total_used.to_string(),
                    p.total_capacity.to_string(),
                    p.suspect_count.to_string(),
                ]
            }),
        ),
        (Report::Plans, Format::Json) => json(&state.plans.values().collect::<Vec<_>>()),
        (Report::Plans, Format::Csv) => csv(
            &["plan_id", "source", "status", "steps", "completed", "unplaceable", "bytes_to_move"],
            state.plans.values().map(|p| {
                [
                    p.plan_id.clone(),
                    p.source.to_string(),
                    format!("{:?}", p.status),
                    p.steps.len().to_string(),
                    p.completed.to_string(),
                    p.unplaceable.len().to_string(),
                    p.bytes_to_move().to_string(),
                ]
            }),
        ),
        (Report::Summary, Format::Json) => json(&state.summary()),
        (Report::Summary, Format::Csv) => {
            let s = state.summary();
            csv(
                &["cycle", "findings", "whitelist_size"],
                s.findings_per_cycle
                    .iter()
                    .zip(&s.whitelist_sizes)
                    .enumerate()
                    .map(|(i, (f, w))| [(i + 1).to_string(), f.to_string(), w.to_string()]),
            )
        }
    };
    Ok(out)
}

/// SHA-256 over every default report in both formats.
pub fn state_digest(state: &State) -> String {
    let mut h = Sha256::new();
    for report in Report::all() {
        for format in [Format::Json, Format::Csv] {
            let body = render(state, &report, format).expect("default windows are non-empty");
            h.update((body.len() as u64).to_le_bytes());
            h.update(body.as_bytes());
        }
    }
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_store_reports() {
        let state = State::default();
        for report in Report::all() {
            render(&state, &report, Format::Json).unwrap();
            render(&state, &report, Format::Csv).unwrap();
        }
        let metrics = render(&state, &Report::SupportMetrics { window: WindowArg::default() }, Format::Csv).unwrap();
        assert!(metrics.contains("mean_days_to_solve,undefined"));
        let acc = render(
            &state,
            &Report::Accounting {
                group_by: GroupBy::WholeVO,
                mode: RatioMode::SumOfCounts,
                window: WindowArg::default(),
            },
            Format::Json,
        )
        .unwrap();
        assert!(acc.contains("\"Undefined\""));
        assert_eq!(state_digest(&state), state_digest(&State::default()));
    }

    #[test]
    fn explicit_empty_window_is_rejected() {
        let w = WindowArg { start: Some(5), end: Some(5) };
        assert_eq!(w.resolve(0), Err(ReportError::EmptyWindow { start: 5, end: 5 }));
    }
}
