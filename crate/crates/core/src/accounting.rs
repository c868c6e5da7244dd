//! Usage accounting: CPU-hour aggregation with a completeness figure,
//! waiting/running queue ratios and storage-usage trends.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fabric::InfoSnapshot;
use crate::storage_ops::{compute_filling_rates, DataQuality};
use crate::topology::VoResourceSet;
use crate::types::{Bytes, ResourceId, ResourceKind, Timestamp, Window};

pub const UNATTRIBUTED: &str = "(unattributed)";
pub const WHOLE_VO: &str = "(all)";

#[derive(Debug, Error)]
pub enum AccountingError {
    #[error("usage CSV: {0}")]
    Csv(#[from] csv::Error),
}

/// Usage over the half-open period `[t0, t1)`. `user` is absent when the
/// reporting site withholds identities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageRecord {
    #[serde(default)]
    pub user: Option<String>,
    pub site: String,
    #[serde(default)]
    pub subgroup: Option<String>,
    pub t0: Timestamp,
    pub t1: Timestamp,
    pub cpu_hours: f64,
    pub jobs: u64,
}

impl UsageRecord {
    fn problem(&self) -> Option<&'static str> {
        if !self.cpu_hours.is_finite() {
            Some("non-finite cpu")
        } else if self.cpu_hours < 0.0 {
            Some("negative cpu")
        } else if self.t0 >= self.t1 {
            Some("empty period")
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    /// Position in the submitted batch.
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IngestOutcome {
    pub accepted: usize,
    pub rejected: Vec<Rejection>,
}

/// Append-only store of accepted usage records.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UsageLedger {
    records: Vec<UsageRecord>,
    rejected_total: usize,
}

impl UsageLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn ingest_usage(&mut self, batch: impl IntoIterator<Item = UsageRecord>) -> IngestOutcome {
        let mut out = IngestOutcome::default();
        for (index, rec) in batch.into_iter().enumerate() {
            match rec.problem() {
                Some(reason) => out.rejected.push(Rejection {
                    index,
                    reason: reason.to_owned(),
                }),
                None => {
                    self.records.push(rec);
                    out.accepted += 1;
                }
            }
        }
        self.rejected_total += out.rejected.len();
        out
    }

    pub fn records(&self) -> &[UsageRecord] {
        &self.records
    }

    pub fn rejected_total(&self) -> usize {
        self.rejected_total
    }

    /// Accepted records carrying a user identity.
    pub fn attributed(&self) -> usize {
        self.records.iter().filter(|r| r.user.is_some()).count()
    }
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    user: String,
    site: String,
    subgroup: String,
    t0: Timestamp,
    t1: Timestamp,
    cpu_hours: f64,
    jobs: u64,
}

/// Reads `user,site,subgroup,t0,t1,cpu_hours,jobs` rows; empty user or
/// subgroup cells mean absent. Invariants are checked at ingestion, not here.
pub fn parse_usage_csv(reader: impl Read) -> Result<Vec<UsageRecord>, AccountingError> {
    let non_empty = |s: String| {
        let t = s.trim();
        (!t.is_empty()).then(|| t.to_owned())
    };
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader)
        .deserialize::<CsvRow>()
        .map(|row| {
            let row = row?;
            Ok(UsageRecord {
                user: non_empty(row.user),
                site: row.site,
                subgroup: non_empty(row.subgroup),
                t0: row.t0,
                t1: row.t1,
                cpu_hours: row.cpu_hours,
                jobs: row.jobs,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum GroupBy {
    User,
    Site,
    Subgroup,
    #[default]
    WholeVO,
}

impl std::str::FromStr for GroupBy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "user" => Ok(GroupBy::User),
            "site" => Ok(GroupBy::Site),
            "subgroup" => Ok(GroupBy::Subgroup),
            "vo" | "wholevo" | "all" => Ok(GroupBy::WholeVO),
            other => Err(format!("unknown grouping {other:?} (expected user, site, subgroup or vo)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountingRow {
    pub key: String,
    pub cpu_hours: f64,
    /// Pro-rata share, hence fractional.
    pub jobs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountingReport {
    pub window: Window,
    pub group_by: GroupBy,
    /// Descending by cpu_hours, then by key.
    pub rows: Vec<AccountingRow>,
    /// Records overlapping the window.
    pub records: usize,
    /// Share of those records that carry a user identity; 1 when there are none.
    pub completeness: f64,
}

impl AccountingReport {
    pub fn total_cpu_hours(&self) -> f64 {
        self.rows.iter().map(|r| r.cpu_hours).sum()
    }

    pub fn row(&self, key: &str) -> Option<&AccountingRow> {
        self.rows.iter().find(|r| r.key == key)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("group,cpu_hours,jobs\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", csv_cell(&r.key), r.cpu_hours, r.jobs));
        }
        out
    }
}

fn csv_cell(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// Aggregates records over `window`. A record straddling the window
/// contributes the fraction of its period that lies inside.
pub fn aggregate(records: &[UsageRecord], window: &Window, group_by: GroupBy) -> AccountingReport {
    let mut groups: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    let mut overlapping = 0usize;
    let mut attributed = 0usize;
    for r in records {
        let overlap = window.overlap(r.t0, r.t1);
        if overlap == 0 || r.t1 <= r.t0 {
            continue;
        }
        overlapping += 1;
        if r.user.is_some() {
            attributed += 1;
        }
        let share = overlap as f64 / (r.t1 - r.t0) as f64;
        let key = match group_by {
            GroupBy::User => r.user.clone().unwrap_or_else(|| UNATTRIBUTED.to_owned()),
            GroupBy::Site => r.site.clone(),
            GroupBy::Subgroup => r.subgroup.clone().unwrap_or_else(|| UNATTRIBUTED.to_owned()),
            GroupBy::WholeVO => WHOLE_VO.to_owned(),
        };
        let g = groups.entry(key).or_insert((0.0, 0.0));
        g.0 += r.cpu_hours * share;
        g.1 += r.jobs as f64 * share;
    }
    let mut rows: Vec<AccountingRow> = groups
        .into_iter()
        .map(|(key, (cpu_hours, jobs))| AccountingRow {
            key,
            cpu_hours,
            jobs,
        })
        .collect();
    rows.sort_by(|a, b| b.cpu_hours.total_cmp(&a.cpu_hours).then_with(|| a.key.cmp(&b.key)));
    AccountingReport {
        window: *window,
        group_by,
        rows,
        records: overlapping,
        completeness: if overlapping == 0 {
            1.0
        } else {
            attributed as f64 / overlapping as f64
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueSample {
    pub at: Timestamp,
    pub compute_id: ResourceId,
    pub waiting: u64,
    pub running: u64,
}

/// Queue samples for every compute record of a published snapshot. Records
/// with missing or negative counts are skipped.
pub fn queue_samples(snapshot: &InfoSnapshot) -> Vec<QueueSample> {
    snapshot
        .records
        .iter()
        .filter(|r| r.kind == ResourceKind::CE)
        .filter_map(|r| {
            Some(QueueSample {
                at: snapshot.taken_at,
                compute_id: r.resource_id.clone(),
                waiting: u64::try_from(r.waiting?).ok()?,
                running: u64::try_from(r.running?).ok()?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value")]
pub enum QueueRatio {
    Defined(f64),
    /// No in-window sample, or nothing running.
    Undefined,
}

impl QueueRatio {
    pub fn value(self) -> Option<f64> {
        match self {
            QueueRatio::Defined(v) => Some(v),
            QueueRatio::Undefined => None,
        }
    }
}

impl std::fmt::Display for QueueRatio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            QueueRatio::Defined(v) => write!(f, "{v}"),
            QueueRatio::Undefined => f.write_str("undefined"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RatioMode {
    /// Σ waiting / Σ running.
    #[default]
    SumOfCounts,
    /// Mean of per-sample ratios; samples with nothing running are skipped.
    MeanOfRatios,
}

pub fn waiting_running_ratio(samples: &[QueueSample], window: &Window, mode: RatioMode) -> QueueRatio {
    let inside = samples.iter().filter(|s| window.contains(s.at));
    match mode {
        RatioMode::SumOfCounts => {
            let (w, r) = inside.fold((0u128, 0u128), |(w, r), s| {
                (w + s.waiting as u128, r + s.running as u128)
            });
            if r == 0 {
                QueueRatio::Undefined
            } else {
                QueueRatio::Defined(w as f64 / r as f64)
            }
        }
        RatioMode::MeanOfRatios => {
            let ratios: Vec<f64> = inside
                .filter(|s| s.running > 0)
                .map(|s| s.waiting as f64 / s.running as f64)
                .collect();
            if ratios.is_empty() {
                QueueRatio::Undefined
            } else {
                QueueRatio::Defined(ratios.iter().sum::<f64>() / ratios.len() as f64)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrendPoint {
    pub at: Timestamp,
    pub total_used: Bytes,
    /// Published used plus free.
    pub total_capacity: Bytes,
    pub suspect_count: usize,
}

/// One point per snapshot taken inside `window` (all snapshots when `None`).
/// Only storage elements of the paired VO set count; suspect entries are
/// left out of the totals.
pub fn storage_trend(
    points: &[(InfoSnapshot, VoResourceSet)],
    window: Option<&Window>,
) -> Vec<TrendPoint> {
    points
        .iter()
        .filter(|(s, _)| window.is_none_or(|w| w.contains(s.taken_at)))
        .map(|(snapshot, vo)| {
            let members: BTreeSet<ResourceId> = vo.ids_of_kind(ResourceKind::SE);
            let report = compute_filling_rates(snapshot);
            let mut point = TrendPoint {
                at: snapshot.taken_at,
                total_used: 0,
                total_capacity: 0,
                suspect_count: 0,
            };
            for e in report.entries.iter().filter(|e| members.contains(&e.storage_id)) {
                match (e.data_quality, e.published_used, e.published_free) {
                    (DataQuality::Ok, Some(u), Some(f)) => {
                        point.total_used += u as Bytes;
                        point.total_capacity += (u + f) as Bytes;
                    }
                    _ => point.suspect_count += 1,
                }
            }
            point
        })
        .collect()
}
