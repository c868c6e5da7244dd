use std::cmp::Ordering;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::fabric::InfoSnapshot;
use crate::types::{ResourceId, ResourceKind, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DataQuality {
    Ok,
    Suspect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillingEntry {
    pub storage_id: ResourceId,
    pub published_used: Option<i64>,
    pub published_free: Option<i64>,
    /// `used / (used + free)`; absent for suspect entries.
    pub rate: Option<f64>,
    pub data_quality: DataQuality,
}

/// Filling rates computed from published figures, one entry per storage
/// record in the snapshot, in id order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillingRateReport {
    pub taken_at: Timestamp,
    pub entries: Vec<FillingEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SortMode {
    /// Fullest first.
    #[default]
    Rate,
    Id,
    /// Most free space first.
    Free,
}

impl FromStr for SortMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rate" => Ok(SortMode::Rate),
            "id" => Ok(SortMode::Id),
            "free" => Ok(SortMode::Free),
            other => Err(format!("unknown sort mode {other:?} (expected rate, id or free)")),
        }
    }
}

pub fn compute_filling_rates(snapshot: &InfoSnapshot) -> FillingRateReport {
    let mut entries: Vec<FillingEntry> = snapshot
        .records
        .iter()
        .filter(|r| r.kind == ResourceKind::SE)
        .map(|r| {
            let rate = match (r.used_bytes, r.free_bytes) {
                (Some(used), Some(free)) if used >= 0 && free >= 0 && used + free > 0 => {
                    Some(used as f64 / (used + free) as f64)
                }
                _ => None,
            };
            FillingEntry {
                storage_id: r.resource_id.clone(),
                published_used: r.used_bytes,
                published_free: r.free_bytes,
                rate,
                data_quality: if rate.is_some() {
                    DataQuality::Ok
                } else {
                    DataQuality::Suspect
                },
            }
        })
        .collect();
    entries.sort_by(|a, b| a.storage_id.cmp(&b.storage_id));
    FillingRateReport {
        taken_at: snapshot.taken_at,
        entries,
    }
}

impl FillingRateReport {
    pub fn entry(&self, storage_id: &str) -> Option<&FillingEntry> {
        self.entries
            .iter()
            .find(|e| e.storage_id.as_str() == storage_id)
    }

    pub fn suspect_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.data_quality == DataQuality::Suspect)
            .count()
    }

    /// Entries in the requested order. Suspect entries sort last under
    /// `Rate` and `Free`; ties fall back to id.
    pub fn sorted(&self, mode: SortMode) -> Vec<&FillingEntry> {
        let mut out: Vec<&FillingEntry> = self.entries.iter().collect();
        match mode {
            SortMode::Id => out.sort_by(|a, b| a.storage_id.cmp(&b.storage_id)),
            SortMode::Rate => out.sort_by(|a, b| {
                desc_some_first(a.rate, b.rate).then_with(|| a.storage_id.cmp(&b.storage_id))
            }),
            SortMode::Free => out.sort_by(|a, b| {
                let fa = a.rate.and(a.published_free).map(|v| v as f64);
                let fb = b.rate.and(b.published_free).map(|v| v as f64);
                desc_some_first(fa, fb).then_with(|| a.storage_id.cmp(&b.storage_id))
            }),
        }
        out
    }

    pub fn to_csv(&self, mode: SortMode) -> String {
        let mut out = String::from("storage_id,published_used,published_free,rate,quality\n");
        for e in self.sorted(mode) {
            out.push_str(&format!(
                "{},{},{},{},{:?}\n",
                e.storage_id,
                opt(e.published_used),
                opt(e.published_free),
                e.rate.map(|r| r.to_string()).unwrap_or_default(),
                e.data_quality
            ));
        }
        out
    }

    /// Same content as the JSON report, with entries in `mode` order.
    pub fn sorted_report(&self, mode: SortMode) -> FillingRateReport {
        FillingRateReport {
            taken_at: self.taken_at,
            entries: self.sorted(mode).into_iter().cloned().collect(),
        }
    }
}

fn opt(v: Option<i64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn desc_some_first(a: Option<f64>, b: Option<f64>) -> Ordering {
    match (a, b) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
}
