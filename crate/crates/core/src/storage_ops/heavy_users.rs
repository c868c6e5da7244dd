use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::filling::compute_filling_rates;
use super::StorageOpsError;
use crate::fabric::{CatalogueEntry, InfoSnapshot};
use crate::types::{format_bytes, Bytes, ResourceId};

/// One message per listed owner; placeholders are substituted verbatim.
pub const NOTIFICATION_TEMPLATE: &str = "\
To: {owner}
Subject: storage element {se} is {rate} full

Dear {owner},

The storage element {se} is {rate} full. You currently own {bytes} on it.
Please remove the files you no longer need or move them to another storage element.

VO user support
";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeavyUserEntry {
    pub storage_id: ResourceId,
    pub owner: String,
    pub bytes_owned: Bytes,
    /// 1-based.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeavyUserScan {
    pub storage_id: ResourceId,
    pub rate: f64,
    pub entries: Vec<HeavyUserEntry>,
    pub notification: String,
}

/// Bytes registered on `storage`, per owner.
pub fn owner_totals(catalogue: &[CatalogueEntry], storage: &ResourceId) -> BTreeMap<String, Bytes> {
    let mut totals = BTreeMap::new();
    for e in catalogue {
        let n = e.replicas.iter().filter(|r| &r.storage == storage).count() as Bytes;
        if n > 0 {
            *totals.entry(e.owner.clone()).or_insert(0) += n * e.size;
        }
    }
    totals
}

pub fn render_notification(se: &ResourceId, rate: f64, owner: &str, bytes: Bytes) -> String {
    NOTIFICATION_TEMPLATE
        .replace("{se}", se.as_str())
        .replace("{rate}", &format!("{:.1}%", rate * 100.0))
        .replace("{owner}", owner)
        .replace("{bytes}", &format_bytes(bytes))
}

/// Storage elements whose published filling rate is strictly above
/// `threshold`, with their `top_n` heaviest owners. Suspect entries have no
/// rate and are never reported.
pub fn scan_heavy_users(
    snapshot: &InfoSnapshot,
    catalogue: &[CatalogueEntry],
    threshold: f64,
    top_n: usize,
) -> Result<Vec<HeavyUserScan>, StorageOpsError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(StorageOpsError::ThresholdOutOfRange(threshold));
    }
    if top_n == 0 {
        return Err(StorageOpsError::ZeroTopN);
    }
    let report = compute_filling_rates(snapshot);
    let scans = report
        .entries
        .iter()
        .filter_map(|e| e.rate.filter(|r| *r > threshold).map(|r| (e, r)))
        .map(|(e, rate)| {
            let mut owners: Vec<(String, Bytes)> =
                owner_totals(catalogue, &e.storage_id).into_iter().collect();
            owners.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            owners.truncate(top_n);
            let entries: Vec<HeavyUserEntry> = owners
                .into_iter()
                .enumerate()
                .map(|(i, (owner, bytes))| HeavyUserEntry {
                    storage_id: e.storage_id.clone(),
                    owner,
                    bytes_owned: bytes,
                    rank: i + 1,
                })
                .collect();
            let notification = entries
                .iter()
                .map(|u| render_notification(&e.storage_id, rate, &u.owner, u.bytes_owned))
                .collect::<Vec<_>>()
                .join("\n");
            HeavyUserScan {
                storage_id: e.storage_id.clone(),
                rate,
                entries,
                notification,
            }
        })
        .collect();
    Ok(scans)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fabric::{InfoRecord, Replica};
    use crate::types::ResourceKind;

    const GB: u64 = 1_000_000_000;

    fn snapshot(used: i64, free: i64) -> InfoSnapshot {
        InfoSnapshot {
            taken_at: 0,
            records: vec![InfoRecord {
                resource_id: "SE-1".into(),
                kind: ResourceKind::SE,
                heartbeat: 0,
                used_bytes: Some(used),
                free_bytes: Some(free),
                waiting: None,
                running: None,
            }],
        }
    }

    fn entry(lfn: &str, owner: &str, size: Bytes) -> CatalogueEntry {
        CatalogueEntry {
            lfn: lfn.into(),
            owner: owner.into(),
            size,
            replicas: vec![Replica {
                storage: "SE-1".into(),
                pfn: format!("pfn-{lfn}"),
            }],
        }
    }

    #[test]
    fn threshold_is_strict() {
        let cat = [entry("/a", "u1", 80 * GB)];
        let at = snapshot(80 * GB as i64, 20 * GB as i64);
        assert!(scan_heavy_users(&at, &cat, 0.80, 5).unwrap().is_empty());
        let above = snapshot(80 * GB as i64 + 1, 20 * GB as i64 - 1);
        assert_eq!(scan_heavy_users(&above, &cat, 0.80, 5).unwrap().len(), 1);
    }

    #[test]
    fn ranking_and_golden_notification() {
        let cat = [
            entry("/a", "u1", 40 * GB),
            entry("/b", "u2", 30 * GB),
            entry("/c", "u1", 20 * GB),
        ];
        let scans = scan_heavy_users(&snapshot(95 * GB as i64, 5 * GB as i64), &cat, 0.8, 1).unwrap();
        assert_eq!(scans.len(), 1);
        let s = &scans[0];
        assert_eq!(
            s.entries,
            [HeavyUserEntry {
                storage_id: "SE-1".into(),
                owner: "u1".into(),
                bytes_owned: 60 * GB,
                rank: 1
            }]
        );
        assert_eq!(
            s.notification,
            "To: u1\n\
             Subject: storage element SE-1 is 95.0% full\n\
             \n\
             Dear u1,\n\
             \n\
             The storage element SE-1 is 95.0% full. You currently own 60.0 GB on it.\n\
             Please remove the files you no longer need or move them to another storage element.\n\
             \n\
             VO user support\n"
        );
    }

    #[test]
    fn argument_validation() {
        let snap = snapshot(1, 1);
        assert_eq!(
            scan_heavy_users(&snap, &[], 1.5, 1),
            Err(StorageOpsError::ThresholdOutOfRange(1.5))
        );
        assert_eq!(scan_heavy_users(&snap, &[], 0.5, 0), Err(StorageOpsError::ZeroTopN));
    }
}
