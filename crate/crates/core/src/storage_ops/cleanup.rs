use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::fabric::{CatalogueEntry, Fabric};
use crate::types::Bytes;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanupItem {
    pub lfn: String,
    pub owner: String,
    pub replicas: usize,
    /// Size times replica count.
    pub bytes: Bytes,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CleanupReport {
    pub items: Vec<CleanupItem>,
    pub bytes_reclaimable: Bytes,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CleanupOutcome {
    pub deleted: Vec<String>,
    /// (lfn, reason) for entries left in place.
    pub failed: Vec<(String, String)>,
    pub bytes_freed: Bytes,
}

/// Entries owned by users outside `members`, in lfn order. Report only.
pub fn cleanup_departed(catalogue: &[CatalogueEntry], members: &BTreeSet<String>) -> CleanupReport {
    let mut items: Vec<CleanupItem> = catalogue
        .iter()
        .filter(|e| !members.contains(&e.owner))
        .map(|e| CleanupItem {
            lfn: e.lfn.clone(),
            owner: e.owner.clone(),
            replicas: e.replicas.len(),
            bytes: e.size * e.replicas.len() as Bytes,
        })
        .collect();
    items.sort_by(|a, b| a.lfn.cmp(&b.lfn));
    CleanupReport {
        bytes_reclaimable: items.iter().map(|i| i.bytes).sum(),
        items,
    }
}

/// Deletes each listed entry atomically; failures are recorded and skipped.
pub fn execute_cleanup(fabric: &mut Fabric, report: &CleanupReport) -> CleanupOutcome {
    let mut out = CleanupOutcome::default();
    for item in &report.items {
        match fabric.delete_entry(&item.lfn) {
            Ok(freed) => {
                out.deleted.push(item.lfn.clone());
                out.bytes_freed += freed;
            }
            Err(e) => out.failed.push((item.lfn.clone(), e.to_string())),
        }
    }
    out
}
