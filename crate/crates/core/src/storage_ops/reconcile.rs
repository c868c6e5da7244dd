use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::fabric::{CatalogueEntry, InventoryFile};
use crate::types::{Bytes, ResourceId, Timestamp};

/// A physical file no catalogue replica points at.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Zombie {
    pub storage_id: ResourceId,
    pub pfn: String,
    pub size: Bytes,
    pub owner: String,
}

/// A catalogue replica without a physical file.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Ghost {
    pub lfn: String,
    pub storage_id: ResourceId,
    pub pfn: String,
}

/// Zombies sorted by (storage, pfn); ghosts by (lfn, storage, pfn).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReconciliationReport {
    pub scanned_at: Timestamp,
    pub zombies: Vec<Zombie>,
    pub ghosts: Vec<Ghost>,
}

impl ReconciliationReport {
    pub fn is_consistent(&self) -> bool {
        self.zombies.is_empty() && self.ghosts.is_empty()
    }

    pub fn zombies_on<'a>(&'a self, storage: &'a ResourceId) -> impl Iterator<Item = &'a Zombie> {
        self.zombies.iter().filter(move |z| &z.storage_id == storage)
    }
}

/// Replicas registered on a storage element missing from `inventories`
/// count as ghosts.
pub fn reconcile(
    catalogue: &[CatalogueEntry],
    inventories: &BTreeMap<ResourceId, BTreeSet<InventoryFile>>,
    scanned_at: Timestamp,
) -> ReconciliationReport {
    let registered: HashSet<(&str, &str)> = catalogue
        .iter()
        .flat_map(|e| e.replicas.iter())
        .map(|r| (r.storage.as_str(), r.pfn.as_str()))
        .collect();
    let physical: HashSet<(&str, &str)> = inventories
        .iter()
        .flat_map(|(s, files)| files.iter().map(move |f| (s.as_str(), f.pfn.as_str())))
        .collect();

    let mut zombies: Vec<Zombie> = inventories
        .iter()
        .flat_map(|(s, files)| files.iter().map(move |f| (s, f)))
        .filter(|(s, f)| !registered.contains(&(s.as_str(), f.pfn.as_str())))
        .map(|(s, f)| Zombie {
            storage_id: s.clone(),
            pfn: f.pfn.clone(),
            size: f.size,
            owner: f.owner.clone(),
        })
        .collect();
    let mut ghosts: Vec<Ghost> = catalogue
        .iter()
        .flat_map(|e| e.replicas.iter().map(move |r| (e, r)))
        .filter(|(_, r)| !physical.contains(&(r.storage.as_str(), r.pfn.as_str())))
        .map(|(e, r)| Ghost {
            lfn: e.lfn.clone(),
            storage_id: r.storage.clone(),
            pfn: r.pfn.clone(),
        })
        .collect();
    zombies.sort();
    zombies.dedup();
    ghosts.sort();
    ghosts.dedup();
    ReconciliationReport {
        scanned_at,
        zombies,
        ghosts,
    }
}
