//! Simulated grid fabric.
//!
//! Holds the ground truth for storage elements, computing elements, workload
//! managers, the file catalogue and the VOMS/catalogue servers, plus a
//! separately controllable *published* view of each resource. Publication
//! faults corrupt only what [`Fabric::publish_info`] reports; the ground truth
//! is never touched by them.
//!
//! All mutation goes through `&mut Fabric`, so a single owner serializes every
//! command. Snapshots are plain values and can be shared freely.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::types::{Bytes, ResourceId, ResourceKind, Timestamp};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FabricError {
    #[error("duplicate resource id {0}")]
    DuplicateId(ResourceId),
    #[error("preloaded files on {storage} exceed its capacity")]
    FileExceedsCapacity { storage: ResourceId },
    #[error("unknown resource {0}")]
    UnknownResource(ResourceId),
    #[error("{0} is not a storage element")]
    NotStorage(ResourceId),
    #[error("StorageFull: {storage} has {free} bytes free, {requested} requested")]
    StorageFull {
        storage: ResourceId,
        requested: Bytes,
        free: Bytes,
    },
    #[error("{0} is unavailable")]
    Unavailable(ResourceId),
    #[error("cannot advance the clock by a negative amount ({0} minutes)")]
    NegativeAdvance(i64),
    #[error("invalid fault: {0}")]
    InvalidFault(String),
    #[error("fault {kind:?} does not apply to {resource}")]
    FaultNotApplicable { resource: ResourceId, kind: FaultKind },
    #[error("{lfn} is owned by {expected}, not {found}")]
    OwnerMismatch {
        lfn: String,
        expected: String,
        found: String,
    },
    #[error("{lfn} already has a replica on {storage}")]
    DuplicateReplica { lfn: String, storage: ResourceId },
    #[error("no catalogue entry for {0}")]
    UnknownEntry(String),
    #[error("no replica of {lfn} on {storage}")]
    NoSuchReplica { lfn: String, storage: ResourceId },
    #[error("{0} has a single replica")]
    LastReplica(String),
    #[error("replica of {lfn} on {storage} is already inconsistent")]
    AlreadyInconsistent { lfn: String, storage: ResourceId },
    #[error("replicas of {lfn} are {expected} bytes, not {found}")]
    SizeMismatch {
        lfn: String,
        expected: Bytes,
        found: Bytes,
    },
}

pub type Result<T, E = FabricError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum NodeState {
    #[default]
    Up,
    Down,
    Degraded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FaultKind {
    FullReportsFree,
    OverstateFreeSpace,
    UnderreportUsed,
    InvalidJobCounts,
    StaleRecord,
    Unpublished,
}

impl FaultKind {
    fn applies_to(self, kind: ResourceKind) -> bool {
        match self {
            FaultKind::FullReportsFree
            | FaultKind::OverstateFreeSpace
            | FaultKind::UnderreportUsed => kind == ResourceKind::SE,
            FaultKind::InvalidJobCounts => kind == ResourceKind::CE,
            FaultKind::StaleRecord | FaultKind::Unpublished => true,
        }
    }
}

/// A publication fault. `magnitude` is an absolute byte count for
/// `FullReportsFree` and a fraction for the scaling kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub kind: FaultKind,
    #[serde(default)]
    pub magnitude: f64,
    #[serde(default)]
    pub since: Timestamp,
}

impl FaultSpec {
    pub fn new(kind: FaultKind, magnitude: f64, since: Timestamp) -> Self {
        Self {
            kind,
            magnitude,
            since,
        }
    }

    fn validate(&self) -> Result<()> {
        if !self.magnitude.is_finite() || self.magnitude < 0.0 {
            return Err(FabricError::InvalidFault(format!(
                "magnitude must be a finite non-negative number, got {}",
                self.magnitude
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhysicalFile {
    pub size: Bytes,
    pub owner: String,
    pub created: Timestamp,
}

/// One row of a physical storage listing.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InventoryFile {
    pub pfn: String,
    pub size: Bytes,
    pub owner: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Replica {
    pub storage: ResourceId,
    pub pfn: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogueEntry {
    pub lfn: String,
    pub owner: String,
    pub size: Bytes,
    pub replicas: Vec<Replica>,
}

impl CatalogueEntry {
    pub fn replica_on(&self, storage: &ResourceId) -> Option<&Replica> {
        self.replicas.iter().find(|r| &r.storage == storage)
    }
}

#[derive(Debug, Clone, Default)]
struct Publication {
    fault: Option<FaultSpec>,
    frozen: Option<InfoRecord>,
}

#[derive(Debug, Clone)]
pub struct StorageNode {
    pub id: ResourceId,
    pub site: String,
    pub capacity: Bytes,
    pub files: BTreeMap<String, PhysicalFile>,
    pub state: NodeState,
    publication: Publication,
}

impl StorageNode {
    pub fn used(&self) -> Bytes {
        self.files.values().map(|f| f.size).sum()
    }

    pub fn free(&self) -> Bytes {
        self.capacity.saturating_sub(self.used())
    }

    pub fn publication_fault(&self) -> Option<&FaultSpec> {
        self.publication.fault.as_ref()
    }
}

#[derive(Debug, Clone)]
pub struct ComputeNode {
    pub id: ResourceId,
    pub site: String,
    pub waiting: u64,
    pub running: u64,
    pub state: NodeState,
    publication: Publication,
}

impl ComputeNode {
    pub fn publication_fault(&self) -> Option<&FaultSpec> {
        self.publication.fault.as_ref()
    }
}

/// WMS, catalogue and VOMS servers: only their up/down state matters.
#[derive(Debug, Clone)]
pub struct ServiceNode {
    pub id: ResourceId,
    pub site: String,
    pub kind: ResourceKind,
    pub state: NodeState,
    publication: Publication,
}

/// Published view of one resource. Storage records carry `used_bytes` and
/// `free_bytes`, compute records carry `waiting` and `running`. Fields are
/// signed and optional because external snapshots may hold garbage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfoRecord {
    pub resource_id: ResourceId,
    pub kind: ResourceKind,
    pub heartbeat: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub used_bytes: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub free_bytes: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waiting: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub running: Option<i64>,
}

impl InfoRecord {
    fn bare(resource_id: ResourceId, kind: ResourceKind, heartbeat: Timestamp) -> Self {
        Self {
            resource_id,
            kind,
            heartbeat,
            used_bytes: None,
            free_bytes: None,
            waiting: None,
            running: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfoSnapshot {
    pub taken_at: Timestamp,
    pub records: Vec<InfoRecord>,
}

impl InfoSnapshot {
    pub fn record(&self, id: &str) -> Option<&InfoRecord> {
        self.records.iter().find(|r| r.resource_id.as_str() == id)
    }
}

// ---------------------------------------------------------------------------
// Fabric description (JSON scenario input)

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FabricSpec {
    /// Carried for fixture generators; the fabric itself has no stochastic behaviour.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub storage: Vec<StorageSpec>,
    #[serde(default)]
    pub compute: Vec<ComputeSpec>,
    #[serde(default)]
    pub workload: Vec<NodeSpec>,
    #[serde(default)]
    pub services: Vec<ServiceSpec>,
    #[serde(default)]
    pub events: Vec<ScenarioEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageSpec {
    pub id: ResourceId,
    #[serde(default)]
    pub site: String,
    pub capacity: Bytes,
    #[serde(default)]
    pub files: Vec<PreloadFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreloadFile {
    pub lfn: String,
    pub owner: String,
    pub size: Bytes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComputeSpec {
    pub id: ResourceId,
    #[serde(default)]
    pub site: String,
    #[serde(default)]
    pub waiting: u64,
    #[serde(default)]
    pub running: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: ResourceId,
    #[serde(default)]
    pub site: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ServiceKind {
    Catalogue,
    VOMS,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceSpec {
    pub id: ResourceId,
    pub kind: ServiceKind,
    #[serde(default)]
    pub site: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEvent {
    pub at: Timestamp,
    #[serde(flatten)]
    pub action: EventAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action")]
pub enum EventAction {
    SetState {
        resource: ResourceId,
        state: NodeState,
    },
    InjectFault {
        resource: ResourceId,
        fault: FaultSpec,
    },
    ClearFault {
        resource: ResourceId,
    },
    SetQueue {
        resource: ResourceId,
        waiting: u64,
        running: u64,
    },
}

impl EventAction {
    fn resource(&self) -> &ResourceId {
        match self {
            EventAction::SetState { resource, .. }
            | EventAction::InjectFault { resource, .. }
            | EventAction::ClearFault { resource }
            | EventAction::SetQueue { resource, .. } => resource,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorruptionMode {
    MakeZombie,
    MakeGhost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CorruptionTarget {
    /// An existing consistent (entry, replica) pair.
    Replica { lfn: String, storage: ResourceId },
    /// Fabricate a fresh inconsistent file on `storage`.
    Synthesize {
        storage: ResourceId,
        owner: String,
        size: Bytes,
    },
}

/// What a corruption produced, for tests and scenario logs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corruption {
    pub lfn: String,
    pub storage: ResourceId,
    pub pfn: String,
}

/// Deterministic physical file name for a logical file stored on `storage`.
pub fn physical_name(lfn: &str, storage: &ResourceId) -> String {
    let mut hasher = Sha256::new();
    hasher.update(lfn.as_bytes());
    hasher.update([0u8]);
    hasher.update(storage.as_str().as_bytes());
    let digest = hasher.finalize();
    format!("pfn-{}", &hex::encode(digest)[..32])
}

#[derive(Debug, Clone)]
struct Pending {
    seq: u64,
    event: ScenarioEvent,
}

#[derive(Debug, Clone)]
pub struct Fabric {
    now: Timestamp,
    seed: Option<u64>,
    storage: BTreeMap<ResourceId, StorageNode>,
    compute: BTreeMap<ResourceId, ComputeNode>,
    services: BTreeMap<ResourceId, ServiceNode>,
    catalogue: BTreeMap<String, CatalogueEntry>,
    pending: Vec<Pending>,
    next_seq: u64,
    synthetic: u64,
}

impl Fabric {
    /// Builds a fabric from its description. All nodes start `Up` without
    /// faults; preloaded files are registered in the catalogue.
    pub fn new(spec: &FabricSpec) -> Result<Self> {
        let mut fabric = Fabric {
            now: 0,
            seed: spec.seed,
            storage: BTreeMap::new(),
            compute: BTreeMap::new(),
            services: BTreeMap::new(),
            catalogue: BTreeMap::new(),
            pending: Vec::new(),
            next_seq: 0,
            synthetic: 0,
        };

        let mut seen = BTreeSet::new();
        let ids = spec
            .storage
            .iter()
            .map(|s| &s.id)
            .chain(spec.compute.iter().map(|c| &c.id))
            .chain(spec.workload.iter().map(|w| &w.id))
            .chain(spec.services.iter().map(|s| &s.id));
        for id in ids {
            if !seen.insert(id.clone()) {
                return Err(FabricError::DuplicateId(id.clone()));
            }
        }

        for s in &spec.storage {
            let total: Bytes = s.files.iter().map(|f| f.size).sum();
            if total > s.capacity {
                return Err(FabricError::FileExceedsCapacity {
                    storage: s.id.clone(),
                });
            }
            fabric.storage.insert(
                s.id.clone(),
                StorageNode {
                    id: s.id.clone(),
                    site: s.site.clone(),
                    capacity: s.capacity,
                    files: BTreeMap::new(),
                    state: NodeState::Up,
                    publication: Publication::default(),
                },
            );
        }
        for c in &spec.compute {
            fabric.compute.insert(
                c.id.clone(),
                ComputeNode {
                    id: c.id.clone(),
                    site: c.site.clone(),
                    waiting: c.waiting,
                    running: c.running,
                    state: NodeState::Up,
                    publication: Publication::default(),
                },
            );
        }
        for w in &spec.workload {
            fabric.services.insert(
                w.id.clone(),
                ServiceNode {
                    id: w.id.clone(),
                    site: w.site.clone(),
                    kind: ResourceKind::WMS,
                    state: NodeState::Up,
                    publication: Publication::default(),
                },
            );
        }
        for s in &spec.services {
            let kind = match s.kind {
                ServiceKind::Catalogue => ResourceKind::Catalogue,
                ServiceKind::VOMS => ResourceKind::VOMS,
            };
            fabric.services.insert(
                s.id.clone(),
                ServiceNode {
                    id: s.id.clone(),
                    site: s.site.clone(),
                    kind,
                    state: NodeState::Up,
                    publication: Publication::default(),
                },
            );
        }

        for s in &spec.storage {
            for f in &s.files {
                fabric.write_file(&s.id, &f.owner, &f.lfn, f.size)?;
            }
        }
        for event in &spec.events {
            fabric.schedule_event(event.clone())?;
        }
        Ok(fabric)
    }

    pub fn now(&self) -> Timestamp {
        self.now
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn storage_nodes(&self) -> impl Iterator<Item = &StorageNode> {
        self.storage.values()
    }

    pub fn compute_nodes(&self) -> impl Iterator<Item = &ComputeNode> {
        self.compute.values()
    }

    /// WMS, catalogue and VOMS servers.
    pub fn service_nodes(&self) -> impl Iterator<Item = &ServiceNode> {
        self.services.values()
    }

    pub fn storage(&self, id: &str) -> Option<&StorageNode> {
        self.storage.get(id)
    }

    pub fn compute(&self, id: &str) -> Option<&ComputeNode> {
        self.compute.get(id)
    }

    pub fn service(&self, id: &str) -> Option<&ServiceNode> {
        self.services.get(id)
    }

    pub fn resource_kind(&self, id: &str) -> Option<ResourceKind> {
        if self.storage.contains_key(id) {
            Some(ResourceKind::SE)
        } else if self.compute.contains_key(id) {
            Some(ResourceKind::CE)
        } else {
            self.services.get(id).map(|s| s.kind)
        }
    }

    pub fn node_state(&self, id: &str) -> Option<NodeState> {
        self.storage
            .get(id)
            .map(|n| n.state)
            .or_else(|| self.compute.get(id).map(|n| n.state))
            .or_else(|| self.services.get(id).map(|n| n.state))
    }

    /// Every resource id with its kind and site, in id order.
    pub fn resources(&self) -> Vec<(ResourceId, ResourceKind, String)> {
        let mut out: Vec<_> = self
            .storage
            .values()
            .map(|n| (n.id.clone(), ResourceKind::SE, n.site.clone()))
            .chain(
                self.compute
                    .values()
                    .map(|n| (n.id.clone(), ResourceKind::CE, n.site.clone())),
            )
            .chain(
                self.services
                    .values()
                    .map(|n| (n.id.clone(), n.kind, n.site.clone())),
            )
            .collect();
        out.sort();
        out
    }

    pub fn catalogue(&self) -> impl Iterator<Item = &CatalogueEntry> {
        self.catalogue.values()
    }

    pub fn catalogue_entries(&self) -> Vec<CatalogueEntry> {
        self.catalogue.values().cloned().collect()
    }

    pub fn entry(&self, lfn: &str) -> Option<&CatalogueEntry> {
        self.catalogue.get(lfn)
    }

    /// Physical listing of every storage element.
    pub fn inventories(&self) -> BTreeMap<ResourceId, BTreeSet<InventoryFile>> {
        self.storage
            .values()
            .map(|n| (n.id.clone(), Self::inventory_of_node(n)))
            .collect()
    }

    pub fn inventory(&self, storage: &str) -> Option<BTreeSet<InventoryFile>> {
        self.storage.get(storage).map(Self::inventory_of_node)
    }

    fn inventory_of_node(n: &StorageNode) -> BTreeSet<InventoryFile> {
        n.files
            .iter()
            .map(|(pfn, f)| InventoryFile {
                pfn: pfn.clone(),
                size: f.size,
                owner: f.owner.clone(),
            })
            .collect()
    }

    /// Sum over catalogue entries of size times replica count.
    pub fn registered_bytes(&self) -> Bytes {
        self.catalogue
            .values()
            .map(|e| e.size * e.replicas.len() as Bytes)
            .sum()
    }

    // -- clock and scenario events -----------------------------------------

    /// Advances the logical clock, firing due events in (due time, insertion) order.
    pub fn advance_clock(&mut self, minutes: i64) -> Result<Timestamp> {
        if minutes < 0 {
            return Err(FabricError::NegativeAdvance(minutes));
        }
        let target = self.now + minutes as u64;
        self.pending
            .sort_by_key(|p| (p.event.at, p.seq));
        let split = self.pending.partition_point(|p| p.event.at <= target);
        let due: Vec<Pending> = self.pending.drain(..split).collect();
        for p in due {
            self.now = p.event.at.max(self.now);
            self.capture_stale();
            // Validated at schedule time; a resource never disappears.
            self.apply_action(&p.event.action)?;
            self.capture_stale();
        }
        self.now = target;
        self.capture_stale();
        Ok(self.now)
    }

    /// Queues an event; events already due are applied immediately.
    pub fn schedule_event(&mut self, event: ScenarioEvent) -> Result<()> {
        let resource = event.action.resource();
        let kind = self
            .resource_kind(resource.as_str())
            .ok_or_else(|| FabricError::UnknownResource(resource.clone()))?;
        if let EventAction::InjectFault { fault, .. } = &event.action {
            fault.validate()?;
            if !fault.kind.applies_to(kind) {
                return Err(FabricError::FaultNotApplicable {
                    resource: resource.clone(),
                    kind: fault.kind,
                });
            }
        }
        if event.at <= self.now {
            self.apply_action(&event.action)?;
            self.capture_stale();
        } else {
            self.pending.push(Pending {
                seq: self.next_seq,
                event,
            });
            self.next_seq += 1;
        }
        Ok(())
    }

    pub fn pending_events(&self) -> usize {
        self.pending.len()
    }

    pub fn apply_action(&mut self, action: &EventAction) -> Result<()> {
        match action {
            EventAction::SetState { resource, state } => self.set_state(resource, *state),
            EventAction::InjectFault { resource, fault } => self.inject_fault(resource, *fault),
            EventAction::ClearFault { resource } => self.clear_fault(resource),
            EventAction::SetQueue {
                resource,
                waiting,
                running,
            } => self.set_queue(resource, *waiting, *running),
        }
    }

    pub fn set_state(&mut self, id: &ResourceId, state: NodeState) -> Result<()> {
        if let Some(n) = self.storage.get_mut(id) {
            n.state = state;
        } else if let Some(n) = self.compute.get_mut(id) {
            n.state = state;
        } else if let Some(n) = self.services.get_mut(id) {
            n.state = state;
        } else {
            return Err(FabricError::UnknownResource(id.clone()));
        }
        Ok(())
    }

    pub fn set_queue(&mut self, id: &ResourceId, waiting: u64, running: u64) -> Result<()> {
        let node = self
            .compute
            .get_mut(id)
            .ok_or_else(|| FabricError::UnknownResource(id.clone()))?;
        node.waiting = waiting;
        node.running = running;
        Ok(())
    }

    // -- publication faults ------------------------------------------------

    /// Installs a publication fault, replacing any previous one. The fault is
    /// active once the clock reaches `fault.since`.
    pub fn inject_fault(&mut self, id: &ResourceId, fault: FaultSpec) -> Result<()> {
        fault.validate()?;
        let kind = self
            .resource_kind(id.as_str())
            .ok_or_else(|| FabricError::UnknownResource(id.clone()))?;
        if !fault.kind.applies_to(kind) {
            return Err(FabricError::FaultNotApplicable {
                resource: id.clone(),
                kind: fault.kind,
            });
        }
        let publication = self.publication_mut(id.as_str()).expect("kind resolved above");
        *publication = Publication {
            fault: Some(fault),
            frozen: None,
        };
        self.capture_stale();
        Ok(())
    }

    pub fn clear_fault(&mut self, id: &ResourceId) -> Result<()> {
        let publication = self
            .publication_mut(id.as_str())
            .ok_or_else(|| FabricError::UnknownResource(id.clone()))?;
        *publication = Publication::default();
        Ok(())
    }

    pub fn fault_of(&self, id: &str) -> Option<FaultSpec> {
        self.storage
            .get(id)
            .map(|n| &n.publication)
            .or_else(|| self.compute.get(id).map(|n| &n.publication))
            .or_else(|| self.services.get(id).map(|n| &n.publication))
            .and_then(|p| p.fault)
    }

    fn publication_mut(&mut self, id: &str) -> Option<&mut Publication> {
        if let Some(n) = self.storage.get_mut(id) {
            return Some(&mut n.publication);
        }
        if let Some(n) = self.compute.get_mut(id) {
            return Some(&mut n.publication);
        }
        self.services.get_mut(id).map(|n| &mut n.publication)
    }

    /// Freezes the record of every resource whose stale-record fault has
    /// become active. Truth only changes through commands, so capturing at the
    /// first command boundary after onset records the state as of onset.
    fn capture_stale(&mut self) {
        let now = self.now;
        let mut captures = Vec::new();
        let candidates = self
            .storage
            .values()
            .map(|n| (&n.id, &n.publication))
            .chain(self.compute.values().map(|n| (&n.id, &n.publication)))
            .chain(self.services.values().map(|n| (&n.id, &n.publication)));
        for (id, p) in candidates {
            if let Some(f) = p.fault {
                if f.kind == FaultKind::StaleRecord && f.since <= now && p.frozen.is_none() {
                    let mut rec = self.truth_record(id.as_str()).expect("node exists");
                    rec.heartbeat = f.since;
                    captures.push((id.clone(), rec));
                }
            }
        }
        for (id, rec) in captures {
            if let Some(p) = self.publication_mut(id.as_str()) {
                p.frozen = Some(rec);
            }
        }
    }

    fn truth_record(&self, id: &str) -> Option<InfoRecord> {
        if let Some(n) = self.storage.get(id) {
            let mut rec = InfoRecord::bare(n.id.clone(), ResourceKind::SE, self.now);
            rec.used_bytes = Some(n.used() as i64);
            rec.free_bytes = Some(n.free() as i64);
            return Some(rec);
        }
        if let Some(n) = self.compute.get(id) {
            let mut rec = InfoRecord::bare(n.id.clone(), ResourceKind::CE, self.now);
            rec.waiting = Some(n.waiting as i64);
            rec.running = Some(n.running as i64);
            return Some(rec);
        }
        self.services
            .get(id)
            .map(|n| InfoRecord::bare(n.id.clone(), n.kind, self.now))
    }

    fn published_record(&self, id: &str, publication: &Publication) -> Option<InfoRecord> {
        let truth = self.truth_record(id)?;
        let Some(fault) = publication.fault.filter(|f| f.since <= self.now) else {
            return Some(truth);
        };
        let m = fault.magnitude;
        let mut rec = truth;
        match fault.kind {
            FaultKind::FullReportsFree => {
                rec.free_bytes = Some((m.floor() as i64).max(1));
            }
            FaultKind::OverstateFreeSpace => {
                rec.free_bytes = rec.free_bytes.map(|v| (v as f64 * (1.0 + m)).floor() as i64);
            }
            FaultKind::UnderreportUsed => {
                rec.used_bytes = rec
                    .used_bytes
                    .map(|v| ((v as f64 * (1.0 - m)).floor() as i64).max(0));
            }
            FaultKind::InvalidJobCounts => {
                let scale = |v: i64| (v as f64 * (1.0 + m)).floor() as i64;
                rec.waiting = rec.waiting.map(scale);
                rec.running = rec.running.map(scale);
            }
            FaultKind::StaleRecord => {
                rec = publication.frozen.clone().unwrap_or_else(|| {
                    let mut r = rec;
                    r.heartbeat = fault.since;
                    r
                });
            }
            FaultKind::Unpublished => return None,
        }
        Some(rec)
    }

    /// What the information system publishes right now.
    pub fn publish_info(&self) -> InfoSnapshot {
        let mut records: Vec<InfoRecord> = self
            .storage
            .values()
            .filter_map(|n| self.published_record(n.id.as_str(), &n.publication))
            .chain(
                self.compute
                    .values()
                    .filter_map(|n| self.published_record(n.id.as_str(), &n.publication)),
            )
            .chain(
                self.services
                    .values()
                    .filter_map(|n| self.published_record(n.id.as_str(), &n.publication)),
            )
            .collect();
        records.sort_by(|a, b| a.resource_id.cmp(&b.resource_id));
        InfoSnapshot {
            taken_at: self.now,
            records,
        }
    }

    // -- storage and catalogue ---------------------------------------------

    /// Checks that `bytes` could be written to `storage` right now.
    pub fn check_writable(&self, storage: &str, bytes: Bytes) -> Result<()> {
        let node = self.storage_node(storage)?;
        if node.state != NodeState::Up {
            return Err(FabricError::Unavailable(node.id.clone()));
        }
        let free = node.free();
        if free < bytes {
            return Err(FabricError::StorageFull {
                storage: node.id.clone(),
                requested: bytes,
                free,
            });
        }
        Ok(())
    }

    fn storage_node(&self, id: &str) -> Result<&StorageNode> {
        self.storage.get(id).ok_or_else(|| {
            if self.resource_kind(id).is_some() {
                FabricError::NotStorage(ResourceId::from(id))
            } else {
                FabricError::UnknownResource(ResourceId::from(id))
            }
        })
    }

    /// Stores a file and registers it in one step.
    pub fn write_file(
        &mut self,
        storage: &ResourceId,
        owner: &str,
        lfn: &str,
        size: Bytes,
    ) -> Result<(CatalogueEntry, String)> {
        self.check_writable(storage.as_str(), size)?;
        if let Some(entry) = self.catalogue.get(lfn) {
            if entry.owner != owner {
                return Err(FabricError::OwnerMismatch {
                    lfn: lfn.to_owned(),
                    expected: entry.owner.clone(),
                    found: owner.to_owned(),
                });
            }
            if entry.size != size {
                return Err(FabricError::SizeMismatch {
                    lfn: lfn.to_owned(),
                    expected: entry.size,
                    found: size,
                });
            }
            if entry.replica_on(storage).is_some() {
                return Err(FabricError::DuplicateReplica {
                    lfn: lfn.to_owned(),
                    storage: storage.clone(),
                });
            }
        }
        let pfn = physical_name(lfn, storage);
        if self.storage[storage].files.contains_key(&pfn) {
            return Err(FabricError::DuplicateReplica {
                lfn: lfn.to_owned(),
                storage: storage.clone(),
            });
        }

        let now = self.now;
        self.storage.get_mut(storage).expect("checked").files.insert(
            pfn.clone(),
            PhysicalFile {
                size,
                owner: owner.to_owned(),
                created: now,
            },
        );
        let entry = self
            .catalogue
            .entry(lfn.to_owned())
            .or_insert_with(|| CatalogueEntry {
                lfn: lfn.to_owned(),
                owner: owner.to_owned(),
                size,
                replicas: Vec::new(),
            });
        entry.replicas.push(Replica {
            storage: storage.clone(),
            pfn: pfn.clone(),
        });
        entry.replicas.sort();
        Ok((entry.clone(), pfn))
    }

    /// Removes a catalogue entry together with the bytes of its replicas.
    /// Every replica's storage element must be up; otherwise nothing changes.
    pub fn delete_entry(&mut self, lfn: &str) -> Result<Bytes> {
        let entry = self
            .catalogue
            .get(lfn)
            .ok_or_else(|| FabricError::UnknownEntry(lfn.to_owned()))?;
        for r in &entry.replicas {
            let node = self.storage_node(r.storage.as_str())?;
            if node.state != NodeState::Up {
                return Err(FabricError::Unavailable(node.id.clone()));
            }
        }
        let entry = self.catalogue.remove(lfn).expect("present");
        let mut freed = 0;
        for r in entry.replicas {
            if let Some(f) = self
                .storage
                .get_mut(&r.storage)
                .and_then(|n| n.files.remove(&r.pfn))
            {
                freed += f.size;
            }
        }
        Ok(freed)
    }

    /// Removes one replica of a file that keeps at least one other replica.
    /// Nothing changes on failure.
    pub fn drop_replica(&mut self, lfn: &str, storage: &ResourceId) -> Result<Bytes> {
        let entry = self
            .catalogue
            .get(lfn)
            .ok_or_else(|| FabricError::UnknownEntry(lfn.to_owned()))?;
        let replica = entry
            .replica_on(storage)
            .ok_or_else(|| FabricError::NoSuchReplica {
                lfn: lfn.to_owned(),
                storage: storage.clone(),
            })?
            .clone();
        if entry.replicas.len() < 2 {
            return Err(FabricError::LastReplica(lfn.to_owned()));
        }
        let node = self.storage_node(storage.as_str())?;
        if node.state != NodeState::Up {
            return Err(FabricError::Unavailable(storage.clone()));
        }
        if !node.files.contains_key(&replica.pfn) {
            return Err(FabricError::NoSuchReplica {
                lfn: lfn.to_owned(),
                storage: storage.clone(),
            });
        }
        let file = self
            .storage
            .get_mut(storage)
            .expect("checked")
            .files
            .remove(&replica.pfn)
            .expect("checked");
        self.catalogue
            .get_mut(lfn)
            .expect("checked")
            .replicas
            .retain(|r| &r.storage != storage);
        Ok(file.size)
    }

    /// Moves one registered replica of `lfn` from `from` to `to`: copy, register
    /// the new replica, deregister and remove the old one. Every precondition
    /// is checked before the first mutation, so a failure leaves the fabric
    /// exactly as it was.
    pub fn migrate_replica(&mut self, lfn: &str, from: &ResourceId, to: &ResourceId) -> Result<Bytes> {
        let entry = self
            .catalogue
            .get(lfn)
            .ok_or_else(|| FabricError::UnknownEntry(lfn.to_owned()))?;
        let replica = entry
            .replica_on(from)
            .ok_or_else(|| FabricError::NoSuchReplica {
                lfn: lfn.to_owned(),
                storage: from.clone(),
            })?
            .clone();
        let size = entry.size;
        let source = self.storage_node(from.as_str())?;
        if source.state != NodeState::Up {
            return Err(FabricError::Unavailable(from.clone()));
        }
        if !source.files.contains_key(&replica.pfn) {
            return Err(FabricError::NoSuchReplica {
                lfn: lfn.to_owned(),
                storage: from.clone(),
            });
        }
        if entry.replica_on(to).is_some() {
            return Err(FabricError::DuplicateReplica {
                lfn: lfn.to_owned(),
                storage: to.clone(),
            });
        }
        self.check_writable(to.as_str(), size)?;
        let new_pfn = physical_name(lfn, to);
        if self.storage[to].files.contains_key(&new_pfn) {
            return Err(FabricError::DuplicateReplica {
                lfn: lfn.to_owned(),
                storage: to.clone(),
            });
        }

        let now = self.now;
        let file = self
            .storage
            .get_mut(from)
            .expect("checked")
            .files
            .remove(&replica.pfn)
            .expect("checked");
        self.storage.get_mut(to).expect("checked").files.insert(
            new_pfn.clone(),
            PhysicalFile {
                created: now,
                ..file
            },
        );
        let entry = self.catalogue.get_mut(lfn).expect("checked");
        entry.replicas.retain(|r| &r.storage != from);
        entry.replicas.push(Replica {
            storage: to.clone(),
            pfn: new_pfn,
        });
        entry.replicas.sort();
        Ok(size)
    }

    /// Breaks catalogue/storage consistency on purpose.
    pub fn corrupt_consistency(
        &mut self,
        mode: CorruptionMode,
        target: &CorruptionTarget,
    ) -> Result<Corruption> {
        match target {
            CorruptionTarget::Replica { lfn, storage } => {
                let node = self.storage_node(storage.as_str())?;
                let entry = self.catalogue.get(lfn.as_str());
                let registered = entry.and_then(|e| e.replica_on(storage)).cloned();
                let pfn = physical_name(lfn, storage);
                let present = node.files.contains_key(&pfn);
                match (registered, present) {
                    (Some(r), true) => {
                        match mode {
                            CorruptionMode::MakeZombie => {
                                let e = self.catalogue.get_mut(lfn.as_str()).expect("present");
                                e.replicas.retain(|x| &x.storage != storage);
                                if e.replicas.is_empty() {
                                    self.catalogue.remove(lfn.as_str());
                                }
                            }
                            CorruptionMode::MakeGhost => {
                                self.storage
                                    .get_mut(storage)
                                    .expect("present")
                                    .files
                                    .remove(&r.pfn);
                            }
                        }
                        Ok(Corruption {
                            lfn: lfn.clone(),
                            storage: storage.clone(),
                            pfn: r.pfn,
                        })
                    }
                    (None, false) => Err(FabricError::NoSuchReplica {
                        lfn: lfn.clone(),
                        storage: storage.clone(),
                    }),
                    _ => Err(FabricError::AlreadyInconsistent {
                        lfn: lfn.clone(),
                        storage: storage.clone(),
                    }),
                }
            }
            CorruptionTarget::Synthesize {
                storage,
                owner,
                size,
            } => {
                self.storage_node(storage.as_str())?;
                self.synthetic += 1;
                let lfn = match mode {
                    CorruptionMode::MakeZombie => format!("/synthetic/zombie-{:06}", self.synthetic),
                    CorruptionMode::MakeGhost => format!("/synthetic/ghost-{:06}", self.synthetic),
                };
                let pfn = physical_name(&lfn, storage);
                match mode {
                    CorruptionMode::MakeZombie => {
                        let node = &self.storage[storage];
                        if node.free() < *size {
                            return Err(FabricError::StorageFull {
                                storage: storage.clone(),
                                requested: *size,
                                free: node.free(),
                            });
                        }
                        let now = self.now;
                        self.storage.get_mut(storage).expect("present").files.insert(
                            pfn.clone(),
                            PhysicalFile {
                                size: *size,
                                owner: owner.clone(),
                                created: now,
                            },
                        );
                    }
                    CorruptionMode::MakeGhost => {
                        self.catalogue.insert(
                            lfn.clone(),
                            CatalogueEntry {
                                lfn: lfn.clone(),
                                owner: owner.clone(),
                                size: *size,
                                replicas: vec![Replica {
                                    storage: storage.clone(),
                                    pfn: pfn.clone(),
                                }],
                            },
                        );
                    }
                }
                Ok(Corruption {
                    lfn,
                    storage: storage.clone(),
                    pfn,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GB: Bytes = 1_000_000_000;

    fn one_se(capacity: Bytes) -> FabricSpec {
        FabricSpec {
            storage: vec![StorageSpec {
                id: "SE-1".into(),
                site: "site-a".into(),
                capacity,
                files: vec![],
            }],
            ..Default::default()
        }
    }

    fn two_se() -> Fabric {
        let mut spec = one_se(100 * GB);
        spec.storage.push(StorageSpec {
            id: "SE-2".into(),
            site: "site-b".into(),
            capacity: 100 * GB,
            files: vec![],
        });
        spec.compute.push(ComputeSpec {
            id: "CE-7".into(),
            site: "site-a".into(),
            waiting: 39,
            running: 10,
        });
        Fabric::new(&spec).unwrap()
    }

    #[test]
    fn empty_store_is_all_free() {
        let f = Fabric::new(&one_se(100 * GB)).unwrap();
        assert_eq!(f.storage("SE-1").unwrap().free(), 100 * GB);
        assert_eq!(f.catalogue().count(), 0);
    }

    #[test]
    fn duplicate_ids_are_rejected_by_name() {
        let mut spec = one_se(GB);
        spec.workload.push(NodeSpec {
            id: "SE-1".into(),
            site: String::new(),
        });
        assert_eq!(
            Fabric::new(&spec).unwrap_err(),
            FabricError::DuplicateId("SE-1".into())
        );
    }

    #[test]
    fn preload_beyond_capacity_is_rejected() {
        let mut spec = one_se(10 * GB);
        spec.storage[0].files.push(PreloadFile {
            lfn: "/a".into(),
            owner: "u1".into(),
            size: 11 * GB,
        });
        assert!(matches!(
            Fabric::new(&spec),
            Err(FabricError::FileExceedsCapacity { .. })
        ));
    }

    #[test]
    fn preloaded_files_are_registered() {
        let mut spec = one_se(10 * GB);
        spec.storage[0].files.push(PreloadFile {
            lfn: "/a".into(),
            owner: "u1".into(),
            size: 2 * GB,
        });
        let f = Fabric::new(&spec).unwrap();
        let e = f.entry("/a").unwrap();
        assert_eq!(e.replicas.len(), 1);
        assert!(f.storage("SE-1").unwrap().files.contains_key(&e.replicas[0].pfn));
    }

    #[test]
    fn clock_advances_and_rejects_negative() {
        let mut f = two_se();
        assert_eq!(f.advance_clock(30).unwrap(), 30);
        assert_eq!(f.advance_clock(0).unwrap(), 30);
        assert_eq!(f.advance_clock(-1), Err(FabricError::NegativeAdvance(-1)));
    }

    #[test]
    fn scheduled_state_flip_fires_when_due() {
        let mut f = two_se();
        f.schedule_event(ScenarioEvent {
            at: 10,
            action: EventAction::SetState {
                resource: "SE-1".into(),
                state: NodeState::Down,
            },
        })
        .unwrap();
        f.advance_clock(5).unwrap();
        assert_eq!(f.node_state("SE-1"), Some(NodeState::Up));
        f.advance_clock(25).unwrap();
        assert_eq!(f.node_state("SE-1"), Some(NodeState::Down));
        assert_eq!(f.pending_events(), 0);
    }

    #[test]
    fn same_time_events_apply_in_insertion_order() {
        let mut f = two_se();
        for state in [NodeState::Down, NodeState::Degraded, NodeState::Up, NodeState::Down] {
            f.schedule_event(ScenarioEvent {
                at: 20,
                action: EventAction::SetState {
                    resource: "SE-2".into(),
                    state,
                },
            })
            .unwrap();
        }
        f.advance_clock(20).unwrap();
        assert_eq!(f.node_state("SE-2"), Some(NodeState::Down));
    }

    #[test]
    fn write_then_overflow() {
        let mut f = two_se();
        f.write_file(&"SE-1".into(), "u1", "/a", 10 * GB).unwrap();
        assert_eq!(f.storage("SE-1").unwrap().free(), 90 * GB);
        assert_eq!(f.catalogue().count(), 1);
        let err = f.write_file(&"SE-2".into(), "u1", "/big", 101 * GB).unwrap_err();
        assert!(matches!(err, FabricError::StorageFull { .. }));
    }

    #[test]
    fn write_to_down_node_is_unavailable() {
        let mut f = two_se();
        f.set_state(&"SE-1".into(), NodeState::Down).unwrap();
        assert_eq!(
            f.write_file(&"SE-1".into(), "u1", "/a", 1).unwrap_err(),
            FabricError::Unavailable("SE-1".into())
        );
    }

    #[test]
    fn same_lfn_on_two_ses_is_one_entry_two_replicas() {
        let mut f = two_se();
        f.write_file(&"SE-1".into(), "u1", "/a", GB).unwrap();
        let (entry, _) = f.write_file(&"SE-2".into(), "u1", "/a", GB).unwrap();
        assert_eq!(f.catalogue().count(), 1);
        assert_eq!(entry.replicas.len(), 2);
        assert_ne!(entry.replicas[0].pfn, entry.replicas[1].pfn);
    }

    #[test]
    fn physical_names_are_deterministic() {
        let a = physical_name("/x", &"SE-1".into());
        assert_eq!(a, physical_name("/x", &"SE-1".into()));
        assert_ne!(a, physical_name("/x", &"SE-2".into()));
        assert_eq!(a.len(), 4 + 32);
    }

    #[test]
    fn full_se_still_reports_free_space() {
        let mut f = Fabric::new(&one_se(100 * GB)).unwrap();
        f.write_file(&"SE-1".into(), "u1", "/a", 100 * GB).unwrap();
        f.inject_fault(&"SE-1".into(), FaultSpec::new(FaultKind::FullReportsFree, 500.0 * GB as f64, 0))
            .unwrap();
        let snap = f.publish_info();
        let rec = snap.record("SE-1").unwrap();
        assert!(rec.free_bytes.unwrap() > 0);
        assert_eq!(f.storage("SE-1").unwrap().free(), 0);
    }

    #[test]
    fn overstated_free_space_follows_formula() {
        let mut f = Fabric::new(&one_se(100 * GB)).unwrap();
        f.write_file(&"SE-1".into(), "u1", "/a", 80 * GB).unwrap();
        f.inject_fault(&"SE-1".into(), FaultSpec::new(FaultKind::OverstateFreeSpace, 0.5, 0))
            .unwrap();
        let rec = f.publish_info().record("SE-1").unwrap().clone();
        // 20 GB true free * 1.5
        assert_eq!(rec.free_bytes, Some(30 * GB as i64));
        assert_eq!(rec.used_bytes, Some(80 * GB as i64));
    }

    #[test]
    fn unpublished_resource_is_absent() {
        let mut f = two_se();
        f.inject_fault(&"CE-7".into(), FaultSpec::new(FaultKind::Unpublished, 0.0, 0))
            .unwrap();
        let snap = f.publish_info();
        assert!(snap.record("CE-7").is_none());
        assert!(snap.record("SE-1").is_some());
    }

    #[test]
    fn zero_magnitude_job_count_fault_is_identity() {
        let mut f = two_se();
        let before = f.publish_info();
        f.inject_fault(&"CE-7".into(), FaultSpec::new(FaultKind::InvalidJobCounts, 0.0, 0))
            .unwrap();
        assert_eq!(f.publish_info(), before);
    }

    #[test]
    fn job_count_fault_scales_and_floors() {
        let mut f = two_se();
        f.inject_fault(&"CE-7".into(), FaultSpec::new(FaultKind::InvalidJobCounts, 0.25, 0))
            .unwrap();
        let rec = f.publish_info().record("CE-7").unwrap().clone();
        // floor(39 * 1.25) = 48, floor(10 * 1.25) = 12
        assert_eq!((rec.waiting, rec.running), (Some(48), Some(12)));
    }

    #[test]
    fn fault_kind_must_match_resource() {
        let mut f = two_se();
        assert!(matches!(
            f.inject_fault(&"CE-7".into(), FaultSpec::new(FaultKind::OverstateFreeSpace, 0.1, 0)),
            Err(FabricError::FaultNotApplicable { .. })
        ));
        assert!(matches!(
            f.inject_fault(&"nope".into(), FaultSpec::new(FaultKind::Unpublished, 0.0, 0)),
            Err(FabricError::UnknownResource(_))
        ));
        assert!(matches!(
            f.inject_fault(&"SE-1".into(), FaultSpec::new(FaultKind::UnderreportUsed, -0.1, 0)),
            Err(FabricError::InvalidFault(_))
        ));
    }

    #[test]
    fn stale_record_republishes_onset_state() {
        let mut f = two_se();
        f.write_file(&"SE-1".into(), "u1", "/a", 10 * GB).unwrap();
        f.advance_clock(60).unwrap();
        f.inject_fault(&"SE-1".into(), FaultSpec::new(FaultKind::StaleRecord, 0.0, 60))
            .unwrap();
        f.write_file(&"SE-1".into(), "u1", "/b", 30 * GB).unwrap();
        f.advance_clock(300).unwrap();
        let rec = f.publish_info().record("SE-1").unwrap().clone();
        assert_eq!(rec.heartbeat, 60);
        assert_eq!(rec.used_bytes, Some(10 * GB as i64));
        assert_eq!(f.storage("SE-1").unwrap().used(), 40 * GB);
    }

    #[test]
    fn fault_scheduled_for_later_is_inactive_until_onset() {
        let mut f = two_se();
        f.schedule_event(ScenarioEvent {
            at: 90,
            action: EventAction::InjectFault {
                resource: "SE-2".into(),
                fault: FaultSpec::new(FaultKind::Unpublished, 0.0, 90),
            },
        })
        .unwrap();
        f.advance_clock(60).unwrap();
        assert!(f.publish_info().record("SE-2").is_some());
        f.advance_clock(30).unwrap();
        assert!(f.publish_info().record("SE-2").is_none());
    }

    #[test]
    fn zombie_and_ghost_corruption() {
        let mut f = two_se();
        f.write_file(&"SE-1".into(), "u1", "/lfn-a", GB).unwrap();
        f.write_file(&"SE-2".into(), "u1", "/lfn-b", GB).unwrap();

        let z = f
            .corrupt_consistency(
                CorruptionMode::MakeZombie,
                &CorruptionTarget::Replica {
                    lfn: "/lfn-a".into(),
                    storage: "SE-1".into(),
                },
            )
            .unwrap();
        assert_eq!(f.storage("SE-1").unwrap().used(), GB);
        assert!(f.entry("/lfn-a").is_none());
        assert!(f.storage("SE-1").unwrap().files.contains_key(&z.pfn));

        f.corrupt_consistency(
            CorruptionMode::MakeGhost,
            &CorruptionTarget::Replica {
                lfn: "/lfn-b".into(),
                storage: "SE-2".into(),
            },
        )
        .unwrap();
        assert_eq!(f.entry("/lfn-b").unwrap().replicas.len(), 1);
        assert_eq!(f.storage("SE-2").unwrap().used(), 0);
    }

    #[test]
    fn double_corruption_is_rejected() {
        let mut f = two_se();
        f.write_file(&"SE-1".into(), "u1", "/a", GB).unwrap();
        let target = CorruptionTarget::Replica {
            lfn: "/a".into(),
            storage: "SE-1".into(),
        };
        f.corrupt_consistency(CorruptionMode::MakeGhost, &target).unwrap();
        assert!(matches!(
            f.corrupt_consistency(CorruptionMode::MakeZombie, &target),
            Err(FabricError::AlreadyInconsistent { .. })
        ));
        let missing = CorruptionTarget::Replica {
            lfn: "/zzz".into(),
            storage: "SE-1".into(),
        };
        assert!(matches!(
            f.corrupt_consistency(CorruptionMode::MakeGhost, &missing),
            Err(FabricError::NoSuchReplica { .. })
        ));
    }

    #[test]
    fn delete_removes_every_replica() {
        let mut f = two_se();
        f.write_file(&"SE-1".into(), "u1", "/a", GB).unwrap();
        f.write_file(&"SE-2".into(), "u1", "/a", GB).unwrap();
        assert_eq!(f.delete_entry("/a").unwrap(), 2 * GB);
        assert_eq!(f.registered_bytes(), 0);
        assert_eq!(f.storage("SE-1").unwrap().used() + f.storage("SE-2").unwrap().used(), 0);
    }

    #[test]
    fn failed_migration_changes_nothing() {
        let mut f = two_se();
        f.write_file(&"SE-1".into(), "u1", "/a", 60 * GB).unwrap();
        f.write_file(&"SE-2".into(), "u2", "/b", 50 * GB).unwrap();
        let before = (f.catalogue_entries(), f.inventories());
        let err = f.migrate_replica("/a", &"SE-1".into(), &"SE-2".into()).unwrap_err();
        assert!(matches!(err, FabricError::StorageFull { .. }));
        assert_eq!((f.catalogue_entries(), f.inventories()), before);

        f.delete_entry("/b").unwrap();
        f.migrate_replica("/a", &"SE-1".into(), &"SE-2".into()).unwrap();
        assert_eq!(f.storage("SE-1").unwrap().used(), 0);
        assert_eq!(f.entry("/a").unwrap().replicas[0].storage.as_str(), "SE-2");
    }

    #[test]
    fn spec_round_trips_through_json() {
        let mut spec = one_se(GB);
        spec.events.push(ScenarioEvent {
            at: 30,
            action: EventAction::InjectFault {
                resource: "SE-1".into(),
                fault: FaultSpec::new(FaultKind::OverstateFreeSpace, 0.5, 30),
            },
        });
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("\"action\":\"InjectFault\""));
        let back: FabricSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
    }
}
