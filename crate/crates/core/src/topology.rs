//! VO resource topology.
//!
//! The registry gives the static list of resources, the information system
//! the dynamic one. Merging them yields the set of resources the VO monitors,
//! and refining that set with downtimes, filling rates and recent alarms
//! yields the whitelist of resources considered reliable.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fabric::{Fabric, InfoSnapshot};
use crate::probes::Alarm;
use crate::storage_ops::FillingRateReport;
use crate::types::{ResourceId, ResourceKind, Timestamp};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("downtime for {0} must start before it ends")]
    EmptyDowntime(ResourceId),
    #[error("whitelist threshold {0} is outside [0, 1]")]
    ThresholdOutOfRange(f64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub resource_id: ResourceId,
    pub kind: ResourceKind,
    #[serde(default)]
    pub site: String,
    #[serde(default = "default_true")]
    pub in_production: bool,
}

fn default_true() -> bool {
    true
}

/// Registry view of a simulated fabric: every node, all in production.
pub fn registry_from_fabric(fabric: &Fabric) -> Vec<RegistryEntry> {
    fabric
        .resources()
        .into_iter()
        .map(|(resource_id, kind, site)| RegistryEntry {
            resource_id,
            kind,
            site,
            in_production: true,
        })
        .collect()
}

/// Scheduled downtime over the half-open interval `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DowntimeWindow {
    pub resource_id: ResourceId,
    pub start: Timestamp,
    pub end: Timestamp,
    #[serde(default)]
    pub reason: String,
}

impl DowntimeWindow {
    pub fn new(
        resource_id: impl Into<ResourceId>,
        start: Timestamp,
        end: Timestamp,
        reason: impl Into<String>,
    ) -> Result<Self, TopologyError> {
        let resource_id = resource_id.into();
        if start >= end {
            return Err(TopologyError::EmptyDowntime(resource_id));
        }
        Ok(Self {
            resource_id,
            start,
            end,
            reason: reason.into(),
        })
    }

    pub fn covers(&self, at: Timestamp) -> bool {
        self.start <= at && at < self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Presence {
    RegisteredAndPublished,
    RegisteredOnly,
    PublishedOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoMember {
    pub resource_id: ResourceId,
    pub kind: ResourceKind,
    pub presence: Presence,
}

/// The resources the VO monitors, sorted by id. Its JSON form is the VO feed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoResourceSet {
    pub computed_at: Timestamp,
    pub members: Vec<VoMember>,
}

impl VoResourceSet {
    pub fn empty(at: Timestamp) -> Self {
        Self {
            computed_at: at,
            members: Vec::new(),
        }
    }

    pub fn member(&self, id: &str) -> Option<&VoMember> {
        self.members.iter().find(|m| m.resource_id.as_str() == id)
    }

    pub fn ids(&self) -> BTreeSet<ResourceId> {
        self.members.iter().map(|m| m.resource_id.clone()).collect()
    }

    pub fn ids_of_kind(&self, kind: ResourceKind) -> BTreeSet<ResourceId> {
        self.members
            .iter()
            .filter(|m| m.kind == kind)
            .map(|m| m.resource_id.clone())
            .collect()
    }
}

/// Merges the static registry with a published snapshot.
///
/// Registry entries that are not in production are dropped, even when the
/// information system still publishes them.
pub fn merge_topology(
    registry: &[RegistryEntry],
    snapshot: &InfoSnapshot,
    at: Timestamp,
) -> VoResourceSet {
    let mut retired = BTreeSet::new();
    let mut merged: BTreeMap<ResourceId, VoMember> = BTreeMap::new();
    for e in registry {
        if !e.in_production {
            retired.insert(e.resource_id.clone());
            continue;
        }
        merged.insert(
            e.resource_id.clone(),
            VoMember {
                resource_id: e.resource_id.clone(),
                kind: e.kind,
                presence: Presence::RegisteredOnly,
            },
        );
    }
    // A non-production entry wins over a duplicate production one.
    for id in &retired {
        merged.remove(id);
    }
    for r in &snapshot.records {
        if retired.contains(&r.resource_id) {
            continue;
        }
        merged
            .entry(r.resource_id.clone())
            .and_modify(|m| m.presence = Presence::RegisteredAndPublished)
            .or_insert_with(|| VoMember {
                resource_id: r.resource_id.clone(),
                kind: r.kind,
                presence: Presence::PublishedOnly,
            });
    }
    VoResourceSet {
        computed_at: at,
        members: merged.into_values().collect(),
    }
}

/// Resources with a downtime window covering `at`.
pub fn active_downtimes(windows: &[DowntimeWindow], at: Timestamp) -> BTreeSet<ResourceId> {
    windows
        .iter()
        .filter(|w| w.covers(at))
        .map(|w| w.resource_id.clone())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhitelistPolicy {
    /// Storage elements filled strictly above this fraction are excluded.
    #[serde(default = "WhitelistPolicy::default_max_filling")]
    pub max_filling: f64,
    /// Minutes of alarm history that disqualify a resource.
    #[serde(default = "WhitelistPolicy::default_lookback")]
    pub lookback: u64,
    /// Resource kinds eligible for the whitelist.
    #[serde(default = "WhitelistPolicy::default_kinds")]
    pub kinds: Vec<ResourceKind>,
}

impl WhitelistPolicy {
    fn default_max_filling() -> f64 {
        0.80
    }

    fn default_lookback() -> u64 {
        1440
    }

    fn default_kinds() -> Vec<ResourceKind> {
        vec![ResourceKind::SE, ResourceKind::CE, ResourceKind::WMS]
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        if !(0.0..=1.0).contains(&self.max_filling) {
            return Err(TopologyError::ThresholdOutOfRange(self.max_filling));
        }
        Ok(())
    }
}

impl Default for WhitelistPolicy {
    fn default() -> Self {
        Self {
            max_filling: Self::default_max_filling(),
            lookback: Self::default_lookback(),
            kinds: Self::default_kinds(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhiteList {
    pub computed_at: Timestamp,
    pub members: BTreeSet<ResourceId>,
    pub criteria: WhitelistPolicy,
}

/// Whether `alarm` was open at any point of `[at - lookback, at]`.
fn alarm_in_lookback(alarm: &Alarm, at: Timestamp, lookback: u64) -> bool {
    let horizon = at.saturating_sub(lookback);
    alarm.raised_at <= at && alarm.cleared_at.is_none_or(|c| c >= horizon)
}

/// Refines the VO resource set into the whitelist of reliable resources.
///
/// A member qualifies when it is both registered and published, is of an
/// eligible kind, is not in an active downtime, has no alarm within the
/// look-back window and, for storage elements, has a trustworthy filling rate
/// no higher than `policy.max_filling`. The reference time is
/// `vo_set.computed_at`.
pub fn compute_whitelist(
    vo_set: &VoResourceSet,
    downtimes_active: &BTreeSet<ResourceId>,
    filling: &FillingRateReport,
    alarms_recent: &[Alarm],
    policy: &WhitelistPolicy,
) -> Result<WhiteList, TopologyError> {
    policy.validate()?;
    let at = vo_set.computed_at;
    let alarmed: BTreeSet<&ResourceId> = alarms_recent
        .iter()
        .filter(|a| alarm_in_lookback(a, at, policy.lookback))
        .map(|a| &a.resource_id)
        .collect();

    let members = vo_set
        .members
        .iter()
        .filter(|m| m.presence == Presence::RegisteredAndPublished)
        .filter(|m| policy.kinds.contains(&m.kind))
        .filter(|m| !downtimes_active.contains(&m.resource_id))
        .filter(|m| !alarmed.contains(&m.resource_id))
        .filter(|m| {
            m.kind != ResourceKind::SE
                || filling
                    .entry(m.resource_id.as_str())
                    .and_then(|e| e.rate)
                    .is_some_and(|rate| rate <= policy.max_filling)
        })
        .map(|m| m.resource_id.clone())
        .collect();

    Ok(WhiteList {
        computed_at: at,
        members,
        criteria: policy.clone(),
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyDiff {
    pub added: Vec<ResourceId>,
    pub removed: Vec<ResourceId>,
    pub presence_changed: Vec<ResourceId>,
}

impl TopologyDiff {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty() && self.presence_changed.is_empty()
    }
}

pub fn diff_topology(old: &VoResourceSet, new: &VoResourceSet) -> TopologyDiff {
    let before: BTreeMap<&ResourceId, Presence> =
        old.members.iter().map(|m| (&m.resource_id, m.presence)).collect();
    let after: BTreeMap<&ResourceId, Presence> =
        new.members.iter().map(|m| (&m.resource_id, m.presence)).collect();

    let mut diff = TopologyDiff::default();
    for (id, presence) in &after {
        match before.get(id) {
            None => diff.added.push((*id).clone()),
            Some(p) if p != presence => diff.presence_changed.push((*id).clone()),
            Some(_) => {}
        }
    }
    diff.removed = before
        .keys()
        .filter(|id| !after.contains_key(*id))
        .map(|id| (*id).clone())
        .collect();
    diff
}
