use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::reconcile::{Ghost, ReconciliationReport, Zombie};
use super::StorageOpsError;
use crate::fabric::{CatalogueEntry, Fabric, InfoSnapshot};
use crate::topology::{Presence, VoResourceSet};
use crate::types::{Bytes, ResourceId, ResourceKind, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Placement {
    #[default]
    MostFreeFirst,
    RoundRobin,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PlanOptions {
    #[serde(default)]
    pub placement: Placement,
    /// Drop source replicas of files that keep a replica elsewhere instead of
    /// migrating them.
    #[serde(default)]
    pub skip_replicated: bool,
    /// When set, only these storage elements may receive files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eligible: Option<BTreeSet<ResourceId>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlanStatus {
    Draft,
    Running,
    Done,
    Aborted,
}

/// Moves the replica of `lfn` from `from` to `to`; `to == None` drops a
/// redundant replica.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MigrationStep {
    pub lfn: String,
    pub from: ResourceId,
    pub to: Option<ResourceId>,
    pub size: Bytes,
}

/// Zombies and ghosts found on the source form the preamble: they need
/// manual action and are never migrated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecommissionPlan {
    pub plan_id: String,
    pub source: ResourceId,
    pub created_at: Timestamp,
    pub zombies: Vec<Zombie>,
    pub ghosts: Vec<Ghost>,
    pub steps: Vec<MigrationStep>,
    pub unplaceable: Vec<String>,
    pub status: PlanStatus,
    /// Number of steps applied so far.
    pub completed: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl DecommissionPlan {
    pub fn bytes_to_move(&self) -> Bytes {
        self.steps.iter().filter(|s| s.to.is_some()).map(|s| s.size).sum()
    }
}

/// Builds a migration plan for every registered replica on `source`.
///
/// Targets are SE members of `vo_set` that are registered and published,
/// differ from the source and publish a usable free figure. Projected free
/// space starts from the published figure and is reduced by each earlier step.
pub fn plan_decommission(
    source: &ResourceId,
    vo_set: &VoResourceSet,
    snapshot: &InfoSnapshot,
    catalogue: &[CatalogueEntry],
    reconciliation: &ReconciliationReport,
    options: &PlanOptions,
) -> Result<DecommissionPlan, StorageOpsError> {
    if !vo_set
        .member(source.as_str())
        .is_some_and(|m| m.kind == ResourceKind::SE)
    {
        return Err(StorageOpsError::UnknownSource(source.clone()));
    }

    let mut projected: BTreeMap<ResourceId, u64> = vo_set
        .members
        .iter()
        .filter(|m| {
            m.kind == ResourceKind::SE
                && m.presence == Presence::RegisteredAndPublished
                && &m.resource_id != source
                && options
                    .eligible
                    .as_ref()
                    .is_none_or(|e| e.contains(&m.resource_id))
        })
        .filter_map(|m| {
            let rec = snapshot.record(m.resource_id.as_str())?;
            let used = u64::try_from(rec.used_bytes?).ok()?;
            let free = u64::try_from(rec.free_bytes?).ok()?;
            (used + free > 0).then(|| (m.resource_id.clone(), free))
        })
        .collect();
    let targets: Vec<ResourceId> = projected.keys().cloned().collect();

    let ghosts: Vec<Ghost> = reconciliation
        .ghosts
        .iter()
        .filter(|g| &g.storage_id == source)
        .cloned()
        .collect();
    let ghost_lfns: BTreeSet<&str> = ghosts.iter().map(|g| g.lfn.as_str()).collect();

    let mut steps = Vec::new();
    let mut unplaceable = Vec::new();
    let mut cursor = 0usize;
    let mut on_source: Vec<&CatalogueEntry> = catalogue
        .iter()
        .filter(|e| e.replica_on(source).is_some())
        .collect();
    on_source.sort_by(|a, b| a.lfn.cmp(&b.lfn));

    for entry in on_source {
        if ghost_lfns.contains(entry.lfn.as_str()) {
            unplaceable.push(entry.lfn.clone());
            continue;
        }
        if options.skip_replicated && entry.replicas.len() > 1 {
            steps.push(MigrationStep {
                lfn: entry.lfn.clone(),
                from: source.clone(),
                to: None,
                size: entry.size,
            });
            continue;
        }
        let fits = |t: &ResourceId, projected: &BTreeMap<ResourceId, u64>| {
            projected[t] >= entry.size && entry.replica_on(t).is_none()
        };
        let chosen = match options.placement {
            Placement::MostFreeFirst => targets
                .iter()
                .filter(|t| fits(t, &projected))
                .max_by(|a, b| projected[*a].cmp(&projected[*b]).then_with(|| b.cmp(a)))
                .cloned(),
            Placement::RoundRobin => (0..targets.len())
                .map(|i| (cursor + i) % targets.len())
                .find(|&i| fits(&targets[i], &projected))
                .map(|i| {
                    cursor = (i + 1) % targets.len();
                    targets[i].clone()
                }),
        };
        match chosen {
            Some(t) => {
                *projected.get_mut(&t).expect("target") -= entry.size;
                steps.push(MigrationStep {
                    lfn: entry.lfn.clone(),
                    from: source.clone(),
                    to: Some(t),
                    size: entry.size,
                });
            }
            None => unplaceable.push(entry.lfn.clone()),
        }
    }

    Ok(DecommissionPlan {
        plan_id: format!("decom-{}-{}", source, snapshot.taken_at),
        source: source.clone(),
        created_at: snapshot.taken_at,
        zombies: reconciliation.zombies_on(source).cloned().collect(),
        ghosts,
        steps,
        unplaceable,
        status: PlanStatus::Draft,
        completed: 0,
        failure: None,
    })
}

/// Applies the next step of a Draft or Running plan and returns the new
/// status. A failed step aborts the plan; the fabric is left as it was
/// before that step.
pub fn execute_step(
    fabric: &mut Fabric,
    plan: &mut DecommissionPlan,
) -> Result<PlanStatus, StorageOpsError> {
    if !matches!(plan.status, PlanStatus::Draft | PlanStatus::Running) {
        return Err(StorageOpsError::PlanNotExecutable {
            plan_id: plan.plan_id.clone(),
            status: plan.status,
        });
    }
    plan.status = PlanStatus::Running;
    if let Some(step) = plan.steps.get(plan.completed) {
        let applied = match &step.to {
            Some(to) => fabric.migrate_replica(&step.lfn, &step.from, to),
            None => fabric.drop_replica(&step.lfn, &step.from),
        };
        match applied {
            Ok(_) => plan.completed += 1,
            Err(e) => {
                plan.status = PlanStatus::Aborted;
                plan.failure = Some(format!("step {} ({}): {e}", plan.completed + 1, step.lfn));
                return Ok(plan.status);
            }
        }
    }
    if plan.completed == plan.steps.len() {
        plan.status = PlanStatus::Done;
    }
    Ok(plan.status)
}

/// Runs every remaining step.
pub fn execute_migration(
    fabric: &mut Fabric,
    mut plan: DecommissionPlan,
) -> Result<DecommissionPlan, StorageOpsError> {
    loop {
        match execute_step(fabric, &mut plan)? {
            PlanStatus::Running => continue,
            _ => return Ok(plan),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fabric::{FabricSpec, NodeState, PreloadFile, StorageSpec};
    use crate::storage_ops::reconcile;
    use crate::topology::{merge_topology, registry_from_fabric};

    const GB: u64 = 1_000_000_000;

    fn fabric(source_files: &[(&str, u64)], targets: &[u64]) -> Fabric {
        let mut storage = vec![StorageSpec {
            id: "SE-src".into(),
            site: "s".into(),
            capacity: 1000 * GB,
            files: source_files
                .iter()
                .map(|(lfn, size)| PreloadFile {
                    lfn: lfn.to_string(),
                    owner: "u1".into(),
                    size: *size,
                })
                .collect(),
        }];
        for (i, cap) in targets.iter().enumerate() {
            storage.push(StorageSpec {
                id: format!("SE-t{}", i + 1).into(),
                site: "s".into(),
                capacity: *cap,
                files: vec![],
            });
        }
        Fabric::new(&FabricSpec {
            storage,
            ..Default::default()
        })
        .unwrap()
    }

    fn plan(f: &Fabric, options: &PlanOptions) -> DecommissionPlan {
        let snap = f.publish_info();
        let vo = merge_topology(&registry_from_fabric(f), &snap, f.now());
        let cat = f.catalogue_entries();
        let rec = reconcile(&cat, &f.inventories(), f.now());
        plan_decommission(&"SE-src".into(), &vo, &snap, &cat, &rec, options).unwrap()
    }

    #[test]
    fn single_file_single_target() {
        let f = fabric(&[("/a", 10 * GB)], &[50 * GB]);
        let p = plan(&f, &PlanOptions::default());
        assert_eq!(p.steps.len(), 1);
        assert_eq!(p.steps[0].to, Some("SE-t1".into()));
        assert!(p.unplaceable.is_empty());
        assert_eq!(p.plan_id, "decom-SE-src-0");
    }

    #[test]
    fn projection_exhausts_target() {
        let f = fabric(&[("/a", 60 * GB), ("/b", 60 * GB)], &[100 * GB]);
        let p = plan(&f, &PlanOptions::default());
        assert_eq!(p.steps.len(), 1);
        assert_eq!(p.unplaceable, ["/b"]);
    }

    #[test]
    fn placement_policies() {
        let f = fabric(&[("/a", GB), ("/b", GB), ("/c", GB)], &[10 * GB, 20 * GB]);
        let most_free: Vec<_> = plan(&f, &PlanOptions::default())
            .steps
            .into_iter()
            .map(|s| s.to.unwrap().to_string())
            .collect();
        assert_eq!(most_free, ["SE-t2", "SE-t2", "SE-t2"]);
        let rr = PlanOptions {
            placement: Placement::RoundRobin,
            ..Default::default()
        };
        let round: Vec<_> = plan(&f, &rr)
            .steps
            .into_iter()
            .map(|s| s.to.unwrap().to_string())
            .collect();
        assert_eq!(round, ["SE-t1", "SE-t2", "SE-t1"]);
    }

    #[test]
    fn zombie_only_source() {
        let mut f = fabric(&[("/a", GB)], &[10 * GB]);
        f.corrupt_consistency(
            crate::fabric::CorruptionMode::MakeZombie,
            &crate::fabric::CorruptionTarget::Replica {
                lfn: "/a".into(),
                storage: "SE-src".into(),
            },
        )
        .unwrap();
        let p = plan(&f, &PlanOptions::default());
        assert!(p.steps.is_empty());
        assert_eq!(p.zombies.len(), 1);
    }

    #[test]
    fn unknown_source_is_rejected() {
        let f = fabric(&[], &[GB]);
        let snap = f.publish_info();
        let vo = merge_topology(&registry_from_fabric(&f), &snap, 0);
        let rec = reconcile(&[], &f.inventories(), 0);
        let err = plan_decommission(&"SE-x".into(), &vo, &snap, &[], &rec, &PlanOptions::default());
        assert_eq!(err, Err(StorageOpsError::UnknownSource("SE-x".into())));
    }

    #[test]
    fn execution_outcomes() {
        let mut f = fabric(&[("/a", GB), ("/b", GB)], &[10 * GB]);
        let before = f.registered_bytes();
        let p = plan(&f, &PlanOptions::default());
        let done = execute_migration(&mut f, p).unwrap();
        assert_eq!(done.status, PlanStatus::Done);
        assert_eq!(done.completed, 2);
        assert!(f.catalogue().all(|e| e.replica_on(&"SE-src".into()).is_none()));
        assert_eq!(f.registered_bytes(), before);
        assert!(matches!(
            execute_migration(&mut f, done),
            Err(StorageOpsError::PlanNotExecutable { .. })
        ));

        let mut f = fabric(&[("/a", GB), ("/b", GB)], &[10 * GB]);
        let mut p = plan(&f, &PlanOptions::default());
        assert_eq!(execute_step(&mut f, &mut p).unwrap(), PlanStatus::Running);
        f.set_state(&"SE-t1".into(), NodeState::Down).unwrap();
        let p = execute_migration(&mut f, p).unwrap();
        assert_eq!(p.status, PlanStatus::Aborted);
        assert_eq!(p.completed, 1);
        assert!(p.failure.unwrap().contains("unavailable"));
        assert!(reconcile(&f.catalogue_entries(), &f.inventories(), 0).is_consistent());

        let mut f = fabric(&[], &[GB]);
        let p = plan(&f, &PlanOptions::default());
        let p = execute_migration(&mut f, p).unwrap();
        assert_eq!(p.status, PlanStatus::Done);
    }

    #[test]
    fn skip_replicated_drops_redundant_copies() {
        let mut f = fabric(&[("/a", GB)], &[10 * GB]);
        f.write_file(&"SE-t1".into(), "u1", "/a", GB).unwrap();
        let opts = PlanOptions {
            skip_replicated: true,
            ..Default::default()
        };
        let p = plan(&f, &opts);
        assert_eq!(p.steps[0].to, None);
        let p = execute_migration(&mut f, p).unwrap();
        assert_eq!(p.status, PlanStatus::Done);
        assert_eq!(f.entry("/a").unwrap().replicas.len(), 1);
        assert!(reconcile(&f.catalogue_entries(), &f.inventories(), 0).is_consistent());
    }
}
