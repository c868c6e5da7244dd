use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::fabric::{Fabric, FabricError, InfoRecord, InfoSnapshot};
use crate::types::{ResourceId, ResourceKind};

/// Ground-truth observation of one resource, used to check what it publishes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditSample {
    pub resource_id: ResourceId,
    pub kind: ResourceKind,
    /// A probe write was refused because the element is full.
    #[serde(default)]
    pub write_refused: bool,
    pub used: Option<u64>,
    pub free: Option<u64>,
    pub waiting: Option<u64>,
    pub running: Option<u64>,
}

/// Audit samples for every resource of a simulated fabric.
pub fn audit_from_fabric(fabric: &Fabric) -> Vec<AuditSample> {
    let storage = fabric.storage_nodes().map(|n| AuditSample {
        resource_id: n.id.clone(),
        kind: ResourceKind::SE,
        write_refused: matches!(
            fabric.check_writable(n.id.as_str(), 1),
            Err(FabricError::StorageFull { .. })
        ),
        used: Some(n.used()),
        free: Some(n.free()),
        waiting: None,
        running: None,
    });
    let compute = fabric.compute_nodes().map(|n| AuditSample {
        resource_id: n.id.clone(),
        kind: ResourceKind::CE,
        write_refused: false,
        used: None,
        free: None,
        waiting: Some(n.waiting),
        running: Some(n.running),
    });
    let services = fabric.service_nodes().map(|n| AuditSample {
        resource_id: n.id.clone(),
        kind: n.kind,
        write_refused: false,
        used: None,
        free: None,
        waiting: None,
        running: None,
    });
    let mut out: Vec<AuditSample> = storage.chain(compute).chain(services).collect();
    out.sort_by(|a, b| a.resource_id.cmp(&b.resource_id));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionConfig {
    /// Relative divergence tolerated between published and audited figures.
    pub relative_tolerance: f64,
    /// Maximum heartbeat age in minutes.
    pub staleness: u64,
    /// Free bytes a full element may publish without being flagged.
    pub full_free_tolerance: u64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            relative_tolerance: 0.05,
            staleness: 120,
            full_free_tolerance: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FindingKind {
    FullButReportsFree,
    FreeSpaceMismatch,
    UsedSpaceMismatch,
    NegativeOrMissingFields,
    StaleHeartbeat,
    InvalidJobCounts,
    Unpublished,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Finding {
    pub resource_id: ResourceId,
    pub kind: FindingKind,
    pub detail: String,
}

fn relative_divergence(published: u64, audited: u64) -> f64 {
    if audited == 0 {
        if published == 0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (published as f64 - audited as f64).abs() / audited as f64
    }
}

fn non_negative(v: Option<i64>) -> Option<u64> {
    v.and_then(|x| u64::try_from(x).ok())
}

fn structural_problem(rec: &InfoRecord) -> Option<String> {
    let fields: &[(&str, Option<i64>)] = match rec.kind {
        ResourceKind::SE => &[("used", rec.used_bytes), ("free", rec.free_bytes)],
        ResourceKind::CE => &[("waiting", rec.waiting), ("running", rec.running)],
        _ => &[],
    };
    let bad: Vec<String> = fields
        .iter()
        .filter_map(|(name, v)| match v {
            None => Some(format!("{name} missing")),
            Some(x) if *x < 0 => Some(format!("{name}={x}")),
            _ => None,
        })
        .collect();
    (!bad.is_empty()).then(|| bad.join(", "))
}

/// Compares published records against audited ground truth.
///
/// Structural problems and stale heartbeats are reported for every record of
/// the snapshot; value comparisons need an audit sample for the resource and
/// are skipped for stale records, whose figures describe the past.
pub fn detect_publication_errors(
    snapshot: &InfoSnapshot,
    audit: &[AuditSample],
    config: &DetectionConfig,
) -> Vec<Finding> {
    let mut findings = Vec::new();
    let mut push = |id: &ResourceId, kind, detail: String| {
        findings.push(Finding {
            resource_id: id.clone(),
            kind,
            detail,
        })
    };
    let tol = config.relative_tolerance;

    let mut stale_or_broken: BTreeSet<&ResourceId> = BTreeSet::new();
    for rec in &snapshot.records {
        if let Some(problem) = structural_problem(rec) {
            push(&rec.resource_id, FindingKind::NegativeOrMissingFields, problem);
            stale_or_broken.insert(&rec.resource_id);
        }
        let age = snapshot.taken_at.saturating_sub(rec.heartbeat);
        if age > config.staleness {
            push(
                &rec.resource_id,
                FindingKind::StaleHeartbeat,
                format!("heartbeat {age} minutes old"),
            );
            stale_or_broken.insert(&rec.resource_id);
        }
    }

    for sample in audit {
        let Some(rec) = snapshot.record(sample.resource_id.as_str()) else {
            push(
                &sample.resource_id,
                FindingKind::Unpublished,
                "absent from the information system".to_owned(),
            );
            continue;
        };
        if stale_or_broken.contains(&sample.resource_id) {
            continue;
        }
        match sample.kind {
            ResourceKind::SE => {
                let (Some(pub_used), Some(pub_free)) =
                    (non_negative(rec.used_bytes), non_negative(rec.free_bytes))
                else {
                    continue;
                };
                if sample.write_refused && pub_free > config.full_free_tolerance {
                    push(
                        &sample.resource_id,
                        FindingKind::FullButReportsFree,
                        format!("write refused while publishing {pub_free} bytes free"),
                    );
                } else if let Some(free) = sample.free {
                    if relative_divergence(pub_free, free) > tol {
                        push(
                            &sample.resource_id,
                            FindingKind::FreeSpaceMismatch,
                            format!("published free {pub_free}, audited {free}"),
                        );
                    }
                }
                if let Some(used) = sample.used {
                    if relative_divergence(pub_used, used) > tol {
                        push(
                            &sample.resource_id,
                            FindingKind::UsedSpaceMismatch,
                            format!("published used {pub_used}, audited {used}"),
                        );
                    }
                }
            }
            ResourceKind::CE => {
                let (Some(w), Some(r)) = (non_negative(rec.waiting), non_negative(rec.running))
                else {
                    continue;
                };
                let off = |published: u64, audited: Option<u64>| {
                    audited.is_some_and(|a| relative_divergence(published, a) > tol)
                };
                if off(w, sample.waiting) || off(r, sample.running) {
                    push(
                        &sample.resource_id,
                        FindingKind::InvalidJobCounts,
                        format!(
                            "published {w}/{r} waiting/running, audited {}/{}",
                            sample.waiting.unwrap_or_default(),
                            sample.running.unwrap_or_default()
                        ),
                    );
                }
            }
            _ => {}
        }
    }

    findings.sort();
    findings.dedup();
    findings
}

/// Distinct resources with at least one finding.
pub fn flagged_resources(findings: &[Finding]) -> BTreeSet<ResourceId> {
    findings.iter().map(|f| f.resource_id.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fabric::{ComputeSpec, FabricSpec, FaultKind, FaultSpec, StorageSpec};

    const GB: u64 = 1_000_000_000;

    fn fabric() -> Fabric {
        Fabric::new(&FabricSpec {
            storage: (1..=4)
                .map(|i| StorageSpec {
                    id: format!("SE-{i}").into(),
                    site: "s".into(),
                    capacity: 100 * GB,
                    files: vec![],
                })
                .collect(),
            compute: vec![ComputeSpec {
                id: "CE-1".into(),
                site: "s".into(),
                waiting: 40,
                running: 10,
            }],
            ..Default::default()
        })
        .unwrap()
    }

    fn detect(f: &Fabric) -> Vec<Finding> {
        detect_publication_errors(&f.publish_info(), &audit_from_fabric(f), &DetectionConfig::default())
    }

    #[test]
    fn clean_fabric_has_no_findings() {
        let mut f = fabric();
        f.write_file(&"SE-1".into(), "u", "/a", 30 * GB).unwrap();
        assert!(detect(&f).is_empty());
    }

    #[test]
    fn full_element_reporting_free_space() {
        let mut f = fabric();
        f.write_file(&"SE-2".into(), "u", "/a", 100 * GB).unwrap();
        f.inject_fault(&"SE-2".into(), FaultSpec::new(FaultKind::FullReportsFree, 500.0 * GB as f64, 0))
            .unwrap();
        let findings = detect(&f);
        assert_eq!(findings.len(), 1);
        assert_eq!(findings[0].kind, FindingKind::FullButReportsFree);
        assert_eq!(findings[0].resource_id.as_str(), "SE-2");
    }

    #[test]
    fn mismatches_beyond_tolerance() {
        let mut f = fabric();
        f.write_file(&"SE-1".into(), "u", "/a", 50 * GB).unwrap();
        f.write_file(&"SE-3".into(), "u", "/b", 50 * GB).unwrap();
        f.inject_fault(&"SE-1".into(), FaultSpec::new(FaultKind::OverstateFreeSpace, 0.2, 0))
            .unwrap();
        f.inject_fault(&"SE-3".into(), FaultSpec::new(FaultKind::UnderreportUsed, 0.04, 0))
            .unwrap();
        f.inject_fault(&"CE-1".into(), FaultSpec::new(FaultKind::InvalidJobCounts, 0.5, 0))
            .unwrap();
        let kinds: Vec<_> = detect(&f).into_iter().map(|x| (x.resource_id.to_string(), x.kind)).collect();
        assert_eq!(
            kinds,
            [
                ("CE-1".to_owned(), FindingKind::InvalidJobCounts),
                ("SE-1".to_owned(), FindingKind::FreeSpaceMismatch),
            ],
            "a 4% under-report stays inside the 5% tolerance"
        );
    }

    #[test]
    fn stale_and_unpublished() {
        let mut f = fabric();
        f.inject_fault(&"SE-4".into(), FaultSpec::new(FaultKind::StaleRecord, 0.0, 0))
            .unwrap();
        f.inject_fault(&"SE-3".into(), FaultSpec::new(FaultKind::Unpublished, 0.0, 0))
            .unwrap();
        f.advance_clock(120).unwrap();
        let kinds: Vec<_> = detect(&f).into_iter().map(|x| x.kind).collect();
        assert_eq!(kinds, [FindingKind::Unpublished], "120 minutes is not yet stale");
        f.advance_clock(30).unwrap();
        let flagged = flagged_resources(&detect(&f));
        assert_eq!(flagged.len(), 2);
    }

    #[test]
    fn negative_fields_in_external_snapshots() {
        let snapshot = InfoSnapshot {
            taken_at: 0,
            records: vec![InfoRecord {
                resource_id: "SE-x".into(),
                kind: ResourceKind::SE,
                heartbeat: 0,
                used_bytes: Some(-1),
                free_bytes: None,
                waiting: None,
                running: None,
            }],
        };
        let findings = detect_publication_errors(&snapshot, &[], &DetectionConfig::default());
        assert_eq!(findings.len(), 1);
        assert_eq!(findings[0].kind, FindingKind::NegativeOrMissingFields);
        assert_eq!(findings[0].detail, "used=-1, free missing");
    }
}
