//! Storage auditing: filling rates, heavy users, publication-error detection,
//! catalogue/storage reconciliation, decommissioning and departed-user cleanup.

mod cleanup;
mod decommission;
mod detection;
mod filling;
mod heavy_users;
mod reconcile;

use thiserror::Error;

use crate::types::ResourceId;

pub use cleanup::{cleanup_departed, execute_cleanup, CleanupItem, CleanupOutcome, CleanupReport};
pub use decommission::{
    execute_migration, execute_step, plan_decommission, DecommissionPlan, MigrationStep, Placement,
    PlanOptions, PlanStatus,
};
pub use detection::{
    audit_from_fabric, detect_publication_errors, flagged_resources, AuditSample, DetectionConfig,
    Finding, FindingKind,
};
pub use filling::{compute_filling_rates, DataQuality, FillingEntry, FillingRateReport, SortMode};
pub use heavy_users::{
    owner_totals, render_notification, scan_heavy_users, HeavyUserEntry, HeavyUserScan,
    NOTIFICATION_TEMPLATE,
};
pub use reconcile::{reconcile, Ghost, ReconciliationReport, Zombie};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StorageOpsError {
    #[error("threshold {0} is outside [0, 1]")]
    ThresholdOutOfRange(f64),
    #[error("top_n must be at least 1")]
    ZeroTopN,
    #[error("{0} is not a storage element of the VO")]
    UnknownSource(ResourceId),
    #[error("plan {plan_id} is {status:?} and cannot be executed")]
    PlanNotExecutable { plan_id: String, status: PlanStatus },
}
