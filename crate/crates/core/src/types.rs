//! Identifiers and small value types shared by every module.

use std::borrow::Borrow;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Logical time in whole minutes since the scenario epoch.
///
/// The scenario epoch is mapped onto 1970-01-01T00:00Z whenever a calendar
/// date is needed (monthly ticket histograms).
pub type Timestamp = u64;

/// Storage quantities are plain byte counts.
pub type Bytes = u64;

pub const MINUTES_PER_DAY: u64 = 24 * 60;
pub const MINUTES_PER_WEEK: u64 = 7 * MINUTES_PER_DAY;

/// Identifier of a grid resource (SE, CE, WMS, catalogue or VOMS server).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResourceId(String);

impl ResourceId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ResourceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ResourceId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

impl From<String> for ResourceId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

impl Borrow<str> for ResourceId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl AsRef<str> for ResourceId {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// Kind of a grid resource as known to the registry and information system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ResourceKind {
    SE,
    CE,
    WMS,
    Catalogue,
    VOMS,
}

impl ResourceKind {
    pub const ALL: [ResourceKind; 5] = [
        ResourceKind::SE,
        ResourceKind::CE,
        ResourceKind::WMS,
        ResourceKind::Catalogue,
        ResourceKind::VOMS,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ResourceKind::SE => "SE",
            ResourceKind::CE => "CE",
            ResourceKind::WMS => "WMS",
            ResourceKind::Catalogue => "Catalogue",
            ResourceKind::VOMS => "VOMS",
        }
    }
}

impl fmt::Display for ResourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Half-open interval of logical time, `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl Window {
    /// Returns `None` unless `start < end`.
    pub fn new(start: Timestamp, end: Timestamp) -> Option<Self> {
        (start < end).then_some(Self { start, end })
    }

    pub fn contains(&self, at: Timestamp) -> bool {
        self.start <= at && at < self.end
    }

    pub fn len(&self) -> u64 {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    /// Length of the intersection with `[start, end)`.
    pub fn overlap(&self, start: Timestamp, end: Timestamp) -> u64 {
        let lo = self.start.max(start);
        let hi = self.end.min(end);
        hi.saturating_sub(lo)
    }
}

/// Decimal rendering used in reports and notifications (1 GB = 10^9 bytes).
pub fn format_bytes(bytes: Bytes) -> String {
    const UNITS: [(&str, f64); 5] = [
        ("PB", 1e15),
        ("TB", 1e12),
        ("GB", 1e9),
        ("MB", 1e6),
        ("kB", 1e3),
    ];
    let b = bytes as f64;
    for (unit, scale) in UNITS {
        if b >= scale {
            return format!("{:.1} {unit}", b / scale);
        }
    }
    format!("{bytes} B")
}
