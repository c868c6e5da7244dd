#![allow(dead_code)]

use std::path::{Path, PathBuf};

use serde_json::{json, Value};

pub const GB: u64 = 1_000_000_000;

/// Two SEs (one holding a single 10 GB file), one CE, a WMS and a VOMS.
pub fn small_scenario(duration: u64) -> Value {
    json!({
        "fabric": {
            "storage": [
                {"id": "SE-1", "site": "a", "capacity": 100 * GB,
                 "files": [{"lfn": "/vo/f1", "owner": "alice", "size": 10 * GB}]},
                {"id": "SE-2", "site": "b", "capacity": 100 * GB}
            ],
            "compute": [{"id": "CE-1", "site": "a", "waiting": 39, "running": 10}]
        },
        "duration": duration
    })
}

pub fn write_scenario(dir: &Path, name: &str, scenario: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_vec_pretty(scenario).unwrap()).unwrap();
    path
}
