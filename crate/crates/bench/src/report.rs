//! Report types shared by the benchmark suites.

use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::Result;

pub const SCHEMA_VERSION: u32 = 1;
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// One acceptance property of a suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl PropertyCheck {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

pub fn all_passed(checks: &[PropertyCheck]) -> bool {
    checks.iter().all(|c| c.passed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTiming {
    pub label: String,
    pub seconds: f64,
}

/// Wall-clock data. Kept in its own field so the rest of a report is
/// reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub started_unix_s: u64,
    pub elapsed_s: f64,
    pub runs: Vec<RunTiming>,
}

pub(crate) struct Clock {
    started_unix_s: u64,
    start: Instant,
}

impl Clock {
    pub(crate) fn start() -> Self {
        Self {
            started_unix_s: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            start: Instant::now(),
        }
    }

    pub(crate) fn finish(self, runs: Vec<RunTiming>) -> Timing {
        Timing {
            started_unix_s: self.started_unix_s,
            elapsed_s: self.start.elapsed().as_secs_f64(),
            runs,
        }
    }
}

/// Serialized report with the `timing` field removed.
pub fn deterministic_json<T: Serialize>(report: &T) -> Result<String> {
    let mut v = serde_json::to_value(report)?;
    if let Some(obj) = v.as_object_mut() {
        obj.remove("timing");
    }
    crate::io::to_json(&v)
}

/// Same as [`deterministic_json`], starting from report text.
pub fn strip_timing(text: &str) -> Result<String> {
    let v: serde_json::Value = serde_json::from_str(text)?;
    deterministic_json(&v)
}
