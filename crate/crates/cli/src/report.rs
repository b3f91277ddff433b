//! Assertions, run summaries and the artifact manifest.

use serde::Serialize;

/// One checked claim, tagged with the invariant it traces to.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Assertion {
    pub id: &'static str,
    pub description: String,
    pub value: f64,
    /// Human-readable acceptance condition, e.g. `>= 1.8`.
    pub condition: String,
    pub passed: bool,
}

impl Assertion {
    pub fn at_most(id: &'static str, description: impl Into<String>, value: f64, limit: f64) -> Self {
        Self { id, description: description.into(), value, condition: format!("<= {limit:e}"), passed: value <= limit }
    }

    pub fn at_least(id: &'static str, description: impl Into<String>, value: f64, limit: f64) -> Self {
        Self { id, description: description.into(), value, condition: format!(">= {limit}"), passed: value >= limit }
    }

    pub fn within(id: &'static str, description: impl Into<String>, value: f64, range: [f64; 2]) -> Self {
        Self {
            id,
            description: description.into(),
            value,
            condition: format!("in [{}, {}]", range[0], range[1]),
            passed: range[0] <= value && value <= range[1],
        }
    }

    pub fn holds(id: &'static str, description: impl Into<String>, value: f64, passed: bool, condition: &str) -> Self {
        Self { id, description: description.into(), value, condition: condition.to_string(), passed }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub command: &'static str,
    /// Whether failed assertions make the run fail.
    pub assertions_enabled: bool,
    pub passed: bool,
    pub assertions: Vec<Assertion>,
    pub results: serde_json::Value,
}

#[derive(Clone, Debug, Serialize)]
pub struct Timing {
    pub case: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub library_version: &'static str,
    pub command: &'static str,
    pub workers: usize,
    pub config: &'a C,
    pub timings: Vec<Timing>,
    pub total_seconds: f64,
    pub files: Vec<String>,
}
