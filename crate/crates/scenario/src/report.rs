//! Machine-readable run reports.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use clonemator_core::Engine;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::schema::{AssertionSpec, ScenarioScript};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssertionResult {
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub kind: String,
    pub tick: u64,
    pub passed: bool,
    pub measured: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// Measured values keep six decimals so reports compare byte for byte.
fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = (n.as_f64().unwrap_or(0.0) * 1e6).round() / 1e6;
            *v = serde_json::json!(if x == 0.0 { 0.0 } else { x });
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

impl AssertionResult {
    pub fn new(
        index: usize,
        spec: &AssertionSpec,
        passed: bool,
        mut measured: Value,
        detail: Option<String>,
    ) -> Self {
        round_floats(&mut measured);
        AssertionResult {
            index,
            label: spec.label.clone(),
            kind: spec.check.name().into(),
            tick: spec.tick,
            passed,
            measured,
            detail,
        }
    }

    pub(crate) fn not_reached(index: usize, spec: &AssertionSpec, aborted_at: Option<u64>) -> Self {
        let detail = match aborted_at {
            Some(t) => format!("not evaluated: run aborted at tick {t}"),
            None => "not evaluated".into(),
        };
        Self::new(index, spec, false, Value::Null, Some(detail))
    }
}

/// The command (or setup step) that stopped a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub tick: u64,
    pub op: String,
    pub code: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub ticks_executed: u64,
    pub passed: bool,
    pub assertions: Vec<AssertionResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<RunFailure>,
    pub event_counts: BTreeMap<String, u64>,
    pub final_hash: String,
    #[serde(skip)]
    pub wall_clock: Duration,
}

impl RunReport {
    pub(crate) fn new(name: &str) -> Self {
        RunReport {
            scenario: name.into(),
            ticks_executed: 0,
            passed: false,
            assertions: Vec::new(),
            failure: None,
            event_counts: BTreeMap::new(),
            final_hash: String::new(),
            wall_clock: Duration::ZERO,
        }
    }

    pub(crate) fn finish(&mut self, s: &ScenarioScript, engine: Option<&Engine>, started: Instant) {
        if let Some(e) = engine {
            self.final_hash = e.world().hash().to_hex();
        }
        self.passed = self.failure.is_none()
            && self.assertions.len() == s.assertions.len()
            && self.assertions.iter().all(|a| a.passed);
        self.wall_clock = started.elapsed();
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn failed_assertions(&self) -> impl Iterator<Item = &AssertionResult> {
        self.assertions.iter().filter(|a| !a.passed)
    }
}
