//! Scenario runner: builds spaces, systems and operators from JSON
//! configs, runs constructions and sweeps, and emits deterministic
//! JSON/CSV reports.
//!
//! Reports are byte-identical across runs with the same config and seed:
//! all randomness is ChaCha-seeded, all maps are ordered, and no wall-clock
//! data enters the output. Pass/fail tolerances live in the config, never
//! in code.

pub mod config;
pub mod fit;
pub mod norm;
pub mod scenarios;

use std::collections::BTreeMap;

use serde::Serialize;
use sha2::{Digest, Sha256};

pub use config::{
    default_config, CtConfig, OperatorConfig, ParamsConfig, ScenarioConfig, ScenarioKind,
    SpaceConfig, SweepConfig, SystemConfig,
};
pub use fit::{fit_exponent, linear_fit, FitResult};
pub use norm::{test_battery, weighted_operator_norm};
pub use scenarios::run_scenario;

/// A numeric metric labeled with its producing operation and mode.
#[derive(Debug, Clone, Serialize)]
pub struct Metric {
    pub value: f64,
    pub producer: String,
    pub mode: String,
}

/// One pass/fail check against a config tolerance.
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub scenario: ScenarioConfig,
    /// Content hash of the canonicalized config.
    pub config_hash: String,
    pub metrics: BTreeMap<String, Metric>,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

impl Report {
    pub fn new(cfg: &ScenarioConfig) -> Report {
        Report {
            scenario: cfg.clone(),
            config_hash: config_hash(cfg),
            metrics: BTreeMap::new(),
            checks: Vec::new(),
            passed: true,
        }
    }

    pub fn metric(&mut self, name: &str, value: f64, producer: &str, mode: &str) {
        self.metrics.insert(
            name.to_string(),
            Metric { value, producer: producer.to_string(), mode: mode.to_string() },
        );
    }

    pub fn check(&mut self, name: &str, passed: bool, value: f64, tolerance: f64, detail: &str) {
        self.checks.push(CheckResult {
            name: name.to_string(),
            passed,
            value,
            tolerance,
            detail: detail.to_string(),
        });
        self.passed &= passed;
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }

    /// Fixed, versioned CSV schema (v1):
    /// `schema_version,scenario,metric,producer,mode,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("schema_version,scenario,metric,producer,mode,value\n");
        for (name, m) in &self.metrics {
            out.push_str(&format!(
                "1,{},{},{},{},{:.17e}\n",
                self.scenario.name, name, m.producer, m.mode, m.value
            ));
        }
        out
    }
}

/// SHA-256 of the canonical (serde_json) config encoding.
pub fn config_hash(cfg: &ScenarioConfig) -> String {
    let bytes = serde_json::to_vec(cfg).expect("config serialization");
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Everything a scenario run produces.
pub struct ScenarioOutput {
    pub report: Report,
    /// Construction trace as JSON lines, when the scenario ran one.
    pub trace_jsonl: Option<String>,
}
