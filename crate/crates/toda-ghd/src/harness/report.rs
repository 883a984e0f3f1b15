//! Run reports: config echo, per-seed metrics, aggregates and checks.

use super::config::ExperimentConfig;
use crate::error::Result;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// Metrics of one seed, keyed by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub metrics: BTreeMap<String, f64>,
}

/// Aggregate over `n` samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub name: String,
    pub value: f64,
    pub n: usize,
}

/// Direction of a threshold comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Comparison {
    Below,
    AtMost,
    AtLeast,
    /// `threshold ≤ value ≤ upper`.
    Within,
}

/// Asserted criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub comparison: Comparison,
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    pub pass: bool,
}

impl Check {
    pub fn below(name: &str, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, comparison: Comparison::Below, threshold, upper: None, pass: value < threshold }
    }

    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, comparison: Comparison::AtMost, threshold, upper: None, pass: value <= threshold }
    }

    pub fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, comparison: Comparison::AtLeast, threshold, upper: None, pass: value >= threshold }
    }

    pub fn within(name: &str, value: f64, lo: f64, hi: f64) -> Self {
        Self { name: name.into(), value, comparison: Comparison::Within, threshold: lo, upper: Some(hi), pass: value >= lo && value <= hi }
    }

    pub fn line(&self) -> String {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        match self.comparison {
            Comparison::Below => format!("{verdict} {}: {:.6e} < {:.6e}", self.name, self.value, self.threshold),
            Comparison::AtMost => format!("{verdict} {}: {:.6e} <= {:.6e}", self.name, self.value, self.threshold),
            Comparison::AtLeast => format!("{verdict} {}: {:.6e} >= {:.6e}", self.name, self.value, self.threshold),
            Comparison::Within => {
                format!("{verdict} {}: {:.6e} in [{:.6e}, {:.6e}]", self.name, self.value, self.threshold, self.upper.unwrap_or(f64::NAN))
            }
        }
    }
}

/// Result of one experiment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub experiment: String,
    pub config: ExperimentConfig,
    pub version: String,
    pub rng: String,
    pub per_seed: Vec<SeedMetrics>,
    pub aggregates: Vec<Aggregate>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    /// Kept apart from the metrics, which are deterministic.
    pub wall_clock_secs: f64,
}

/// Deterministic view of a report.
#[derive(Serialize)]
struct Metrics<'a> {
    experiment: &'a str,
    config: &'a ExperimentConfig,
    per_seed: &'a [SeedMetrics],
    aggregates: &'a [Aggregate],
    checks: &'a [Check],
    notes: &'a [String],
}

pub const RNG_PROVENANCE: &str = "ChaCha12 keyed by SplitMix64(seed, site), stream = replica";

impl RunReport {
    pub fn new(config: &ExperimentConfig) -> Self {
        Self {
            experiment: config.experiment.name().into(),
            config: config.clone(),
            version: concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")).into(),
            rng: RNG_PROVENANCE.into(),
            per_seed: Vec::new(),
            aggregates: Vec::new(),
            checks: Vec::new(),
            notes: Vec::new(),
            wall_clock_secs: 0.0,
        }
    }

    pub fn aggregate(&mut self, name: &str, value: f64, n: usize) {
        self.aggregates.push(Aggregate { name: name.into(), value, n });
    }

    pub fn check(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.aggregates.iter().find(|a| a.name == name).map(|a| a.value)
    }

    pub fn check_named(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// Everything except the wall clock, serialized canonically.
    pub fn metrics_json(&self) -> String {
        serde_json::to_string(&Metrics { experiment: &self.experiment, config: &self.config, per_seed: &self.per_seed, aggregates: &self.aggregates, checks: &self.checks, notes: &self.notes })
            .expect("report serializes")
    }

    /// Writes `<experiment>-report.json` and `<experiment>-seeds.jsonl`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{}-report.json", self.experiment)), serde_json::to_string_pretty(self)?)?;
        let mut lines = String::new();
        for s in &self.per_seed {
            lines.push_str(&serde_json::to_string(s)?);
            lines.push('\n');
        }
        std::fs::write(dir.join(format!("{}-seeds.jsonl", self.experiment)), lines)?;
        Ok(())
    }
}
