//! JSON experiment configuration.

use crate::dressing::DosGrid;
use crate::dynamics::IntegratorConfig;
use crate::ensemble::ThermalParams;
use crate::error::{Error, Result};
use crate::scattering::{FTwoBody, GCatalog, SoftLog};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Experiment selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Conservation,
    Spacing,
    Dos,
    DressingIdentities,
    Scattering,
    Concentration,
    Proxy,
    Lln,
    Fluctuations,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Experiment::Conservation,
        Experiment::Spacing,
        Experiment::Dos,
        Experiment::DressingIdentities,
        Experiment::Scattering,
        Experiment::Concentration,
        Experiment::Proxy,
        Experiment::Lln,
        Experiment::Fluctuations,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Conservation => "conservation",
            Experiment::Spacing => "spacing",
            Experiment::Dos => "dos",
            Experiment::DressingIdentities => "dressing-identities",
            Experiment::Scattering => "scattering",
            Experiment::Concentration => "concentration",
            Experiment::Proxy => "proxy",
            Experiment::Lln => "lln",
            Experiment::Fluctuations => "fluctuations",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s).ok_or_else(|| Error::Config(format!("unknown experiment {s:?}")))
    }

    fn needs_time(&self) -> bool {
        matches!(self, Experiment::Conservation | Experiment::Scattering | Experiment::Proxy | Experiment::Lln | Experiment::Fluctuations)
    }
}

/// Cutoff scale: `"auto"` (= T), a number, or a list of numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MSpec {
    Auto(AutoTag),
    One(f64),
    Many(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

impl Default for MSpec {
    fn default() -> Self {
        MSpec::Auto(AutoTag::Auto)
    }
}

/// Softening `𝔡`: `"auto"`, `"zero"` or a nonnegative value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FrakD {
    Named(FrakDTag),
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrakDTag {
    Auto,
    Zero,
}

impl Default for FrakD {
    fn default() -> Self {
        FrakD::Named(FrakDTag::Auto)
    }
}

/// Quadrature grid for the dressing equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nodes: usize,
    pub cutoff: f64,
}

/// Spectral weight for concentration statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FName {
    #[default]
    One,
    Sigma1,
    Veff,
}

/// Concentration statistic selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatisticConfig {
    pub f: FName,
    pub two_body: FTwoBody,
    pub g: GCatalog,
}

impl Default for StatisticConfig {
    fn default() -> Self {
        Self { f: FName::One, two_body: FTwoBody::None, g: GCatalog::Box }
    }
}

/// Overrides for the proxy window parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ProxyOverrides {
    pub shrink: Option<usize>,
    pub boundary_width: Option<usize>,
    pub step: Option<f64>,
}

fn one() -> f64 {
    1.0
}
fn two() -> usize {
    2
}
fn default_samples() -> usize {
    100_000
}
fn default_per_seed() -> usize {
    10
}
fn yes() -> bool {
    true
}

/// One experiment run, read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default = "one")]
    pub beta: f64,
    pub theta: f64,
    /// Lattice size; sites `0..N`.
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n1: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n2: Option<i64>,
    /// Time horizon.
    #[serde(rename = "T", default)]
    pub t: f64,
    /// Observer times, evenly spaced over `[0, T]` including both ends.
    #[serde(default = "two")]
    pub snapshots: usize,
    /// Sub-horizons for scaling fits; defaults to `[T]`.
    #[serde(default)]
    pub horizons: Vec<f64>,
    #[serde(rename = "M", default)]
    pub m: MSpec,
    #[serde(default)]
    pub frak_d: FrakD,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    /// Coupling draws for the moment identity.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Snapshot time for concentration statistics.
    #[serde(default)]
    pub snapshot_time: f64,
    /// Quasiparticles per seed for concentration statistics.
    #[serde(default = "default_per_seed")]
    pub per_seed: usize,
    #[serde(default)]
    pub statistic: StatisticConfig,
    #[serde(default)]
    pub proxy: ProxyOverrides,
    /// Adds the deterministic two-body phase-shift check to scattering runs.
    #[serde(default = "yes")]
    pub two_particle: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn params(&self) -> Result<ThermalParams> {
        ThermalParams::new(self.beta, self.theta)
    }

    /// Lattice interval `[n1, n2]`.
    pub fn interval(&self) -> Result<(i64, i64)> {
        match (self.n, self.n1, self.n2) {
            (Some(n), None, None) => Ok((0, n as i64 - 1)),
            (None, Some(a), Some(b)) => Ok((a, b)),
            (None, None, None) => Err(Error::Config("lattice size missing: give N or n1/n2".into())),
            _ => Err(Error::Config("give either N or both n1 and n2".into())),
        }
    }

    pub fn size(&self) -> Result<usize> {
        let (a, b) = self.interval()?;
        Ok((b - a + 1) as usize)
    }

    /// Cutoff scales with `"auto"` resolved to `T`.
    pub fn m_values(&self) -> Vec<f64> {
        match &self.m {
            MSpec::Auto(_) => vec![self.t],
            MSpec::One(m) => vec![*m],
            MSpec::Many(v) => v.clone(),
        }
    }

    pub fn soft_log(&self) -> Result<SoftLog> {
        match self.frak_d {
            FrakD::Named(FrakDTag::Auto) => Ok(SoftLog::for_size(self.size()?)),
            FrakD::Named(FrakDTag::Zero) => SoftLog::new(0.0),
            FrakD::Value(d) => SoftLog::new(d),
        }
    }

    pub fn dos_grid(&self) -> Result<DosGrid> {
        match self.grid {
            Some(g) => DosGrid::new(g.nodes, g.cutoff),
            None => DosGrid::default_for(self.beta),
        }
    }

    /// `[T]` unless sub-horizons were given.
    pub fn horizon_list(&self) -> Vec<f64> {
        if self.horizons.is_empty() {
            vec![self.t]
        } else {
            self.horizons.clone()
        }
    }

    /// Evenly spaced observer times over `[0, T]`.
    pub fn observer_times(&self) -> Vec<f64> {
        let k = self.snapshots - 1;
        (0..=k).map(|i| if i == k { self.t } else { self.t * i as f64 / k as f64 }).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.beta > 0.0 && self.theta > 0.0) {
            return bad(format!("β and θ must be positive, got β = {}, θ = {}", self.beta, self.theta));
        }
        if self.experiment != Experiment::DressingIdentities {
            let n = self.size()?;
            if n < 8 {
                return bad(format!("N must be at least 8, got {n}"));
            }
            if self.experiment.needs_time() && !(self.t > 0.0) {
                return bad(format!("T must be positive for {}", self.experiment.name()));
            }
            if self.t > n as f64 / 8.0 {
                return bad(format!("T = {} exceeds N/8 = {}", self.t, n as f64 / 8.0));
            }
        }
        if self.seeds.is_empty() {
            return bad("seed list is empty".into());
        }
        if self.snapshots < 2 {
            return bad(format!("snapshots must be at least 2, got {}", self.snapshots));
        }
        if !(self.t >= 0.0) {
            return bad(format!("T must be nonnegative, got {}", self.t));
        }
        if self.horizons.iter().any(|&h| !(h > 0.0 && h <= self.t)) {
            return bad(format!("horizons must lie in (0, T], got {:?}", self.horizons));
        }
        let ms = self.m_values();
        let uses_m = self.experiment.needs_time() || self.experiment == Experiment::Concentration;
        if uses_m && (ms.is_empty() || ms.iter().any(|&m| !(m > 0.0))) {
            return bad(format!("M values must be positive, got {ms:?}"));
        }
        if let FrakD::Value(d) = self.frak_d {
            if !(d >= 0.0) {
                return bad(format!("frak_d must be nonnegative, got {d}"));
            }
        }
        if !(self.snapshot_time >= 0.0 && self.snapshot_time <= self.t.max(0.0)) {
            return bad(format!("snapshot_time {} outside [0, T]", self.snapshot_time));
        }
        if self.samples == 0 || self.per_seed == 0 {
            return bad("samples and per_seed must be positive".into());
        }
        self.integrator.validate()?;
        self.dos_grid()?;
        if matches!(self.experiment, Experiment::Dos | Experiment::Concentration | Experiment::Scattering | Experiment::Lln) || self.experiment == Experiment::Fluctuations {
            // Dressing-based experiments need a well-defined α.
            self.params()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_and_defaults() {
        let c = ExperimentConfig::from_json(r#"{"experiment":"lln","theta":0.3,"N":256,"T":8,"seeds":[1,2]}"#).unwrap();
        assert_eq!(c.beta, 1.0);
        assert_eq!(c.m_values(), vec![8.0]);
        assert_eq!(c.observer_times(), vec![0.0, 8.0]);
        assert_eq!(c.interval().unwrap(), (0, 255));
        assert_eq!(c.statistic.g, GCatalog::Box);
        let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn m_and_frak_d_forms() {
        let c = ExperimentConfig::from_json(r#"{"experiment":"concentration","theta":1,"N":64,"M":[4,16],"frak_d":"zero","seeds":[1]}"#).unwrap();
        assert_eq!(c.m_values(), vec![4.0, 16.0]);
        assert_eq!(c.soft_log().unwrap().frak_d, 0.0);
        let c = ExperimentConfig::from_json(r#"{"experiment":"concentration","theta":1,"N":64,"M":3,"frak_d":0.5,"seeds":[1]}"#).unwrap();
        assert_eq!(c.m_values(), vec![3.0]);
        assert_eq!(c.soft_log().unwrap().frak_d, 0.5);
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            r#"{"experiment":"lln","theta":0.3,"N":256,"seeds":[1]}"#,
            r#"{"experiment":"lln","theta":0.3,"N":4,"T":0.1,"seeds":[1]}"#,
            r#"{"experiment":"lln","theta":0.3,"N":256,"T":64,"seeds":[1]}"#,
            r#"{"experiment":"dos","theta":1,"N":64,"seeds":[]}"#,
            r#"{"experiment":"dos","theta":-1,"N":64,"seeds":[1]}"#,
            r#"{"experiment":"dos","theta":1,"N":64,"seeds":[1],"bogus":1}"#,
            r#"{"experiment":"dos","theta":1,"N":64,"n1":0,"n2":9,"seeds":[1]}"#,
            r#"{"experiment":"nope","theta":1,"N":64,"seeds":[1]}"#,
            r#"{"experiment":"dos","theta":1,"N":64,"snapshots":1,"seeds":[1]}"#,
        ] {
            assert!(ExperimentConfig::from_json(text).is_err(), "{text}");
        }
    }

    #[test]
    fn experiment_names_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(Experiment::parse(e.name()).unwrap(), e);
            assert_eq!(serde_json::to_string(&e).unwrap(), format!("\"{}\"", e.name()));
        }
    }
}
