//! Experiment configs and machine-readable reports.

use crate::error::{Error, Result};
use crate::graph::GeometrySpec;
use crate::perturbation::PerturbationSpec;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Build,
    Spectrum,
    CommutatorCheck,
    MourreScan,
    LapScan,
    Evolve,
    ThresholdStudy,
    ConditionsCheck,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::Build,
        Command::Spectrum,
        Command::CommutatorCheck,
        Command::MourreScan,
        Command::LapScan,
        Command::Evolve,
        Command::ThresholdStudy,
        Command::ConditionsCheck,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Command::Build => "build",
            Command::Spectrum => "spectrum",
            Command::CommutatorCheck => "commutator-check",
            Command::MourreScan => "mourre-scan",
            Command::LapScan => "lap-scan",
            Command::Evolve => "evolve",
            Command::ThresholdStudy => "threshold-study",
            Command::ConditionsCheck => "conditions-check",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub geometry: GeometrySpec,
    #[serde(default)]
    pub perturbation: PerturbationSpec,
    pub command: Command,
    /// Command-specific table, validated by the front end before any computation.
    #[serde(default = "empty_object")]
    pub command_params: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_dim: Option<usize>,
}

fn empty_object() -> Value {
    Value::Object(Default::default())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Parameter(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate().map_err(|e| Error::Parameter(format!("geometry: {e}")))?;
        self.perturbation.validate().map_err(|e| Error::Parameter(format!("perturbation: {e}")))?;
        if !self.command_params.is_object() {
            return Err(Error::Parameter("command_params: expected a JSON object".into()));
        }
        if self.max_dim == Some(0) {
            return Err(Error::Parameter("max_dim: must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
    #[serde(rename = "==")]
    Equal,
}

/// Named outcome together with the measured value and the tolerance that decided it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub comparison: Comparison,
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl Verdict {
    pub fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self::new(name, value <= tolerance, value, Comparison::AtMost, tolerance)
    }

    pub fn at_least(name: &str, value: f64, tolerance: f64) -> Self {
        Self::new(name, value >= tolerance, value, Comparison::AtLeast, tolerance)
    }

    /// Boolean outcome encoded as `value == 1`.
    pub fn flag(name: &str, holds: bool) -> Self {
        Self::new(name, holds, if holds { 1.0 } else { 0.0 }, Comparison::Equal, 1.0)
    }

    fn new(name: &str, pass: bool, value: f64, comparison: Comparison, tolerance: f64) -> Self {
        Self { name: name.into(), pass, value, comparison, tolerance, detail: String::new() }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub tool: String,
    pub tool_version: String,
    pub timestamp: u64,
    pub command: Command,
    pub config_echo: Value,
    pub results: Value,
    pub verdicts: Vec<Verdict>,
    /// Every tolerance used by a verdict, keyed by verdict name.
    pub tolerances: BTreeMap<String, f64>,
}

impl ScanReport {
    pub fn new(command: Command, config_echo: Value, results: Value, verdicts: Vec<Verdict>, timestamp: u64) -> Self {
        let tolerances = verdicts.iter().map(|v| (v.name.clone(), v.tolerance)).collect();
        Self {
            tool: "cusplab".into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            timestamp,
            command,
            config_echo,
            results,
            verdicts,
            tolerances,
        }
    }

    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    /// 0 when every verdict passes, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.all_pass() {
            0
        } else {
            2
        }
    }
}

/// Float with 17 significant digits, round-trip exact.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}
