//! Run configuration: one TOML document (or its JSON echo) describing the
//! topology, the control-plane policy and the scenario to drive.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conductor::{ConductorConfig, Hierarchy, PlacementPolicy, PolicyMode};
use crate::metrics::OutputFormat;
use crate::scenarios::{ScenarioContext, ScenarioSpec};
use crate::topology::{NodeId, Topology};
use crate::virtual_resources::{ClassBounds, RadioGrid};

#[derive(Debug, Error, PartialEq)]
#[error("{}", .findings.join("\n"))]
pub struct ConfigError {
    /// One line per problem found.
    pub findings: Vec<String>,
}

impl ConfigError {
    pub fn one(msg: impl Into<String>) -> Self {
        ConfigError { findings: vec![msg.into()] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyName {
    AlwaysLocal,
    AlwaysCentral,
    HybridThreshold,
    DeadlineAware,
}

impl PolicyName {
    pub const ALL: [PolicyName; 4] = [
        PolicyName::AlwaysLocal,
        PolicyName::AlwaysCentral,
        PolicyName::HybridThreshold,
        PolicyName::DeadlineAware,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyName::AlwaysLocal => "AlwaysLocal",
            PolicyName::AlwaysCentral => "AlwaysCentral",
            PolicyName::HybridThreshold => "HybridThreshold",
            PolicyName::DeadlineAware => "DeadlineAware",
        }
    }
}

impl fmt::Display for PolicyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyName {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyName::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                ConfigError::one(format!(
                    "unknown policy `{s}`, expected one of AlwaysLocal, AlwaysCentral, HybridThreshold, DeadlineAware"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoLevelSection {
    /// Region name per controlled node.
    pub regions: BTreeMap<NodeId, String>,
    pub regional_latency_s: f64,
    pub global_latency_s: f64,
}

fn default_policy() -> PolicyName {
    PolicyName::AlwaysLocal
}
fn default_q_star() -> usize {
    2
}
fn default_k_violations() -> u32 {
    1
}
fn default_downtime() -> f64 {
    0.05
}
fn default_nci_period() -> f64 {
    0.1
}
fn default_k_paths() -> usize {
    8
}
fn default_tracing() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    #[serde(default = "default_policy")]
    pub placement: PolicyName,
    /// Queue threshold for `HybridThreshold`.
    #[serde(default = "default_q_star")]
    pub q_star: usize,
    #[serde(default)]
    pub control_latency_s: f64,
    /// Flat when absent.
    #[serde(default)]
    pub two_level: Option<TwoLevelSection>,
    #[serde(default = "default_k_violations")]
    pub k_violations: u32,
    #[serde(default = "default_downtime")]
    pub migration_downtime_s: f64,
    #[serde(default = "default_nci_period")]
    pub nci_period_s: f64,
    #[serde(default = "default_k_paths")]
    pub k_paths: usize,
}

impl Default for PolicySection {
    fn default() -> Self {
        PolicySection {
            placement: default_policy(),
            q_star: default_q_star(),
            control_latency_s: 0.0,
            two_level: None,
            k_violations: default_k_violations(),
            migration_downtime_s: default_downtime(),
            nci_period_s: default_nci_period(),
            k_paths: default_k_paths(),
        }
    }
}

impl PolicySection {
    pub fn mode(&self) -> PolicyMode {
        match self.placement {
            PolicyName::AlwaysLocal => PolicyMode::AlwaysLocal,
            PolicyName::AlwaysCentral => PolicyMode::AlwaysCentral,
            PolicyName::HybridThreshold => PolicyMode::HybridThreshold { q_star: self.q_star },
            PolicyName::DeadlineAware => PolicyMode::DeadlineAware,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioSection {
    #[serde(default)]
    pub grid: RadioGrid,
    #[serde(default)]
    pub class_bounds: ClassBounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub duration_s: f64,
    /// Output directory; the CLI falls back to its own default.
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default = "default_tracing")]
    pub tracing: bool,
    #[serde(default)]
    pub policy: PolicySection,
    #[serde(default)]
    pub radio: RadioSection,
    pub topology: Topology,
    pub scenario: ScenarioSpec,
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

impl RunConfig {
    /// Parses TOML. Syntax and schema errors carry the offending line.
    pub fn from_toml(src: &str) -> Result<Self, ConfigError> {
        toml::from_str(src).map_err(|e| {
            let msg = e.message().trim().to_string();
            match e.span() {
                Some(span) => ConfigError::one(format!("line {}: {msg}", line_of(src, span.start))),
                None => ConfigError::one(msg),
            }
        })
    }

    pub fn from_json(src: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(src).map_err(|e| ConfigError::one(format!("line {}: {e}", e.line())))
    }

    /// Reads a `.json` file as JSON and anything else as TOML, then validates.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let src = std::fs::read_to_string(path).map_err(|e| ConfigError::one(format!("{}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|x| x.eq_ignore_ascii_case("json"));
        let cfg = if is_json { Self::from_json(&src) } else { Self::from_toml(&src) };
        let cfg = cfg.map_err(|e| ConfigError {
            findings: e.findings.into_iter().map(|f| format!("{}: {f}", path.display())).collect(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Semantic checks that serde cannot express.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut findings = Vec::new();
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            findings.push(format!("duration_s must be positive, got {}", self.duration_s));
        }
        let p = &self.policy;
        if !(p.nci_period_s.is_finite() && p.nci_period_s > 0.0) {
            findings.push(format!("policy.nci_period_s must be positive, got {}", p.nci_period_s));
        }
        if !(p.migration_downtime_s >= 0.0) || !(p.control_latency_s >= 0.0) {
            findings.push("policy latencies must be non-negative".to_string());
        }
        if p.k_violations == 0 {
            findings.push("policy.k_violations must be at least 1".to_string());
        }
        if p.k_paths == 0 {
            findings.push("policy.k_paths must be at least 1".to_string());
        }
        if let Some(t) = &p.two_level {
            if !(t.regional_latency_s >= 0.0 && t.global_latency_s >= 0.0) {
                findings.push("policy.two_level latencies must be non-negative".to_string());
            }
            for n in t.regions.keys() {
                if !self.topology.contains_node(n) {
                    findings.push(format!("policy.two_level.regions refers to unknown node `{n}`"));
                }
            }
        }
        findings.extend(self.topology.validate().findings.iter().map(|f| format!("topology: {f}")));
        findings.extend(self.scenario.unresolved(&self.topology));
        if findings.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { findings })
        }
    }

    pub fn conductor_config(&self) -> ConductorConfig {
        let p = &self.policy;
        ConductorConfig {
            policy: PlacementPolicy {
                mode: p.mode(),
                control_latency_s: p.control_latency_s,
            },
            hierarchy: match &p.two_level {
                None => Hierarchy::Flat,
                Some(t) => Hierarchy::TwoLevel {
                    regions: t.regions.clone(),
                    regional_latency_s: t.regional_latency_s,
                    global_latency_s: t.global_latency_s,
                },
            },
            k_violations: p.k_violations,
            migration_downtime_s: p.migration_downtime_s,
            k_paths: p.k_paths,
            grid: self.radio.grid,
            class_bounds: self.radio.class_bounds,
        }
    }

    pub fn context(&self) -> ScenarioContext {
        ScenarioContext {
            topology: self.topology.clone(),
            conductor: self.conductor_config(),
            seed: self.seed,
            duration_s: self.duration_s,
            tracing: self.tracing,
            nci_period_s: self.policy.nci_period_s,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
