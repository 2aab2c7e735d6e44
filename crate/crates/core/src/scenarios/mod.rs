//! Workloads that drive the conductor and the kernel end to end.

pub mod accident;
pub mod baseband;
pub mod gaming;
pub mod hcn;
pub mod placement;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::conductor::{ConductorConfig, ConductorError};
use crate::des::EventTrace;
use crate::metrics::{summarize, LatencySample};
use crate::topology::{NodeId, Topology};
use crate::virtual_resources::ResourceError;

pub use accident::AccidentScenario;
pub use baseband::BasebandScenario;
pub use gaming::GamingScenario;
pub use hcn::HcnScenario;
pub use placement::PlacementScenario;

/// Everything a scenario needs besides its own parameters.
#[derive(Debug, Clone)]
pub struct ScenarioContext {
    pub topology: Topology,
    pub conductor: ConductorConfig,
    pub seed: u64,
    pub duration_s: f64,
    pub tracing: bool,
    /// Period of network-context reports where a scenario generates them.
    pub nci_period_s: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ScenarioReport {
    pub summary: BTreeMap<String, Value>,
    pub samples: Vec<LatencySample>,
    pub trace: EventTrace,
    pub resources: Value,
}

impl ScenarioReport {
    pub fn put(&mut self, key: &str, v: impl Into<Value>) {
        self.summary.insert(key.to_string(), v.into());
    }

    pub fn number(&self, key: &str) -> Option<f64> {
        self.summary.get(key).and_then(Value::as_f64)
    }

    /// Adds `latency_*` statistics for the collected samples.
    pub fn put_latency(&mut self, prefix: &str) {
        match summarize(&self.samples) {
            Ok(s) => {
                self.put(&format!("{prefix}mean_s"), s.mean);
                self.put(&format!("{prefix}p50_s"), s.p50);
                self.put(&format!("{prefix}p95_s"), s.p95);
                self.put(&format!("{prefix}p99_s"), s.p99);
                self.put(&format!("{prefix}max_s"), s.max);
                self.put(&format!("{prefix}count"), s.count as u64);
                self.put(&format!("{prefix}miss_rate"), s.miss_rate.map_or(Value::Null, Value::from));
            }
            Err(_) => {
                self.put(&format!("{prefix}count"), 0u64);
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Conductor(#[from] ConductorError),
}

impl From<ResourceError> for ScenarioError {
    fn from(e: ResourceError) -> Self {
        ScenarioError::Conductor(ConductorError::Resource(e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioSpec {
    Placement(PlacementScenario),
    Baseband(BasebandScenario),
    Hcn(HcnScenario),
    Accident(AccidentScenario),
    Gaming(GamingScenario),
}

impl ScenarioSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioSpec::Placement(_) => "placement",
            ScenarioSpec::Baseband(_) => "baseband",
            ScenarioSpec::Hcn(_) => "hcn",
            ScenarioSpec::Accident(_) => "accident",
            ScenarioSpec::Gaming(_) => "gaming",
        }
    }

    /// Node ids the scenario refers to that the topology lacks.
    pub fn unresolved(&self, topo: &Topology) -> Vec<String> {
        let ids: Vec<&NodeId> = match self {
            ScenarioSpec::Placement(p) => p.sources.iter().collect(),
            ScenarioSpec::Baseband(b) => b.referenced(),
            ScenarioSpec::Hcn(h) => h.referenced(),
            ScenarioSpec::Accident(a) => a.referenced(),
            ScenarioSpec::Gaming(g) => g.referenced(),
        };
        ids.into_iter()
            .filter(|n| !topo.contains_node(n))
            .map(|n| format!("scenario refers to unknown node `{n}`"))
            .collect()
    }

    pub fn run(&self, ctx: &ScenarioContext) -> Result<ScenarioReport, ScenarioError> {
        match self {
            ScenarioSpec::Placement(p) => placement::run(p, ctx, crate::des::TaskClass::Generic),
            ScenarioSpec::Baseband(b) => baseband::run(b, ctx),
            ScenarioSpec::Hcn(h) => hcn::run(h, ctx),
            ScenarioSpec::Accident(a) => accident::run(a, ctx),
            ScenarioSpec::Gaming(g) => gaming::run(g, ctx),
        }
    }
}
