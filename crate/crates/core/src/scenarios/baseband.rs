//! Baseband-up centralization: every RIE ships its antenna-carrier streams
//! to the central pool over a reserved fronthaul vLink and baseband tasks
//! run centrally. Under `AlwaysLocal` nothing crosses the fronthaul.

use serde::{Deserialize, Serialize};

use crate::conductor::{Conductor, PlacementPolicy, PolicyMode, VLinkRequest};
use crate::des::TaskClass;
use crate::scenarios::placement::{run_workload, PlacementScenario, Workload};
use crate::scenarios::{ScenarioContext, ScenarioError, ScenarioReport};
use crate::time::SimTime;
use crate::topology::{NodeId, Tier};
use crate::virtual_resources::{fronthaul_demand, VLinkClass};

fn default_axc() -> u32 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasebandScenario {
    /// Antenna-carriers per RIE.
    #[serde(default = "default_axc")]
    pub n_axc: u32,
    /// RIEs to centralize; empty means all.
    #[serde(default)]
    pub ries: Vec<NodeId>,
    /// Defaults to the lowest-id central pool node.
    #[serde(default)]
    pub pool: Option<NodeId>,
    /// Fronthaul delay guarantee; defaults to the baseband class bound.
    #[serde(default)]
    pub delay_s: Option<f64>,
    /// Baseband task load; without it only the reservations are made.
    #[serde(default)]
    pub workload: Option<PlacementScenario>,
}

impl Default for BasebandScenario {
    fn default() -> Self {
        BasebandScenario {
            n_axc: default_axc(),
            ries: Vec::new(),
            pool: None,
            delay_s: None,
            workload: None,
        }
    }
}

impl BasebandScenario {
    pub(crate) fn referenced(&self) -> Vec<&NodeId> {
        self.ries.iter().chain(self.pool.iter()).collect()
    }
}

pub fn run(spec: &BasebandScenario, ctx: &ScenarioContext) -> Result<ScenarioReport, ScenarioError> {
    let mut cfg = ctx.conductor.clone();
    let centralize = cfg.policy.mode != PolicyMode::AlwaysLocal;
    cfg.policy = PlacementPolicy {
        mode: if centralize { PolicyMode::AlwaysCentral } else { PolicyMode::AlwaysLocal },
        ..cfg.policy
    };
    let mut conductor = Conductor::new(ctx.topology.clone(), cfg);
    let ries: Vec<NodeId> = if spec.ries.is_empty() {
        conductor.topology().ries().map(|r| r.id.clone()).collect()
    } else {
        spec.ries.clone()
    };
    let pool = match &spec.pool {
        Some(p) => p.clone(),
        None => conductor
            .central_candidate()
            .ok_or_else(|| ScenarioError::Config("baseband scenario needs a central pool node".into()))?,
    };
    if conductor.topology().compute(&pool).map(|c| c.tier) != Ok(Tier::CentralPool) {
        return Err(ScenarioError::Config(format!("`{pool}` is not a central pool node")));
    }
    let delay = spec.delay_s.unwrap_or(conductor.config().class_bounds.baseband_max_delay_s);
    let mut total: u64 = 0;
    let mut vlinks = Vec::new();
    if centralize {
        for r in &ries {
            let rate = conductor.topology().rie(r).map_err(crate::conductor::ConductorError::from)?.axc_rate_bps;
            let bw = fronthaul_demand(spec.n_axc, rate);
            let req = VLinkRequest {
                owner: format!("fronthaul-{r}"),
                endpoints: (r.clone(), pool.clone()),
                bw_bps: bw,
                delay_s: delay,
                class: VLinkClass::BasebandClass,
                vm: None,
            };
            vlinks.push(conductor.wnm_provision_vlink(&req, SimTime::ZERO)?);
            total += bw;
        }
    }
    let mut out = match &spec.workload {
        Some(w) => {
            let w = PlacementScenario {
                sources: if w.sources.is_empty() { ries.clone() } else { w.sources.clone() },
                ..w.clone()
            };
            let wl = Workload::new(conductor, &w, TaskClass::Baseband, ctx.seed, SimTime::from_secs(ctx.duration_s))?;
            run_workload(wl, ctx)?.0
        }
        None => {
            let mut out = ScenarioReport::default();
            out.put("policy", conductor.config().policy.mode.name());
            out.resources = conductor.inventory().dump();
            out.put("energy_j", conductor.energy().total_energy_j(SimTime::from_secs(ctx.duration_s)));
            out
        }
    };
    out.put("fronthaul_reservation_bps", total);
    out.put("fronthaul_vlinks", vlinks.len() as u64);
    out.put("ries", ries.len() as u64);
    Ok(out)
}
