//! Hyper-cellular network: one wide-coverage control base station (CBS)
//! and several small data base stations (DBSs), all running as VMs in the
//! central pool. DBSs can be put to sleep; their users fall back to another
//! DBS in range or stay on the CBS control layer.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::conductor::{Conductor, ConductorError, VLinkRequest};
use crate::des::{Event, EventKind, EventPayload, Kernel, Model, RngStreams, Substream};
use crate::scenarios::{ScenarioContext, ScenarioError, ScenarioReport};
use crate::time::SimTime;
use crate::topology::{NodeId, Position, PowerState};
use crate::virtual_resources::{BlockIndex, ResourceId, VLinkClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VbsKind {
    Cbs,
    Dbs,
    Plain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VbsInstance {
    pub id: String,
    pub kind: VbsKind,
    pub vm: ResourceId,
    pub rie: NodeId,
    pub blocks: Vec<BlockIndex>,
    /// Live radio block ids; empty while asleep.
    pub radio: Vec<ResourceId>,
    pub coverage_radius_m: f64,
    pub tx_power_dbm: f64,
    pub asleep: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DbsSpec {
    pub id: String,
    pub rie: NodeId,
    #[serde(default)]
    pub blocks: Option<Vec<BlockIndex>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SleepAction {
    pub at_s: f64,
    pub dbs: String,
    pub asleep: bool,
}

fn default_n_dbs() -> usize {
    3
}
fn default_cbs_power() -> f64 {
    46.0
}
fn default_dbs_power() -> f64 {
    30.0
}
fn default_cbs_radius() -> f64 {
    2000.0
}
fn default_dbs_radius() -> f64 {
    500.0
}
fn default_blocks() -> u16 {
    10
}
fn default_vm_demand() -> f64 {
    10.0
}
fn default_intra_dc_bps() -> u64 {
    10_000_000_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HcnScenario {
    /// Defaults to the first RIE.
    #[serde(default)]
    pub cbs_rie: Option<NodeId>,
    /// Explicit DBS list; when empty, `n_dbs` DBSs take the RIEs after the
    /// CBS one in topology order.
    #[serde(default)]
    pub dbs: Vec<DbsSpec>,
    #[serde(default = "default_n_dbs")]
    pub n_dbs: usize,
    #[serde(default)]
    pub pool: Option<NodeId>,
    #[serde(default = "default_cbs_power")]
    pub cbs_power_dbm: f64,
    #[serde(default = "default_dbs_power")]
    pub dbs_power_dbm: f64,
    #[serde(default = "default_cbs_radius")]
    pub cbs_radius_m: f64,
    #[serde(default = "default_dbs_radius")]
    pub dbs_radius_m: f64,
    #[serde(default = "default_blocks")]
    pub blocks_per_vbs: u16,
    #[serde(default = "default_vm_demand")]
    pub vm_demand_wups: f64,
    #[serde(default = "default_intra_dc_bps")]
    pub intra_dc_bw_bps: u64,
    #[serde(default)]
    pub users: Vec<Position>,
    /// Extra users dropped uniformly in the square of side `2 * dbs_radius_m`
    /// around each DBS.
    #[serde(default)]
    pub random_users_per_dbs: usize,
    #[serde(default)]
    pub schedule: Vec<SleepAction>,
}

impl Default for HcnScenario {
    fn default() -> Self {
        HcnScenario {
            cbs_rie: None,
            dbs: Vec::new(),
            n_dbs: default_n_dbs(),
            pool: None,
            cbs_power_dbm: default_cbs_power(),
            dbs_power_dbm: default_dbs_power(),
            cbs_radius_m: default_cbs_radius(),
            dbs_radius_m: default_dbs_radius(),
            blocks_per_vbs: default_blocks(),
            vm_demand_wups: default_vm_demand(),
            intra_dc_bw_bps: default_intra_dc_bps(),
            users: Vec::new(),
            random_users_per_dbs: 0,
            schedule: Vec::new(),
        }
    }
}

impl HcnScenario {
    pub(crate) fn referenced(&self) -> Vec<&NodeId> {
        self.cbs_rie
            .iter()
            .chain(self.pool.iter())
            .chain(self.dbs.iter().map(|d| &d.rie))
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum HcnError {
    #[error("`{0}` is not a DBS")]
    NotADbs(String),
    #[error(transparent)]
    Conductor(#[from] ConductorError),
}

impl From<HcnError> for ScenarioError {
    fn from(e: HcnError) -> Self {
        match e {
            HcnError::NotADbs(_) => ScenarioError::Config(e.to_string()),
            HcnError::Conductor(c) => ScenarioError::Conductor(c),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct User {
    pub position: Position,
    /// Serving DBS; `None` means held on the CBS control layer only.
    pub data_vbs: Option<String>,
    pub control_vbs: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ToggleOutcome {
    pub reclaimed_blocks: usize,
    pub reassociated: usize,
    pub parked: usize,
}

/// Built HCN state.
pub struct Hcn {
    pub conductor: Conductor,
    pub vbs: BTreeMap<String, VbsInstance>,
    pub cbs: String,
    pub users: BTreeMap<String, User>,
    pub vlinks: Vec<ResourceId>,
}

fn block_range(index: u16, per: u16) -> Vec<BlockIndex> {
    (index * per..(index + 1) * per).map(|f| BlockIndex::new(0, f)).collect()
}

pub fn build_hcn(spec: &HcnScenario, conductor: Conductor) -> Result<Hcn, ScenarioError> {
    build(spec, conductor, &mut RngStreams::new(0))
}

fn build(spec: &HcnScenario, mut conductor: Conductor, rng: &mut RngStreams) -> Result<Hcn, ScenarioError> {
    let ries: Vec<NodeId> = conductor.topology().ries().map(|r| r.id.clone()).collect();
    let cbs_rie = spec
        .cbs_rie
        .clone()
        .or_else(|| ries.first().cloned())
        .ok_or_else(|| ScenarioError::Config("hcn scenario needs at least one RIE".into()))?;
    let dbs: Vec<DbsSpec> = if spec.dbs.is_empty() {
        let rest: Vec<&NodeId> = ries.iter().filter(|r| **r != cbs_rie).collect();
        if rest.len() < spec.n_dbs {
            return Err(ScenarioError::Config(format!(
                "hcn scenario needs {} RIEs besides the CBS one, topology has {}",
                spec.n_dbs,
                rest.len()
            )));
        }
        rest.iter()
            .take(spec.n_dbs)
            .enumerate()
            .map(|(i, r)| DbsSpec {
                id: format!("dbs{}", i + 1),
                rie: (*r).clone(),
                blocks: None,
            })
            .collect()
    } else {
        spec.dbs.clone()
    };
    let pool = match &spec.pool {
        Some(p) => p.clone(),
        None => conductor
            .central_candidate()
            .ok_or_else(|| ScenarioError::Config("hcn scenario needs a central pool node".into()))?,
    };

    let mut vbs = BTreeMap::new();
    let now = SimTime::ZERO;
    let place = |conductor: &mut Conductor, id: &str| -> Result<(ResourceId, NodeId), ScenarioError> {
        let host = if conductor.inventory().host_free(conductor.topology(), &pool).unwrap_or(0.0) >= spec.vm_demand_wups {
            pool.clone()
        } else {
            conductor
                .nearest_host(&pool, spec.vm_demand_wups, None)
                .ok_or_else(|| ScenarioError::Config(format!("no host can run `{id}`")))?
        };
        let vm = conductor.start_vm(id, spec.vm_demand_wups, true, &host, now)?;
        Ok((vm, host))
    };

    let cbs_id = "cbs".to_string();
    let (cbs_vm, cbs_host) = place(&mut conductor, &cbs_id)?;
    let cbs_blocks = block_range(0, spec.blocks_per_vbs);
    let radio = conductor.rim_assign_blocks(&cbs_id, &cbs_rie, &cbs_blocks, spec.cbs_power_dbm, now)?;
    vbs.insert(
        cbs_id.clone(),
        VbsInstance {
            id: cbs_id.clone(),
            kind: VbsKind::Cbs,
            vm: cbs_vm,
            rie: cbs_rie.clone(),
            blocks: cbs_blocks,
            radio,
            coverage_radius_m: spec.cbs_radius_m,
            tx_power_dbm: spec.cbs_power_dbm,
            asleep: false,
        },
    );

    let mut vlinks = Vec::new();
    for (i, d) in dbs.iter().enumerate() {
        if vbs.contains_key(&d.id) {
            return Err(ScenarioError::Config(format!("duplicate vBS id `{}`", d.id)));
        }
        let (vm, host) = place(&mut conductor, &d.id)?;
        let blocks = d.blocks.clone().unwrap_or_else(|| block_range(i as u16 + 1, spec.blocks_per_vbs));
        let radio = conductor.rim_assign_blocks(&d.id, &d.rie, &blocks, spec.dbs_power_dbm, now)?;
        let req = VLinkRequest {
            owner: d.id.clone(),
            endpoints: (cbs_host.clone(), host),
            bw_bps: spec.intra_dc_bw_bps,
            delay_s: conductor.config().class_bounds.baseband_max_delay_s,
            class: VLinkClass::BasebandClass,
            vm: Some(vm.clone()),
        };
        vlinks.push(conductor.wnm_provision_vlink(&req, now)?);
        vbs.insert(
            d.id.clone(),
            VbsInstance {
                id: d.id.clone(),
                kind: VbsKind::Dbs,
                vm,
                rie: d.rie.clone(),
                blocks,
                radio,
                coverage_radius_m: spec.dbs_radius_m,
                tx_power_dbm: spec.dbs_power_dbm,
                asleep: false,
            },
        );
    }

    let mut positions: Vec<Position> = spec.users.clone();
    for d in &dbs {
        let c = conductor.topology().position(&d.rie).unwrap_or_default();
        for _ in 0..spec.random_users_per_dbs {
            let r = rng.stream(Substream::Mobility);
            let dx = r.random_range(-spec.dbs_radius_m..=spec.dbs_radius_m);
            let dy = r.random_range(-spec.dbs_radius_m..=spec.dbs_radius_m);
            positions.push(Position::new(c.x + dx, c.y + dy));
        }
    }
    let mut hcn = Hcn {
        conductor,
        vbs,
        cbs: cbs_id,
        users: BTreeMap::new(),
        vlinks,
    };
    for (i, p) in positions.into_iter().enumerate() {
        let name = format!("u{i}");
        hcn.conductor.register_user(&name, p);
        hcn.users.insert(
            name,
            User {
                position: p,
                data_vbs: None,
                control_vbs: None,
            },
        );
    }
    hcn.associate_all();
    Ok(hcn)
}

impl Hcn {
    fn rie_position(&self, v: &VbsInstance) -> Position {
        self.conductor.topology().position(&v.rie).unwrap_or_default()
    }

    /// Nearest awake DBS covering `p`; ties go to the lowest id.
    fn best_dbs(&self, p: Position) -> Option<String> {
        let mut best: Option<(f64, &String)> = None;
        for v in self.vbs.values().filter(|v| v.kind == VbsKind::Dbs && !v.asleep) {
            let d = self.rie_position(v).distance(&p);
            if d <= v.coverage_radius_m && best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, &v.id));
            }
        }
        best.map(|(_, id)| id.clone())
    }

    fn associate_all(&mut self) {
        let cbs = &self.vbs[&self.cbs];
        let cbs_pos = self.rie_position(cbs);
        let cbs_radius = cbs.coverage_radius_m;
        let names: Vec<String> = self.users.keys().cloned().collect();
        for n in names {
            let p = self.users[&n].position;
            let data = self.best_dbs(p);
            let control = (cbs_pos.distance(&p) <= cbs_radius).then(|| self.cbs.clone());
            let u = self.users.get_mut(&n).expect("listed");
            u.data_vbs = data;
            u.control_vbs = control;
        }
    }

    pub fn users_on_dbs(&self) -> usize {
        self.users.values().filter(|u| u.data_vbs.is_some()).count()
    }

    /// Users served only by the control layer ("data-degraded").
    pub fn users_parked(&self) -> usize {
        self.users.values().filter(|u| u.data_vbs.is_none() && u.control_vbs.is_some()).count()
    }

    pub fn users_without_control(&self) -> usize {
        self.users.values().filter(|u| u.control_vbs.is_none()).count()
    }

    pub fn sleeping_dbs(&self) -> usize {
        self.vbs.values().filter(|v| v.kind == VbsKind::Dbs && v.asleep).count()
    }

    /// Puts a DBS to sleep (releasing its blocks, and its RIE when no other
    /// vBS transmits there) or wakes it with its original blocks.
    pub fn toggle_dbs(&mut self, id: &str, asleep: bool, now: SimTime) -> Result<ToggleOutcome, HcnError> {
        let v = self.vbs.get(id).ok_or_else(|| HcnError::NotADbs(id.to_string()))?.clone();
        if v.kind != VbsKind::Dbs {
            return Err(HcnError::NotADbs(id.to_string()));
        }
        let mut out = ToggleOutcome::default();
        if v.asleep == asleep {
            return Ok(out);
        }
        let before: BTreeMap<String, Option<String>> = self.users.iter().map(|(k, u)| (k.clone(), u.data_vbs.clone())).collect();
        if asleep {
            for b in &v.radio {
                self.conductor.release(b, now)?;
                out.reclaimed_blocks += 1;
            }
            let shared = self
                .vbs
                .values()
                .any(|o| o.id != v.id && o.rie == v.rie && !o.asleep);
            if !shared {
                self.conductor.rim_set_sleep(&v.rie, true, now)?;
            }
            let e = self.vbs.get_mut(id).expect("checked");
            e.radio.clear();
            e.asleep = true;
        } else {
            if self.conductor.topology().rie(&v.rie).map(|r| r.power_state) == Ok(PowerState::Asleep) {
                self.conductor.rim_set_sleep(&v.rie, false, now)?;
            }
            let radio = self.conductor.rim_assign_blocks(id, &v.rie, &v.blocks, v.tx_power_dbm, now)?;
            let e = self.vbs.get_mut(id).expect("checked");
            e.radio = radio;
            e.asleep = false;
        }
        self.associate_all();
        for (k, u) in &self.users {
            if before[k].as_deref() == Some(id) {
                if u.data_vbs.is_some() {
                    out.reassociated += 1;
                } else {
                    out.parked += 1;
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
enum HcnEvent {
    Toggle { dbs: String, asleep: bool },
    Check,
}

impl EventPayload for HcnEvent {
    fn kind(&self) -> EventKind {
        match self {
            HcnEvent::Toggle { .. } => EventKind::ScenarioAction,
            HcnEvent::Check => EventKind::NciTick,
        }
    }

    fn summary(&self) -> String {
        match self {
            HcnEvent::Toggle { dbs, asleep: true } => format!("Sleep {dbs}"),
            HcnEvent::Toggle { dbs, asleep: false } => format!("Wake {dbs}"),
            HcnEvent::Check => "check".into(),
        }
    }
}

struct HcnModel {
    hcn: Hcn,
    period: crate::time::SimDuration,
    stop: SimTime,
    max_conflicts: usize,
    reclaimed: usize,
    reassociated: usize,
    parked_events: usize,
    error: Option<HcnError>,
}

impl Model for HcnModel {
    type Payload = HcnEvent;

    fn handle(&mut self, ev: Event<HcnEvent>, k: &mut Kernel<HcnEvent>) {
        match ev.payload {
            HcnEvent::Toggle { dbs, asleep } => match self.hcn.toggle_dbs(&dbs, asleep, ev.time) {
                Ok(o) => {
                    self.reclaimed += o.reclaimed_blocks;
                    self.reassociated += o.reassociated;
                    self.parked_events += o.parked;
                }
                Err(e) => {
                    self.error = Some(e);
                    k.halt();
                }
            },
            HcnEvent::Check => {
                let c = self.hcn.conductor.inventory().live_conflicts(self.hcn.conductor.topology()).len();
                self.max_conflicts = self.max_conflicts.max(c);
                if ev.time + self.period < self.stop {
                    k.schedule_in(self.period, HcnEvent::Check);
                }
            }
        }
    }
}

pub fn run(spec: &HcnScenario, ctx: &ScenarioContext) -> Result<ScenarioReport, ScenarioError> {
    let mut rng = RngStreams::new(ctx.seed);
    let hcn = build(spec, Conductor::new(ctx.topology.clone(), ctx.conductor.clone()), &mut rng)?;
    for a in &spec.schedule {
        if !hcn.vbs.contains_key(&a.dbs) {
            return Err(ScenarioError::Config(format!("schedule refers to unknown vBS `{}`", a.dbs)));
        }
    }
    let stop = SimTime::from_secs(ctx.duration_s);
    let mut model = HcnModel {
        hcn,
        period: crate::time::SimDuration::from_secs(ctx.nci_period_s.max(1e-6)),
        stop,
        max_conflicts: 0,
        reclaimed: 0,
        reassociated: 0,
        parked_events: 0,
        error: None,
    };
    let mut k = Kernel::new(ctx.tracing);
    k.schedule(SimTime::ZERO, HcnEvent::Check).expect("start");
    for a in &spec.schedule {
        k.schedule(
            SimTime::from_secs(a.at_s),
            HcnEvent::Toggle {
                dbs: a.dbs.clone(),
                asleep: a.asleep,
            },
        )
        .expect("non-negative time");
    }
    k.run_until(stop, &mut model);
    if let Some(e) = model.error.take() {
        return Err(e.into());
    }
    let h = &model.hcn;
    let mut out = ScenarioReport::default();
    out.put("energy_j", h.conductor.energy().total_energy_j(stop));
    out.put("power_w_at_end", h.conductor.energy().total_power());
    out.put("sleeping_dbs", h.sleeping_dbs() as u64);
    out.put("users", h.users.len() as u64);
    out.put("users_on_dbs", h.users_on_dbs() as u64);
    out.put("users_parked", h.users_parked() as u64);
    out.put("users_without_control", h.users_without_control() as u64);
    out.put("radio_conflicts_max", model.max_conflicts as u64);
    out.put("reclaimed_blocks", model.reclaimed as u64);
    out.put("reassociated_users", model.reassociated as u64);
    out.put("parked_on_sleep", model.parked_events as u64);
    out.put("vms_running", h.conductor.inventory().vms().count() as u64);
    out.put("vlinks_live", h.conductor.inventory().vlinks().count() as u64);
    out.put("live_blocks", h.conductor.inventory().radio_blocks().count() as u64);
    let vbs: Vec<_> = h.vbs.values().collect();
    out.resources = json!({
        "inventory": h.conductor.inventory().dump(),
        "vbs": vbs,
    });
    out.trace = k.into_trace();
    Ok(out)
}
