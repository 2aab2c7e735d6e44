//! The control plane: radio interfacing management (RIM), wired network
//! management (WNM), location-aware computing management (LCM), network
//! context ingestion and QoS-driven VM migration.
//!
//! The conductor is a single logical actor driven by the simulation thread.
//! A two-level hierarchy is modelled purely through directive latency.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::des::Task;
use crate::metrics::EnergyLedger;
use crate::time::{SimDuration, SimTime};
use crate::topology::{LinkId, Node, NodeId, PowerState, Position, Tier, Topology, TopologyError};
use crate::virtual_resources::{
    check_vlink_qos, BlockIndex, ClassBounds, Inventory, QosViolation, RadioGrid, ResourceError, ResourceId, VLinkClass,
    VmState,
};

const DELAY_HISTORY: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyMode {
    AlwaysLocal,
    AlwaysCentral,
    HybridThreshold { q_star: usize },
    DeadlineAware,
}

impl PolicyMode {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyMode::AlwaysLocal => "AlwaysLocal",
            PolicyMode::AlwaysCentral => "AlwaysCentral",
            PolicyMode::HybridThreshold { .. } => "HybridThreshold",
            PolicyMode::DeadlineAware => "DeadlineAware",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacementPolicy {
    pub mode: PolicyMode,
    pub control_latency_s: f64,
}

impl PlacementPolicy {
    pub fn new(mode: PolicyMode) -> Self {
        PlacementPolicy {
            mode,
            control_latency_s: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Hierarchy {
    Flat,
    TwoLevel {
        regions: BTreeMap<NodeId, String>,
        regional_latency_s: f64,
        global_latency_s: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConductorConfig {
    pub policy: PlacementPolicy,
    pub hierarchy: Hierarchy,
    /// Consecutive violating delay samples before a migration is ordered.
    pub k_violations: u32,
    pub migration_downtime_s: f64,
    pub k_paths: usize,
    pub grid: RadioGrid,
    pub class_bounds: ClassBounds,
}

impl Default for ConductorConfig {
    fn default() -> Self {
        ConductorConfig {
            policy: PlacementPolicy::new(PolicyMode::AlwaysLocal),
            hierarchy: Hierarchy::Flat,
            k_violations: 1,
            migration_downtime_s: 0.05,
            k_paths: 8,
            grid: RadioGrid::default(),
            class_bounds: ClassBounds::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NciReading {
    LinkDelaySample { delay_s: f64 },
    QueueDepth { depth: usize, wait_s: f64 },
    UserPosition(Position),
    RiePowerState(PowerState),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NciKind {
    LinkDelaySample,
    QueueDepth,
    UserPosition,
    RiePowerState,
}

impl NciReading {
    pub fn kind(&self) -> NciKind {
        match self {
            NciReading::LinkDelaySample { .. } => NciKind::LinkDelaySample,
            NciReading::QueueDepth { .. } => NciKind::QueueDepth,
            NciReading::UserPosition(_) => NciKind::UserPosition,
            NciReading::RiePowerState(_) => NciKind::RiePowerState,
        }
    }
}

/// Network context reported by the data plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NciReport {
    pub reporter: String,
    pub at: SimTime,
    pub reading: NciReading,
}

impl fmt::Display for NciReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.reading {
            NciReading::LinkDelaySample { delay_s } => write!(f, "nci {} LinkDelaySample {delay_s}", self.reporter),
            NciReading::QueueDepth { depth, wait_s } => write!(f, "nci {} QueueDepth {depth} {wait_s}", self.reporter),
            NciReading::UserPosition(p) => write!(f, "nci {} UserPosition {} {}", self.reporter, p.x, p.y),
            NciReading::RiePowerState(s) => write!(f, "nci {} RiePowerState {s:?}", self.reporter),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DirectiveAction {
    AssignBlocks { vbs: String, blocks: Vec<BlockIndex>, power_dbm: f64 },
    SetPower { power_dbm: f64 },
    Sleep,
    Wake,
    InstallReservation { vlink: ResourceId, link: LinkId, bps: u64 },
    ReleaseReservation { vlink: ResourceId, link: LinkId, bps: u64 },
    PlaceTask { task: u64 },
    StartVm { vm: ResourceId },
    StopVm { vm: ResourceId },
    MigrateVm { vm: ResourceId, to: NodeId },
}

impl DirectiveAction {
    pub fn name(&self) -> &'static str {
        match self {
            DirectiveAction::AssignBlocks { .. } => "AssignBlocks",
            DirectiveAction::SetPower { .. } => "SetPower",
            DirectiveAction::Sleep => "Sleep",
            DirectiveAction::Wake => "Wake",
            DirectiveAction::InstallReservation { .. } => "InstallReservation",
            DirectiveAction::ReleaseReservation { .. } => "ReleaseReservation",
            DirectiveAction::PlaceTask { .. } => "PlaceTask",
            DirectiveAction::StartVm { .. } => "StartVm",
            DirectiveAction::StopVm { .. } => "StopVm",
            DirectiveAction::MigrateVm { .. } => "MigrateVm",
        }
    }
}

/// Southbound control message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Directive {
    pub target: NodeId,
    pub issued_at: SimTime,
    pub action: DirectiveAction,
    /// Nodes whose region decides the control path; includes `target`.
    pub scope: Vec<NodeId>,
}

impl fmt::Display for Directive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} target={}", self.action.name(), self.target)?;
        match &self.action {
            DirectiveAction::AssignBlocks { vbs, blocks, power_dbm } => {
                write!(f, " vbs={vbs} blocks={} power={power_dbm}", blocks.len())
            }
            DirectiveAction::SetPower { power_dbm } => write!(f, " power={power_dbm}"),
            DirectiveAction::InstallReservation { vlink, link, bps } | DirectiveAction::ReleaseReservation { vlink, link, bps } => {
                write!(f, " vlink={vlink} link={link} bps={bps}")
            }
            DirectiveAction::PlaceTask { task } => write!(f, " task={task}"),
            DirectiveAction::StartVm { vm } | DirectiveAction::StopVm { vm } => write!(f, " vm={vm}"),
            DirectiveAction::MigrateVm { vm, to } => write!(f, " vm={vm} to={to}"),
            DirectiveAction::Sleep | DirectiveAction::Wake => Ok(()),
        }
    }
}

impl Directive {
    /// Target exists and the action suits its node kind.
    pub fn validate(&self, topo: &Topology) -> Result<(), ConductorError> {
        let node = topo
            .node(&self.target)
            .ok_or_else(|| ConductorError::UnknownNode(self.target.clone()))?;
        let ok = match (&self.action, node) {
            (
                DirectiveAction::AssignBlocks { .. } | DirectiveAction::SetPower { .. } | DirectiveAction::Sleep | DirectiveAction::Wake,
                Node::Rie(_),
            ) => true,
            (DirectiveAction::InstallReservation { .. } | DirectiveAction::ReleaseReservation { .. }, _) => true,
            (
                DirectiveAction::PlaceTask { .. }
                | DirectiveAction::StartVm { .. }
                | DirectiveAction::StopVm { .. }
                | DirectiveAction::MigrateVm { .. },
                Node::Compute(_),
            ) => true,
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(ConductorError::InvalidDirective(self.action.name(), node.kind_name()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Constraint {
    Bandwidth,
    Delay,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConductorError {
    #[error("no compute node can take the task")]
    NoComputeNode,
    #[error("no path from `{0}` to `{1}`")]
    NoPath(NodeId, NodeId),
    #[error("admission denied ({constraint:?}): {detail}")]
    AdmissionDenied { constraint: Constraint, detail: String },
    #[error("unknown node `{0}`")]
    UnknownNode(NodeId),
    #[error("unknown reporter `{0}`")]
    UnknownReporter(String),
    #[error("report from `{0}` is older than its previous report")]
    StaleReport(String),
    #[error("{0} directive is not valid for a {1} node")]
    InvalidDirective(&'static str, &'static str),
    #[error(transparent)]
    Resource(#[from] ResourceError),
    #[error(transparent)]
    Topology(TopologyError),
}

impl From<TopologyError> for ConductorError {
    fn from(e: TopologyError) -> Self {
        match e {
            TopologyError::NoPath(a, b) => ConductorError::NoPath(a, b),
            TopologyError::UnknownNode(n) => ConductorError::UnknownNode(n),
            other => ConductorError::Topology(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rejection {
    DeadlineInfeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskAssignment {
    pub node: NodeId,
    /// One-way network delay from the task source to the chosen node.
    pub one_way: SimDuration,
    pub predicted_completion: Option<SimTime>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PlacementDecision {
    Assigned(TaskAssignment),
    Rejected(Rejection),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VLinkRequest {
    pub owner: String,
    pub endpoints: (NodeId, NodeId),
    pub bw_bps: u64,
    pub delay_s: f64,
    pub class: VLinkClass,
    /// VM that terminates the link at its host end.
    pub vm: Option<ResourceId>,
}

/// Load of one compute station as the LCM sees it.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StationLoad {
    pub depth: usize,
    /// Predicted wait before a new task starts service.
    pub wait_s: f64,
}

#[derive(Debug, Clone, Default)]
pub struct WnmDatabase {
    pub delay_samples: BTreeMap<ResourceId, VecDeque<(SimTime, f64)>>,
    pub consecutive_violations: BTreeMap<ResourceId, u32>,
}

#[derive(Debug, Clone, Default)]
pub struct LcmDatabase {
    pub stations: BTreeMap<NodeId, StationLoad>,
}

pub struct Conductor {
    topo: Topology,
    inv: Inventory,
    cfg: ConductorConfig,
    pub wnm: WnmDatabase,
    pub lcm: LcmDatabase,
    energy: EnergyLedger,
    directives: Vec<Directive>,
    violations: Vec<QosViolation>,
    unresolved_violations: u64,
    pending_migrations: BTreeSet<ResourceId>,
    last_report: BTreeMap<String, SimTime>,
    users: BTreeMap<String, Position>,
    path_cache: BTreeMap<(NodeId, NodeId), Option<SimDuration>>,
    placed_tasks: u64,
}

impl Conductor {
    pub fn new(topo: Topology, cfg: ConductorConfig) -> Self {
        let inv = Inventory::new(cfg.grid, cfg.class_bounds);
        let mut energy = EnergyLedger::default();
        for n in topo.nodes() {
            match n {
                Node::Rie(r) => {
                    let w = match r.power_state {
                        PowerState::Awake => r.power_awake_w,
                        PowerState::Asleep => r.power_sleep_w,
                    };
                    energy.set_power(&r.id, SimTime::ZERO, w);
                }
                Node::Compute(c) => energy.set_power(&c.id, SimTime::ZERO, c.power_static_w),
                Node::Switch(_) => {}
            }
        }
        Conductor {
            topo,
            inv,
            cfg,
            wnm: WnmDatabase::default(),
            lcm: LcmDatabase::default(),
            energy,
            directives: Vec::new(),
            violations: Vec::new(),
            unresolved_violations: 0,
            pending_migrations: BTreeSet::new(),
            last_report: BTreeMap::new(),
            users: BTreeMap::new(),
            path_cache: BTreeMap::new(),
            placed_tasks: 0,
        }
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn inventory(&self) -> &Inventory {
        &self.inv
    }

    pub fn config(&self) -> &ConductorConfig {
        &self.cfg
    }

    pub fn set_policy(&mut self, policy: PlacementPolicy) {
        self.cfg.policy = policy;
    }

    pub fn energy(&self) -> &EnergyLedger {
        &self.energy
    }

    pub fn directives(&self) -> &[Directive] {
        &self.directives
    }

    pub fn violations(&self) -> &[QosViolation] {
        &self.violations
    }

    /// Violations for which no feasible migration target existed.
    pub fn unresolved_violations(&self) -> u64 {
        self.unresolved_violations
    }

    pub fn placed_tasks(&self) -> u64 {
        self.placed_tasks
    }

    pub fn register_user(&mut self, user: &str, at: Position) {
        self.users.insert(user.to_string(), at);
    }

    pub fn user_position(&self, user: &str) -> Option<Position> {
        self.users.get(user).copied()
    }

    fn issue(&mut self, target: &NodeId, now: SimTime, action: DirectiveAction, extra_scope: &[NodeId]) -> Directive {
        let mut scope = vec![target.clone()];
        scope.extend(extra_scope.iter().cloned());
        let d = Directive {
            target: target.clone(),
            issued_at: now,
            action,
            scope,
        };
        self.directives.push(d.clone());
        d
    }

    /// Cached minimum path delay; `None` when unreachable.
    pub fn path_delay(&mut self, a: &NodeId, b: &NodeId) -> Option<SimDuration> {
        if a == b {
            return Some(SimDuration::ZERO);
        }
        let key = if a < b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
        if let Some(v) = self.path_cache.get(&key) {
            return *v;
        }
        let d = self.topo.shortest_path(a, b).ok().map(|p| p.delay);
        self.path_cache.insert(key, d);
        d
    }

    /// Nearest local-tier node to `src`, ties to the lowest id.
    pub fn local_candidate(&self, src: &NodeId) -> Option<NodeId> {
        let origin = self.topo.position(src);
        let mut best: Option<(f64, &NodeId)> = None;
        for c in self.topo.compute_nodes().filter(|c| c.tier == Tier::Local) {
            let d = origin.map_or(0.0, |o| o.distance(&c.position));
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, &c.id));
            }
        }
        best.map(|(_, id)| id.clone())
    }

    pub fn central_candidate(&self) -> Option<NodeId> {
        self.topo
            .compute_nodes()
            .find(|c| c.tier == Tier::CentralPool)
            .map(|c| c.id.clone())
    }

    fn station_load(&self, node: &NodeId) -> StationLoad {
        self.lcm.stations.get(node).copied().unwrap_or_default()
    }

    pub fn update_station_load(&mut self, node: &NodeId, load: StationLoad) {
        self.lcm.stations.insert(node.clone(), load);
    }

    fn predicted_completion(&mut self, task: &Task, node: &NodeId, now: SimTime) -> Option<(SimTime, SimDuration)> {
        let one_way = self.path_delay(&task.src, node)?;
        let c = self.topo.compute(node).ok()?;
        let accel = if task.accelerable { c.accel_factor } else { 1.0 };
        let service = SimDuration::from_secs(task.demand_wu / (c.per_server_rate() * accel));
        // the queue drains while the task is in transit
        let wait = SimDuration::from_secs(self.station_load(node).wait_s);
        Some((now + one_way.max(wait) + service + one_way, one_way))
    }

    fn assignment(&mut self, task: &Task, node: NodeId, now: SimTime) -> Result<PlacementDecision, ConductorError> {
        let (predicted, one_way) = self
            .predicted_completion(task, &node, now)
            .ok_or_else(|| ConductorError::NoPath(task.src.clone(), node.clone()))?;
        self.placed_tasks += 1;
        Ok(PlacementDecision::Assigned(TaskAssignment {
            node,
            one_way,
            predicted_completion: Some(predicted),
        }))
    }

    /// LCM placement of one task under the configured policy.
    pub fn lcm_assign_task(&mut self, task: &Task, now: SimTime) -> Result<PlacementDecision, ConductorError> {
        if !self.topo.contains_node(&task.src) {
            return Err(ConductorError::UnknownNode(task.src.clone()));
        }
        let local = self.local_candidate(&task.src);
        let central = self.central_candidate();
        let pick = |prefer_local: bool| -> Option<NodeId> {
            if prefer_local {
                local.clone().or_else(|| central.clone())
            } else {
                central.clone().or_else(|| local.clone())
            }
        };
        match self.cfg.policy.mode {
            PolicyMode::AlwaysLocal => {
                let n = pick(true).ok_or(ConductorError::NoComputeNode)?;
                self.assignment(task, n, now)
            }
            PolicyMode::AlwaysCentral => {
                let n = pick(false).ok_or(ConductorError::NoComputeNode)?;
                self.assignment(task, n, now)
            }
            PolicyMode::HybridThreshold { q_star } => {
                let local_ok = local.as_ref().is_some_and(|l| self.station_load(l).depth <= q_star);
                let n = pick(local_ok).ok_or(ConductorError::NoComputeNode)?;
                self.assignment(task, n, now)
            }
            PolicyMode::DeadlineAware => {
                if local.is_none() && central.is_none() {
                    return Err(ConductorError::NoComputeNode);
                }
                let Some(deadline) = task.deadline else {
                    let n = pick(true).expect("checked above");
                    return self.assignment(task, n, now);
                };
                for n in [local, central].into_iter().flatten() {
                    if let Some((done, _)) = self.predicted_completion(task, &n, now) {
                        if done <= deadline {
                            return self.assignment(task, n, now);
                        }
                    }
                }
                Ok(PlacementDecision::Rejected(Rejection::DeadlineInfeasible))
            }
        }
    }

    /// Admits a vLink on the first candidate path meeting both the delay and
    /// the bandwidth request.
    pub fn wnm_provision_vlink(&mut self, req: &VLinkRequest, now: SimTime) -> Result<ResourceId, ConductorError> {
        let (a, b) = &req.endpoints;
        for n in [a, b] {
            if !self.topo.contains_node(n) {
                return Err(ConductorError::UnknownNode(n.clone()));
            }
        }
        let path = if a == b {
            Vec::new()
        } else {
            let candidates = self.topo.k_candidate_paths(a, b, self.cfg.k_paths)?;
            let mut delay_ok = false;
            let mut chosen = None;
            let mut best_residual = 0u64;
            for p in candidates {
                if p.delay_s() > req.delay_s {
                    continue;
                }
                delay_ok = true;
                let m = self.topo.path_metrics(&p.links)?;
                best_residual = best_residual.max(m.min_residual_bps);
                if m.min_residual_bps >= req.bw_bps {
                    chosen = Some(p.links);
                    break;
                }
            }
            match chosen {
                Some(p) => p,
                None if !delay_ok => {
                    return Err(ConductorError::AdmissionDenied {
                        constraint: Constraint::Delay,
                        detail: format!("no path from {a} to {b} within {} s", req.delay_s),
                    })
                }
                None => {
                    return Err(ConductorError::AdmissionDenied {
                        constraint: Constraint::Bandwidth,
                        detail: format!("requested {} bps, best residual {} bps between {a} and {b}", req.bw_bps, best_residual),
                    })
                }
            }
        };
        let id = self.inv.provision_vlink(
            &mut self.topo,
            &req.owner,
            req.endpoints.clone(),
            req.bw_bps,
            req.delay_s,
            req.class,
            path.clone(),
            req.vm.clone(),
        )?;
        for l in &path {
            let target = self.topo.link(l).expect("path link").endpoints.0.clone();
            self.issue(
                &target,
                now,
                DirectiveAction::InstallReservation {
                    vlink: id.clone(),
                    link: l.clone(),
                    bps: req.bw_bps,
                },
                &[a.clone(), b.clone()],
            );
        }
        Ok(id)
    }

    /// Releases any live resource and issues the matching directives.
    pub fn release(&mut self, id: &ResourceId, now: SimTime) -> Result<(), ConductorError> {
        let vlink = self.inv.vlink(id).cloned();
        let vm = self.inv.vm(id).cloned();
        self.inv.release(&mut self.topo, id)?;
        if let Some(vl) = vlink {
            for l in &vl.mapped_path {
                let target = self.topo.link(l).expect("path link").endpoints.0.clone();
                self.issue(
                    &target,
                    now,
                    DirectiveAction::ReleaseReservation {
                        vlink: id.clone(),
                        link: l.clone(),
                        bps: vl.bw_guarantee_bps,
                    },
                    &[vl.endpoints.0.clone(), vl.endpoints.1.clone()],
                );
            }
            self.wnm.consecutive_violations.remove(id);
        }
        if let Some(vm) = vm {
            self.issue(&vm.host, now, DirectiveAction::StopVm { vm: id.clone() }, &[]);
        }
        Ok(())
    }

    /// Provisions and starts a VM.
    pub fn start_vm(&mut self, owner: &str, demand_wups: f64, realtime: bool, host: &NodeId, now: SimTime) -> Result<ResourceId, ConductorError> {
        let id = self.inv.provision_vm(&self.topo, owner, demand_wups, realtime, host)?;
        self.inv.start_vm(&id)?;
        self.issue(host, now, DirectiveAction::StartVm { vm: id.clone() }, &[]);
        Ok(id)
    }

    /// Feasible host for `demand` closest (by path delay) to `near`.
    pub fn nearest_host(&mut self, near: &NodeId, demand_wups: f64, exclude: Option<&NodeId>) -> Option<NodeId> {
        let hosts: Vec<NodeId> = self
            .topo
            .compute_nodes()
            .filter(|c| Some(&c.id) != exclude)
            .filter(|c| c.capacity_wups - self.inv.host_reserved(&c.id) >= demand_wups - 1e-9)
            .map(|c| c.id.clone())
            .collect();
        let mut best: Option<(SimDuration, NodeId)> = None;
        for h in hosts {
            if let Some(d) = self.path_delay(near, &h) {
                if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                    best = Some((d, h));
                }
            }
        }
        best.map(|(_, h)| h)
    }

    /// All-or-nothing radio block assignment on an awake RIE.
    pub fn rim_assign_blocks(
        &mut self,
        vbs: &str,
        rie: &NodeId,
        blocks: &[BlockIndex],
        power_dbm: f64,
        now: SimTime,
    ) -> Result<Vec<ResourceId>, ConductorError> {
        let ids = self.inv.assign_radio_blocks(&self.topo, vbs, rie, blocks, power_dbm, 0.0)?;
        self.issue(
            rie,
            now,
            DirectiveAction::AssignBlocks {
                vbs: vbs.to_string(),
                blocks: blocks.to_vec(),
                power_dbm,
            },
            &[],
        );
        Ok(ids)
    }

    /// Puts an RIE to sleep (reclaiming its blocks) or wakes it. Waking does
    /// not restore reclaimed blocks. Returns the reclaimed block ids.
    pub fn rim_set_sleep(&mut self, rie: &NodeId, asleep: bool, now: SimTime) -> Result<Vec<ResourceId>, ConductorError> {
        let node = self.topo.rie(rie)?;
        let target = if asleep { PowerState::Asleep } else { PowerState::Awake };
        if node.power_state == target {
            return Ok(Vec::new());
        }
        let watts = if asleep { node.power_sleep_w } else { node.power_awake_w };
        let mut reclaimed = Vec::new();
        if asleep {
            for id in self.inv.blocks_on(rie) {
                self.inv.release(&mut self.topo, &id)?;
                reclaimed.push(id);
            }
        }
        self.topo.rie_mut(rie)?.power_state = target;
        self.energy.set_power(rie, now, watts);
        let action = if asleep { DirectiveAction::Sleep } else { DirectiveAction::Wake };
        self.issue(rie, now, action, &[]);
        Ok(reclaimed)
    }

    /// Sets a compute node's draw from its current utilization.
    pub fn set_compute_utilization(&mut self, node: &NodeId, utilization: f64, now: SimTime) {
        if let Ok(c) = self.topo.compute(node) {
            let w = c.power_static_w + c.power_per_util_w * utilization.clamp(0.0, 1.0);
            self.energy.set_power(node, now, w);
        }
    }

    fn reporter_known(&self, r: &str) -> bool {
        self.topo.contains_node(&NodeId(r.to_string()))
            || self.topo.link(&LinkId(r.to_string())).is_some()
            || self.inv.is_live(&ResourceId(r.to_string()))
            || self.users.contains_key(r)
    }

    /// Updates the databases from one report; may order a migration.
    pub fn ingest_nci(&mut self, report: &NciReport) -> Result<Vec<Directive>, ConductorError> {
        if !self.reporter_known(&report.reporter) {
            return Err(ConductorError::UnknownReporter(report.reporter.clone()));
        }
        if let Some(prev) = self.last_report.get(&report.reporter) {
            if report.at < *prev {
                return Err(ConductorError::StaleReport(report.reporter.clone()));
            }
        }
        self.last_report.insert(report.reporter.clone(), report.at);
        match &report.reading {
            NciReading::LinkDelaySample { delay_s } => self.ingest_delay(report, *delay_s),
            NciReading::QueueDepth { depth, wait_s } => {
                self.update_station_load(
                    &NodeId(report.reporter.clone()),
                    StationLoad {
                        depth: *depth,
                        wait_s: *wait_s,
                    },
                );
                Ok(Vec::new())
            }
            NciReading::UserPosition(p) => {
                self.users.insert(report.reporter.clone(), *p);
                Ok(Vec::new())
            }
            NciReading::RiePowerState(_) => Ok(Vec::new()),
        }
    }

    fn ingest_delay(&mut self, report: &NciReport, delay_s: f64) -> Result<Vec<Directive>, ConductorError> {
        let id = ResourceId(report.reporter.clone());
        let Some(vl) = self.inv.vlink(&id).cloned() else {
            return Ok(Vec::new());
        };
        let hist = self.wnm.delay_samples.entry(id.clone()).or_default();
        hist.push_back((report.at, delay_s));
        if hist.len() > DELAY_HISTORY {
            hist.pop_front();
        }
        let Some(mut v) = check_vlink_qos(&vl, delay_s, None, None, report.at) else {
            self.wnm.consecutive_violations.insert(id, 0);
            return Ok(Vec::new());
        };
        let count = self.wnm.consecutive_violations.entry(id.clone()).or_insert(0);
        *count += 1;
        v.consecutive_count = *count;
        let count = *count;
        self.violations.push(v);
        if count < self.cfg.k_violations {
            return Ok(Vec::new());
        }
        let Some(vm_id) = vl.vm.clone() else {
            self.unresolved_violations += 1;
            return Ok(Vec::new());
        };
        if self.pending_migrations.contains(&vm_id) {
            return Ok(Vec::new());
        }
        let Some(vm) = self.inv.vm(&vm_id).cloned() else {
            self.unresolved_violations += 1;
            return Ok(Vec::new());
        };
        if vm.state != VmState::Running {
            return Ok(Vec::new());
        }
        match self.migration_target(&vl, &vm.host, vm.demand_wups) {
            Some(to) => {
                self.pending_migrations.insert(vm_id.clone());
                self.wnm.consecutive_violations.insert(id, 0);
                let d = self.issue(
                    &vm.host,
                    report.at,
                    DirectiveAction::MigrateVm { vm: vm_id, to: to.clone() },
                    &[to],
                );
                Ok(vec![d])
            }
            None => {
                self.unresolved_violations += 1;
                Ok(Vec::new())
            }
        }
    }

    fn far_end(vl: &crate::virtual_resources::VirtualLink, host: &NodeId) -> NodeId {
        if &vl.endpoints.0 == host {
            vl.endpoints.1.clone()
        } else {
            vl.endpoints.0.clone()
        }
    }

    /// Residual on `path` if the vLink's own reservation were returned first.
    fn residual_excluding(&self, path: &[LinkId], vl: &crate::virtual_resources::VirtualLink) -> u64 {
        path.iter()
            .map(|l| {
                let link = self.topo.link(l).expect("path link");
                let own = if vl.mapped_path.contains(l) { vl.bw_guarantee_bps } else { 0 };
                link.residual_bps().saturating_add(own)
            })
            .min()
            .unwrap_or(u64::MAX)
    }

    /// Best path (delay within guarantee, enough bandwidth) from `far` to `host`.
    fn feasible_path(&self, vl: &crate::virtual_resources::VirtualLink, far: &NodeId, host: &NodeId) -> Option<(SimDuration, Vec<LinkId>)> {
        if far == host {
            return Some((SimDuration::ZERO, Vec::new()));
        }
        let paths = self.topo.k_candidate_paths(far, host, self.cfg.k_paths).ok()?;
        paths
            .into_iter()
            .filter(|p| p.delay_s() <= vl.delay_guarantee_s)
            .find(|p| self.residual_excluding(&p.links, vl) >= vl.bw_guarantee_bps)
            .map(|p| (p.delay, p.links))
    }

    /// Host with spare capacity minimizing the re-routed vLink delay; ties go
    /// to the lowest host id.
    fn migration_target(&self, vl: &crate::virtual_resources::VirtualLink, current: &NodeId, demand: f64) -> Option<NodeId> {
        let far = Self::far_end(vl, current);
        let mut best: Option<(SimDuration, NodeId)> = None;
        for c in self.topo.compute_nodes() {
            if &c.id == current || c.capacity_wups - self.inv.host_reserved(&c.id) < demand - 1e-9 {
                continue;
            }
            if let Some((d, _)) = self.feasible_path(vl, &far, &c.id) {
                if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                    best = Some((d, c.id.clone()));
                }
            }
        }
        best.map(|(_, h)| h)
    }

    /// Starts a migration; returns when it completes (after the configured
    /// downtime).
    pub fn migrate_vm(&mut self, vm: &ResourceId, new_host: &NodeId, now: SimTime) -> Result<SimTime, ConductorError> {
        if let Err(e) = self.inv.begin_migration(&self.topo, vm, new_host) {
            self.pending_migrations.remove(vm);
            return Err(e.into());
        }
        self.pending_migrations.insert(vm.clone());
        Ok(now + SimDuration::from_secs(self.cfg.migration_downtime_s))
    }

    /// Lands a migrating VM on its new host and re-routes its vLinks to the
    /// new endpoint. Returns the re-routed vLinks.
    pub fn complete_migration(&mut self, vm: &ResourceId, now: SimTime) -> Result<Vec<ResourceId>, ConductorError> {
        let old = self.inv.finish_migration(vm)?;
        self.pending_migrations.remove(vm);
        let new_host = self.inv.vm(vm).expect("still live").host.clone();
        self.issue(&new_host, now, DirectiveAction::StartVm { vm: vm.clone() }, &[old.clone()]);
        let dependents: Vec<_> = self
            .inv
            .vlinks()
            .filter(|v| v.vm.as_ref() == Some(vm))
            .cloned()
            .collect();
        let mut moved = Vec::new();
        for vl in dependents {
            let far = Self::far_end(&vl, &old);
            let path = self
                .feasible_path(&vl, &far, &new_host)
                .map(|(_, p)| p)
                .or_else(|| self.best_effort_path(&vl, &far, &new_host));
            let Some(path) = path else { continue };
            let endpoints = if vl.endpoints.0 == old {
                (new_host.clone(), far.clone())
            } else {
                (far.clone(), new_host.clone())
            };
            if self.inv.remap_vlink(&mut self.topo, &vl.id, endpoints, path).is_ok() {
                self.wnm.consecutive_violations.insert(vl.id.clone(), 0);
                moved.push(vl.id.clone());
            }
        }
        Ok(moved)
    }

    /// Lowest-delay path with enough bandwidth, ignoring the delay guarantee.
    fn best_effort_path(&self, vl: &crate::virtual_resources::VirtualLink, a: &NodeId, b: &NodeId) -> Option<Vec<LinkId>> {
        if a == b {
            return Some(Vec::new());
        }
        self.topo
            .k_candidate_paths(a, b, self.cfg.k_paths)
            .ok()?
            .into_iter()
            .find(|p| self.residual_excluding(&p.links, vl) >= vl.bw_guarantee_bps)
            .map(|p| p.links)
    }

    /// Moves one end of a vLink (e.g. after a handover) onto the best
    /// available path without enforcing its delay guarantee; QoS monitoring
    /// takes it from there.
    pub fn rehome_vlink(&mut self, id: &ResourceId, from: &NodeId, to: &NodeId) -> Result<(), ConductorError> {
        let vl = self
            .inv
            .vlink(id)
            .cloned()
            .ok_or_else(|| ResourceError::UnknownResource(id.clone()))?;
        let (other, endpoints) = if &vl.endpoints.0 == from {
            (vl.endpoints.1.clone(), (to.clone(), vl.endpoints.1.clone()))
        } else if &vl.endpoints.1 == from {
            (vl.endpoints.0.clone(), (vl.endpoints.0.clone(), to.clone()))
        } else {
            return Err(ConductorError::UnknownNode(from.clone()));
        };
        let path = self.best_effort_path(&vl, to, &other).ok_or_else(|| ConductorError::NoPath(to.clone(), other.clone()))?;
        self.inv.remap_vlink(&mut self.topo, id, endpoints, path)?;
        Ok(())
    }

    /// Current delay of a vLink's mapped path.
    pub fn vlink_delay(&self, id: &ResourceId) -> Option<SimDuration> {
        let vl = self.inv.vlink(id)?;
        self.topo.path_metrics(&vl.mapped_path).ok().map(|m| m.delay)
    }

    pub fn is_migrating(&self, vm: &ResourceId) -> bool {
        self.inv.vm(vm).is_some_and(|v| v.state == VmState::Migrating)
    }

    pub fn route_control(&self, directive: &Directive) -> SimDuration {
        route_control(&self.cfg.hierarchy, self.cfg.policy.control_latency_s, directive)
    }

    pub fn record_directive(&mut self, d: Directive) {
        self.directives.push(d);
    }
}

/// Control-plane delivery latency of a directive. Scope nodes missing from
/// the region map count as cross-region.
pub fn route_control(hierarchy: &Hierarchy, flat_latency_s: f64, directive: &Directive) -> SimDuration {
    match hierarchy {
        Hierarchy::Flat => SimDuration::from_secs(flat_latency_s),
        Hierarchy::TwoLevel {
            regions,
            regional_latency_s,
            global_latency_s,
        } => {
            let mut seen: Option<&String> = None;
            let mut single = true;
            for n in &directive.scope {
                match (regions.get(n), seen) {
                    (None, _) => single = false,
                    (Some(r), None) => seen = Some(r),
                    (Some(r), Some(s)) if r != s => single = false,
                    _ => {}
                }
            }
            if single && seen.is_some() {
                SimDuration::from_secs(*regional_latency_s)
            } else {
                SimDuration::from_secs(regional_latency_s + global_latency_s)
            }
        }
    }
}
