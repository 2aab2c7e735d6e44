//! Virtual machines, virtual links and virtual radio blocks, each mapped
//! onto physical resources with a QoS guarantee.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::time::SimTime;
use crate::topology::{LinkId, NodeId, PowerState, Topology, TopologyError, DEFAULT_AXC_RATE_BPS};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResourceId(pub String);

impl fmt::Display for ResourceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ResourceId {
    fn from(s: &str) -> Self {
        ResourceId(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VmState {
    Provisioning,
    Running,
    Migrating,
    Released,
}

impl VmState {
    pub fn can_become(self, next: VmState) -> bool {
        use VmState::*;
        matches!(
            (self, next),
            (Provisioning, Running) | (Running, Migrating) | (Migrating, Running) | (Running, Released)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualMachine {
    pub id: ResourceId,
    pub owner_service: String,
    pub demand_wups: f64,
    pub realtime: bool,
    pub host: NodeId,
    pub state: VmState,
    /// Destination while `Migrating`.
    pub migrating_to: Option<NodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VLinkClass {
    BasebandClass,
    CloudClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualLink {
    pub id: ResourceId,
    pub owner_service: String,
    pub endpoints: (NodeId, NodeId),
    pub bw_guarantee_bps: u64,
    pub delay_guarantee_s: f64,
    pub mapped_path: Vec<LinkId>,
    pub class: VLinkClass,
    /// VM terminating this link at its host end, if any.
    pub vm: Option<ResourceId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BlockIndex {
    pub slot: u16,
    pub freq: u16,
}

impl BlockIndex {
    pub fn new(slot: u16, freq: u16) -> Self {
        BlockIndex { slot, freq }
    }
}

impl fmt::Display for BlockIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.slot, self.freq)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualRadioBlock {
    pub id: ResourceId,
    pub owner_vbs: String,
    pub rie: NodeId,
    pub block: BlockIndex,
    pub tx_power_dbm: f64,
    pub sinr_guarantee_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QosViolation {
    pub resource: ResourceId,
    pub observed: f64,
    pub guaranteed: f64,
    pub at: SimTime,
    pub consecutive_count: u32,
}

/// Time-frequency grid of one RIE frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioGrid {
    pub slots: u16,
    pub freqs: u16,
}

impl Default for RadioGrid {
    fn default() -> Self {
        RadioGrid { slots: 10, freqs: 100 }
    }
}

impl RadioGrid {
    pub fn contains(&self, b: BlockIndex) -> bool {
        b.slot < self.slots && b.freq < self.freqs
    }
}

/// Upper delay-guarantee bounds per vLink class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassBounds {
    pub baseband_max_delay_s: f64,
    pub cloud_max_delay_s: f64,
}

impl Default for ClassBounds {
    fn default() -> Self {
        ClassBounds {
            baseband_max_delay_s: 1e-3,
            cloud_max_delay_s: 100e-3,
        }
    }
}

impl ClassBounds {
    pub fn max_delay_s(&self, class: VLinkClass) -> f64 {
        match class {
            VLinkClass::BasebandClass => self.baseband_max_delay_s,
            VLinkClass::CloudClass => self.cloud_max_delay_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ResourceError {
    #[error("unknown resource `{0}`")]
    UnknownResource(ResourceId),
    #[error("resource `{0}` was already released")]
    DoubleRelease(ResourceId),
    #[error("host `{host}` lacks capacity: requested {requested} wu/s, free {free} wu/s")]
    CapacityExceeded { host: NodeId, requested: f64, free: f64 },
    #[error("vm `{0}` cannot go from {1:?} to {2:?}")]
    IllegalState(ResourceId, VmState, VmState),
    #[error("radio blocks clash with live blocks: {}", fmt_clashes(.0))]
    Conflict(Vec<(NodeId, BlockIndex)>),
    #[error("rie `{0}` is asleep")]
    RieAsleep(NodeId),
    #[error("requested {requested} dBm exceeds rie `{rie}` maximum {max} dBm")]
    PowerExceeded { rie: NodeId, requested: f64, max: f64 },
    #[error("block {0} lies outside the radio grid")]
    OutsideGrid(BlockIndex),
    #[error("{class:?} link cannot guarantee {requested} s (class bound {bound} s)")]
    ClassBound { class: VLinkClass, requested: f64, bound: f64 },
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

fn fmt_clashes(c: &[(NodeId, BlockIndex)]) -> String {
    c.iter().map(|(r, b)| format!("{r}{b}")).collect::<Vec<_>>().join(" ")
}

/// Baseband fronthaul rate for `n_axc` antenna-carriers.
pub fn fronthaul_demand(n_axc: u32, axc_rate_bps: u64) -> u64 {
    n_axc as u64 * axc_rate_bps
}

/// [`fronthaul_demand`] at the 1.2 Gb/s reference rate.
pub fn fronthaul_demand_default(n_axc: u32) -> u64 {
    fronthaul_demand(n_axc, DEFAULT_AXC_RATE_BPS)
}

/// Boundary-inclusive: meeting a guarantee exactly is fine. Bandwidth only
/// counts as violated while the offered load reaches the guarantee.
pub fn check_vlink_qos(
    vlink: &VirtualLink,
    measured_delay_s: f64,
    delivered_bps: Option<u64>,
    offered_bps: Option<u64>,
    now: SimTime,
) -> Option<QosViolation> {
    if measured_delay_s > vlink.delay_guarantee_s {
        return Some(QosViolation {
            resource: vlink.id.clone(),
            observed: measured_delay_s,
            guaranteed: vlink.delay_guarantee_s,
            at: now,
            consecutive_count: 1,
        });
    }
    if let (Some(delivered), Some(offered)) = (delivered_bps, offered_bps) {
        if offered >= vlink.bw_guarantee_bps && delivered < vlink.bw_guarantee_bps {
            return Some(QosViolation {
                resource: vlink.id.clone(),
                observed: delivered as f64,
                guaranteed: vlink.bw_guarantee_bps as f64,
                at: now,
                consecutive_count: 1,
            });
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResourceKind {
    Vm,
    VLink,
    RadioBlock,
}

/// Live virtual resources and their reservations against the topology.
#[derive(Debug, Clone, Default)]
pub struct Inventory {
    vms: BTreeMap<ResourceId, VirtualMachine>,
    vlinks: BTreeMap<ResourceId, VirtualLink>,
    radio: BTreeMap<ResourceId, VirtualRadioBlock>,
    host_reserved: BTreeMap<NodeId, f64>,
    released: BTreeSet<ResourceId>,
    transitions: Vec<(ResourceId, VmState, VmState)>,
    next_id: u64,
    pub grid: RadioGrid,
    pub class_bounds: ClassBounds,
}

const CAPACITY_EPS: f64 = 1e-9;

impl Inventory {
    pub fn new(grid: RadioGrid, class_bounds: ClassBounds) -> Self {
        Inventory {
            grid,
            class_bounds,
            ..Default::default()
        }
    }

    fn fresh_id(&mut self, prefix: &str) -> ResourceId {
        let id = ResourceId(format!("{prefix}-{}", self.next_id));
        self.next_id += 1;
        id
    }

    pub fn vm(&self, id: &ResourceId) -> Option<&VirtualMachine> {
        self.vms.get(id)
    }

    pub fn vlink(&self, id: &ResourceId) -> Option<&VirtualLink> {
        self.vlinks.get(id)
    }

    pub fn radio_block(&self, id: &ResourceId) -> Option<&VirtualRadioBlock> {
        self.radio.get(id)
    }

    pub fn vms(&self) -> impl Iterator<Item = &VirtualMachine> {
        self.vms.values()
    }

    pub fn vlinks(&self) -> impl Iterator<Item = &VirtualLink> {
        self.vlinks.values()
    }

    pub fn radio_blocks(&self) -> impl Iterator<Item = &VirtualRadioBlock> {
        self.radio.values()
    }

    pub fn kind_of(&self, id: &ResourceId) -> Option<ResourceKind> {
        if self.vms.contains_key(id) {
            Some(ResourceKind::Vm)
        } else if self.vlinks.contains_key(id) {
            Some(ResourceKind::VLink)
        } else if self.radio.contains_key(id) {
            Some(ResourceKind::RadioBlock)
        } else {
            None
        }
    }

    pub fn is_live(&self, id: &ResourceId) -> bool {
        self.kind_of(id).is_some()
    }

    /// Compute rate reserved on `host` by live VMs (including inbound migrations).
    pub fn host_reserved(&self, host: &NodeId) -> f64 {
        self.host_reserved.get(host).copied().unwrap_or(0.0)
    }

    pub fn host_free(&self, topo: &Topology, host: &NodeId) -> Result<f64, ResourceError> {
        Ok(topo.compute(host)?.capacity_wups - self.host_reserved(host))
    }

    pub fn transitions(&self) -> &[(ResourceId, VmState, VmState)] {
        &self.transitions
    }

    fn transition(&mut self, id: &ResourceId, next: VmState) -> Result<(), ResourceError> {
        let vm = self.vms.get_mut(id).ok_or_else(|| ResourceError::UnknownResource(id.clone()))?;
        if !vm.state.can_become(next) {
            return Err(ResourceError::IllegalState(id.clone(), vm.state, next));
        }
        self.transitions.push((id.clone(), vm.state, next));
        vm.state = next;
        Ok(())
    }

    fn reserve_host(&mut self, topo: &Topology, host: &NodeId, wups: f64) -> Result<(), ResourceError> {
        let free = self.host_free(topo, host)?;
        if wups > free + CAPACITY_EPS * topo.compute(host)?.capacity_wups {
            return Err(ResourceError::CapacityExceeded {
                host: host.clone(),
                requested: wups,
                free,
            });
        }
        *self.host_reserved.entry(host.clone()).or_insert(0.0) += wups;
        Ok(())
    }

    fn unreserve_host(&mut self, host: &NodeId, wups: f64) {
        if let Some(r) = self.host_reserved.get_mut(host) {
            *r -= wups;
            if r.abs() < CAPACITY_EPS {
                *r = 0.0;
            }
        }
    }

    /// Places a VM on `host` in the `Provisioning` state.
    pub fn provision_vm(
        &mut self,
        topo: &Topology,
        owner: &str,
        demand_wups: f64,
        realtime: bool,
        host: &NodeId,
    ) -> Result<ResourceId, ResourceError> {
        self.reserve_host(topo, host, demand_wups.max(0.0))?;
        let id = self.fresh_id("vm");
        self.vms.insert(
            id.clone(),
            VirtualMachine {
                id: id.clone(),
                owner_service: owner.to_string(),
                demand_wups: demand_wups.max(0.0),
                realtime,
                host: host.clone(),
                state: VmState::Provisioning,
                migrating_to: None,
            },
        );
        Ok(id)
    }

    pub fn start_vm(&mut self, id: &ResourceId) -> Result<(), ResourceError> {
        self.transition(id, VmState::Running)
    }

    /// Reserves capacity at the destination; the source keeps its reservation
    /// until [`Inventory::finish_migration`].
    pub fn begin_migration(&mut self, topo: &Topology, id: &ResourceId, new_host: &NodeId) -> Result<(), ResourceError> {
        let vm = self.vms.get(id).ok_or_else(|| ResourceError::UnknownResource(id.clone()))?;
        if vm.state != VmState::Running {
            return Err(ResourceError::IllegalState(id.clone(), vm.state, VmState::Migrating));
        }
        let demand = vm.demand_wups;
        self.reserve_host(topo, new_host, demand)?;
        self.transition(id, VmState::Migrating)?;
        self.vms.get_mut(id).expect("checked").migrating_to = Some(new_host.clone());
        Ok(())
    }

    /// Moves the VM to its destination and frees the source reservation.
    /// Returns the previous host.
    pub fn finish_migration(&mut self, id: &ResourceId) -> Result<NodeId, ResourceError> {
        let vm = self.vms.get(id).ok_or_else(|| ResourceError::UnknownResource(id.clone()))?;
        if vm.state != VmState::Migrating {
            return Err(ResourceError::IllegalState(id.clone(), vm.state, VmState::Running));
        }
        let (old, demand) = (vm.host.clone(), vm.demand_wups);
        self.transition(id, VmState::Running)?;
        self.unreserve_host(&old, demand);
        let vm = self.vms.get_mut(id).expect("checked");
        vm.host = vm.migrating_to.take().expect("destination set on begin");
        Ok(old)
    }

    /// Reserves `bw` on every link of `path` or on none of them.
    pub fn provision_vlink(
        &mut self,
        topo: &mut Topology,
        owner: &str,
        endpoints: (NodeId, NodeId),
        bw_bps: u64,
        delay_guarantee_s: f64,
        class: VLinkClass,
        path: Vec<LinkId>,
        vm: Option<ResourceId>,
    ) -> Result<ResourceId, ResourceError> {
        let bound = self.class_bounds.max_delay_s(class);
        if delay_guarantee_s > bound {
            return Err(ResourceError::ClassBound {
                class,
                requested: delay_guarantee_s,
                bound,
            });
        }
        reserve_path(topo, &path, bw_bps)?;
        let id = self.fresh_id("vl");
        self.vlinks.insert(
            id.clone(),
            VirtualLink {
                id: id.clone(),
                owner_service: owner.to_string(),
                endpoints,
                bw_guarantee_bps: bw_bps,
                delay_guarantee_s,
                mapped_path: path,
                class,
                vm,
            },
        );
        Ok(id)
    }

    /// Moves an existing vLink onto a new path and endpoints, keeping its id.
    /// On failure the old mapping stays in place.
    pub fn remap_vlink(
        &mut self,
        topo: &mut Topology,
        id: &ResourceId,
        endpoints: (NodeId, NodeId),
        path: Vec<LinkId>,
    ) -> Result<(), ResourceError> {
        let vl = self.vlinks.get(id).ok_or_else(|| ResourceError::UnknownResource(id.clone()))?;
        let (bw, old_path) = (vl.bw_guarantee_bps, vl.mapped_path.clone());
        unreserve_path(topo, &old_path, bw);
        if let Err(e) = reserve_path(topo, &path, bw) {
            reserve_path(topo, &old_path, bw).expect("restoring a previous reservation");
            return Err(e);
        }
        let vl = self.vlinks.get_mut(id).expect("checked");
        vl.endpoints = endpoints;
        vl.mapped_path = path;
        Ok(())
    }

    /// Blocks on RIEs that clash with the request (same index on a
    /// conflicting RIE, or repeated within the request).
    pub fn radio_conflicts(&self, topo: &Topology, rie: &NodeId, blocks: &[BlockIndex]) -> Result<Vec<(NodeId, BlockIndex)>, ResourceError> {
        let mut clashes = Vec::new();
        let mut seen = BTreeSet::new();
        for b in blocks {
            if !seen.insert(*b) {
                clashes.push((rie.clone(), *b));
                continue;
            }
            for live in self.radio.values().filter(|l| l.block == *b) {
                if topo.rie_conflict(rie, &live.rie)? {
                    clashes.push((live.rie.clone(), *b));
                }
            }
        }
        clashes.sort();
        clashes.dedup();
        Ok(clashes)
    }

    /// All-or-nothing block assignment.
    pub fn assign_radio_blocks(
        &mut self,
        topo: &Topology,
        owner_vbs: &str,
        rie: &NodeId,
        blocks: &[BlockIndex],
        tx_power_dbm: f64,
        sinr_guarantee_db: f64,
    ) -> Result<Vec<ResourceId>, ResourceError> {
        let node = topo.rie(rie)?;
        if node.power_state == PowerState::Asleep {
            return Err(ResourceError::RieAsleep(rie.clone()));
        }
        if tx_power_dbm > node.max_tx_power_dbm {
            return Err(ResourceError::PowerExceeded {
                rie: rie.clone(),
                requested: tx_power_dbm,
                max: node.max_tx_power_dbm,
            });
        }
        if let Some(b) = blocks.iter().find(|b| !self.grid.contains(**b)) {
            return Err(ResourceError::OutsideGrid(*b));
        }
        let clashes = self.radio_conflicts(topo, rie, blocks)?;
        if !clashes.is_empty() {
            return Err(ResourceError::Conflict(clashes));
        }
        let mut ids = Vec::with_capacity(blocks.len());
        for b in blocks {
            let id = self.fresh_id("rb");
            self.radio.insert(
                id.clone(),
                VirtualRadioBlock {
                    id: id.clone(),
                    owner_vbs: owner_vbs.to_string(),
                    rie: rie.clone(),
                    block: *b,
                    tx_power_dbm,
                    sinr_guarantee_db,
                },
            );
            ids.push(id);
        }
        Ok(ids)
    }

    pub fn blocks_on(&self, rie: &NodeId) -> Vec<ResourceId> {
        self.radio.values().filter(|b| &b.rie == rie).map(|b| b.id.clone()).collect()
    }

    /// Returns a resource's reservations to the free pool.
    pub fn release(&mut self, topo: &mut Topology, id: &ResourceId) -> Result<(), ResourceError> {
        if let Some(vm) = self.vms.get(id) {
            let (host, demand, state) = (vm.host.clone(), vm.demand_wups, vm.state);
            if state == VmState::Migrating || state == VmState::Provisioning {
                return Err(ResourceError::IllegalState(id.clone(), state, VmState::Released));
            }
            self.transition(id, VmState::Released)?;
            self.unreserve_host(&host, demand);
            self.vms.remove(id);
        } else if let Some(vl) = self.vlinks.remove(id) {
            unreserve_path(topo, &vl.mapped_path, vl.bw_guarantee_bps);
        } else if self.radio.remove(id).is_none() {
            return Err(if self.released.contains(id) {
                ResourceError::DoubleRelease(id.clone())
            } else {
                ResourceError::UnknownResource(id.clone())
            });
        }
        self.released.insert(id.clone());
        Ok(())
    }

    /// Sum of bandwidth of live vLinks per physical link.
    pub fn expected_link_reservations(&self) -> BTreeMap<LinkId, u64> {
        let mut out = BTreeMap::new();
        for vl in self.vlinks.values() {
            for l in &vl.mapped_path {
                *out.entry(l.clone()).or_insert(0) += vl.bw_guarantee_bps;
            }
        }
        out
    }

    /// Sum of demand of live VMs per host, counting migration targets.
    pub fn expected_host_reservations(&self) -> BTreeMap<NodeId, f64> {
        let mut out = BTreeMap::new();
        for vm in self.vms.values() {
            *out.entry(vm.host.clone()).or_insert(0.0) += vm.demand_wups;
            if let Some(to) = &vm.migrating_to {
                *out.entry(to.clone()).or_insert(0.0) += vm.demand_wups;
            }
        }
        out
    }

    /// Pairs of live blocks that clash under the reuse-distance model.
    pub fn live_conflicts(&self, topo: &Topology) -> Vec<(ResourceId, ResourceId)> {
        let blocks: Vec<&VirtualRadioBlock> = self.radio.values().collect();
        let mut out = Vec::new();
        for (i, a) in blocks.iter().enumerate() {
            for b in &blocks[i + 1..] {
                if a.block == b.block && topo.rie_conflict(&a.rie, &b.rie).unwrap_or(true) {
                    out.push((a.id.clone(), b.id.clone()));
                }
            }
        }
        out
    }

    /// Inventory records for the run's `resources.json`.
    pub fn dump(&self) -> Value {
        let mut out = Vec::new();
        for vm in self.vms.values() {
            out.push(json!({
                "id": vm.id,
                "type": "vm",
                "owner": vm.owner_service,
                "mapping": { "host": vm.host, "state": vm.state, "migrating_to": vm.migrating_to },
                "guarantees": { "demand_wups": vm.demand_wups, "realtime": vm.realtime },
            }));
        }
        for vl in self.vlinks.values() {
            out.push(json!({
                "id": vl.id,
                "type": "vlink",
                "owner": vl.owner_service,
                "mapping": { "endpoints": [vl.endpoints.0, vl.endpoints.1], "path": vl.mapped_path, "vm": vl.vm },
                "guarantees": { "bw_bps": vl.bw_guarantee_bps, "delay_s": vl.delay_guarantee_s, "class": vl.class },
            }));
        }
        for rb in self.radio.values() {
            out.push(json!({
                "id": rb.id,
                "type": "radio_block",
                "owner": rb.owner_vbs,
                "mapping": { "rie": rb.rie, "slot": rb.block.slot, "freq": rb.block.freq },
                "guarantees": { "tx_power_dbm": rb.tx_power_dbm, "sinr_db": rb.sinr_guarantee_db },
            }));
        }
        Value::Array(out)
    }
}

fn reserve_path(topo: &mut Topology, path: &[LinkId], bw: u64) -> Result<(), ResourceError> {
    for (i, l) in path.iter().enumerate() {
        if let Err(e) = topo.reserve(l, bw) {
            unreserve_path(topo, &path[..i], bw);
            return Err(e.into());
        }
    }
    Ok(())
}

fn unreserve_path(topo: &mut Topology, path: &[LinkId], bw: u64) {
    for l in path {
        topo.unreserve(l, bw);
    }
}
