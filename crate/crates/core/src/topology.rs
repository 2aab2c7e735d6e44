//! Physical data plane: radio interfacing equipment, switches, compute nodes
//! and the capacitated links between them.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::SimDuration;

/// Reference baseband rate of one 20 MHz LTE antenna-carrier.
pub const DEFAULT_AXC_RATE_BPS: u64 = 1_200_000_000;
pub const DEFAULT_L0_HOP_DELAY_S: f64 = 1e-6;
pub const DEFAULT_L2L3_HOP_DELAY_S: f64 = 20e-6;

/// Residual bandwidth reported for an empty path.
pub const UNBOUNDED_BPS: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkId(pub String);

impl NodeId {
    pub fn new(s: impl Into<String>) -> Self {
        NodeId(s.into())
    }
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl LinkId {
    pub fn new(s: impl Into<String>) -> Self {
        LinkId(s.into())
    }
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

impl From<&str> for LinkId {
    fn from(s: &str) -> Self {
        LinkId(s.to_string())
    }
}

/// Planar coordinates in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PowerState {
    #[default]
    Awake,
    Asleep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RieNode {
    pub id: NodeId,
    pub position: Position,
    #[serde(default = "default_radio_blocks")]
    pub radio_blocks: u32,
    #[serde(default = "default_max_tx_power")]
    pub max_tx_power_dbm: f64,
    #[serde(default)]
    pub power_state: PowerState,
    #[serde(default = "default_rie_awake_w")]
    pub power_awake_w: f64,
    #[serde(default = "default_rie_sleep_w")]
    pub power_sleep_w: f64,
    #[serde(default = "default_axc_rate")]
    pub axc_rate_bps: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SwitchLayer {
    L0Optical,
    L2L3Packet,
}

impl SwitchLayer {
    pub fn default_hop_delay_s(self) -> f64 {
        match self {
            SwitchLayer::L0Optical => DEFAULT_L0_HOP_DELAY_S,
            SwitchLayer::L2L3Packet => DEFAULT_L2L3_HOP_DELAY_S,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchNode {
    pub id: NodeId,
    pub layer: SwitchLayer,
    /// Falls back to the layer default when absent.
    #[serde(default)]
    pub per_hop_delay_s: Option<f64>,
    #[serde(default = "default_switching_capacity")]
    pub switching_capacity_bps: u64,
}

impl SwitchNode {
    pub fn hop_delay_s(&self) -> f64 {
        self.per_hop_delay_s.unwrap_or_else(|| self.layer.default_hop_delay_s())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tier {
    Local,
    Regional,
    CentralPool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComputeNode {
    pub id: NodeId,
    pub tier: Tier,
    pub capacity_wups: f64,
    #[serde(default = "default_servers")]
    pub servers: u32,
    #[serde(default)]
    pub position: Position,
    #[serde(default)]
    pub power_static_w: f64,
    #[serde(default)]
    pub power_per_util_w: f64,
    #[serde(default = "default_accel")]
    pub accel_factor: f64,
}

impl ComputeNode {
    pub fn per_server_rate(&self) -> f64 {
        self.capacity_wups / self.servers as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysLink {
    pub id: LinkId,
    pub endpoints: (NodeId, NodeId),
    pub capacity_bps: u64,
    pub prop_delay_s: f64,
    #[serde(skip)]
    pub reserved_bps: u64,
}

impl PhysLink {
    pub fn residual_bps(&self) -> u64 {
        self.capacity_bps.saturating_sub(self.reserved_bps)
    }

    pub fn other_end(&self, node: &NodeId) -> Option<&NodeId> {
        if &self.endpoints.0 == node {
            Some(&self.endpoints.1)
        } else if &self.endpoints.1 == node {
            Some(&self.endpoints.0)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Rie(RieNode),
    Switch(SwitchNode),
    Compute(ComputeNode),
}

impl Node {
    pub fn id(&self) -> &NodeId {
        match self {
            Node::Rie(n) => &n.id,
            Node::Switch(n) => &n.id,
            Node::Compute(n) => &n.id,
        }
    }

    pub fn position(&self) -> Option<Position> {
        match self {
            Node::Rie(n) => Some(n.position),
            Node::Compute(n) => Some(n.position),
            Node::Switch(_) => None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Node::Rie(_) => "rie",
            Node::Switch(_) => "switch",
            Node::Compute(_) => "compute",
        }
    }
}

fn default_radio_blocks() -> u32 {
    1000
}
fn default_max_tx_power() -> f64 {
    46.0
}
fn default_rie_awake_w() -> f64 {
    100.0
}
fn default_rie_sleep_w() -> f64 {
    10.0
}
fn default_axc_rate() -> u64 {
    DEFAULT_AXC_RATE_BPS
}
fn default_switching_capacity() -> u64 {
    100_000_000_000
}
fn default_servers() -> u32 {
    1
}
fn default_accel() -> f64 {
    1.0
}
fn default_reuse_distance() -> f64 {
    300.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologySpec {
    #[serde(default)]
    nodes: Vec<Node>,
    #[serde(default)]
    links: Vec<PhysLink>,
    #[serde(default = "default_reuse_distance")]
    reuse_distance_m: f64,
}

/// The physical graph. Node and link order is preserved from construction so
/// that serialization round-trips; lookups go through sorted indexes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "TopologySpec", into = "TopologySpec")]
pub struct Topology {
    nodes: Vec<Node>,
    links: Vec<PhysLink>,
    reuse_distance_m: f64,
    node_index: BTreeMap<NodeId, usize>,
    link_index: BTreeMap<LinkId, usize>,
}

impl From<TopologySpec> for Topology {
    fn from(spec: TopologySpec) -> Self {
        Topology::new(spec.nodes, spec.links, spec.reuse_distance_m)
    }
}

impl From<Topology> for TopologySpec {
    fn from(t: Topology) -> Self {
        TopologySpec {
            nodes: t.nodes,
            links: t.links,
            reuse_distance_m: t.reuse_distance_m,
        }
    }
}

impl Default for Topology {
    fn default() -> Self {
        Topology::new(Vec::new(), Vec::new(), default_reuse_distance())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("unknown node `{0}`")]
    UnknownNode(NodeId),
    #[error("unknown link `{0}`")]
    UnknownLink(LinkId),
    #[error("node `{0}` is not a {1}")]
    WrongKind(NodeId, &'static str),
    #[error("links do not form a contiguous walk at `{0}`")]
    BrokenPath(LinkId),
    #[error("source and destination are both `{0}`")]
    SameEndpoints(NodeId),
    #[error("no path from `{0}` to `{1}`")]
    NoPath(NodeId, NodeId),
    #[error("link `{link}` cannot reserve {requested} bps (residual {residual} bps)")]
    OverReservation { link: LinkId, requested: u64, residual: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Finding {
    MissingEndpoint(String),
    DuplicateId(String),
    InvalidValue { id: String, field: &'static str, reason: String },
    Disconnected { unreachable: Vec<String> },
    NegativeReuseDistance,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::MissingEndpoint(id) => write!(f, "MissingEndpoint({id})"),
            Finding::DuplicateId(id) => write!(f, "DuplicateId({id})"),
            Finding::InvalidValue { id, field, reason } => write!(f, "InvalidValue({id}.{field}: {reason})"),
            Finding::Disconnected { unreachable } => write!(f, "Disconnected({})", unreachable.join(" ")),
            Finding::NegativeReuseDistance => write!(f, "NegativeReuseDistance"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Delay and bottleneck of a walk over physical links.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathMetrics {
    pub delay: SimDuration,
    /// [`UNBOUNDED_BPS`] for the empty path.
    pub min_residual_bps: u64,
}

impl PathMetrics {
    pub fn delay_s(&self) -> f64 {
        self.delay.as_secs()
    }
}

/// A loop-free route between two nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    pub nodes: Vec<NodeId>,
    pub links: Vec<LinkId>,
    pub delay: SimDuration,
}

impl Path {
    pub fn delay_s(&self) -> f64 {
        self.delay.as_secs()
    }
}

impl Topology {
    pub fn new(nodes: Vec<Node>, links: Vec<PhysLink>, reuse_distance_m: f64) -> Self {
        let mut node_index = BTreeMap::new();
        for (i, n) in nodes.iter().enumerate() {
            node_index.entry(n.id().clone()).or_insert(i);
        }
        let mut link_index = BTreeMap::new();
        for (i, l) in links.iter().enumerate() {
            link_index.entry(l.id.clone()).or_insert(i);
        }
        Topology {
            nodes,
            links,
            reuse_distance_m,
            node_index,
            link_index,
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[PhysLink] {
        &self.links
    }

    pub fn reuse_distance_m(&self) -> f64 {
        self.reuse_distance_m
    }

    pub fn node(&self, id: &NodeId) -> Option<&Node> {
        self.node_index.get(id).map(|&i| &self.nodes[i])
    }

    pub(crate) fn node_mut(&mut self, id: &NodeId) -> Option<&mut Node> {
        self.node_index.get(id).map(|&i| &mut self.nodes[i])
    }

    pub fn link(&self, id: &LinkId) -> Option<&PhysLink> {
        self.link_index.get(id).map(|&i| &self.links[i])
    }

    pub fn contains_node(&self, id: &NodeId) -> bool {
        self.node_index.contains_key(id)
    }

    pub fn rie(&self, id: &NodeId) -> Result<&RieNode, TopologyError> {
        match self.node(id) {
            Some(Node::Rie(r)) => Ok(r),
            Some(_) => Err(TopologyError::WrongKind(id.clone(), "rie")),
            None => Err(TopologyError::UnknownNode(id.clone())),
        }
    }

    pub(crate) fn rie_mut(&mut self, id: &NodeId) -> Result<&mut RieNode, TopologyError> {
        match self.node_mut(id) {
            Some(Node::Rie(r)) => Ok(r),
            Some(_) => Err(TopologyError::WrongKind(id.clone(), "rie")),
            None => Err(TopologyError::UnknownNode(id.clone())),
        }
    }

    pub fn compute(&self, id: &NodeId) -> Result<&ComputeNode, TopologyError> {
        match self.node(id) {
            Some(Node::Compute(c)) => Ok(c),
            Some(_) => Err(TopologyError::WrongKind(id.clone(), "compute")),
            None => Err(TopologyError::UnknownNode(id.clone())),
        }
    }

    pub fn ries(&self) -> impl Iterator<Item = &RieNode> {
        self.nodes.iter().filter_map(|n| match n {
            Node::Rie(r) => Some(r),
            _ => None,
        })
    }

    /// Compute nodes in ascending id order.
    pub fn compute_nodes(&self) -> impl Iterator<Item = &ComputeNode> {
        self.node_index.values().filter_map(|&i| match &self.nodes[i] {
            Node::Compute(c) => Some(c),
            _ => None,
        })
    }

    pub fn position(&self, id: &NodeId) -> Option<Position> {
        self.node(id).and_then(Node::position)
    }

    pub fn validate(&self) -> ValidationReport {
        validate_topology(self)
    }

    pub fn path_metrics(&self, path: &[LinkId]) -> Result<PathMetrics, TopologyError> {
        path_metrics(self, path)
    }

    pub fn k_candidate_paths(&self, src: &NodeId, dst: &NodeId, k: usize) -> Result<Vec<Path>, TopologyError> {
        k_candidate_paths(self, src, dst, k)
    }

    /// Minimum-delay path, or the empty path when `src == dst`.
    pub fn shortest_path(&self, src: &NodeId, dst: &NodeId) -> Result<Path, TopologyError> {
        if src == dst {
            if !self.contains_node(src) {
                return Err(TopologyError::UnknownNode(src.clone()));
            }
            return Ok(Path {
                nodes: vec![src.clone()],
                links: Vec::new(),
                delay: SimDuration::ZERO,
            });
        }
        let mut paths = self.k_candidate_paths(src, dst, 1)?;
        Ok(paths.remove(0))
    }

    pub fn rie_conflict(&self, a: &NodeId, b: &NodeId) -> Result<bool, TopologyError> {
        rie_conflict(self, a, b)
    }

    pub(crate) fn reserve(&mut self, link: &LinkId, bps: u64) -> Result<(), TopologyError> {
        let idx = *self
            .link_index
            .get(link)
            .ok_or_else(|| TopologyError::UnknownLink(link.clone()))?;
        let l = &mut self.links[idx];
        if bps > l.residual_bps() {
            return Err(TopologyError::OverReservation {
                link: link.clone(),
                requested: bps,
                residual: l.residual_bps(),
            });
        }
        l.reserved_bps += bps;
        Ok(())
    }

    pub(crate) fn unreserve(&mut self, link: &LinkId, bps: u64) {
        if let Some(&idx) = self.link_index.get(link) {
            let l = &mut self.links[idx];
            debug_assert!(l.reserved_bps >= bps, "unreserving more than reserved on {link}");
            l.reserved_bps = l.reserved_bps.saturating_sub(bps);
        }
    }

    /// Adjacency lists with neighbors sorted by link id.
    fn adjacency(&self) -> BTreeMap<&NodeId, Vec<(&LinkId, &NodeId)>> {
        let mut adj: BTreeMap<&NodeId, Vec<(&LinkId, &NodeId)>> = BTreeMap::new();
        for l in &self.links {
            let (a, b) = (&l.endpoints.0, &l.endpoints.1);
            adj.entry(a).or_default().push((&l.id, b));
            if a != b {
                adj.entry(b).or_default().push((&l.id, a));
            }
        }
        for v in adj.values_mut() {
            v.sort();
        }
        adj
    }

    fn hop_delay(&self, node: &NodeId) -> SimDuration {
        match self.node(node) {
            Some(Node::Switch(s)) => SimDuration::from_secs(s.hop_delay_s()),
            _ => SimDuration::ZERO,
        }
    }
}

pub fn validate_topology(topo: &Topology) -> ValidationReport {
    let mut findings = Vec::new();
    let mut seen = BTreeSet::new();
    for n in &topo.nodes {
        let id = n.id().0.clone();
        if !seen.insert(id.clone()) {
            findings.push(Finding::DuplicateId(id.clone()));
        }
        let mut bad = |field: &'static str, reason: &str| {
            findings.push(Finding::InvalidValue {
                id: id.clone(),
                field,
                reason: reason.to_string(),
            })
        };
        match n {
            Node::Rie(r) => {
                if r.radio_blocks == 0 {
                    bad("radio_blocks", "must be > 0");
                }
                if !(r.power_sleep_w <= r.power_awake_w) {
                    bad("power_sleep_w", "must not exceed power_awake_w");
                }
                if r.power_sleep_w < 0.0 {
                    bad("power_sleep_w", "must be >= 0");
                }
                if r.axc_rate_bps == 0 {
                    bad("axc_rate_bps", "must be > 0");
                }
            }
            Node::Switch(s) => {
                if !(s.hop_delay_s() >= 0.0) {
                    bad("per_hop_delay_s", "must be >= 0");
                }
                if s.switching_capacity_bps == 0 {
                    bad("switching_capacity_bps", "must be > 0");
                }
            }
            Node::Compute(c) => {
                if !(c.capacity_wups > 0.0) {
                    bad("capacity_wups", "must be > 0");
                }
                if c.servers == 0 {
                    bad("servers", "must be >= 1");
                }
                if !(c.accel_factor >= 1.0) {
                    bad("accel_factor", "must be >= 1");
                }
            }
        }
    }
    for l in &topo.links {
        let id = l.id.0.clone();
        if !seen.insert(id.clone()) {
            findings.push(Finding::DuplicateId(id.clone()));
        }
        for end in [&l.endpoints.0, &l.endpoints.1] {
            if !topo.contains_node(end) {
                findings.push(Finding::MissingEndpoint(end.0.clone()));
            }
        }
        if l.capacity_bps == 0 {
            findings.push(Finding::InvalidValue {
                id: id.clone(),
                field: "capacity_bps",
                reason: "must be > 0".into(),
            });
        }
        if !(l.prop_delay_s >= 0.0) {
            findings.push(Finding::InvalidValue {
                id: id.clone(),
                field: "prop_delay_s",
                reason: "must be >= 0".into(),
            });
        }
        if l.reserved_bps > l.capacity_bps {
            findings.push(Finding::InvalidValue {
                id,
                field: "reserved_bps",
                reason: "exceeds capacity".into(),
            });
        }
    }
    if !(topo.reuse_distance_m >= 0.0) {
        findings.push(Finding::NegativeReuseDistance);
    }

    // connectivity among linked nodes
    let adj = topo.adjacency();
    if let Some((&start, _)) = adj.iter().next() {
        let mut visited = BTreeSet::new();
        let mut stack = vec![start];
        while let Some(n) = stack.pop() {
            if !visited.insert(n) {
                continue;
            }
            for (_, m) in adj.get(n).into_iter().flatten() {
                if !visited.contains(m) {
                    stack.push(m);
                }
            }
        }
        let unreachable: Vec<String> = adj
            .keys()
            .filter(|n| !visited.contains(*n))
            .map(|n| n.0.clone())
            .collect();
        if !unreachable.is_empty() {
            findings.push(Finding::Disconnected { unreachable });
        }
    }
    ValidationReport { findings }
}

/// Delay is the sum of link propagation delays plus the hop delay of every
/// interior switch; residual is the bottleneck over the walk.
pub fn path_metrics(topo: &Topology, path: &[LinkId]) -> Result<PathMetrics, TopologyError> {
    let links: Vec<&PhysLink> = path
        .iter()
        .map(|id| topo.link(id).ok_or_else(|| TopologyError::UnknownLink(id.clone())))
        .collect::<Result<_, _>>()?;
    let Some(first) = links.first() else {
        return Ok(PathMetrics {
            delay: SimDuration::ZERO,
            min_residual_bps: UNBOUNDED_BPS,
        });
    };
    // orient the walk: start at the endpoint of the first link not shared with the second
    let start = match links.get(1) {
        Some(next) => {
            let (a, b) = &first.endpoints;
            if next.other_end(b).is_some() {
                a
            } else if next.other_end(a).is_some() {
                b
            } else {
                return Err(TopologyError::BrokenPath(next.id.clone()));
            }
        }
        None => &first.endpoints.0,
    };
    let mut cur = start;
    let mut delay = SimDuration::ZERO;
    let mut residual = UNBOUNDED_BPS;
    for (i, l) in links.iter().enumerate() {
        if i > 0 {
            delay += topo.hop_delay(cur);
        }
        cur = l.other_end(cur).ok_or_else(|| TopologyError::BrokenPath(l.id.clone()))?;
        delay += SimDuration::from_secs(l.prop_delay_s);
        residual = residual.min(l.residual_bps());
    }
    Ok(PathMetrics {
        delay,
        min_residual_bps: residual,
    })
}

/// Up to `k` loop-free paths ordered by delay, ties broken by the
/// lexicographic order of the link-id sequence.
///
/// Best-first search over partial paths. The key `(delay, link ids)` never
/// decreases when a partial path is extended, so complete paths leave the
/// frontier in key order.
pub fn k_candidate_paths(topo: &Topology, src: &NodeId, dst: &NodeId, k: usize) -> Result<Vec<Path>, TopologyError> {
    for n in [src, dst] {
        if !topo.contains_node(n) {
            return Err(TopologyError::UnknownNode(n.clone()));
        }
    }
    if src == dst {
        return Err(TopologyError::SameEndpoints(src.clone()));
    }
    let adj = topo.adjacency();
    let mut frontier: BinaryHeap<Reverse<(SimDuration, Vec<LinkId>, Vec<NodeId>)>> = BinaryHeap::new();
    frontier.push(Reverse((SimDuration::ZERO, Vec::new(), vec![src.clone()])));
    let mut out = Vec::new();
    while let Some(Reverse((delay, links, nodes))) = frontier.pop() {
        let tail = nodes.last().expect("non-empty walk");
        if tail == dst {
            out.push(Path { nodes, links, delay });
            if out.len() >= k {
                break;
            }
            continue;
        }
        let through = if links.is_empty() { SimDuration::ZERO } else { topo.hop_delay(tail) };
        for (lid, next) in adj.get(tail).into_iter().flatten() {
            if nodes.contains(next) {
                continue;
            }
            let link = topo.link(lid).expect("indexed link");
            let mut l2 = links.clone();
            l2.push((*lid).clone());
            let mut n2 = nodes.clone();
            n2.push((*next).clone());
            frontier.push(Reverse((delay + through + SimDuration::from_secs(link.prop_delay_s), l2, n2)));
        }
    }
    if out.is_empty() {
        return Err(TopologyError::NoPath(src.clone(), dst.clone()));
    }
    Ok(out)
}

pub fn rie_conflict(topo: &Topology, a: &NodeId, b: &NodeId) -> Result<bool, TopologyError> {
    let ra = topo.rie(a)?;
    let rb = topo.rie(b)?;
    if a == b {
        return Ok(true);
    }
    Ok(ra.position.distance(&rb.position) < topo.reuse_distance_m)
}

/// Builders used by scenarios and tests.
pub mod build {
    use super::*;

    pub fn rie(id: &str, x: f64, y: f64) -> Node {
        Node::Rie(RieNode {
            id: id.into(),
            position: Position::new(x, y),
            radio_blocks: default_radio_blocks(),
            max_tx_power_dbm: default_max_tx_power(),
            power_state: PowerState::Awake,
            power_awake_w: default_rie_awake_w(),
            power_sleep_w: default_rie_sleep_w(),
            axc_rate_bps: DEFAULT_AXC_RATE_BPS,
        })
    }

    pub fn switch(id: &str, layer: SwitchLayer, hop_delay_s: Option<f64>) -> Node {
        Node::Switch(SwitchNode {
            id: id.into(),
            layer,
            per_hop_delay_s: hop_delay_s,
            switching_capacity_bps: default_switching_capacity(),
        })
    }

    pub fn compute(id: &str, tier: Tier, capacity_wups: f64, servers: u32) -> Node {
        Node::Compute(ComputeNode {
            id: id.into(),
            tier,
            capacity_wups,
            servers,
            position: Position::default(),
            power_static_w: 0.0,
            power_per_util_w: 0.0,
            accel_factor: 1.0,
        })
    }

    pub fn compute_at(id: &str, tier: Tier, capacity_wups: f64, servers: u32, x: f64, y: f64) -> Node {
        let mut n = compute(id, tier, capacity_wups, servers);
        if let Node::Compute(c) = &mut n {
            c.position = Position::new(x, y);
        }
        n
    }

    pub fn link(id: &str, a: &str, b: &str, capacity_bps: u64, prop_delay_s: f64) -> PhysLink {
        PhysLink {
            id: id.into(),
            endpoints: (a.into(), b.into()),
            capacity_bps,
            prop_delay_s,
            reserved_bps: 0,
        }
    }
}
