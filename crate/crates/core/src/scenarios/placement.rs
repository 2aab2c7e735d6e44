//! Poisson task workload at the RIEs, placed by the LCM policy.
//!
//! A task waits for its placement directive, travels the one-way path delay
//! to the chosen compute node, queues there, and its result travels back to
//! the source. Latency is measured from creation to the result's return.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::conductor::{Conductor, ConductorError, Directive, DirectiveAction, PlacementDecision, StationLoad};
use crate::des::{
    DemandDist, Discipline, Event, EventKind, EventPayload, Job, Kernel, Model, PoissonSource, RngStreams, Station, Substream,
    TaskClass, TaskId, TaskLedger,
};
use crate::metrics::LatencySample;
use crate::scenarios::{ScenarioContext, ScenarioError, ScenarioReport};
use crate::time::{SimDuration, SimTime};
use crate::topology::NodeId;

fn default_rate() -> f64 {
    100.0
}

fn default_demand() -> DemandDist {
    DemandDist::Exponential { mean: 1.0 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementScenario {
    /// Task arrival rate at each source.
    #[serde(default = "default_rate")]
    pub arrival_rate_per_s: f64,
    /// Source RIEs; empty means every RIE.
    #[serde(default)]
    pub sources: Vec<NodeId>,
    #[serde(default = "default_demand")]
    pub demand: DemandDist,
    /// Relative deadline applied to every task.
    #[serde(default)]
    pub deadline_s: Option<f64>,
    #[serde(default)]
    pub accelerable: bool,
    /// Tasks created before this time are not sampled.
    #[serde(default)]
    pub warmup_s: f64,
    #[serde(default)]
    pub discipline: Discipline,
}

impl Default for PlacementScenario {
    fn default() -> Self {
        PlacementScenario {
            arrival_rate_per_s: default_rate(),
            sources: Vec::new(),
            demand: default_demand(),
            deadline_s: None,
            accelerable: false,
            warmup_s: 0.0,
            discipline: Discipline::Fcfs,
        }
    }
}

impl PlacementScenario {
    pub fn check(&self) -> Result<(), ScenarioError> {
        if !(self.arrival_rate_per_s.is_finite() && self.arrival_rate_per_s > 0.0) {
            return Err(ScenarioError::Config(format!(
                "arrival_rate_per_s must be positive, got {}",
                self.arrival_rate_per_s
            )));
        }
        if !self.demand.is_valid() {
            return Err(ScenarioError::Config(format!("invalid demand distribution {:?}", self.demand)));
        }
        if self.deadline_s.is_some_and(|d| !(d >= 0.0)) || !(self.warmup_s >= 0.0) {
            return Err(ScenarioError::Config("deadline_s and warmup_s must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub enum PlEvent {
    Arrival { source: usize },
    Rejected { task: TaskId },
    Placed { task: TaskId, node: usize },
    Deliver { task: TaskId, node: usize },
    Start { task: TaskId, node: usize },
    ServiceEnd { task: TaskId, node: usize },
    Return { task: TaskId },
}

impl EventPayload for PlEvent {
    fn kind(&self) -> EventKind {
        match self {
            PlEvent::Arrival { .. } => EventKind::TaskArrival,
            PlEvent::Rejected { .. } | PlEvent::Placed { .. } => EventKind::ControlDirective,
            PlEvent::Deliver { .. } | PlEvent::Return { .. } => EventKind::LinkDeliveryEnd,
            PlEvent::Start { .. } => EventKind::ServiceStart,
            PlEvent::ServiceEnd { .. } => EventKind::ServiceEnd,
        }
    }

    fn summary(&self) -> String {
        match self {
            PlEvent::Arrival { source } => format!("arrival source#{source}"),
            PlEvent::Rejected { task } => format!("reject {task}"),
            PlEvent::Placed { task, node } => format!("PlaceTask {task} node#{node}"),
            PlEvent::Deliver { task, node } => format!("deliver {task} node#{node}"),
            PlEvent::Start { task, node } => format!("start {task} node#{node}"),
            PlEvent::ServiceEnd { task, node } => format!("end {task} node#{node}"),
            PlEvent::Return { task } => format!("return {task}"),
        }
    }
}

/// The placement workload as a kernel model. Other scenarios reuse it with
/// their own task class and a pre-configured conductor.
pub struct Workload {
    pub conductor: Conductor,
    spec: PlacementScenario,
    class: TaskClass,
    sources: Vec<(NodeId, PoissonSource)>,
    stations: Vec<Station>,
    index: BTreeMap<NodeId, usize>,
    rng: RngStreams,
    pub ledger: TaskLedger,
    routes: BTreeMap<TaskId, (usize, SimDuration)>,
    /// Per station: placed tasks still in transit, as (arrival, service).
    inbound: Vec<BTreeMap<TaskId, (SimTime, SimDuration)>>,
    pub samples: Vec<LatencySample>,
    warmup: SimTime,
    rejected: u64,
    rejected_with_deadline: u64,
    placed: Vec<u64>,
    error: Option<ConductorError>,
}

impl Workload {
    pub fn new(conductor: Conductor, spec: &PlacementScenario, class: TaskClass, seed: u64, stop: SimTime) -> Result<Self, ScenarioError> {
        spec.check()?;
        let topo = conductor.topology();
        let source_ids: Vec<NodeId> = if spec.sources.is_empty() {
            topo.ries().map(|r| r.id.clone()).collect()
        } else {
            spec.sources.clone()
        };
        for s in &source_ids {
            if !topo.contains_node(s) {
                return Err(ScenarioError::Config(format!("unknown source node `{s}`")));
            }
        }
        if source_ids.is_empty() {
            return Err(ScenarioError::Config("placement workload needs at least one source".into()));
        }
        let mut stations = Vec::new();
        let mut index = BTreeMap::new();
        for c in topo.compute_nodes() {
            index.insert(c.id.clone(), stations.len());
            stations.push(Station::new(c.id.clone(), c.servers, c.per_server_rate(), spec.discipline).with_accel(c.accel_factor));
        }
        let n = stations.len();
        Ok(Workload {
            sources: source_ids
                .into_iter()
                .map(|s| (s, PoissonSource::new(spec.arrival_rate_per_s, stop)))
                .collect(),
            conductor,
            spec: spec.clone(),
            class,
            stations,
            index,
            rng: RngStreams::new(seed),
            ledger: TaskLedger::default(),
            routes: BTreeMap::new(),
            inbound: vec![BTreeMap::new(); n],
            samples: Vec::new(),
            warmup: SimTime::from_secs(spec.warmup_s),
            rejected: 0,
            rejected_with_deadline: 0,
            placed: vec![0; n],
            error: None,
        })
    }

    pub fn prime(&mut self, k: &mut Kernel<PlEvent>) {
        for i in 0..self.sources.len() {
            if let Some(at) = self.sources[i].1.next_arrival(SimTime::ZERO, self.rng.stream(Substream::Arrivals)) {
                k.schedule(at, PlEvent::Arrival { source: i }).expect("future arrival");
            }
        }
    }

    /// Reports each station's load as seen by a task leaving `src` now: the
    /// wait covers queued work and tasks already heading there that arrive
    /// first. Exact for FCFS when control latency is zero.
    fn refresh_loads(&mut self, now: SimTime, src: &NodeId) {
        for i in 0..self.stations.len() {
            let node = self.stations[i].node().clone();
            let Some(one_way) = self.conductor.path_delay(src, &node) else {
                continue;
            };
            let inbound: Vec<(SimTime, SimDuration)> = self.inbound[i].values().copied().collect();
            let s = &self.stations[i];
            let start = s.predicted_start(now, &inbound, now + one_way);
            let load = StationLoad {
                depth: s.depth(),
                wait_s: (start - now).as_secs(),
            };
            self.conductor.update_station_load(&node, load);
        }
    }

    fn set_power(&mut self, node: usize, now: SimTime) {
        let s = &self.stations[node];
        let u = s.in_service() as f64 / s.servers() as f64;
        let id = s.node().clone();
        self.conductor.set_compute_utilization(&id, u, now);
    }

    fn started(&mut self, k: &mut Kernel<PlEvent>, node: usize, task: TaskId, end: SimTime) {
        k.record(&PlEvent::Start { task, node });
        k.schedule(end, PlEvent::ServiceEnd { task, node }).expect("future end");
    }

    fn arrival(&mut self, source: usize, now: SimTime, k: &mut Kernel<PlEvent>) {
        let src = self.sources[source].0.clone();
        let demand = self.spec.demand.sample(self.rng.stream(Substream::Services));
        let deadline = self.spec.deadline_s.map(|d| now + SimDuration::from_secs(d));
        let id = self
            .ledger
            .create(now, self.class, demand, deadline, 0, src.clone(), src.clone(), self.spec.accelerable);
        let task = self.ledger.get(id).expect("just created").clone();
        self.refresh_loads(now, &src);
        match self.conductor.lcm_assign_task(&task, now) {
            Ok(PlacementDecision::Assigned(a)) => {
                let node = self.index[&a.node];
                self.placed[node] += 1;
                self.routes.insert(id, (node, a.one_way));
                let d = Directive {
                    target: a.node.clone(),
                    issued_at: now,
                    action: DirectiveAction::PlaceTask { task: id.0 },
                    scope: vec![a.node, src],
                };
                let at = now + self.conductor.route_control(&d);
                let service = self.stations[node].service_time(task.demand_wu, task.accelerable);
                self.inbound[node].insert(id, (at + a.one_way, service));
                k.schedule(at, PlEvent::Placed { task: id, node }).expect("future");
            }
            Ok(PlacementDecision::Rejected(_)) => {
                self.rejected += 1;
                if deadline.is_some() {
                    self.rejected_with_deadline += 1;
                }
                self.ledger.drop_task(id, "deadline infeasible");
                k.record(&PlEvent::Rejected { task: id });
            }
            Err(e) => {
                self.error = Some(e);
                k.halt();
                return;
            }
        }
        if let Some(at) = self.sources[source].1.next_arrival(now, self.rng.stream(Substream::Arrivals)) {
            k.schedule(at, PlEvent::Arrival { source }).expect("future arrival");
        }
    }

    /// Fills in the standard workload metrics.
    pub fn report(&self, end: SimTime, out: &mut ScenarioReport) {
        out.put("policy", self.conductor.config().policy.mode.name());
        out.put("tasks_created", self.ledger.created());
        out.put("tasks_completed", self.ledger.completed());
        out.put("tasks_rejected", self.rejected);
        out.put("tasks_in_flight", self.ledger.in_flight());
        out.put("tasks_conserved", self.ledger.is_conserved());
        out.samples = self.samples.clone();
        out.put_latency("latency_");
        let deadlined = self.samples.iter().filter(|s| s.deadline_met.is_some()).count() as u64 + self.rejected_with_deadline;
        if deadlined > 0 {
            let missed = self.samples.iter().filter(|s| s.deadline_met == Some(false)).count() as u64 + self.rejected_with_deadline;
            out.put("deadline_failure_rate", missed as f64 / deadlined as f64);
        }
        for (i, s) in self.stations.iter().enumerate() {
            out.put(&format!("placed.{}", s.node()), self.placed[i]);
            out.put(&format!("utilization.{}", s.node()), s.utilization(end));
        }
        out.put("energy_j", self.conductor.energy().total_energy_j(end));
        out.put("end_time_s", end.as_secs());
    }
}

impl Model for Workload {
    type Payload = PlEvent;

    fn handle(&mut self, ev: Event<PlEvent>, k: &mut Kernel<PlEvent>) {
        let now = ev.time;
        match ev.payload {
            PlEvent::Arrival { source } => self.arrival(source, now, k),
            PlEvent::Placed { task, node } => {
                let one_way = self.routes[&task].1;
                k.schedule(now + one_way, PlEvent::Deliver { task, node }).expect("future");
            }
            PlEvent::Deliver { task, node } => {
                self.inbound[node].remove(&task);
                let t = self.ledger.get(task).expect("in flight");
                let job = Job {
                    task,
                    demand_wu: t.demand_wu,
                    deadline: t.deadline,
                    accelerable: t.accelerable,
                    arrived: now,
                };
                if let Some(s) = self.stations[node].offer(job, now).expect("fresh task") {
                    self.set_power(node, now);
                    self.started(k, node, s.task, s.end);
                }
            }
            PlEvent::ServiceEnd { task, node } => {
                let (_, next) = self.stations[node].complete(task, now).expect("in service");
                if let Some(s) = next {
                    self.started(k, node, s.task, s.end);
                }
                self.set_power(node, now);
                let one_way = self.routes[&task].1;
                k.schedule(now + one_way, PlEvent::Return { task }).expect("future");
            }
            PlEvent::Return { task } => {
                self.routes.remove(&task);
                let t = self.ledger.finish(task, now).expect("in flight");
                if t.created_at >= self.warmup {
                    self.samples.push(LatencySample {
                        task,
                        class: t.class,
                        created_at: t.created_at,
                        finished_at: now,
                        deadline_met: t.deadline_met(),
                    });
                }
            }
            PlEvent::Rejected { .. } | PlEvent::Start { .. } => {}
        }
    }
}

/// Runs the workload to completion: arrivals stop at the configured
/// duration and every task in flight is then allowed to finish.
pub fn run_workload(mut w: Workload, ctx: &ScenarioContext) -> Result<(ScenarioReport, Workload), ScenarioError> {
    let mut k = Kernel::new(ctx.tracing);
    w.prime(&mut k);
    k.drain(&mut w);
    if let Some(e) = w.error.take() {
        return Err(e.into());
    }
    let end = k.now().max(SimTime::from_secs(ctx.duration_s));
    let mut out = ScenarioReport::default();
    w.report(end, &mut out);
    out.trace = k.into_trace();
    out.resources = w.conductor.inventory().dump();
    Ok((out, w))
}

pub fn run(spec: &PlacementScenario, ctx: &ScenarioContext, class: TaskClass) -> Result<ScenarioReport, ScenarioError> {
    let conductor = Conductor::new(ctx.topology.clone(), ctx.conductor.clone());
    let w = Workload::new(conductor, spec, class, ctx.seed, SimTime::from_secs(ctx.duration_s))?;
    run_workload(w, ctx).map(|(r, _)| r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conductor::{ConductorConfig, PlacementPolicy, PolicyMode};
    use crate::topology::build::*;
    use crate::topology::{Tier, Topology};

    fn ctx(mode: PolicyMode, duration: f64) -> ScenarioContext {
        let topo = Topology::new(
            vec![
                rie("r1", 0.0, 0.0),
                compute_at("local", Tier::Local, 2000.0, 1, 0.0, 0.0),
                compute("pool", Tier::CentralPool, 40000.0, 4),
            ],
            vec![
                link("r1-local", "r1", "local", 10_000_000_000, 0.0),
                link("r1-pool", "r1", "pool", 10_000_000_000, 0.5e-3),
            ],
            300.0,
        );
        ScenarioContext {
            topology: topo,
            conductor: ConductorConfig {
                policy: PlacementPolicy::new(mode),
                ..Default::default()
            },
            seed: 3,
            duration_s: duration,
            tracing: true,
            nci_period_s: 0.1,
        }
    }

    #[test]
    fn deterministic_work_has_exact_latency() {
        let spec = PlacementScenario {
            arrival_rate_per_s: 1.0,
            demand: DemandDist::Deterministic { value: 1.0 },
            ..Default::default()
        };
        // 0.5 ms each way plus 0.1 ms of service at 10 000 wu/s per server
        let r = run(&spec, &ctx(PolicyMode::AlwaysCentral, 20.0), TaskClass::Generic).unwrap();
        assert!(r.samples.iter().all(|s| s.finished_at - s.created_at == SimDuration::from_secs(1.1e-3)));
        let r = run(&spec, &ctx(PolicyMode::AlwaysLocal, 20.0), TaskClass::Generic).unwrap();
        assert!(r.samples.iter().all(|s| s.finished_at - s.created_at == SimDuration::from_secs(0.5e-3)));
    }

    #[test]
    fn every_task_finishes() {
        let spec = PlacementScenario {
            arrival_rate_per_s: 1900.0,
            ..Default::default()
        };
        let r = run(&spec, &ctx(PolicyMode::HybridThreshold { q_star: 2 }, 5.0), TaskClass::Generic).unwrap();
        assert_eq!(r.summary["tasks_created"], r.summary["tasks_completed"]);
        assert_eq!(r.summary["tasks_conserved"], true);
        assert!(r.number("placed.pool").unwrap() > 0.0);
        assert!(r.number("placed.local").unwrap() > 0.0);
    }

    #[test]
    fn deadline_aware_rejects_impossible_budgets() {
        let spec = PlacementScenario {
            deadline_s: Some(1e-6),
            ..Default::default()
        };
        let r = run(&spec, &ctx(PolicyMode::DeadlineAware, 1.0), TaskClass::Generic).unwrap();
        assert_eq!(r.summary["tasks_completed"], 0u64);
        assert_eq!(r.number("deadline_failure_rate"), Some(1.0));
    }

    #[test]
    fn same_seed_same_trace() {
        let c = ctx(PolicyMode::DeadlineAware, 2.0);
        let spec = PlacementScenario {
            deadline_s: Some(2e-3),
            ..Default::default()
        };
        let a = run(&spec, &c, TaskClass::Generic).unwrap();
        let b = run(&spec, &c, TaskClass::Generic).unwrap();
        assert_eq!(a.trace.to_log(), b.trace.to_log());
        assert_eq!(a.summary, b.summary);
    }
}
