//! Open network of exponential multi-server stations with probabilistic
//! routing, simulated on the kernel. This is the simulation side of the
//! analytic cross-checks (M/M/1, M/M/c, Jackson networks).

use std::collections::HashMap;

use rand::Rng;

use crate::des::rng::{RngStreams, Substream};
use crate::des::source::{DemandDist, PoissonSource};
use crate::des::station::{Discipline, Job, Station, Visit};
use crate::des::task::TaskId;
use crate::des::{Event, EventKind, EventPayload, Kernel, Model};
use crate::time::SimTime;

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkNode {
    pub servers: u32,
    /// Per-server service rate (customers/s) for unit-mean demand.
    pub mu_per_s: f64,
    pub discipline: Discipline,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSimConfig {
    pub nodes: Vec<NetworkNode>,
    pub external_rates: Vec<f64>,
    /// `routing[i][j]`: probability a customer leaving `i` joins `j`; the
    /// remainder of each row leaves the network.
    pub routing: Vec<Vec<f64>>,
    pub demand: DemandDist,
    pub seed: u64,
    /// Customers excluded from statistics at the start of the run.
    pub warmup_customers: u64,
    /// Customers measured after warm-up.
    pub measured_customers: u64,
    /// Record per-visit arrival/departure times at this node.
    pub record_visits_at: Option<usize>,
    pub tracing: bool,
}

impl NetworkSimConfig {
    pub fn single(lambda: f64, mu: f64, servers: u32, measured: u64, seed: u64) -> Self {
        NetworkSimConfig {
            nodes: vec![NetworkNode {
                servers,
                mu_per_s: mu,
                discipline: Discipline::Fcfs,
            }],
            external_rates: vec![lambda],
            routing: vec![vec![0.0]],
            demand: DemandDist::Exponential { mean: 1.0 },
            seed,
            warmup_customers: measured / 20,
            measured_customers: measured,
            record_visits_at: None,
            tracing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeStats {
    pub completions: u64,
    pub utilization: f64,
    pub mean_in_system: f64,
}

#[derive(Debug, Clone)]
pub struct NetworkSimResult {
    /// Mean time from network entry to exit over measured customers.
    pub mean_sojourn_s: f64,
    pub measured: u64,
    pub created: u64,
    pub exited: u64,
    /// Arrival time of the first measured customer.
    pub measure_start: SimTime,
    /// Arrival time of the last customer.
    pub last_arrival: SimTime,
    pub end: SimTime,
    pub nodes: Vec<NodeStats>,
    pub visits: Option<Vec<Visit>>,
    pub events: u64,
}

#[derive(Debug, Clone, Copy)]
pub enum NetEvent {
    Arrival { source: usize },
    ServiceEnd { node: usize, task: TaskId },
}

impl EventPayload for NetEvent {
    fn kind(&self) -> EventKind {
        match self {
            NetEvent::Arrival { .. } => EventKind::TaskArrival,
            NetEvent::ServiceEnd { .. } => EventKind::ServiceEnd,
        }
    }

    fn summary(&self) -> String {
        match self {
            NetEvent::Arrival { source } => format!("source={source}"),
            NetEvent::ServiceEnd { node, task } => format!("node={node} task={task}"),
        }
    }
}

struct Customer {
    entered: SimTime,
    measured: bool,
}

struct NetworkModel {
    stations: Vec<Station>,
    sources: Vec<PoissonSource>,
    routing: Vec<Vec<f64>>,
    demand: DemandDist,
    rng: RngStreams,
    customers: HashMap<TaskId, Customer>,
    next_id: u64,
    warmup: u64,
    total: u64,
    measure_start: Option<SimTime>,
    last_arrival: SimTime,
    sojourn_sum: f64,
    measured_done: u64,
    exited: u64,
}

impl NetworkModel {
    fn visit(&mut self, node: usize, task: TaskId, k: &mut Kernel<NetEvent>) {
        let demand = self.demand.sample(self.rng.stream(Substream::Services));
        let now = k.now();
        let job = Job {
            task,
            demand_wu: demand,
            deadline: None,
            accelerable: false,
            arrived: now,
        };
        if let Some(s) = self.stations[node].offer(job, now).expect("fresh task") {
            k.schedule(s.end, NetEvent::ServiceEnd { node, task }).expect("future end");
        }
    }

    fn route(&mut self, from: usize) -> Option<usize> {
        let u: f64 = self.rng.stream(Substream::Services).random();
        let mut acc = 0.0;
        for (j, p) in self.routing[from].iter().enumerate() {
            acc += p;
            if u < acc {
                return Some(j);
            }
        }
        None
    }
}

impl Model for NetworkModel {
    type Payload = NetEvent;

    fn handle(&mut self, ev: Event<NetEvent>, k: &mut Kernel<NetEvent>) {
        let now = ev.time;
        match ev.payload {
            NetEvent::Arrival { source } => {
                if self.next_id >= self.total {
                    return;
                }
                let id = TaskId(self.next_id);
                self.next_id += 1;
                let measured = id.0 >= self.warmup;
                if measured && self.measure_start.is_none() {
                    self.measure_start = Some(now);
                }
                self.last_arrival = now;
                self.customers.insert(id, Customer { entered: now, measured });
                self.visit(source, id, k);
                if self.next_id < self.total {
                    if let Some(at) = self.sources[source].next_arrival(now, self.rng.stream(Substream::Arrivals)) {
                        k.schedule(at, NetEvent::Arrival { source }).expect("future arrival");
                    }
                }
            }
            NetEvent::ServiceEnd { node, task } => {
                let (_, next) = self.stations[node].complete(task, now).expect("in service");
                if let Some(s) = next {
                    k.schedule(s.end, NetEvent::ServiceEnd { node, task: s.task }).expect("future end");
                }
                match self.route(node) {
                    Some(j) => self.visit(j, task, k),
                    None => {
                        let c = self.customers.remove(&task).expect("known customer");
                        self.exited += 1;
                        if c.measured {
                            self.sojourn_sum += (now - c.entered).as_secs();
                            self.measured_done += 1;
                        }
                    }
                }
            }
        }
    }
}

/// Runs the network until every measured customer has left.
pub fn simulate_network(cfg: &NetworkSimConfig) -> NetworkSimResult {
    let n = cfg.nodes.len();
    assert_eq!(cfg.external_rates.len(), n, "one external rate per node");
    assert_eq!(cfg.routing.len(), n, "one routing row per node");
    let stations: Vec<Station> = cfg
        .nodes
        .iter()
        .enumerate()
        .map(|(i, nd)| {
            let s = Station::new(format!("q{i}").as_str().into(), nd.servers, nd.mu_per_s, nd.discipline);
            if cfg.record_visits_at == Some(i) {
                s.record_visits()
            } else {
                s
            }
        })
        .collect();
    let total = cfg.warmup_customers + cfg.measured_customers;
    let mut model = NetworkModel {
        stations,
        sources: cfg.external_rates.iter().map(|&r| PoissonSource::new(r, SimTime::MAX)).collect(),
        routing: cfg.routing.clone(),
        demand: cfg.demand,
        rng: RngStreams::new(cfg.seed),
        customers: HashMap::new(),
        next_id: 0,
        warmup: cfg.warmup_customers,
        total,
        measure_start: None,
        last_arrival: SimTime::ZERO,
        sojourn_sum: 0.0,
        measured_done: 0,
        exited: 0,
    };
    let mut kernel = Kernel::new(cfg.tracing);
    for i in 0..n {
        if let Some(at) = model.sources[i].next_arrival(SimTime::ZERO, model.rng.stream(Substream::Arrivals)) {
            kernel.schedule(at, NetEvent::Arrival { source: i }).expect("future arrival");
        }
    }
    kernel.drain(&mut model);
    let end = kernel.now();
    NetworkSimResult {
        mean_sojourn_s: if model.measured_done > 0 {
            model.sojourn_sum / model.measured_done as f64
        } else {
            f64::NAN
        },
        measured: model.measured_done,
        created: model.next_id,
        exited: model.exited,
        measure_start: model.measure_start.unwrap_or(SimTime::ZERO),
        last_arrival: model.last_arrival,
        end,
        nodes: model
            .stations
            .iter()
            .map(|s| NodeStats {
                completions: s.completions(),
                utilization: s.utilization(end),
                mean_in_system: s.mean_in_system(end),
            })
            .collect(),
        visits: cfg
            .record_visits_at
            .and_then(|i| model.stations[i].visits().map(<[Visit]>::to_vec)),
        events: kernel.processed(),
    }
}
