//! Multi-server queueing station with FCFS or EDF ordering.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::des::task::TaskId;
use crate::metrics::TimeIntegral;
use crate::time::{SimDuration, SimTime};
use crate::topology::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Discipline {
    #[default]
    Fcfs,
    Edf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub task: TaskId,
    pub demand_wu: f64,
    pub deadline: Option<SimTime>,
    pub accelerable: bool,
    pub arrived: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServiceStart {
    pub task: TaskId,
    pub start: SimTime,
    pub end: SimTime,
}

/// One customer's stay at a station.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Visit {
    pub arrived: SimTime,
    pub departed: SimTime,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StationError {
    #[error("task {0} is already at station {1}")]
    Duplicate(TaskId, NodeId),
    #[error("task {0} is not in service at station {1}")]
    NotInService(TaskId, NodeId),
}

#[derive(Debug, Clone)]
struct InService {
    job: Job,
    start: SimTime,
    end: SimTime,
}

#[derive(Debug, Clone)]
pub struct Station {
    node: NodeId,
    servers: u32,
    rate_wups: f64,
    accel_factor: f64,
    discipline: Discipline,
    queue: BTreeMap<(SimTime, u64), Job>,
    busy: Vec<InService>,
    next_seq: u64,
    busy_servers: TimeIntegral,
    in_system: TimeIntegral,
    completions: u64,
    visits: Option<Vec<Visit>>,
}

impl Station {
    /// `rate_wups` is the per-server rate.
    pub fn new(node: NodeId, servers: u32, rate_wups: f64, discipline: Discipline) -> Self {
        assert!(servers >= 1, "station needs at least one server");
        assert!(rate_wups > 0.0, "station rate must be positive");
        Station {
            node,
            servers,
            rate_wups,
            accel_factor: 1.0,
            discipline,
            queue: BTreeMap::new(),
            busy: Vec::with_capacity(servers as usize),
            next_seq: 0,
            busy_servers: TimeIntegral::new(SimTime::ZERO),
            in_system: TimeIntegral::new(SimTime::ZERO),
            completions: 0,
            visits: None,
        }
    }

    pub fn with_accel(mut self, accel_factor: f64) -> Self {
        self.accel_factor = accel_factor.max(1.0);
        self
    }

    /// Splits busy-time accounting into windows of the given width.
    pub fn with_windows(mut self, window: SimDuration) -> Self {
        self.busy_servers = TimeIntegral::new(SimTime::ZERO).with_windows(window);
        self
    }

    pub fn record_visits(mut self) -> Self {
        self.visits = Some(Vec::new());
        self
    }

    pub fn node(&self) -> &NodeId {
        &self.node
    }

    pub fn servers(&self) -> u32 {
        self.servers
    }

    pub fn rate_wups(&self) -> f64 {
        self.rate_wups
    }

    pub fn discipline(&self) -> Discipline {
        self.discipline
    }

    pub fn service_time(&self, demand_wu: f64, accelerable: bool) -> SimDuration {
        let accel = if accelerable { self.accel_factor } else { 1.0 };
        SimDuration::from_secs(demand_wu / (self.rate_wups * accel))
    }

    /// Tasks waiting plus tasks in service.
    pub fn depth(&self) -> usize {
        self.queue.len() + self.busy.len()
    }

    pub fn queued(&self) -> usize {
        self.queue.len()
    }

    pub fn in_service(&self) -> usize {
        self.busy.len()
    }

    /// Outstanding work at `now`, expressed as seconds of single-server time.
    pub fn backlog_secs(&self, now: SimTime) -> f64 {
        let queued: f64 = self.queue.values().map(|j| self.service_time(j.demand_wu, j.accelerable).as_secs()).sum();
        let remaining: f64 = self.busy.iter().map(|s| (s.end - now).as_secs()).sum();
        queued + remaining
    }

    /// Time until a newly offered task would start service, assuming no
    /// later arrivals jump ahead of it.
    pub fn predicted_wait(&self, now: SimTime) -> SimDuration {
        self.predicted_start(now, &[], now) - now
    }

    /// FCFS start time of a task arriving at `at`, given the jobs present at
    /// `now` and `inbound` jobs as `(arrival, service)` still on their way.
    /// Inbound jobs arriving no later than `at` go first.
    pub fn predicted_start(&self, now: SimTime, inbound: &[(SimTime, SimDuration)], at: SimTime) -> SimTime {
        let mut free: Vec<SimTime> = self.busy.iter().map(|s| s.end).collect();
        while free.len() < self.servers as usize {
            free.push(now);
        }
        free.sort();
        for j in self.queue.values() {
            let start = free[0].max(now);
            free[0] = start + self.service_time(j.demand_wu, j.accelerable);
            free.sort();
        }
        let mut ahead: Vec<(SimTime, SimDuration)> = inbound.iter().copied().filter(|(a, _)| *a <= at).collect();
        ahead.sort();
        for (arrival, service) in ahead {
            let start = free[0].max(arrival);
            free[0] = start + service;
            free.sort();
        }
        free[0].max(at)
    }

    fn key(&mut self, job: &Job) -> (SimTime, u64) {
        let seq = self.next_seq;
        self.next_seq += 1;
        match self.discipline {
            Discipline::Fcfs => (SimTime::ZERO, seq),
            Discipline::Edf => (job.deadline.unwrap_or(SimTime::MAX), seq),
        }
    }

    fn start(&mut self, job: Job, now: SimTime) -> ServiceStart {
        let end = now + self.service_time(job.demand_wu, job.accelerable);
        let s = ServiceStart { task: job.task, start: now, end };
        self.busy.push(InService { job, start: now, end });
        self.busy_servers.set(now, self.busy.len() as f64);
        s
    }

    /// Accepts a task. Returns the service start when a server was free; the
    /// caller schedules the matching service end at `end`.
    pub fn offer(&mut self, job: Job, now: SimTime) -> Result<Option<ServiceStart>, StationError> {
        if self.busy.iter().any(|s| s.job.task == job.task) || self.queue.values().any(|j| j.task == job.task) {
            return Err(StationError::Duplicate(job.task, self.node.clone()));
        }
        self.in_system.set(now, (self.depth() + 1) as f64);
        if self.busy.len() < self.servers as usize {
            return Ok(Some(self.start(job, now)));
        }
        let k = self.key(&job);
        self.queue.insert(k, job);
        Ok(None)
    }

    /// Finishes `task` and starts the next queued task if any.
    pub fn complete(&mut self, task: TaskId, now: SimTime) -> Result<(Job, Option<ServiceStart>), StationError> {
        let idx = self
            .busy
            .iter()
            .position(|s| s.job.task == task)
            .ok_or_else(|| StationError::NotInService(task, self.node.clone()))?;
        let done = self.busy.swap_remove(idx);
        debug_assert!(done.start <= now);
        self.busy_servers.set(now, self.busy.len() as f64);
        self.in_system.set(now, (self.depth()) as f64);
        self.completions += 1;
        if let Some(v) = self.visits.as_mut() {
            v.push(Visit {
                arrived: done.job.arrived,
                departed: now,
            });
        }
        let next = match self.queue.pop_first() {
            Some((_, job)) => Some(self.start(job, now)),
            None => None,
        };
        Ok((done.job, next))
    }

    pub fn completions(&self) -> u64 {
        self.completions
    }

    pub fn visits(&self) -> Option<&[Visit]> {
        self.visits.as_deref()
    }

    /// Time-weighted fraction of servers busy over `[0, now]`.
    pub fn utilization(&self, now: SimTime) -> f64 {
        if now == SimTime::ZERO {
            return 0.0;
        }
        self.busy_servers.area_until(now) / (self.servers as f64 * now.as_secs())
    }

    /// Per-window utilization up to `now`.
    pub fn window_utilization(&self, now: SimTime) -> Vec<f64> {
        self.busy_servers
            .window_averages(now)
            .into_iter()
            .map(|v| v / self.servers as f64)
            .collect()
    }

    pub fn busy_server_seconds(&self, now: SimTime) -> f64 {
        self.busy_servers.area_until(now)
    }

    /// Time-average number in system over `[0, now]`.
    pub fn mean_in_system(&self, now: SimTime) -> f64 {
        if now == SimTime::ZERO {
            return 0.0;
        }
        self.in_system.area_until(now) / now.as_secs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn job(id: u64, demand: f64, at: f64, deadline: Option<f64>) -> Job {
        Job {
            task: TaskId(id),
            demand_wu: demand,
            deadline: deadline.map(SimTime::from_secs),
            accelerable: false,
            arrived: SimTime::from_secs(at),
        }
    }

    #[test]
    fn fcfs_single_server_deterministic() {
        let mut s = Station::new("c".into(), 1, 1.0, Discipline::Fcfs);
        let first = s.offer(job(0, 1.0, 0.0, None), SimTime::ZERO).unwrap().unwrap();
        assert_eq!(first.end, SimTime::from_secs(1.0));
        assert!(s.offer(job(1, 1.0, 0.5, None), SimTime::from_secs(0.5)).unwrap().is_none());
        let (done, next) = s.complete(TaskId(0), first.end).unwrap();
        assert_eq!(done.task, TaskId(0));
        let next = next.unwrap();
        assert_eq!(next.task, TaskId(1));
        assert_eq!(next.end, SimTime::from_secs(2.0));
        let (_, none) = s.complete(TaskId(1), next.end).unwrap();
        assert!(none.is_none());
        assert!((s.utilization(SimTime::from_secs(2.0)) - 1.0).abs() < 1e-12);
        // in system: 1 on [0,0.5), 2 on [0.5,1), 1 on [1,2)
        assert!((s.mean_in_system(SimTime::from_secs(2.0)) - 1.25).abs() < 1e-12);
    }

    #[test]
    fn edf_serves_earliest_deadline_first() {
        let mut s = Station::new("c".into(), 1, 1.0, Discipline::Edf);
        s.offer(job(0, 1.0, 0.0, None), SimTime::ZERO).unwrap();
        s.offer(job(1, 1.0, 0.1, Some(5.0)), SimTime::from_secs(0.1)).unwrap();
        s.offer(job(2, 1.0, 0.2, Some(3.0)), SimTime::from_secs(0.2)).unwrap();
        let (_, next) = s.complete(TaskId(0), SimTime::from_secs(1.0)).unwrap();
        assert_eq!(next.unwrap().task, TaskId(2));
    }

    #[test]
    fn fcfs_ignores_deadlines() {
        let mut s = Station::new("c".into(), 1, 1.0, Discipline::Fcfs);
        s.offer(job(0, 1.0, 0.0, None), SimTime::ZERO).unwrap();
        s.offer(job(1, 1.0, 0.1, Some(5.0)), SimTime::from_secs(0.1)).unwrap();
        s.offer(job(2, 1.0, 0.2, Some(3.0)), SimTime::from_secs(0.2)).unwrap();
        let (_, next) = s.complete(TaskId(0), SimTime::from_secs(1.0)).unwrap();
        assert_eq!(next.unwrap().task, TaskId(1));
    }

    #[test]
    fn accelerable_tasks_use_accel_factor() {
        let s = Station::new("c".into(), 1, 1.0, Discipline::Fcfs).with_accel(4.0);
        assert_eq!(s.service_time(2.0, true), SimDuration::from_secs(0.5));
        assert_eq!(s.service_time(2.0, false), SimDuration::from_secs(2.0));
    }

    #[test]
    fn duplicate_offer_and_unknown_completion_are_errors() {
        let mut s = Station::new("c".into(), 2, 1.0, Discipline::Fcfs);
        s.offer(job(0, 1.0, 0.0, None), SimTime::ZERO).unwrap();
        assert!(matches!(s.offer(job(0, 1.0, 0.0, None), SimTime::ZERO), Err(StationError::Duplicate(..))));
        assert!(matches!(s.complete(TaskId(9), SimTime::ZERO), Err(StationError::NotInService(..))));
    }

    #[test]
    fn predicted_wait_replays_queue() {
        let mut s = Station::new("c".into(), 2, 1.0, Discipline::Fcfs);
        s.offer(job(0, 2.0, 0.0, None), SimTime::ZERO).unwrap();
        s.offer(job(1, 4.0, 0.0, None), SimTime::ZERO).unwrap();
        s.offer(job(2, 1.0, 0.0, None), SimTime::ZERO).unwrap();
        // servers free at 2 and 4; queued job takes the t=2 server until 3
        assert_eq!(s.predicted_wait(SimTime::ZERO), SimDuration::from_secs(3.0));
        assert!((s.backlog_secs(SimTime::ZERO) - 7.0).abs() < 1e-12);
    }

    #[test]
    fn multi_server_runs_in_parallel() {
        let mut s = Station::new("c".into(), 2, 1.0, Discipline::Fcfs);
        assert!(s.offer(job(0, 1.0, 0.0, None), SimTime::ZERO).unwrap().is_some());
        assert!(s.offer(job(1, 1.0, 0.0, None), SimTime::ZERO).unwrap().is_some());
        assert!(s.offer(job(2, 1.0, 0.0, None), SimTime::ZERO).unwrap().is_none());
        assert_eq!(s.in_service(), 2);
        assert_eq!(s.depth(), 3);
    }
}
