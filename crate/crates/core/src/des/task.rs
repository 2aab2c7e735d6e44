use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::time::SimTime;
use crate::topology::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskId(pub u64);

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskClass {
    Baseband,
    M2M,
    GamingFrame,
    GamingInput,
    Generic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TaskOutcome {
    Pending,
    Finished(SimTime),
    Dropped(String),
}

/// A unit of computation plus delivery; the customer of the queueing model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: TaskId,
    pub created_at: SimTime,
    pub demand_wu: f64,
    pub deadline: Option<SimTime>,
    pub size_bits: u64,
    pub src: NodeId,
    pub dst: NodeId,
    pub class: TaskClass,
    pub accelerable: bool,
    pub outcome: TaskOutcome,
}

impl Task {
    pub fn finished_at(&self) -> Option<SimTime> {
        match self.outcome {
            TaskOutcome::Finished(t) => Some(t),
            _ => None,
        }
    }

    pub fn deadline_met(&self) -> Option<bool> {
        let d = self.deadline?;
        Some(self.finished_at().is_some_and(|f| f <= d))
    }
}

/// Tracks every task from creation to completion or drop.
#[derive(Debug, Default, Clone)]
pub struct TaskLedger {
    next_id: u64,
    in_flight: BTreeMap<TaskId, Task>,
    closed: Vec<Task>,
    completed: u64,
    dropped: u64,
}

impl TaskLedger {
    #[allow(clippy::too_many_arguments)]
    pub fn create(
        &mut self,
        now: SimTime,
        class: TaskClass,
        demand_wu: f64,
        deadline: Option<SimTime>,
        size_bits: u64,
        src: NodeId,
        dst: NodeId,
        accelerable: bool,
    ) -> TaskId {
        let id = TaskId(self.next_id);
        self.next_id += 1;
        self.in_flight.insert(
            id,
            Task {
                id,
                created_at: now,
                demand_wu: demand_wu.max(0.0),
                deadline,
                size_bits,
                src,
                dst,
                class,
                accelerable,
                outcome: TaskOutcome::Pending,
            },
        );
        id
    }

    pub fn get(&self, id: TaskId) -> Option<&Task> {
        self.in_flight.get(&id)
    }

    pub fn finish(&mut self, id: TaskId, now: SimTime) -> Option<&Task> {
        let mut t = self.in_flight.remove(&id)?;
        debug_assert!(now >= t.created_at);
        t.outcome = TaskOutcome::Finished(now);
        self.completed += 1;
        self.closed.push(t);
        self.closed.last()
    }

    pub fn drop_task(&mut self, id: TaskId, reason: impl Into<String>) -> Option<&Task> {
        let mut t = self.in_flight.remove(&id)?;
        t.outcome = TaskOutcome::Dropped(reason.into());
        self.dropped += 1;
        self.closed.push(t);
        self.closed.last()
    }

    pub fn created(&self) -> u64 {
        self.next_id
    }

    pub fn completed(&self) -> u64 {
        self.completed
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn in_flight(&self) -> u64 {
        self.in_flight.len() as u64
    }

    /// created = completed + dropped + in-flight
    pub fn is_conserved(&self) -> bool {
        self.created() == self.completed + self.dropped + self.in_flight()
    }

    pub fn closed(&self) -> &[Task] {
        &self.closed
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ledger_conserves_tasks() {
        let mut l = TaskLedger::default();
        let a = l.create(SimTime::ZERO, TaskClass::Generic, 1.0, None, 0, "a".into(), "b".into(), false);
        let b = l.create(SimTime::ZERO, TaskClass::Generic, 1.0, Some(SimTime::from_secs(1.0)), 0, "a".into(), "b".into(), false);
        let _c = l.create(SimTime::ZERO, TaskClass::Generic, 1.0, None, 0, "a".into(), "b".into(), false);
        assert!(l.is_conserved());
        l.finish(a, SimTime::from_secs(2.0));
        let t = l.drop_task(b, "rejected").unwrap();
        assert_eq!(t.deadline_met(), Some(false));
        assert!(l.is_conserved());
        assert_eq!((l.created(), l.completed(), l.dropped(), l.in_flight()), (3, 1, 1, 1));
        assert!(l.finish(a, SimTime::from_secs(3.0)).is_none());
    }
}
