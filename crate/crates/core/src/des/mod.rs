//! Deterministic discrete-event kernel.
//!
//! Events fire in `(time, seq)` order where `seq` is the global scheduling
//! order. A [`Model`] owns all mutable simulation state and receives events
//! one at a time together with the kernel so it can schedule follow-ups.

pub mod network;
pub mod rng;
pub mod source;
pub mod station;
pub mod task;

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::{SimDuration, SimTime};

pub use rng::{RngStreams, Substream};
pub use source::{DemandDist, PoissonSource};
pub use station::{Discipline, Job, ServiceStart, Station, StationError, Visit};
pub use task::{Task, TaskClass, TaskId, TaskLedger, TaskOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    TaskArrival,
    ServiceStart,
    ServiceEnd,
    LinkDeliveryEnd,
    NciTick,
    ControlDirective,
    ScenarioAction,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Model-specific event data.
pub trait EventPayload {
    fn kind(&self) -> EventKind;
    /// One-line description for the trace. Must not contain newlines.
    fn summary(&self) -> String;
}

#[derive(Debug, Clone)]
pub struct Event<P> {
    pub time: SimTime,
    pub seq: u64,
    pub payload: P,
}

impl<P> PartialEq for Event<P> {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}

impl<P> Eq for Event<P> {}

impl<P> PartialOrd for Event<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Event<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.time, self.seq).cmp(&(other.time, other.seq))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub time: SimTime,
    pub seq: u64,
    pub kind: EventKind,
    pub summary: String,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.time.as_nanos(), self.seq, self.kind, self.summary)
    }
}

/// Ordered record of processed events.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventTrace {
    pub records: Vec<TraceRecord>,
}

impl EventTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TraceRecord> {
        self.records.iter()
    }

    pub fn of_kind(&self, kind: EventKind) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter().filter(move |r| r.kind == kind)
    }

    /// Newline-delimited `time_ns,seq,kind,payload-summary`.
    pub fn write_log<W: Write>(&self, mut w: W) -> io::Result<()> {
        for r in &self.records {
            writeln!(w, "{r}")?;
        }
        Ok(())
    }

    pub fn to_log(&self) -> String {
        let mut buf = Vec::new();
        self.write_log(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("trace is utf-8")
    }

    pub fn parse_log(text: &str) -> Option<EventTrace> {
        let mut records = Vec::new();
        for line in text.lines() {
            let mut parts = line.splitn(4, ',');
            let time = SimTime::from_nanos(parts.next()?.parse().ok()?);
            let seq = parts.next()?.parse().ok()?;
            let kind = match parts.next()? {
                "TaskArrival" => EventKind::TaskArrival,
                "ServiceStart" => EventKind::ServiceStart,
                "ServiceEnd" => EventKind::ServiceEnd,
                "LinkDeliveryEnd" => EventKind::LinkDeliveryEnd,
                "NciTick" => EventKind::NciTick,
                "ControlDirective" => EventKind::ControlDirective,
                "ScenarioAction" => EventKind::ScenarioAction,
                _ => return None,
            };
            let summary = parts.next().unwrap_or("").to_string();
            records.push(TraceRecord { time, seq, kind, summary });
        }
        Some(EventTrace { records })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum KernelError {
    #[error("cannot schedule at {at} before the current clock {now}")]
    PastEvent { at: SimTime, now: SimTime },
}

pub trait Model {
    type Payload: EventPayload;
    fn handle(&mut self, event: Event<Self::Payload>, kernel: &mut Kernel<Self::Payload>);
}

pub struct Kernel<P> {
    clock: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Reverse<Event<P>>>,
    trace: EventTrace,
    tracing: bool,
    processed: u64,
    halted: bool,
}

impl<P: EventPayload> Default for Kernel<P> {
    fn default() -> Self {
        Kernel::new(true)
    }
}

impl<P: EventPayload> Kernel<P> {
    /// With `tracing` off the kernel keeps no per-event records, which is what
    /// long statistical runs want.
    pub fn new(tracing: bool) -> Self {
        Kernel {
            clock: SimTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
            trace: EventTrace::default(),
            tracing,
            processed: 0,
            halted: false,
        }
    }

    pub fn now(&self) -> SimTime {
        self.clock
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn processed(&self) -> u64 {
        self.processed
    }

    pub fn trace(&self) -> &EventTrace {
        &self.trace
    }

    pub fn into_trace(self) -> EventTrace {
        self.trace
    }

    pub fn tracing(&self) -> bool {
        self.tracing
    }

    pub fn schedule(&mut self, at: SimTime, payload: P) -> Result<u64, KernelError> {
        if at < self.clock {
            return Err(KernelError::PastEvent { at, now: self.clock });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(Event { time: at, seq, payload }));
        Ok(seq)
    }

    pub fn schedule_in(&mut self, delay: SimDuration, payload: P) -> u64 {
        let at = self.clock + delay;
        self.schedule(at, payload).expect("relative schedule is never in the past")
    }

    /// Logs an instantaneous occurrence at the current clock without queueing
    /// it. It takes a sequence number like any scheduled event.
    pub fn record(&mut self, payload: &P) {
        let seq = self.next_seq;
        self.next_seq += 1;
        if self.tracing {
            self.trace.records.push(TraceRecord {
                time: self.clock,
                seq,
                kind: payload.kind(),
                summary: payload.summary(),
            });
        }
    }

    /// Stops the current `run_until` after the event being handled.
    pub fn halt(&mut self) {
        self.halted = true;
    }

    /// Processes every event strictly before `t_end` and leaves the clock at
    /// `t_end` (unless halted early). Returns the records appended by this call.
    pub fn run_until<M: Model<Payload = P>>(&mut self, t_end: SimTime, model: &mut M) -> &[TraceRecord] {
        let start = self.trace.records.len();
        self.halted = false;
        let t_end = t_end.max(self.clock);
        while let Some(Reverse(head)) = self.queue.peek() {
            if head.time >= t_end {
                break;
            }
            let Reverse(ev) = self.queue.pop().expect("peeked");
            debug_assert!(ev.time >= self.clock);
            self.clock = ev.time;
            self.processed += 1;
            if self.tracing {
                self.trace.records.push(TraceRecord {
                    time: ev.time,
                    seq: ev.seq,
                    kind: ev.payload.kind(),
                    summary: ev.payload.summary(),
                });
            }
            model.handle(ev, self);
            if self.halted {
                return &self.trace.records[start..];
            }
        }
        self.clock = t_end;
        &self.trace.records[start..]
    }

    /// Runs until the queue is empty; the clock stays at the last event time.
    pub fn drain<M: Model<Payload = P>>(&mut self, model: &mut M) -> &[TraceRecord] {
        let start = self.trace.records.len();
        self.halted = false;
        while let Some(Reverse(ev)) = self.queue.pop() {
            self.clock = ev.time;
            self.processed += 1;
            if self.tracing {
                self.trace.records.push(TraceRecord {
                    time: ev.time,
                    seq: ev.seq,
                    kind: ev.payload.kind(),
                    summary: ev.payload.summary(),
                });
            }
            model.handle(ev, self);
            if self.halted {
                break;
            }
        }
        &self.trace.records[start..]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone)]
    struct Ping(&'static str);

    impl EventPayload for Ping {
        fn kind(&self) -> EventKind {
            EventKind::ScenarioAction
        }
        fn summary(&self) -> String {
            self.0.to_string()
        }
    }

    #[derive(Default)]
    struct Recorder {
        seen: Vec<(SimTime, &'static str)>,
        chain: u32,
    }

    impl Model for Recorder {
        type Payload = Ping;
        fn handle(&mut self, ev: Event<Ping>, k: &mut Kernel<Ping>) {
            assert_eq!(k.now(), ev.time);
            self.seen.push((ev.time, ev.payload.0));
            if ev.payload.0 == "chain" && self.chain > 0 {
                self.chain -= 1;
                k.schedule_in(SimDuration::from_secs(1.5), Ping("chain"));
            }
        }
    }

    #[test]
    fn fires_at_scheduled_time() {
        let mut k = Kernel::new(true);
        let mut m = Recorder::default();
        k.run_until(SimTime::from_secs(3.0), &mut m);
        k.schedule(SimTime::from_secs(5.0), Ping("a")).unwrap();
        k.run_until(SimTime::from_secs(6.0), &mut m);
        assert_eq!(m.seen, vec![(SimTime::from_secs(5.0), "a")]);
    }

    #[test]
    fn past_event_is_rejected() {
        let mut k: Kernel<Ping> = Kernel::new(true);
        k.run_until(SimTime::from_secs(3.0), &mut Recorder::default());
        let err = k.schedule(SimTime::from_secs(2.0), Ping("late")).unwrap_err();
        assert_eq!(
            err,
            KernelError::PastEvent {
                at: SimTime::from_secs(2.0),
                now: SimTime::from_secs(3.0)
            }
        );
    }

    #[test]
    fn simultaneous_events_fire_in_scheduling_order() {
        let mut k = Kernel::new(true);
        let mut m = Recorder::default();
        k.schedule(SimTime::from_secs(5.0), Ping("A")).unwrap();
        k.schedule(SimTime::from_secs(5.0), Ping("B")).unwrap();
        k.run_until(SimTime::from_secs(10.0), &mut m);
        assert_eq!(m.seen.iter().map(|s| s.1).collect::<Vec<_>>(), vec!["A", "B"]);
    }

    #[test]
    fn empty_run_advances_clock() {
        let mut k: Kernel<Ping> = Kernel::new(true);
        let recs = k.run_until(SimTime::from_secs(10.0), &mut Recorder::default());
        assert!(recs.is_empty());
        assert_eq!(k.now(), SimTime::from_secs(10.0));
    }

    #[test]
    fn events_at_horizon_are_not_processed() {
        let mut k = Kernel::new(true);
        let mut m = Recorder::default();
        k.schedule(SimTime::from_secs(10.0), Ping("edge")).unwrap();
        k.run_until(SimTime::from_secs(10.0), &mut m);
        assert!(m.seen.is_empty());
        assert_eq!(k.pending(), 1);
    }

    fn chained(splits: &[f64]) -> EventTrace {
        let mut k = Kernel::new(true);
        let mut m = Recorder { chain: 8, ..Default::default() };
        k.schedule(SimTime::ZERO, Ping("chain")).unwrap();
        k.schedule(SimTime::from_secs(4.5), Ping("x")).unwrap();
        for &s in splits {
            k.run_until(SimTime::from_secs(s), &mut m);
        }
        k.into_trace()
    }

    #[test]
    fn split_runs_compose() {
        assert_eq!(chained(&[5.0, 10.0]), chained(&[10.0]));
        assert_eq!(chained(&[1.0, 2.0, 4.5, 10.0]), chained(&[10.0]));
    }

    #[test]
    fn trace_log_round_trips() {
        let t = chained(&[10.0]);
        let log = t.to_log();
        assert!(log.starts_with("0,0,ScenarioAction,chain\n"));
        assert_eq!(EventTrace::parse_log(&log).unwrap(), t);
    }

    #[test]
    fn record_consumes_a_sequence_number() {
        let mut k = Kernel::new(true);
        k.record(&Ping("note"));
        let seq = k.schedule(SimTime::ZERO, Ping("a")).unwrap();
        assert_eq!(seq, 1);
        assert_eq!(k.trace().records[0].summary, "note");
    }
}
