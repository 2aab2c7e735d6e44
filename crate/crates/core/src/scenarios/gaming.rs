//! Mobile cloud gaming session.
//!
//! Setup follows the signalling order: the user asks the gaming manager
//! (GM), the GM negotiates a wireless link with the serving vBS, asks the
//! conductor for an engine VM and a wired vLink, acknowledges the user, and
//! streaming starts once the end-to-end link is up. While streaming, user
//! positions and vLink delay samples arrive as NCI; a handover re-homes the
//! vLink and a QoS violation makes the conductor migrate the engine.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::conductor::{Conductor, Directive, DirectiveAction, NciReading, NciReport, VLinkRequest};
use crate::des::{
    Event, EventKind, EventPayload, Job, Kernel, Model, Station, Discipline, TaskClass, TaskId, TaskLedger,
};
use crate::metrics::{summarize, LatencySample};
use crate::scenarios::{ScenarioContext, ScenarioError, ScenarioReport};
use crate::time::{SimDuration, SimTime};
use crate::topology::{NodeId, Position};
use crate::virtual_resources::{BlockIndex, ResourceId, VLinkClass};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub at_s: f64,
    pub x: f64,
    pub y: f64,
}

/// Position on a piecewise-linear path; clamps outside the waypoint times.
pub fn position_at(path: &[Waypoint], t: f64) -> Position {
    match path {
        [] => Position::default(),
        [only] => Position::new(only.x, only.y),
        _ => {
            if t <= path[0].at_s {
                return Position::new(path[0].x, path[0].y);
            }
            for w in path.windows(2) {
                let (a, b) = (w[0], w[1]);
                if t <= b.at_s {
                    let span = b.at_s - a.at_s;
                    let f = if span > 0.0 { (t - a.at_s) / span } else { 1.0 };
                    return Position::new(a.x + f * (b.x - a.x), a.y + f * (b.y - a.y));
                }
            }
            let last = path[path.len() - 1];
            Position::new(last.x, last.y)
        }
    }
}

fn default_user() -> String {
    "user1".into()
}
fn default_gm_demand() -> f64 {
    5.0
}
fn default_engine_demand() -> f64 {
    100.0
}
fn default_fps() -> f64 {
    60.0
}
fn default_inputs() -> f64 {
    20.0
}
fn default_frame_demand() -> f64 {
    0.5
}
fn default_input_demand() -> f64 {
    0.05
}
fn default_bw() -> u64 {
    100_000_000
}
fn default_delay() -> f64 {
    100e-6
}
fn default_wireless_blocks() -> u16 {
    2
}
fn default_wireless_power() -> f64 {
    30.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GamingScenario {
    #[serde(default = "default_user")]
    pub user: String,
    /// User mobility; a single waypoint means a static user.
    pub path: Vec<Waypoint>,
    /// Defaults to the lowest-id central pool node.
    #[serde(default)]
    pub gm_host: Option<NodeId>,
    /// Defaults to the host closest to the initial serving RIE.
    #[serde(default)]
    pub engine_host: Option<NodeId>,
    #[serde(default = "default_gm_demand")]
    pub gm_demand_wups: f64,
    #[serde(default = "default_engine_demand")]
    pub engine_demand_wups: f64,
    #[serde(default = "default_fps")]
    pub fps: f64,
    #[serde(default = "default_inputs")]
    pub input_rate_per_s: f64,
    #[serde(default = "default_frame_demand")]
    pub frame_demand_wu: f64,
    #[serde(default = "default_input_demand")]
    pub input_demand_wu: f64,
    #[serde(default = "default_bw")]
    pub vlink_bw_bps: u64,
    #[serde(default = "default_delay")]
    pub vlink_delay_s: f64,
    #[serde(default = "default_wireless_blocks")]
    pub wireless_blocks: u16,
    #[serde(default = "default_wireless_power")]
    pub wireless_power_dbm: f64,
    /// One-way radio latency between the user and its RIE.
    #[serde(default)]
    pub air_latency_s: f64,
}

impl GamingScenario {
    pub fn static_user(x: f64, y: f64) -> Self {
        GamingScenario {
            user: default_user(),
            path: vec![Waypoint { at_s: 0.0, x, y }],
            gm_host: None,
            engine_host: None,
            gm_demand_wups: default_gm_demand(),
            engine_demand_wups: default_engine_demand(),
            fps: default_fps(),
            input_rate_per_s: default_inputs(),
            frame_demand_wu: default_frame_demand(),
            input_demand_wu: default_input_demand(),
            vlink_bw_bps: default_bw(),
            vlink_delay_s: default_delay(),
            wireless_blocks: default_wireless_blocks(),
            wireless_power_dbm: default_wireless_power(),
            air_latency_s: 0.0,
        }
    }

    pub(crate) fn referenced(&self) -> Vec<&NodeId> {
        self.gm_host.iter().chain(self.engine_host.iter()).collect()
    }

    fn check(&self) -> Result<(), ScenarioError> {
        if self.path.is_empty() {
            return Err(ScenarioError::Config("gaming path needs at least one waypoint".into()));
        }
        if self.path.windows(2).any(|w| w[1].at_s < w[0].at_s) {
            return Err(ScenarioError::Config("gaming waypoints must be in time order".into()));
        }
        let positive = [self.fps, self.input_rate_per_s, self.engine_demand_wups];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(ScenarioError::Config("fps, input_rate_per_s and engine_demand_wups must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SessionPhase {
    Requested,
    Negotiating,
    Provisioned,
    Streaming,
    Migrating,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SetupStep {
    UserRequest,
    GmWirelessNegotiate,
    GmConductorRequest,
    ConductorProvision,
    GmAckUser,
    EndToEndLinkUp,
}

impl SetupStep {
    pub const ORDER: [SetupStep; 6] = [
        SetupStep::UserRequest,
        SetupStep::GmWirelessNegotiate,
        SetupStep::GmConductorRequest,
        SetupStep::ConductorProvision,
        SetupStep::GmAckUser,
        SetupStep::EndToEndLinkUp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SetupStep::UserRequest => "UserRequest",
            SetupStep::GmWirelessNegotiate => "GmWirelessNegotiate",
            SetupStep::GmConductorRequest => "GmConductorRequest",
            SetupStep::ConductorProvision => "ConductorProvision",
            SetupStep::GmAckUser => "GmAckUser",
            SetupStep::EndToEndLinkUp => "EndToEndLinkUp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GamingSession {
    pub id: String,
    pub user: String,
    pub gm: ResourceId,
    pub engine: Option<ResourceId>,
    pub wireless_blocks: Vec<ResourceId>,
    pub wired_vlink: Option<ResourceId>,
    pub phase: SessionPhase,
    pub serving_rie: NodeId,
}

#[derive(Debug, Clone)]
enum GEvent {
    Setup(SetupStep),
    Streaming,
    Abort(String),
    Frame,
    Input,
    InputArrive(TaskId),
    ServiceEnd(TaskId),
    FrameDelivered(TaskId),
    Nci,
    Handover { from: NodeId, to: NodeId },
    Migrate { vm: ResourceId, to: NodeId },
    MigrationDone,
}

impl EventPayload for GEvent {
    fn kind(&self) -> EventKind {
        match self {
            GEvent::Setup(_) | GEvent::Streaming | GEvent::Abort(_) | GEvent::Handover { .. } | GEvent::MigrationDone => {
                EventKind::ScenarioAction
            }
            GEvent::Frame | GEvent::Input => EventKind::TaskArrival,
            GEvent::InputArrive(_) | GEvent::FrameDelivered(_) => EventKind::LinkDeliveryEnd,
            GEvent::ServiceEnd(_) => EventKind::ServiceEnd,
            GEvent::Nci => EventKind::NciTick,
            GEvent::Migrate { .. } => EventKind::ControlDirective,
        }
    }

    fn summary(&self) -> String {
        match self {
            GEvent::Setup(s) => s.name().to_string(),
            GEvent::Streaming => "Streaming".into(),
            GEvent::Abort(why) => format!("Abort {why}"),
            GEvent::Frame => "frame".into(),
            GEvent::Input => "input".into(),
            GEvent::InputArrive(t) => format!("input-arrive {t}"),
            GEvent::ServiceEnd(t) => format!("end {t}"),
            GEvent::FrameDelivered(t) => format!("frame-delivered {t}"),
            GEvent::Nci => "nci".into(),
            GEvent::Handover { from, to } => format!("Handover {from}->{to}"),
            GEvent::Migrate { vm, to } => format!("MigrateVm {vm} to={to}"),
            GEvent::MigrationDone => "MigrationComplete".into(),
        }
    }
}

struct GamingModel {
    spec: GamingScenario,
    conductor: Conductor,
    session: GamingSession,
    gm_host: NodeId,
    engine_host: NodeId,
    stop: SimTime,
    nci_period: SimDuration,
    station: Option<Station>,
    buffer: VecDeque<Job>,
    ledger: TaskLedger,
    samples: Vec<LatencySample>,
    streaming_started: Option<SimTime>,
    acknowledged: bool,
    migrations: u32,
    migration_started: Option<SimTime>,
    downtime: SimDuration,
    handovers: u32,
    first_violation: Option<SimTime>,
    first_migrate_directive: Option<SimTime>,
    delay_samples: Vec<(SimTime, f64)>,
    last_migration_done: Option<SimTime>,
    buffered_total: u64,
}

impl GamingModel {
    fn nearest_rie(&self, p: Position) -> NodeId {
        let mut best: Option<(f64, &NodeId)> = None;
        for r in self.conductor.topology().ries() {
            let d = r.position.distance(&p);
            if best.is_none_or(|(bd, id)| d < bd || (d == bd && &r.id < id)) {
                best = Some((d, &r.id));
            }
        }
        best.map(|(_, id)| id.clone()).expect("topology has RIEs")
    }

    fn delay(&mut self, a: &NodeId, b: &NodeId) -> SimDuration {
        self.conductor.path_delay(a, b).unwrap_or(SimDuration::ZERO)
    }

    fn vlink_delay(&self) -> SimDuration {
        self.session
            .wired_vlink
            .as_ref()
            .and_then(|v| self.conductor.vlink_delay(v))
            .unwrap_or(SimDuration::ZERO)
    }

    fn air(&self) -> SimDuration {
        SimDuration::from_secs(self.spec.air_latency_s)
    }

    fn engine_down(&self) -> bool {
        self.session.phase == SessionPhase::Migrating
    }

    fn offer(&mut self, job: Job, now: SimTime, k: &mut Kernel<GEvent>) {
        if self.engine_down() {
            self.buffered_total += 1;
            self.buffer.push_back(job);
            return;
        }
        let st = self.station.as_mut().expect("streaming");
        if let Some(s) = st.offer(job, now).expect("fresh task") {
            k.schedule(s.end, GEvent::ServiceEnd(s.task)).expect("future");
        }
    }

    fn assign_wireless(&mut self, rie: &NodeId, now: SimTime) -> Result<Vec<ResourceId>, String> {
        let topo = self.conductor.topology();
        let inv = self.conductor.inventory();
        let mut blocks = Vec::new();
        'grid: for slot in 0..inv.grid.slots {
            for freq in (0..inv.grid.freqs).rev() {
                let b = BlockIndex::new(slot, freq);
                if inv.radio_conflicts(topo, rie, &[b]).map(|c| c.is_empty()).unwrap_or(false) {
                    blocks.push(b);
                    if blocks.len() == self.spec.wireless_blocks as usize {
                        break 'grid;
                    }
                }
            }
        }
        let owner = format!("session-{}", self.session.user);
        self.conductor
            .rim_assign_blocks(&owner, rie, &blocks, self.spec.wireless_power_dbm, now)
            .map_err(|e| e.to_string())
    }

    fn setup(&mut self, step: SetupStep, now: SimTime, k: &mut Kernel<GEvent>) {
        let rie = self.session.serving_rie.clone();
        let gm = self.gm_host.clone();
        match step {
            SetupStep::UserRequest => {
                // carried by the serving vBS to the GM
                let d = self.air() + self.delay(&rie, &gm);
                k.schedule_in(d, GEvent::Setup(SetupStep::GmWirelessNegotiate));
            }
            SetupStep::GmWirelessNegotiate => {
                self.session.phase = SessionPhase::Negotiating;
                match self.assign_wireless(&rie, now) {
                    Ok(ids) => {
                        self.session.wireless_blocks = ids;
                        let one = self.delay(&gm, &rie);
                        let d = one + one;
                        k.schedule_in(d, GEvent::Setup(SetupStep::GmConductorRequest));
                    }
                    Err(e) => {
                        k.schedule_in(SimDuration::ZERO, GEvent::Abort(format!("wireless negotiation failed: {e}")));
                    }
                }
            }
            SetupStep::GmConductorRequest => {
                let d = SimDuration::from_secs(self.conductor.config().policy.control_latency_s);
                k.schedule_in(d, GEvent::Setup(SetupStep::ConductorProvision));
            }
            SetupStep::ConductorProvision => {
                let host = self.engine_host.clone();
                let vm = match self.conductor.start_vm("game-engine", self.spec.engine_demand_wups, true, &host, now) {
                    Ok(v) => v,
                    Err(e) => {
                        k.schedule_in(SimDuration::ZERO, GEvent::Abort(format!("engine rejected: {e}")));
                        return;
                    }
                };
                let req = VLinkRequest {
                    owner: "game-engine".into(),
                    endpoints: (host.clone(), rie.clone()),
                    bw_bps: self.spec.vlink_bw_bps,
                    delay_s: self.spec.vlink_delay_s,
                    class: VLinkClass::CloudClass,
                    vm: Some(vm.clone()),
                };
                match self.conductor.wnm_provision_vlink(&req, now) {
                    Ok(vl) => {
                        self.session.engine = Some(vm);
                        self.session.wired_vlink = Some(vl);
                        self.session.phase = SessionPhase::Provisioned;
                        let d = SimDuration::from_secs(self.conductor.config().policy.control_latency_s);
                        k.schedule_in(d, GEvent::Setup(SetupStep::GmAckUser));
                    }
                    Err(e) => {
                        let _ = self.conductor.release(&vm, now);
                        k.schedule_in(SimDuration::ZERO, GEvent::Abort(format!("wired vlink rejected: {e}")));
                    }
                }
            }
            SetupStep::GmAckUser => {
                self.acknowledged = true;
                let d = self.delay(&gm, &rie) + self.air();
                k.schedule_in(d, GEvent::Setup(SetupStep::EndToEndLinkUp));
            }
            SetupStep::EndToEndLinkUp => {
                k.schedule_in(SimDuration::ZERO, GEvent::Streaming);
            }
        }
    }

    fn start_streaming(&mut self, now: SimTime, k: &mut Kernel<GEvent>) {
        self.session.phase = SessionPhase::Streaming;
        if self.streaming_started.is_some() {
            return;
        }
        self.streaming_started = Some(now);
        self.station = Some(Station::new(self.engine_host.clone(), 1, self.spec.engine_demand_wups, Discipline::Fcfs));
        if now < self.stop {
            k.schedule_in(SimDuration::ZERO, GEvent::Frame);
            k.schedule_in(SimDuration::ZERO, GEvent::Input);
            k.schedule_in(SimDuration::ZERO, GEvent::Nci);
        }
    }

    fn tick(&self, k: &mut Kernel<GEvent>, period: SimDuration, ev: GEvent) {
        if k.now() + period < self.stop {
            k.schedule_in(period, ev);
        }
    }

    fn new_task(&mut self, class: TaskClass, demand: f64, now: SimTime, src: NodeId, dst: NodeId) -> Job {
        let id = self.ledger.create(now, class, demand, None, 0, src, dst, false);
        Job {
            task: id,
            demand_wu: demand,
            deadline: None,
            accelerable: false,
            arrived: now,
        }
    }

    fn nci(&mut self, now: SimTime, k: &mut Kernel<GEvent>) {
        let p = position_at(&self.spec.path, now.as_secs());
        let user = self.session.user.clone();
        let _ = self.conductor.ingest_nci(&NciReport {
            reporter: user,
            at: now,
            reading: NciReading::UserPosition(p),
        });
        let serving = self.nearest_rie(p);
        if serving != self.session.serving_rie {
            let from = self.session.serving_rie.clone();
            k.record(&GEvent::Handover {
                from: from.clone(),
                to: serving.clone(),
            });
            self.handover(&from, &serving, now);
        }
        if let Some(vl) = self.session.wired_vlink.clone() {
            let measured = self.vlink_delay().as_secs();
            self.delay_samples.push((now, measured));
            let before = self.conductor.violations().len();
            let directives = self
                .conductor
                .ingest_nci(&NciReport {
                    reporter: vl.0.clone(),
                    at: now,
                    reading: NciReading::LinkDelaySample { delay_s: measured },
                })
                .unwrap_or_default();
            if self.conductor.violations().len() > before && self.first_violation.is_none() {
                self.first_violation = Some(now);
            }
            for d in directives {
                self.dispatch(d, k);
            }
        }
        self.tick(k, self.nci_period, GEvent::Nci);
    }

    fn handover(&mut self, from: &NodeId, to: &NodeId, now: SimTime) {
        self.handovers += 1;
        self.session.serving_rie = to.clone();
        for b in std::mem::take(&mut self.session.wireless_blocks) {
            let _ = self.conductor.release(&b, now);
        }
        if let Ok(ids) = self.assign_wireless(to, now) {
            self.session.wireless_blocks = ids;
        }
        if let Some(vl) = self.session.wired_vlink.clone() {
            let _ = self.conductor.rehome_vlink(&vl, from, to);
        }
    }

    fn dispatch(&mut self, d: Directive, k: &mut Kernel<GEvent>) {
        if let DirectiveAction::MigrateVm { vm, to } = &d.action {
            self.first_migrate_directive.get_or_insert(d.issued_at);
            let at = d.issued_at + self.conductor.route_control(&d);
            k.schedule(at, GEvent::Migrate { vm: vm.clone(), to: to.clone() }).expect("future");
        }
    }
}

impl Model for GamingModel {
    type Payload = GEvent;

    fn handle(&mut self, ev: Event<GEvent>, k: &mut Kernel<GEvent>) {
        let now = ev.time;
        match ev.payload {
            GEvent::Setup(step) => self.setup(step, now, k),
            GEvent::Streaming => self.start_streaming(now, k),
            GEvent::Abort(_) => {
                self.session.phase = SessionPhase::Closed;
                for b in std::mem::take(&mut self.session.wireless_blocks) {
                    let _ = self.conductor.release(&b, now);
                }
            }
            GEvent::Frame => {
                let host = self.engine_host.clone();
                let user = self.session.serving_rie.clone();
                let job = self.new_task(TaskClass::GamingFrame, self.spec.frame_demand_wu, now, host, user);
                self.offer(job, now, k);
                self.tick(k, SimDuration::from_secs(1.0 / self.spec.fps), GEvent::Frame);
            }
            GEvent::Input => {
                let rie = self.session.serving_rie.clone();
                let host = self.engine_host.clone();
                let job = self.new_task(TaskClass::GamingInput, self.spec.input_demand_wu, now, rie, host);
                let d = self.air() + self.vlink_delay();
                k.schedule_in(d, GEvent::InputArrive(job.task));
                self.tick(k, SimDuration::from_secs(1.0 / self.spec.input_rate_per_s), GEvent::Input);
            }
            GEvent::InputArrive(task) => {
                let job = Job {
                    task,
                    demand_wu: self.spec.input_demand_wu,
                    deadline: None,
                    accelerable: false,
                    arrived: now,
                };
                self.offer(job, now, k);
            }
            GEvent::ServiceEnd(task) => {
                let st = self.station.as_mut().expect("streaming");
                let (_, next) = st.complete(task, now).expect("in service");
                if let Some(s) = next {
                    k.schedule(s.end, GEvent::ServiceEnd(s.task)).expect("future");
                }
                let class = self.ledger.get(task).expect("in flight").class;
                if class == TaskClass::GamingFrame {
                    let d = self.vlink_delay() + self.air();
                    k.schedule_in(d, GEvent::FrameDelivered(task));
                } else {
                    let t = self.ledger.finish(task, now).expect("in flight");
                    self.samples.push(LatencySample {
                        task,
                        class: t.class,
                        created_at: t.created_at,
                        finished_at: now,
                        deadline_met: None,
                    });
                }
            }
            GEvent::FrameDelivered(task) => {
                let t = self.ledger.finish(task, now).expect("in flight");
                self.samples.push(LatencySample {
                    task,
                    class: t.class,
                    created_at: t.created_at,
                    finished_at: now,
                    deadline_met: None,
                });
            }
            GEvent::Nci => self.nci(now, k),
            GEvent::Handover { .. } => {}
            GEvent::Migrate { vm, to } => match self.conductor.migrate_vm(&vm, &to, now) {
                Ok(done) => {
                    self.session.phase = SessionPhase::Migrating;
                    self.migrations += 1;
                    self.migration_started = Some(now);
                    k.schedule(done, GEvent::MigrationDone).expect("future");
                }
                Err(_) => {}
            },
            GEvent::MigrationDone => {
                let vm = self.session.engine.clone().expect("engine exists");
                if self.conductor.complete_migration(&vm, now).is_ok() {
                    self.engine_host = self.conductor.inventory().vm(&vm).expect("live").host.clone();
                }
                if let Some(s) = self.migration_started.take() {
                    self.downtime += now - s;
                }
                self.last_migration_done = Some(now);
                self.session.phase = SessionPhase::Streaming;
                k.record(&GEvent::Streaming);
                while let Some(job) = self.buffer.pop_front() {
                    let job = Job { arrived: now, ..job };
                    self.offer(job, now, k);
                }
            }
        }
    }
}

/// Metrics of one gaming session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GamingSessionMetrics {
    pub acknowledged: bool,
    pub aborted: bool,
    pub setup_time_s: Option<f64>,
    pub migrations: u32,
    pub downtime_s: f64,
    pub handovers: u32,
    pub first_violation: Option<SimTime>,
    pub first_migrate_directive: Option<SimTime>,
    /// Largest measured vLink delay after the last migration completed.
    pub post_migration_max_delay_s: Option<f64>,
    pub tasks_created: u64,
    pub tasks_completed: u64,
    pub tasks_dropped: u64,
    pub tasks_buffered: u64,
    pub frame_latency_mean_s: Option<f64>,
    pub frame_latency_p99_s: Option<f64>,
}

pub fn run_gaming(spec: &GamingScenario, ctx: &ScenarioContext) -> Result<(GamingSessionMetrics, ScenarioReport), ScenarioError> {
    spec.check()?;
    let mut conductor = Conductor::new(ctx.topology.clone(), ctx.conductor.clone());
    if conductor.topology().ries().next().is_none() {
        return Err(ScenarioError::Config("gaming scenario needs at least one RIE".into()));
    }
    let gm_host = match &spec.gm_host {
        Some(h) => h.clone(),
        None => conductor
            .central_candidate()
            .ok_or_else(|| ScenarioError::Config("gaming scenario needs a central pool node".into()))?,
    };
    let gm = conductor.start_vm("gaming-manager", spec.gm_demand_wups, false, &gm_host, SimTime::ZERO)?;
    conductor.register_user(&spec.user, position_at(&spec.path, 0.0));
    let mut model = GamingModel {
        spec: spec.clone(),
        conductor,
        session: GamingSession {
            id: format!("session-{}", spec.user),
            user: spec.user.clone(),
            gm,
            engine: None,
            wireless_blocks: Vec::new(),
            wired_vlink: None,
            phase: SessionPhase::Requested,
            serving_rie: NodeId::from(""),
        },
        gm_host,
        engine_host: NodeId::from(""),
        stop: SimTime::from_secs(ctx.duration_s),
        nci_period: SimDuration::from_secs(ctx.nci_period_s.max(1e-6)),
        station: None,
        buffer: VecDeque::new(),
        ledger: TaskLedger::default(),
        samples: Vec::new(),
        streaming_started: None,
        acknowledged: false,
        migrations: 0,
        migration_started: None,
        downtime: SimDuration::ZERO,
        handovers: 0,
        first_violation: None,
        first_migrate_directive: None,
        delay_samples: Vec::new(),
        last_migration_done: None,
        buffered_total: 0,
    };
    let start = model.nearest_rie(position_at(&spec.path, 0.0));
    model.session.serving_rie = start.clone();
    model.engine_host = match &spec.engine_host {
        Some(h) => h.clone(),
        None => model
            .conductor
            .nearest_host(&start, spec.engine_demand_wups, None)
            .ok_or_else(|| ScenarioError::Config("no host can run the game engine".into()))?,
    };
    let mut k = Kernel::new(ctx.tracing);
    for step in SetupStep::ORDER.into_iter().take(1) {
        k.schedule(SimTime::ZERO, GEvent::Setup(step)).expect("start");
    }
    k.drain(&mut model);

    let frames: Vec<LatencySample> = model.samples.iter().filter(|s| s.class == TaskClass::GamingFrame).cloned().collect();
    let frame_stats = summarize(&frames).ok();
    let post = model.last_migration_done.map(|done| {
        model
            .delay_samples
            .iter()
            .filter(|(t, _)| *t >= done)
            .map(|(_, d)| *d)
            .fold(0.0, f64::max)
    });
    let m = GamingSessionMetrics {
        acknowledged: model.acknowledged,
        aborted: model.session.phase == SessionPhase::Closed,
        setup_time_s: model.streaming_started.map(|t| t.as_secs()),
        migrations: model.migrations,
        downtime_s: model.downtime.as_secs(),
        handovers: model.handovers,
        first_violation: model.first_violation,
        first_migrate_directive: model.first_migrate_directive,
        post_migration_max_delay_s: post,
        tasks_created: model.ledger.created(),
        tasks_completed: model.ledger.completed(),
        tasks_dropped: model.ledger.dropped() + model.ledger.in_flight(),
        tasks_buffered: model.buffered_total,
        frame_latency_mean_s: frame_stats.as_ref().map(|s| s.mean),
        frame_latency_p99_s: frame_stats.as_ref().map(|s| s.p99),
    };

    let mut out = ScenarioReport {
        samples: frames,
        ..Default::default()
    };
    out.put_latency("frame_latency_");
    let opt = |v: Option<f64>| v.map_or(serde_json::Value::Null, Into::into);
    out.put("acknowledged", m.acknowledged);
    out.put("aborted", m.aborted);
    out.put("setup_time_s", opt(m.setup_time_s));
    out.put("migrations", m.migrations);
    out.put("downtime_s", m.downtime_s);
    out.put("handovers", m.handovers);
    out.put("qos_violations", model.conductor.violations().len() as u64);
    out.put("first_violation_s", opt(m.first_violation.map(|t| t.as_secs())));
    out.put("first_migrate_directive_s", opt(m.first_migrate_directive.map(|t| t.as_secs())));
    out.put("post_migration_max_delay_s", opt(m.post_migration_max_delay_s));
    out.put("tasks_created", m.tasks_created);
    out.put("tasks_completed", m.tasks_completed);
    out.put("tasks_lost", m.tasks_dropped);
    out.put("tasks_buffered", m.tasks_buffered);
    out.resources = json!({
        "inventory": model.conductor.inventory().dump(),
        "session": model.session,
    });
    out.trace = k.into_trace();
    Ok((m, out))
}

pub fn run(spec: &GamingScenario, ctx: &ScenarioContext) -> Result<ScenarioReport, ScenarioError> {
    run_gaming(spec, ctx).map(|(_, r)| r)
}
