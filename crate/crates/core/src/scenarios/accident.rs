//! Vehicular accident reporting.
//!
//! The involved vehicle repeats its uplink report every `retry_period_s`
//! until acknowledged. The serving vBS decodes it (locally unless forced
//! central), broadcasts a warning on the downlink, forwards the record to
//! far vBSs whose downlink processing runs in the central pool, and copies
//! it to the emergency center. Stage times are deterministic; only the
//! decode outcome is random.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::conductor::{Conductor, VLinkRequest};
use crate::des::{Event, EventKind, EventPayload, Kernel, Model, RngStreams, Substream};
use crate::scenarios::{ScenarioContext, ScenarioError, ScenarioReport};
use crate::time::{SimDuration, SimTime};
use crate::topology::{NodeId, Position};
use crate::virtual_resources::VLinkClass;

fn default_uplink() -> f64 {
    0.2e-3
}
fn default_decode() -> f64 {
    0.3e-3
}
fn default_downlink() -> f64 {
    0.2e-3
}
fn default_budget() -> f64 {
    1e-3
}
fn default_retry() -> f64 {
    1e-3
}
fn one() -> f64 {
    1.0
}
fn default_vehicles() -> usize {
    5
}
fn default_forward_bps() -> u64 {
    10_000_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccidentScenario {
    /// RIE of the vBS serving the accident site.
    pub serving_rie: NodeId,
    /// RIEs of the far vBSs that get the forwarded record.
    #[serde(default)]
    pub far_ries: Vec<NodeId>,
    /// Node standing in for the emergency center.
    pub emergency_center: NodeId,
    #[serde(default)]
    pub at_s: f64,
    #[serde(default)]
    pub position: Position,
    #[serde(default = "default_uplink")]
    pub uplink_s: f64,
    #[serde(default = "default_decode")]
    pub decode_s: f64,
    #[serde(default = "default_downlink")]
    pub downlink_s: f64,
    #[serde(default = "default_budget")]
    pub budget_s: f64,
    #[serde(default = "default_retry")]
    pub retry_period_s: f64,
    #[serde(default = "one")]
    pub decode_success_p: f64,
    /// Decode in the central pool instead of at the serving site.
    #[serde(default)]
    pub force_central: bool,
    #[serde(default = "default_vehicles")]
    pub nearby_vehicles: usize,
    #[serde(default = "default_forward_bps")]
    pub forward_bw_bps: u64,
}

impl AccidentScenario {
    pub fn new(serving: &str, emergency: &str) -> Self {
        AccidentScenario {
            serving_rie: serving.into(),
            far_ries: Vec::new(),
            emergency_center: emergency.into(),
            at_s: 0.0,
            position: Position::default(),
            uplink_s: default_uplink(),
            decode_s: default_decode(),
            downlink_s: default_downlink(),
            budget_s: default_budget(),
            retry_period_s: default_retry(),
            decode_success_p: 1.0,
            force_central: false,
            nearby_vehicles: default_vehicles(),
            forward_bw_bps: default_forward_bps(),
        }
    }

    pub(crate) fn referenced(&self) -> Vec<&NodeId> {
        std::iter::once(&self.serving_rie)
            .chain(self.far_ries.iter())
            .chain(std::iter::once(&self.emergency_center))
            .collect()
    }

    fn check(&self) -> Result<(), ScenarioError> {
        let times = [self.uplink_s, self.decode_s, self.downlink_s, self.budget_s, self.at_s];
        if times.iter().any(|t| !(*t >= 0.0)) || !(self.retry_period_s > 0.0) {
            return Err(ScenarioError::Config("accident stage times must be non-negative and the retry period positive".into()));
        }
        if !(0.0..=1.0).contains(&self.decode_success_p) {
            return Err(ScenarioError::Config(format!("decode_success_p {} outside [0, 1]", self.decode_success_p)));
        }
        Ok(())
    }
}

/// Outcome of one accident report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccidentReportMetrics {
    pub at: SimTime,
    pub decode_site: NodeId,
    pub attempts: u32,
    pub retries: u32,
    pub warned_at: Option<SimTime>,
    pub warn_latency_s: Option<f64>,
    pub budget_met: bool,
    pub vehicles_warned: usize,
    pub remote_informed_at: Vec<(NodeId, SimTime)>,
    pub emergency_informed_at: Option<SimTime>,
}

#[derive(Debug, Clone)]
enum AccEvent {
    Uplink { attempt: u32 },
    UplinkArrive { attempt: u32 },
    DecodeDone { attempt: u32 },
    Warn { vehicle: usize },
    Ack,
    RetryTimer { attempt: u32 },
    Forwarded { far: usize },
    Emergency,
}

impl EventPayload for AccEvent {
    fn kind(&self) -> EventKind {
        match self {
            AccEvent::Uplink { .. } | AccEvent::RetryTimer { .. } => EventKind::ScenarioAction,
            AccEvent::UplinkArrive { .. } | AccEvent::Forwarded { .. } | AccEvent::Emergency | AccEvent::Ack => EventKind::LinkDeliveryEnd,
            AccEvent::DecodeDone { .. } => EventKind::ServiceEnd,
            AccEvent::Warn { .. } => EventKind::LinkDeliveryEnd,
        }
    }

    fn summary(&self) -> String {
        match self {
            AccEvent::Uplink { attempt } => format!("uplink attempt={attempt}"),
            AccEvent::UplinkArrive { attempt } => format!("uplink-arrive attempt={attempt}"),
            AccEvent::DecodeDone { attempt } => format!("decode attempt={attempt}"),
            AccEvent::Warn { vehicle } => format!("warn vehicle={vehicle}"),
            AccEvent::Ack => "ack".into(),
            AccEvent::RetryTimer { attempt } => format!("retry attempt={attempt}"),
            AccEvent::Forwarded { far } => format!("forwarded far#{far}"),
            AccEvent::Emergency => "emergency-center".into(),
        }
    }
}

struct AccModel {
    spec: AccidentScenario,
    rng: RngStreams,
    /// Transit time added around decoding (zero when local).
    decode_transit: SimDuration,
    forward_delays: Vec<SimDuration>,
    emergency_delay: SimDuration,
    acked: bool,
    decoded: bool,
    attempts: u32,
    failed_decodes: u32,
    warned: BTreeSet<usize>,
    warn_count: Vec<u32>,
    warned_at: Option<SimTime>,
    remote: Vec<Option<SimTime>>,
    remote_count: Vec<u32>,
    emergency_at: Option<SimTime>,
}

impl Model for AccModel {
    type Payload = AccEvent;

    fn handle(&mut self, ev: Event<AccEvent>, k: &mut Kernel<AccEvent>) {
        let now = ev.time;
        let s = |x: f64| SimDuration::from_secs(x);
        match ev.payload {
            AccEvent::Uplink { attempt } => {
                self.attempts += 1;
                k.schedule_in(s(self.spec.uplink_s), AccEvent::UplinkArrive { attempt });
                k.schedule_in(s(self.spec.retry_period_s), AccEvent::RetryTimer { attempt: attempt + 1 });
            }
            AccEvent::RetryTimer { attempt } => {
                if !self.acked {
                    k.schedule(now, AccEvent::Uplink { attempt }).expect("now");
                }
            }
            AccEvent::UplinkArrive { attempt } => {
                if !self.decoded {
                    let d = self.decode_transit + s(self.spec.decode_s) + self.decode_transit;
                    k.schedule_in(d, AccEvent::DecodeDone { attempt });
                }
            }
            AccEvent::DecodeDone { .. } => {
                if self.decoded {
                    return;
                }
                let u: f64 = self.rng.stream(Substream::Decode).random();
                if u >= self.spec.decode_success_p {
                    self.failed_decodes += 1;
                    return;
                }
                self.decoded = true;
                let down = s(self.spec.downlink_s);
                for v in 0..self.spec.nearby_vehicles {
                    k.schedule_in(down, AccEvent::Warn { vehicle: v });
                }
                k.schedule_in(down, AccEvent::Ack);
                for (i, d) in self.forward_delays.iter().enumerate() {
                    k.schedule_in(*d, AccEvent::Forwarded { far: i });
                }
                k.schedule_in(self.emergency_delay, AccEvent::Emergency);
            }
            AccEvent::Warn { vehicle } => {
                self.warn_count[vehicle] += 1;
                if self.warned.insert(vehicle) && self.warned_at.is_none() {
                    self.warned_at = Some(now);
                }
            }
            AccEvent::Ack => self.acked = true,
            AccEvent::Forwarded { far } => {
                self.remote_count[far] += 1;
                self.remote[far].get_or_insert(now);
            }
            AccEvent::Emergency => {
                self.emergency_at.get_or_insert(now);
            }
        }
    }
}

pub fn run_accident(spec: &AccidentScenario, ctx: &ScenarioContext) -> Result<(AccidentReportMetrics, ScenarioReport), ScenarioError> {
    spec.check()?;
    let mut conductor = Conductor::new(ctx.topology.clone(), ctx.conductor.clone());
    conductor
        .topology()
        .rie(&spec.serving_rie)
        .map_err(|_| ScenarioError::Config(format!("`{}` is not an RIE", spec.serving_rie)))?;
    let local = conductor
        .local_candidate(&spec.serving_rie)
        .ok_or_else(|| ScenarioError::Config("accident scenario needs a local compute node".into()))?;
    let central = conductor
        .central_candidate()
        .ok_or_else(|| ScenarioError::Config("accident scenario needs a central pool node".into()))?;
    let site = if spec.force_central { central.clone() } else { local.clone() };
    let transit = conductor
        .path_delay(&spec.serving_rie, &site)
        .ok_or_else(|| ScenarioError::Config(format!("no path from `{}` to `{site}`", spec.serving_rie)))?;

    // forwarding: serving RIE -> central downlink processing -> far RIE
    let now = SimTime::from_secs(spec.at_s);
    let bound = conductor.config().class_bounds.cloud_max_delay_s;
    let mut forward_delays = Vec::new();
    for far in &spec.far_ries {
        for (a, b) in [(&spec.serving_rie, &central), (&central, far)] {
            conductor.wnm_provision_vlink(
                &VLinkRequest {
                    owner: format!("accident-{far}"),
                    endpoints: (a.clone(), b.clone()),
                    bw_bps: spec.forward_bw_bps,
                    delay_s: bound,
                    class: VLinkClass::CloudClass,
                    vm: None,
                },
                now,
            )?;
        }
        let to_pool = conductor.path_delay(&spec.serving_rie, &central).expect("provisioned");
        let to_far = conductor.path_delay(&central, far).expect("provisioned");
        forward_delays.push(to_pool + SimDuration::from_secs(spec.decode_s) + to_far + SimDuration::from_secs(spec.downlink_s));
    }
    let emergency_delay = conductor
        .path_delay(&spec.serving_rie, &spec.emergency_center)
        .ok_or_else(|| ScenarioError::Config(format!("no path to emergency center `{}`", spec.emergency_center)))?;

    let mut model = AccModel {
        spec: spec.clone(),
        rng: RngStreams::new(ctx.seed),
        decode_transit: transit,
        remote: vec![None; forward_delays.len()],
        remote_count: vec![0; forward_delays.len()],
        forward_delays,
        emergency_delay,
        acked: false,
        decoded: false,
        attempts: 0,
        failed_decodes: 0,
        warned: BTreeSet::new(),
        warn_count: vec![0; spec.nearby_vehicles],
        warned_at: None,
        emergency_at: None,
    };
    let mut k = Kernel::new(ctx.tracing);
    k.schedule(now, AccEvent::Uplink { attempt: 0 }).expect("non-negative");
    k.run_until(SimTime::from_secs(ctx.duration_s.max(spec.at_s)) + SimDuration::from_secs(1.0), &mut model);

    let warn_latency = model.warned_at.map(|w| (w - now).as_secs());
    let metrics = AccidentReportMetrics {
        at: now,
        decode_site: site.clone(),
        attempts: model.attempts,
        retries: model.attempts.saturating_sub(1),
        warned_at: model.warned_at,
        warn_latency_s: warn_latency,
        budget_met: model.warned_at.is_some_and(|w| w - now <= SimDuration::from_secs(spec.budget_s)),
        vehicles_warned: model.warned.len(),
        remote_informed_at: spec.far_ries.iter().cloned().zip(model.remote.iter().flatten().copied()).collect(),
        emergency_informed_at: model.emergency_at,
    };
    let mut out = ScenarioReport::default();
    out.put("decode_site", site.0.clone());
    out.put("attempts", metrics.attempts);
    out.put("retries", metrics.retries);
    out.put("failed_decodes", model.failed_decodes);
    out.put("warn_latency_s", warn_latency.map_or(serde_json::Value::Null, Into::into));
    out.put("budget_s", spec.budget_s);
    out.put("budget_met", metrics.budget_met);
    out.put("vehicles_warned", metrics.vehicles_warned as u64);
    out.put("max_warnings_per_vehicle", model.warn_count.iter().copied().max().unwrap_or(0));
    out.put("far_vbs_informed", model.remote.iter().flatten().count() as u64);
    out.put("max_records_per_far_vbs", model.remote_count.iter().copied().max().unwrap_or(0));
    out.put(
        "emergency_latency_s",
        model.emergency_at.map_or(serde_json::Value::Null, |t| (t - now).as_secs().into()),
    );
    out.resources = json!({ "inventory": conductor.inventory().dump(), "report": metrics });
    out.trace = k.into_trace();
    Ok((metrics, out))
}

pub fn run(spec: &AccidentScenario, ctx: &ScenarioContext) -> Result<ScenarioReport, ScenarioError> {
    run_accident(spec, ctx).map(|(_, r)| r)
}
