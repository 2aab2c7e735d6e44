//! Measurement collection, summaries, conservation checks and export.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::des::{EventTrace, TaskClass, TaskId, Visit};
use crate::time::{SimDuration, SimTime};
use crate::topology::NodeId;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no samples to summarize")]
    Empty,
    #[error("measurement window contains no completions")]
    EmptyWindow,
    #[error("unknown output format `{0}` (expected csv or json)")]
    UnknownFormat(String),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

/// Integral of a piecewise-constant level over time, optionally bucketed
/// into fixed-width windows.
#[derive(Debug, Clone)]
pub struct TimeIntegral {
    level: f64,
    last: SimTime,
    area: f64,
    window: Option<SimDuration>,
    windows: Vec<f64>,
}

impl TimeIntegral {
    pub fn new(start: SimTime) -> Self {
        TimeIntegral {
            level: 0.0,
            last: start,
            area: 0.0,
            window: None,
            windows: Vec::new(),
        }
    }

    pub fn with_windows(mut self, width: SimDuration) -> Self {
        if width > SimDuration::ZERO {
            self.window = Some(width);
        }
        self
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    fn accumulate(&mut self, now: SimTime) {
        if now <= self.last {
            return;
        }
        self.area += self.level * (now - self.last).as_secs();
        if let Some(w) = self.window {
            let w = w.as_nanos();
            let mut t = self.last.as_nanos();
            let end = now.as_nanos();
            while t < end {
                let idx = (t / w) as usize;
                let boundary = ((idx as u64) + 1) * w;
                let seg_end = boundary.min(end);
                if self.windows.len() <= idx {
                    self.windows.resize(idx + 1, 0.0);
                }
                self.windows[idx] += self.level * (seg_end - t) as f64 / 1e9;
                t = seg_end;
            }
        }
        self.last = now;
    }

    /// Changes the level at `now`. Calls with `now` earlier than the last
    /// change are treated as happening at the last change.
    pub fn set(&mut self, now: SimTime, level: f64) {
        self.accumulate(now);
        self.level = level;
    }

    /// Area accumulated up to `now` without mutating the integrator.
    pub fn area_until(&self, now: SimTime) -> f64 {
        let extra = if now > self.last {
            self.level * (now - self.last).as_secs()
        } else {
            0.0
        };
        self.area + extra
    }

    /// Average level per window up to `now`; the final window may be partial.
    pub fn window_averages(&self, now: SimTime) -> Vec<f64> {
        let Some(w) = self.window else {
            return Vec::new();
        };
        let mut copy = self.clone();
        copy.accumulate(now);
        let n = now.as_nanos().div_ceil(w.as_nanos()) as usize;
        copy.windows.resize(n, 0.0);
        copy.windows
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let start = i as u64 * w.as_nanos();
                let len = (start + w.as_nanos()).min(now.as_nanos()) - start;
                if len == 0 {
                    0.0
                } else {
                    a / (len as f64 / 1e9)
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencySample {
    pub task: TaskId,
    pub class: TaskClass,
    pub created_at: SimTime,
    pub finished_at: SimTime,
    pub deadline_met: Option<bool>,
}

impl LatencySample {
    pub fn latency_s(&self) -> f64 {
        (self.finished_at - self.created_at).as_secs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub count: usize,
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
    /// Misses over samples that carried a deadline; `None` if none did.
    pub miss_rate: Option<f64>,
}

/// Nearest-rank percentile of an ascending slice.
pub fn nearest_rank(sorted: &[f64], pct: f64) -> f64 {
    let n = sorted.len();
    let rank = ((pct / 100.0) * n as f64).ceil().max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

pub fn summarize_values(values: &[f64], deadlines: impl IntoIterator<Item = Option<bool>>) -> Result<LatencySummary, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (mut with_deadline, mut misses) = (0usize, 0usize);
    for d in deadlines.into_iter().flatten() {
        with_deadline += 1;
        if !d {
            misses += 1;
        }
    }
    Ok(LatencySummary {
        count: sorted.len(),
        mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
        p50: nearest_rank(&sorted, 50.0),
        p95: nearest_rank(&sorted, 95.0),
        p99: nearest_rank(&sorted, 99.0),
        max: *sorted.last().expect("non-empty"),
        miss_rate: (with_deadline > 0).then(|| misses as f64 / with_deadline as f64),
    })
}

pub fn summarize(samples: &[LatencySample]) -> Result<LatencySummary, MetricsError> {
    let values: Vec<f64> = samples.iter().map(LatencySample::latency_s).collect();
    summarize_values(&values, samples.iter().map(|s| s.deadline_met))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilizationSeries {
    pub resource: String,
    pub busy_fraction: f64,
    pub windows: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LittlesLaw {
    pub l: f64,
    pub lambda: f64,
    pub w: f64,
    pub relative_error: f64,
}

/// Checks `L = λW` over `[start, end]` from per-customer visits.
pub fn littles_law_check(visits: &[Visit], start: SimTime, end: SimTime) -> Result<LittlesLaw, MetricsError> {
    if end <= start {
        return Err(MetricsError::EmptyWindow);
    }
    let window = (end - start).as_secs();
    let mut occupancy = 0.0;
    let mut done = 0u64;
    let mut sojourn = 0.0;
    for v in visits {
        let a = v.arrived.max(start);
        let d = v.departed.min(end);
        if d > a {
            occupancy += (d - a).as_secs();
        }
        if v.departed >= start && v.departed <= end {
            done += 1;
            sojourn += (v.departed - v.arrived).as_secs();
        }
    }
    if done == 0 {
        return Err(MetricsError::EmptyWindow);
    }
    let l = occupancy / window;
    let lambda = done as f64 / window;
    let w = sojourn / done as f64;
    Ok(LittlesLaw {
        l,
        lambda,
        w,
        relative_error: if l > 0.0 { (l - lambda * w).abs() / l } else { 0.0 },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerChange {
    pub at: SimTime,
    pub watts: f64,
}

/// Per-node energy under a piecewise-constant power model.
#[derive(Debug, Clone, Default)]
pub struct EnergyLedger {
    nodes: BTreeMap<NodeId, (TimeIntegral, Vec<PowerChange>)>,
}

impl EnergyLedger {
    pub fn set_power(&mut self, node: &NodeId, now: SimTime, watts: f64) {
        let entry = self
            .nodes
            .entry(node.clone())
            .or_insert_with(|| (TimeIntegral::new(now), Vec::new()));
        if entry.0.level() == watts && !entry.1.is_empty() {
            return;
        }
        entry.0.set(now, watts);
        entry.1.push(PowerChange { at: now, watts });
    }

    pub fn power(&self, node: &NodeId) -> f64 {
        self.nodes.get(node).map_or(0.0, |e| e.0.level())
    }

    /// Instantaneous draw over all nodes.
    pub fn total_power(&self) -> f64 {
        self.nodes.values().map(|e| e.0.level()).sum()
    }

    pub fn node_energy_j(&self, node: &NodeId, now: SimTime) -> f64 {
        self.nodes.get(node).map_or(0.0, |e| e.0.area_until(now))
    }

    pub fn total_energy_j(&self, now: SimTime) -> f64 {
        self.nodes.values().map(|e| e.0.area_until(now)).sum()
    }

    pub fn per_node_j(&self, now: SimTime) -> BTreeMap<NodeId, f64> {
        self.nodes.iter().map(|(k, e)| (k.clone(), e.0.area_until(now))).collect()
    }

    pub fn change_log(&self, node: &NodeId) -> &[PowerChange] {
        self.nodes.get(node).map_or(&[], |e| e.1.as_slice())
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes.keys()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = MetricsError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(MetricsError::UnknownFormat(other.to_string())),
        }
    }
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

/// Everything a finished run writes to its output directory.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config_echo: Value,
    pub summary: BTreeMap<String, Value>,
    pub samples: Vec<LatencySample>,
    pub trace: EventTrace,
    pub resources: Value,
}

pub const SAMPLE_COLUMNS: [&str; 6] = ["task_id", "class", "created_at_s", "finished_at_s", "latency_s", "deadline_met"];

fn sample_row(s: &LatencySample) -> [String; 6] {
    [
        s.task.0.to_string(),
        format!("{:?}", s.class),
        s.created_at.as_secs().to_string(),
        s.finished_at.as_secs().to_string(),
        s.latency_s().to_string(),
        s.deadline_met.map(|b| b.to_string()).unwrap_or_default(),
    ]
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> MetricsError + '_ {
    move |source| MetricsError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> MetricsError + '_ {
    move |e| MetricsError::Io {
        path: path.to_path_buf(),
        source: io::Error::other(e),
    }
}

pub fn samples_csv(samples: &[LatencySample]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SAMPLE_COLUMNS).expect("in-memory write");
    for s in samples {
        w.write_record(sample_row(s)).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn summary_csv(summary: &BTreeMap<String, Value>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["metric", "value"]).expect("in-memory write");
    for (k, v) in summary {
        let v = match v {
            Value::String(s) => s.clone(),
            Value::Null => String::new(),
            other => other.to_string(),
        };
        w.write_record([k.as_str(), v.as_str()]).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn pretty(v: &impl Serialize) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("serializable");
    out.push(b'\n');
    out
}

/// Writes `summary.{csv|json}`, `samples.csv`, `trace.log`, `resources.json`
/// and `config-echo.json` into `dir`. Returns the written paths.
pub fn export(out: &RunOutput, dir: &Path, format: OutputFormat) -> Result<Vec<PathBuf>, MetricsError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut files: Vec<(PathBuf, Vec<u8>)> = Vec::new();
    let summary_path = dir.join(format!("summary.{}", format.extension()));
    match format {
        OutputFormat::Csv => files.push((summary_path, summary_csv(&out.summary))),
        OutputFormat::Json => {
            let samples: Vec<Value> = out
                .samples
                .iter()
                .map(|s| {
                    serde_json::json!({
                        "task_id": s.task.0,
                        "class": format!("{:?}", s.class),
                        "created_at_s": s.created_at.as_secs(),
                        "finished_at_s": s.finished_at.as_secs(),
                        "latency_s": s.latency_s(),
                        "deadline_met": s.deadline_met,
                    })
                })
                .collect();
            let doc = serde_json::json!({
                "config": out.config_echo,
                "summary": out.summary,
                "samples": samples,
            });
            files.push((summary_path, pretty(&doc)));
        }
    }
    files.push((dir.join("samples.csv"), samples_csv(&out.samples)));
    files.push((dir.join("trace.log"), out.trace.to_log().into_bytes()));
    files.push((dir.join("resources.json"), pretty(&out.resources)));
    files.push((dir.join("config-echo.json"), pretty(&out.config_echo)));
    let mut written = Vec::new();
    for (path, bytes) in files {
        fs::write(&path, bytes).map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}

/// Writes rows under a header as RFC 4180 CSV.
pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for r in rows {
        w.write_record(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}
