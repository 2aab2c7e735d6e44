//! Single runs and parameter sweeps over a [`RunConfig`].
//!
//! Every sweep point is an independent simulation with its own kernel; with
//! the `parallel` feature the points are spread over the rayon pool.

use std::path::{Path, PathBuf};

use serde_json::Value;
use thiserror::Error;

use crate::config::{ConfigError, PolicyName, RunConfig};
use crate::metrics::{export, write_csv, MetricsError, OutputFormat, RunOutput};
use crate::scenarios::ScenarioError;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Runtime(_) => 3,
        }
    }
}

impl From<ScenarioError> for RunError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Config(msg) => RunError::Config(ConfigError::one(msg)),
            other => RunError::Runtime(other.to_string()),
        }
    }
}

impl From<MetricsError> for RunError {
    fn from(e: MetricsError) -> Self {
        RunError::Runtime(e.to_string())
    }
}

/// Validates and simulates one configuration.
pub fn run(cfg: &RunConfig) -> Result<RunOutput, RunError> {
    cfg.validate()?;
    let report = cfg.scenario.run(&cfg.context())?;
    let mut summary = report.summary;
    summary.insert("scenario".into(), cfg.scenario.name().into());
    summary.insert("seed".into(), cfg.seed.into());
    Ok(RunOutput {
        config_echo: cfg.to_json(),
        summary,
        samples: report.samples,
        trace: report.trace,
        resources: report.resources,
    })
}

pub fn run_to_dir(cfg: &RunConfig, dir: &Path) -> Result<Vec<PathBuf>, RunError> {
    let out = run(cfg)?;
    Ok(export(&out, dir, cfg.format)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Falls back to sequential without the `parallel` feature.
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// Maps `f` over `items` in order, in parallel when asked and available.
pub fn map_points<T, R, F>(items: &[T], exec: Execution, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

/// `n` evenly spaced values from `from` to `to` inclusive.
pub fn linspace(from: f64, to: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![from],
        _ => (0..n).map(|i| from + (to - from) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Key(String),
    Index(usize),
}

fn parse_path(path: &str) -> Result<Vec<Segment>, ConfigError> {
    let bad = || ConfigError::one(format!("malformed parameter path `{path}`"));
    let mut out = Vec::new();
    for part in path.split('.') {
        let (key, mut rest) = match part.find('[') {
            Some(i) => (&part[..i], &part[i..]),
            None => (part, ""),
        };
        if key.is_empty() {
            return Err(bad());
        }
        out.push(Segment::Key(key.to_string()));
        while !rest.is_empty() {
            let close = rest.find(']').ok_or_else(bad)?;
            if !rest.starts_with('[') {
                return Err(bad());
            }
            out.push(Segment::Index(rest[1..close].parse().map_err(|_| bad())?));
            rest = &rest[close + 1..];
        }
    }
    Ok(out)
}

/// Overwrites the numeric leaf at `path` and re-reads the configuration.
/// The leaf must already exist in the config echo and hold a number.
pub fn set_parameter(cfg: &RunConfig, path: &str, value: f64) -> Result<RunConfig, ConfigError> {
    let segments = parse_path(path)?;
    let mut doc = cfg.to_json();
    let unknown = || ConfigError::one(format!("unknown parameter `{path}`"));
    let mut slot = &mut doc;
    for s in &segments {
        slot = match s {
            Segment::Key(k) => slot.as_object_mut().and_then(|o| o.get_mut(k)),
            Segment::Index(i) => slot.as_array_mut().and_then(|a| a.get_mut(*i)),
        }
        .ok_or_else(unknown)?;
    }
    let Value::Number(old) = slot else {
        return Err(ConfigError::one(format!("parameter `{path}` is not numeric")));
    };
    let integral = value.fract() == 0.0 && value.abs() < 9.0e15;
    *slot = if old.is_f64() || !integral {
        Value::from(value)
    } else if value >= 0.0 {
        Value::from(value as u64)
    } else {
        Value::from(value as i64)
    };
    let next: RunConfig = serde_json::from_value(doc).map_err(|e| ConfigError::one(format!("parameter `{path}`: {e}")))?;
    next.validate()?;
    Ok(next)
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub parameter: String,
    pub values: Vec<f64>,
    /// Empty means the policy in the configuration.
    pub policies: Vec<PolicyName>,
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub point: usize,
    pub value: f64,
    pub policy: PolicyName,
    pub seed: u64,
    pub output: RunOutput,
}

/// The standalone configuration for one sweep point: the parameter set,
/// the policy overridden and the seed derived as base + point index.
pub fn point_config(base: &RunConfig, spec: &SweepSpec, point: usize, policy: Option<PolicyName>) -> Result<RunConfig, ConfigError> {
    let mut cfg = set_parameter(base, &spec.parameter, spec.values[point])?;
    if let Some(p) = policy {
        cfg.policy.placement = p;
    }
    cfg.seed = base.seed.wrapping_add(point as u64);
    Ok(cfg)
}

pub fn sweep(base: &RunConfig, spec: &SweepSpec, exec: Execution) -> Result<Vec<SweepRow>, RunError> {
    if spec.values.is_empty() {
        return Err(ConfigError::one("sweep needs at least one point").into());
    }
    let policies: Vec<Option<PolicyName>> = if spec.policies.is_empty() {
        vec![None]
    } else {
        spec.policies.iter().copied().map(Some).collect()
    };
    let mut jobs = Vec::new();
    for point in 0..spec.values.len() {
        for &p in &policies {
            let cfg = point_config(base, spec, point, p)?;
            jobs.push((point, cfg));
        }
    }
    let results = map_points(&jobs, exec, |(point, cfg)| {
        run(cfg).map(|output| SweepRow {
            point: *point,
            value: spec.values[*point],
            policy: cfg.policy.placement,
            seed: cfg.seed,
            output,
        })
    });
    results.into_iter().collect()
}

/// Long-format table: one row per (point, policy), metric columns sorted by
/// name over the union of all summaries.
pub fn sweep_table(parameter: &str, rows: &[SweepRow]) -> (Vec<String>, Vec<Vec<String>>) {
    let mut metrics: Vec<&String> = rows.iter().flat_map(|r| r.output.summary.keys()).collect();
    metrics.sort();
    metrics.dedup();
    metrics.retain(|m| !matches!(m.as_str(), "policy" | "seed"));
    let mut header = vec!["point".to_string(), parameter.to_string(), "policy".to_string(), "seed".to_string()];
    header.extend(metrics.iter().map(|m| m.to_string()));
    let body = rows
        .iter()
        .map(|r| {
            let mut row = vec![r.point.to_string(), r.value.to_string(), r.policy.to_string(), r.seed.to_string()];
            row.extend(metrics.iter().map(|m| match r.output.summary.get(*m) {
                None | Some(Value::Null) => String::new(),
                Some(Value::String(s)) => s.clone(),
                Some(v) => v.to_string(),
            }));
            row
        })
        .collect();
    (header, body)
}

pub fn write_sweep(path: &Path, parameter: &str, rows: &[SweepRow]) -> Result<(), RunError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| RunError::Runtime(format!("{}: {e}", dir.display())))?;
    }
    let (header, body) = sweep_table(parameter, rows);
    write_csv(path, &header, &body)?;
    Ok(())
}

/// Re-exported for callers that only pick a format by name.
pub fn parse_format(s: &str) -> Result<OutputFormat, ConfigError> {
    s.parse().map_err(|_| ConfigError::one(format!("unknown format `{s}`, expected csv or json")))
}
