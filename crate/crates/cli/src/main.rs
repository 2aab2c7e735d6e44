use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use concert_core::analytic::{
    jackson_solve, mm1_sojourn, mmc_metrics, placement_latency, AnalyticError, JacksonNetworkSpec, PlacementMode, PlacementSpec, ServerSpec,
};
use concert_core::config::{ConfigError, PolicyName, RunConfig};
use concert_core::metrics::write_csv;
use concert_core::runner::{self, linspace, parse_format, Execution, RunError, SweepSpec};

#[derive(Parser)]
#[command(name = "concert-sim", version, about = "Deterministic simulator for a converged cloud/cellular edge")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate one configuration and write its output directory.
    Run(RunArgs),
    /// Closed-form queueing results.
    Analyze {
        #[command(subcommand)]
        what: Analyze,
    },
    /// One simulation per grid point of a numeric config parameter.
    Sweep(SweepArgs),
    /// Check a configuration without running it.
    Validate { config: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
    /// Default output root when neither --output nor the config names one.
    #[arg(long, env = "CONCERT_SIM_OUTPUT", default_value = "out", hide_env_values = true)]
    output_root: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    config: PathBuf,
    /// Dotted config path, e.g. `topology.links[0].prop_delay_s`.
    #[arg(long)]
    param: String,
    #[arg(long)]
    from: f64,
    #[arg(long)]
    to: f64,
    #[arg(long, default_value_t = 9)]
    points: usize,
    /// Comma-separated placement policies; default is the config's.
    #[arg(long, value_delimiter = ',')]
    policies: Vec<String>,
    /// CSV destination; defaults to `<root>/<config stem>-sweep.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    sequential: bool,
    #[arg(long, env = "CONCERT_SIM_OUTPUT", default_value = "out", hide_env_values = true)]
    output_root: PathBuf,
}

#[derive(Subcommand)]
enum Analyze {
    Mm1 {
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        mu: f64,
    },
    Mmc {
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        c: u32,
    },
    /// Open network; routing rows separated by `;`, entries by `,`.
    Jackson {
        #[arg(long, value_delimiter = ',', required = true)]
        mu: Vec<f64>,
        /// Servers per node; defaults to one each.
        #[arg(long, value_delimiter = ',')]
        c: Vec<u32>,
        #[arg(long, value_delimiter = ',', required = true)]
        external: Vec<f64>,
        #[arg(long)]
        routing: Option<String>,
    },
    Placement(PlacementArgs),
    /// Fronthaul delay at which central placement stops paying off.
    Crossover {
        #[command(flatten)]
        spec: PlacementArgs,
        /// Also tabulate both policies over `[0, --to]` into this CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        to: Option<f64>,
        #[arg(long, default_value_t = 9)]
        points: usize,
    },
}

#[derive(Args)]
struct PlacementArgs {
    #[arg(long, default_value_t = 1000.0)]
    site_rate: f64,
    #[arg(long, default_value_t = 4)]
    sites: u32,
    #[arg(long, default_value_t = 2000.0)]
    local_mu: f64,
    #[arg(long, default_value_t = 1)]
    local_c: u32,
    #[arg(long, default_value_t = 10000.0)]
    central_mu: f64,
    #[arg(long, default_value_t = 4)]
    central_c: u32,
    /// One-way fronthaul delay in seconds.
    #[arg(long, default_value_t = 0.0)]
    fronthaul: f64,
}

impl PlacementArgs {
    fn spec(&self) -> PlacementSpec {
        PlacementSpec {
            site_rate_per_s: self.site_rate,
            n_sites: self.sites,
            local: ServerSpec { mu_per_s: self.local_mu, c: self.local_c },
            central: ServerSpec { mu_per_s: self.central_mu, c: self.central_c },
            fronthaul_one_way_s: self.fronthaul,
        }
    }
}

enum Failure {
    Config(Vec<String>),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.findings)
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(c) => c.into(),
            RunError::Runtime(m) => Failure::Runtime(m),
        }
    }
}

impl From<AnalyticError> for Failure {
    fn from(e: AnalyticError) -> Self {
        Failure::Config(vec![e.to_string()])
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Analyze { what } => cmd_analyze(what),
        Cmd::Sweep(a) => cmd_sweep(a),
        Cmd::Validate { config } => RunConfig::load(&config)
            .map(|_| println!("ok {}", config.display()))
            .map_err(Failure::from),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(findings)) => {
            for f in findings {
                eprintln!("error: {f}");
            }
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "run".into(), |s| s.to_string_lossy().into_owned())
}

fn cmd_run(a: RunArgs) -> Result<(), Failure> {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(d) = a.duration {
        cfg.duration_s = d;
    }
    if let Some(p) = &a.policy {
        cfg.policy.placement = p.parse::<PolicyName>()?;
    }
    if let Some(f) = &a.format {
        cfg.format = parse_format(f)?;
    }
    let dir = a
        .output
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| a.output_root.join(stem(&a.config)));
    for f in runner::run_to_dir(&cfg, &dir)? {
        println!("{}", f.display());
    }
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<(), Failure> {
    let base = RunConfig::load(&a.config)?;
    if a.points == 0 {
        return Err(ConfigError::one("--points must be at least 1").into());
    }
    let policies = a
        .policies
        .iter()
        .map(|p| p.parse::<PolicyName>())
        .collect::<Result<Vec<_>, _>>()?;
    let spec = SweepSpec {
        parameter: a.param.clone(),
        values: linspace(a.from, a.to, a.points),
        policies,
    };
    let exec = if a.sequential { Execution::Sequential } else { Execution::default() };
    let rows = runner::sweep(&base, &spec, exec)?;
    let out = a.out.unwrap_or_else(|| a.output_root.join(format!("{}-sweep.csv", stem(&a.config))));
    runner::write_sweep(&out, &a.param, &rows)?;
    println!("{} rows -> {}", rows.len(), out.display());
    Ok(())
}

fn row(key: &str, v: f64) {
    println!("{key}\t{v:?}");
}

fn parse_routing(s: &str, n: usize) -> Result<Vec<Vec<f64>>, ConfigError> {
    let rows: Vec<Vec<f64>> = s
        .split(';')
        .map(|r| r.split(',').map(|x| x.trim().parse::<f64>()).collect::<Result<_, _>>())
        .collect::<Result<_, _>>()
        .map_err(|e| ConfigError::one(format!("routing: {e}")))?;
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(ConfigError::one(format!("routing must be {n}x{n}")));
    }
    Ok(rows)
}

/// Root of `central(d) - local` by bisection; the gap is increasing in `d`.
fn bisect_crossover(spec: &PlacementSpec) -> Result<Option<f64>, AnalyticError> {
    let local = placement_latency(spec, PlacementMode::AllLocal)?;
    let gap = |d: f64| placement_latency(&spec.with_fronthaul(d), PlacementMode::AllCentral).map(|c| c - local);
    if gap(0.0)? >= 0.0 {
        return Ok(None);
    }
    let (mut lo, mut hi) = (0.0, 1e-3);
    while gap(hi)? < 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if gap(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

fn cmd_analyze(what: Analyze) -> Result<(), Failure> {
    match what {
        Analyze::Mm1 { lambda, mu } => row("w_s", mm1_sojourn(lambda, mu)?),
        Analyze::Mmc { lambda, mu, c } => {
            let m = mmc_metrics(lambda, mu, c)?;
            row("erlang_c", m.erlang_c);
            row("wq_s", m.wq_s);
            row("w_s", m.w_s);
            row("rho", m.rho);
        }
        Analyze::Jackson { mu, c, external, routing } => {
            let n = mu.len();
            let c = if c.is_empty() { vec![1; n] } else { c };
            if c.len() != n || external.len() != n {
                return Err(ConfigError::one(format!("--mu, --c and --external need {n} entries each")).into());
            }
            let routing = match routing {
                Some(r) => parse_routing(&r, n)?,
                None => vec![vec![0.0; n]; n],
            };
            let nodes = mu.iter().zip(&c).map(|(&mu_per_s, &c)| ServerSpec { mu_per_s, c }).collect();
            let r = jackson_solve(&JacksonNetworkSpec { nodes, external_rates: external, routing })?;
            println!("node\tlambda_eff\trho\tw_s");
            for (i, n) in r.nodes.iter().enumerate() {
                println!("{i}\t{:?}\t{:?}\t{:?}", n.lambda_eff, n.rho, n.w_s);
            }
            row("mean_sojourn_s", r.mean_sojourn_s);
        }
        Analyze::Placement(p) => {
            let s = p.spec();
            row("local_s", placement_latency(&s, PlacementMode::AllLocal)?);
            row("central_s", placement_latency(&s, PlacementMode::AllCentral)?);
        }
        Analyze::Crossover { spec, csv, to, points } => {
            let s = spec.spec().with_fronthaul(0.0);
            let Some(d) = bisect_crossover(&s)? else {
                println!("d_star_s\tnone");
                return Ok(());
            };
            row("d_star_s", d);
            if let Some(path) = csv {
                let header: Vec<String> = ["fronthaul_s", "local_s", "central_s"].map(String::from).to_vec();
                let mut body = Vec::new();
                for x in linspace(0.0, to.unwrap_or(2.0 * d), points) {
                    let at = s.with_fronthaul(x);
                    let l = placement_latency(&at, PlacementMode::AllLocal)?;
                    let c = placement_latency(&at, PlacementMode::AllCentral)?;
                    body.push(vec![x.to_string(), l.to_string(), c.to_string()]);
                }
                write_csv(&path, &header, &body).map_err(|e| Failure::Runtime(e.to_string()))?;
            }
        }
    }
    Ok(())
}
