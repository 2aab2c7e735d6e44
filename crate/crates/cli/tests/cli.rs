use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_concert-sim"));
    c.env_remove("CONCERT_SIM_OUTPUT");
    c
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn mm1_prints_sojourn() {
    let o = run(&["analyze", "mm1", "--lambda", "0.5", "--mu", "1"]);
    assert!(o.status.success());
    assert!(text(&o.stdout).contains("2.0"));
}

#[test]
fn unstable_queue_exits_2() {
    let o = run(&["analyze", "mm1", "--lambda", "2", "--mu", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("unstable"));
}

#[test]
fn crossover_matches_bisection_value() {
    let o = run(&["analyze", "crossover"]);
    assert!(o.status.success());
    let out = text(&o.stdout);
    let d: f64 = out.split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!((d - 0.00044998896612600685).abs() < 1e-12, "{out}");
}

#[test]
fn unknown_key_names_key_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let src = fs::read_to_string(config("hcn.toml")).unwrap().replacen("seed = 11", "seed = 11\nspeeed = 3", 1);
    let line = src.lines().position(|l| l.starts_with("speeed")).unwrap() + 1;
    let p = dir.path().join("bad.toml");
    fs::write(&p, src).unwrap();
    for sub in ["run", "validate"] {
        let o = bin().arg(sub).arg(&p).current_dir(dir.path()).output().unwrap();
        assert_eq!(o.status.code(), Some(2));
        let err = text(&o.stderr);
        assert!(err.contains("speeed") && err.contains(&format!("line {line}")), "{err}");
        assert_eq!(err.lines().count(), 1);
    }
}

#[test]
fn hcn_run_populates_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("hcn");
    let o = bin()
        .args(["run", "--duration", "5", "--output"])
        .arg(&out)
        .arg(config("hcn.toml"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", text(&o.stderr));
    for f in ["summary.csv", "samples.csv", "trace.log", "resources.json", "config-echo.json"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
}

#[test]
fn output_root_comes_from_env() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .env("CONCERT_SIM_OUTPUT", dir.path())
        .args(["run", "--duration", "0.2"])
        .arg(config("accident.toml"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert!(dir.path().join("accident").join("trace.log").is_file());
}

#[test]
fn reruns_give_identical_trace() {
    let dir = tempfile::tempdir().unwrap();
    let mut logs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = bin()
            .args(["run", "--seed", "5", "--duration", "3", "--output"])
            .arg(&out)
            .arg(config("gaming.toml"))
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", text(&o.stderr));
        logs.push(fs::read(out.join("trace.log")).unwrap());
    }
    assert!(!logs[0].is_empty());
    assert_eq!(logs[0], logs[1]);
}

#[test]
fn overrides_reach_the_echo() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["run", "--seed", "99", "--duration", "1", "--policy", "alwayslocal", "--format", "json", "--output"])
        .arg(dir.path())
        .arg(config("placement.toml"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", text(&o.stderr));
    let echo: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("config-echo.json")).unwrap()).unwrap();
    assert_eq!(echo["seed"], 99);
    assert_eq!(echo["duration_s"], 1.0);
    assert_eq!(echo["policy"]["placement"], "AlwaysLocal");
    assert!(dir.path().join("summary.json").is_file());

    let bad = run(&["run", "--policy", "sometimes", config("placement.toml").to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(2));
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn fronthaul_sweep_gives_18_monotone_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let o = bin()
        .args([
            "sweep",
            "--param",
            "topology.links[0].prop_delay_s",
            "--from",
            "0",
            "--to",
            "0.002",
            "--points",
            "9",
            "--policies",
            "AlwaysLocal,AlwaysCentral",
            "--out",
        ])
        .arg(&csv)
        .arg(config("placement.toml"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", text(&o.stderr));
    let rows = csv_rows(&csv);
    assert_eq!(rows.len(), 19);
    let col = |name: &str| rows[0].iter().position(|h| h == name).unwrap();
    let (policy, lat) = (col("policy"), col("latency_mean_s"));
    let central: Vec<f64> = rows[1..]
        .iter()
        .filter(|r| r[policy] == "AlwaysCentral")
        .map(|r| r[lat].parse().unwrap())
        .collect();
    assert_eq!(central.len(), 9);
    assert!(central.windows(2).all(|w| w[1] >= w[0]), "{central:?}");
}

#[test]
fn one_point_sweep_equals_run() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("one.csv");
    let param = "topology.links[0].prop_delay_s";
    let o = bin()
        .args(["sweep", "--param", param, "--from", "0.0005", "--to", "0.0005", "--points", "1", "--out"])
        .arg(&csv)
        .arg(config("placement.toml"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", text(&o.stderr));
    let rows = csv_rows(&csv);

    // the same point as a standalone run: patch the delay in a copy of the file
    let src = fs::read_to_string(config("placement.toml")).unwrap();
    let at = src.find("prop_delay_s = 0.0").unwrap();
    let patched = format!("{}prop_delay_s = 0.0005{}", &src[..at], &src[at + "prop_delay_s = 0.0".len()..]);
    let cfg = dir.path().join("placement.toml");
    fs::write(&cfg, patched).unwrap();
    let out = dir.path().join("run");
    let o = bin().args(["run", "--output"]).arg(&out).arg(&cfg).output().unwrap();
    assert!(o.status.success(), "{}", text(&o.stderr));
    let summary: Vec<Vec<String>> = csv_rows(&out.join("summary.csv"));
    let (header, values) = (&rows[0], &rows[1]);
    let mut compared = 0;
    for kv in &summary[1..] {
        if let Some(i) = header.iter().position(|h| *h == kv[0]) {
            assert_eq!(values[i], kv[1], "{}", kv[0]);
            compared += 1;
        }
    }
    assert!(compared > 10);
}

#[test]
fn unknown_sweep_parameter_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["sweep", "--param", "topology.nodes[0].typo", "--from", "0", "--to", "1", "--points", "2", "--out"])
        .arg(dir.path().join("x.csv"))
        .arg(config("placement.toml"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("typo"));
}

#[test]
fn missing_config_exits_2() {
    let o = run(&["validate", "/nonexistent/none.toml"]);
    assert_eq!(o.status.code(), Some(2));
}
