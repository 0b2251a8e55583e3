//! Drives the `hrc` binary. Broker-backed tests run only when
//! `ARTHUR_BROKER` is set.

use serde_json::Value;
use std::path::{Path, PathBuf};
use std::io::{BufRead, BufReader};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

fn hrc(args: &[&str]) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hrc"));
    c.args(args).env_remove("ARTHUR_BROKER").env_remove("RUST_LOG");
    c
}

fn run(args: &[&str]) -> Output {
    hrc(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn corpus(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../services/data/corpus").join(rel)
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn up_in_process_reports_five_healthy_services() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("up.json");
    let t0 = Instant::now();
    let o = run(&["up", "--in-process", "--report", report.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
    assert!(t0.elapsed() < Duration::from_secs(5));
    let r = read_json(&report);
    assert_eq!(r["healthy"], true);
    let services = r["services"].as_object().unwrap();
    assert_eq!(services.len(), 5);
    assert!(services.values().all(|v| v["state"] == "ok"));
    assert!(r["elapsed_ms"].as_u64().unwrap() < 5_000);
}

#[test]
fn up_without_broker_is_a_transport_error() {
    let o = run(&["up"]);
    assert_eq!(code(&o), 2);
    let err = text(&o.stderr);
    assert!(err.contains("transport unavailable"), "{err}");
    assert!(err.contains("ARTHUR_BROKER"), "{err}");
}

#[test]
fn unreachable_broker_names_the_variable() {
    let o = hrc(&["down"]).env("ARTHUR_BROKER", "mqtt://127.0.0.1:1").output().unwrap();
    assert_eq!(code(&o), 2);
    assert!(text(&o.stderr).contains("ARTHUR_BROKER"));
}

#[test]
fn down_in_process_is_idempotent() {
    for _ in 0..2 {
        assert_eq!(code(&run(&["down", "--in-process"])), 0);
    }
}

#[test]
fn scenarios_pass_and_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    for n in ["1", "2", "3"] {
        let report = dir.path().join(format!("s{n}.json"));
        let o = run(&["scenario", n, "--report", report.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "scenario {n}: {}", text(&o.stdout));
        assert!(text(&o.stdout).contains("PASS golden trace"));
        let r = read_json(&report);
        assert_eq!(r["scenario"], n.parse::<u64>().unwrap());
        assert!(r["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));
    }
}

#[test]
fn scenario_output_is_reproducible_for_a_seed() {
    let a = run(&["scenario", "2", "--seed", "11"]);
    let b = run(&["scenario", "2", "--seed", "11"]);
    assert_eq!(code(&a), 0, "{}", text(&a.stdout));
    let strip = |o: &Output| text(&o.stdout).lines().filter(|l| !l.contains("wall")).collect::<Vec<_>>().join("\n");
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn unknown_scenario_is_a_usage_error() {
    assert_eq!(code(&run(&["scenario", "4"])), 2);
}

#[test]
fn invalid_phase_is_an_error() {
    let o = run(&["phase", "assembly", "--in-process"]);
    assert_eq!(code(&o), 2);
    assert!(text(&o.stderr).contains("unknown phase"));
}

#[test]
fn phase_in_process_updates_the_store() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("hrc.toml");
    std::fs::write(&cfg, "workstation = \"cell\"\nstore = \"ws.json\"\n").unwrap();
    let c = cfg.to_str().unwrap();
    for p in ["refinement", "operation"] {
        let o = run(&["phase", p, "--in-process", "--config", c]);
        assert_eq!(code(&o), 0, "{}", text(&o.stderr));
        assert_eq!(read_json(&dir.path().join("ws.json"))["phase"], p);
    }
}

#[test]
fn phase_in_process_without_store_fails() {
    assert_eq!(code(&run(&["phase", "refinement", "--in-process"])), 2);
}

#[test]
fn ingest_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out.json");
    let o = out.to_str().unwrap();
    let ok = run(&["ingest", corpus("valid/mold-assembly.xml").to_str().unwrap(), "-o", o]);
    assert_eq!(code(&ok), 0, "{}", text(&ok.stderr));
    assert_eq!(std::fs::read_to_string(&out).unwrap(), std::fs::read_to_string(corpus("valid/mold-assembly.json")).unwrap());
    assert_eq!(code(&run(&["ingest", corpus("malformed/cycle.xml").to_str().unwrap(), "-o", o])), 1);
    assert_eq!(code(&run(&["ingest", corpus("malformed/unclosed.xml").to_str().unwrap(), "-o", o])), 2);
    assert_eq!(code(&run(&["ingest", "/nonexistent.xml", "-o", o])), 2);
}

#[test]
fn broker_up_down_cycle() {
    let Ok(broker) = std::env::var("ARTHUR_BROKER") else {
        eprintln!("ARTHUR_BROKER not set; skipping");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("hrc.toml");
    let ws = format!("cli-{}", std::process::id());
    std::fs::write(&cfg, format!("workstation = \"{ws}\"\n")).unwrap();
    let c = cfg.to_str().unwrap();
    let with_broker = |args: &[&str]| {
        let mut all = args.to_vec();
        all.extend(["--config", c, "--broker", &broker]);
        run(&all)
    };
    let mut up = hrc(&["up", "--for", "30", "--config", c, "--broker", &broker]).stdout(Stdio::piped()).spawn().unwrap();
    let mut lines = BufReader::new(up.stdout.take().unwrap()).lines();
    assert!(lines.any(|l| l.unwrap().starts_with("running")), "up never became healthy");
    let again = with_broker(&["up"]);
    assert_eq!(code(&again), 0);
    assert!(text(&again.stdout).contains("already running"));
    assert_eq!(code(&with_broker(&["phase", "refinement"])), 0);
    assert_eq!(code(&with_broker(&["phase", "bogus"])), 2);
    assert_eq!(code(&with_broker(&["down"])), 0);
    assert!(up.wait().unwrap().success());
    assert_eq!(code(&with_broker(&["down"])), 0);
}
