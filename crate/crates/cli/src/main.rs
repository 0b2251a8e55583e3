//! `hrc`: start and stop the service set, switch phases, replay scenarios
//! and convert process XML.
//!
//! Exit codes: 0 success, 1 assertion or validation failure, 2 startup,
//! usage or parse failure.

mod config;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use config::Config;
use hrc_core::bus::{connect_external, InProcessBus, Publisher, RpcDir, Transport, BROKER_ENV};
use hrc_core::Phase;
use hrc_services::authoring::{self, AuthoringService};
use hrc_services::service::{rpc_topic, RpcRequest, RpcResponse};
use hrc_services::supervisor::{self, Supervisor};
use hrc_services::{ingest, scenario};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

const HEALTH_TIMEOUT: Duration = Duration::from_secs(5);
const PROBE_WINDOW: Duration = Duration::from_millis(2_500);
const RPC_TIMEOUT: Duration = Duration::from_secs(3);

#[derive(Parser, Debug)]
#[command(name = "hrc", version, about = "Authoring and runtime services for AR human-robot collaboration")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Broker URL, e.g. mqtt://localhost:1883.
    #[arg(long, global = true, env = BROKER_ENV)]
    broker: Option<String>,
    /// Use an in-process bus; no broker needed.
    #[arg(long, global = true)]
    in_process: bool,
    /// Seed for scenario runs.
    #[arg(long, global = true, default_value_t = scenario::DEFAULT_SEED)]
    seed: u64,
    /// Write a JSON report of the command's outcome here.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Start the services and wait until all of them report healthy.
    Up {
        /// Keep running this many seconds. Without it a broker-backed run
        /// lasts until `hrc down` and an in-process run stops after the
        /// health check.
        #[arg(long = "for", value_name = "SECS")]
        run_for: Option<f64>,
    },
    /// Ask running services to shut down.
    Down,
    /// Replay a scenario against its golden trace.
    Scenario {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=3))]
        n: u8,
    },
    /// Switch the workstation phase.
    Phase { name: String },
    /// Convert a process XML file to process JSON.
    Ingest {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Result<u8> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    match &cli.cmd {
        Cmd::Up { run_for } => up(cli, &cfg, run_for.map(Duration::from_secs_f64)),
        Cmd::Down => down(cli, &cfg),
        Cmd::Scenario { n } => run_scenario(cli, *n),
        Cmd::Phase { name } => phase(cli, &cfg, name),
        Cmd::Ingest { input, output } => run_ingest(cli, input, output),
    }
}

fn connect(cli: &Cli, cfg: &Config, client: &str) -> Result<Arc<dyn Transport>> {
    let broker = cli.broker.as_deref().or(cfg.broker.as_deref());
    let id = format!("hrc-{client}-{}", std::process::id());
    Ok(connect_external(broker, &id)?)
}

fn write_report(cli: &Cli, v: &Value) -> Result<()> {
    if let Some(p) = &cli.report {
        let text = serde_json::to_string_pretty(v).expect("report serializes");
        std::fs::write(p, text + "\n").with_context(|| format!("writing report {}", p.display()))?;
    }
    Ok(())
}

fn up(cli: &Cli, cfg: &Config, run_for: Option<Duration>) -> Result<u8> {
    let scfg = cfg.supervisor()?;
    let names = scfg.service_names();
    let (transport, mode): (Arc<dyn Transport>, &str) = if cli.in_process {
        (Arc::new(InProcessBus::new()), "in-process")
    } else {
        let t = connect(cli, cfg, "up")?;
        if supervisor::probe_running(t.as_ref(), &scfg.ws_id, &names, PROBE_WINDOW)? {
            println!("services already running on workstation {}", scfg.ws_id);
            write_report(cli, &json!({"workstation": scfg.ws_id, "transport": "broker", "healthy": true, "started": false}))?;
            return Ok(0);
        }
        (t, "broker")
    };
    let started = Instant::now();
    // Subscribe before starting so no heartbeat is missed.
    let waiter = {
        let t = transport.clone();
        let (ws, n) = (scfg.ws_id.clone(), names.clone());
        std::thread::spawn(move || supervisor::wait_healthy(t.as_ref(), &ws, &n, HEALTH_TIMEOUT))
    };
    std::thread::sleep(Duration::from_millis(20));
    let sup = Supervisor::start(&scfg, transport.clone()).context("starting services")?;
    let health = waiter.join().map_err(|_| anyhow!("health watcher panicked"))??;
    let elapsed = started.elapsed();
    let bad = supervisor::unhealthy(&names, &health);
    for n in &names {
        let state = health.get(n).and_then(|v| v["state"].as_str()).unwrap_or("missing");
        println!("{n:<24} {state}");
    }
    let report = json!({
        "workstation": scfg.ws_id,
        "transport": mode,
        "started": true,
        "healthy": bad.is_empty(),
        "elapsed_ms": elapsed.as_millis() as u64,
        "services": names.iter().map(|n| (n.clone(), health.get(n).cloned().unwrap_or(Value::Null))).collect::<serde_json::Map<_, _>>(),
    });
    write_report(cli, &report)?;
    if !bad.is_empty() {
        sup.stop();
        bail!("not healthy within {}s: {}", HEALTH_TIMEOUT.as_secs(), bad.join(", "));
    }
    println!("{} services healthy in {} ms ({mode})", names.len(), elapsed.as_millis());
    if cli.in_process {
        if let Some(d) = run_for {
            std::thread::sleep(d);
        }
    } else {
        println!("running; stop with `hrc down`");
        supervisor::await_shutdown(transport.as_ref(), &scfg.ws_id, run_for)?;
    }
    let panicked = sup.stop();
    supervisor::publish_stopped(transport, &scfg.ws_id, &names);
    if !panicked.is_empty() {
        eprintln!("services exited abnormally: {}", panicked.join(", "));
        return Ok(1);
    }
    println!("stopped");
    Ok(0)
}

fn down(cli: &Cli, cfg: &Config) -> Result<u8> {
    if cli.in_process {
        println!("nothing to stop: in-process services live inside `hrc up`");
        return Ok(0);
    }
    let t = connect(cli, cfg, "down")?;
    Publisher::new(t, "hrc-down").publish_to(&supervisor::control_topic(&cfg.workstation), supervisor::shutdown_message(), false)?;
    println!("shutdown requested for workstation {}", cfg.workstation);
    write_report(cli, &json!({"workstation": cfg.workstation, "requested": true}))?;
    Ok(0)
}

fn run_scenario(cli: &Cli, n: u8) -> Result<u8> {
    let report = scenario::run(n, cli.seed)?;
    print!("{}", report.render());
    write_report(cli, &serde_json::to_value(&report).expect("report serializes"))?;
    Ok(if report.passed() { 0 } else { 1 })
}

fn phase(cli: &Cli, cfg: &Config, name: &str) -> Result<u8> {
    let Some(phase) = Phase::parse(name) else {
        bail!("unknown phase '{name}': expected configuration, refinement or operation");
    };
    let revision = if cli.in_process {
        let Some(store) = &cfg.store else {
            bail!("--in-process phase changes need `store` in the configuration");
        };
        let bus: Arc<dyn Transport> = Arc::new(InProcessBus::new());
        let acfg = authoring::AuthoringConfig { store: Some(store.clone()), ..Default::default() };
        let mut svc = AuthoringService::open(&cfg.workstation, &cfg.name, Publisher::new(bus, "hrc-phase"), acfg)?;
        svc.set_phase(phase)?
    } else {
        let t = connect(cli, cfg, "phase")?;
        let result = rpc(t, &cfg.workstation, "set_phase", json!({"phase": phase.as_str()}))?;
        result["revision"].as_u64().unwrap_or_default()
    };
    println!("phase {} (revision {revision})", phase.as_str());
    write_report(cli, &json!({"workstation": cfg.workstation, "phase": phase.as_str(), "revision": revision}))?;
    Ok(0)
}

fn rpc(t: Arc<dyn Transport>, ws: &str, op: &str, params: Value) -> Result<Value> {
    let resp_topic = rpc_topic(ws, authoring::SERVICE, RpcDir::Response);
    let sub = t.subscribe(&resp_topic.to_string())?;
    let id = format!("hrc-{}-{op}", std::process::id());
    let req = RpcRequest { request_id: id.clone(), op: op.into(), params };
    Publisher::new(t, "hrc-cli").publish_to(&rpc_topic(ws, authoring::SERVICE, RpcDir::Request), json!(req), false)?;
    let deadline = Instant::now() + RPC_TIMEOUT;
    loop {
        let left = deadline.saturating_duration_since(Instant::now());
        if left.is_zero() {
            bail!("no response from {} within {}s; is `hrc up` running?", authoring::SERVICE, RPC_TIMEOUT.as_secs());
        }
        if let Some(e) = sub.recv_timeout(left)? {
            let Ok(r) = serde_json::from_value::<RpcResponse>(e.payload) else { continue };
            if r.request_id != id {
                continue;
            }
            return match r.ok {
                true => Ok(r.result),
                false => Err(anyhow!("{op} rejected: {}", r.error.unwrap_or_default())),
            };
        }
    }
}

fn run_ingest(cli: &Cli, input: &Path, output: &Path) -> Result<u8> {
    let xml = std::fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    match ingest::convert(&xml) {
        Ok(doc) => {
            std::fs::write(output, doc.to_canonical_json()).with_context(|| format!("writing {}", output.display()))?;
            println!("{} -> {} ({} tasks)", input.display(), output.display(), doc.bop.tasks.len());
            write_report(cli, &json!({"input": input, "output": output, "ok": true}))?;
            Ok(0)
        }
        Err(e) => {
            eprintln!("{}: {e}", input.display());
            write_report(cli, &json!({"input": input, "ok": false, "error": e.to_string(), "exit": e.exit_code()}))?;
            Ok(e.exit_code() as u8)
        }
    }
}
