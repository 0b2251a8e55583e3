//! Runs the service set on threads against any transport, waits for their
//! heartbeats and stops them on request.

use crate::assembly::AssemblyService;
use crate::authoring::{AuthoringConfig, AuthoringService};
use crate::engine::EngineService;
use crate::preview::PreviewService;
use crate::robot::kinematics::RobotModel;
use crate::robot::{self, AdapterConfig, RobotAdapter};
use crate::runtime::{spawn, RuntimeError};
use crate::service::Service;
use hrc_core::bus::{BusError, Publisher, Topic, Transport};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

/// Wall-clock tick of every service thread.
pub const TICK: Duration = Duration::from_millis(10);

#[derive(Debug, Clone)]
pub struct RobotSpec {
    pub agent: String,
    pub model: RobotModel,
    pub adapter: AdapterConfig,
}

#[derive(Debug, Clone)]
pub struct SupervisorConfig {
    pub ws_id: String,
    pub ws_name: String,
    pub store: Option<PathBuf>,
    pub preview_dir: Option<PathBuf>,
    pub authoring: AuthoringConfig,
    pub robots: Vec<RobotSpec>,
}

impl SupervisorConfig {
    /// One UR5e named `robot-1`, nothing persisted.
    pub fn new(ws_id: &str, ws_name: &str) -> Self {
        SupervisorConfig {
            ws_id: ws_id.into(),
            ws_name: ws_name.into(),
            store: None,
            preview_dir: None,
            authoring: AuthoringConfig::default(),
            robots: vec![RobotSpec { agent: "robot-1".into(), model: RobotModel::ur5e(), adapter: AdapterConfig::default() }],
        }
    }

    /// Heartbeat names of every service this configuration starts.
    pub fn service_names(&self) -> Vec<String> {
        let mut v: Vec<String> = vec![
            crate::authoring::SERVICE.into(),
            EngineService::NAME.into(),
            crate::assembly::SERVICE.into(),
            crate::preview::SERVICE.into(),
        ];
        v.extend(self.robots.iter().map(|r| format!("{}-{}", robot::SERVICE, r.agent)));
        v
    }
}

type Joiner = Box<dyn FnOnce() -> bool + Send>;

pub struct Supervisor {
    ws_id: String,
    names: Vec<String>,
    stop: Arc<AtomicBool>,
    joiners: Vec<(String, Joiner)>,
}

fn launch<S: Service + Send + 'static>(
    svc: S,
    name: &str,
    transport: &Arc<dyn Transport>,
    stop: &Arc<AtomicBool>,
    out: &mut Vec<(String, Joiner)>,
) -> Result<(), BusError> {
    let h = spawn(svc, transport.clone(), stop.clone(), TICK)?;
    out.push((name.to_string(), Box::new(move || h.join().is_ok())));
    Ok(())
}

impl Supervisor {
    pub fn start(cfg: &SupervisorConfig, transport: Arc<dyn Transport>) -> Result<Supervisor, RuntimeError> {
        let stop = Arc::new(AtomicBool::new(false));
        let mut joiners = Vec::new();
        let t = &transport;
        let mut acfg = cfg.authoring.clone();
        acfg.store = cfg.store.clone();
        let authoring = AuthoringService::open(&cfg.ws_id, &cfg.ws_name, Publisher::new(t.clone(), "authoring"), acfg)?;
        // Services subscribe before the authoring thread starts so that
        // no configuration published at startup is missed.
        let engine = EngineService::new(&cfg.ws_id, Publisher::new(t.clone(), "condition-engine"));
        let sidecar = cfg.store.as_ref().map(|p| p.with_extension("tasks.json"));
        let assembly = AssemblyService::new(&cfg.ws_id, Publisher::new(t.clone(), "assembly"), sidecar);
        let preview = PreviewService::new(&cfg.ws_id, Publisher::new(t.clone(), "preview"), cfg.preview_dir.clone())?;
        launch(engine, EngineService::NAME, t, &stop, &mut joiners)?;
        launch(assembly, crate::assembly::SERVICE, t, &stop, &mut joiners)?;
        launch(preview, crate::preview::SERVICE, t, &stop, &mut joiners)?;
        for r in &cfg.robots {
            let p = Publisher::new(t.clone(), &format!("robot-{}", r.agent));
            let a = RobotAdapter::new(&cfg.ws_id, &r.agent, r.model.clone(), p, r.adapter.clone())?;
            launch(a, &format!("{}-{}", robot::SERVICE, r.agent), t, &stop, &mut joiners)?;
        }
        authoring.publish_all();
        launch(authoring, crate::authoring::SERVICE, t, &stop, &mut joiners)?;
        Ok(Supervisor { ws_id: cfg.ws_id.clone(), names: cfg.service_names(), stop, joiners })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn ws_id(&self) -> &str {
        &self.ws_id
    }

    /// Signals every thread and waits for it; returns the services whose
    /// thread panicked.
    pub fn stop(self) -> Vec<String> {
        self.stop.store(true, Ordering::SeqCst);
        self.joiners.into_iter().filter_map(|(n, j)| (!j()).then_some(n)).collect()
    }
}

/// Latest heartbeat per service name.
pub type Health = BTreeMap<String, Value>;

/// Collects heartbeats until every name in `names` reports `ok` or the
/// timeout passes. Missing or unhealthy names are the failures.
pub fn wait_healthy(transport: &dyn Transport, ws_id: &str, names: &[String], timeout: Duration) -> Result<Health, BusError> {
    let sub = transport.subscribe(&format!("arthur/{ws_id}/service/+/status"))?;
    let deadline = Instant::now() + timeout;
    let mut seen = Health::new();
    let healthy = |seen: &Health| names.iter().all(|n| seen.get(n).is_some_and(|v| v["state"] == "ok"));
    while !healthy(&seen) {
        let left = deadline.saturating_duration_since(Instant::now());
        if left.is_zero() {
            break;
        }
        if let Some(e) = sub.recv_timeout(left.min(Duration::from_millis(50)))? {
            if let Ok(Topic::ServiceStatus { name, .. }) = Topic::parse(&e.topic) {
                seen.insert(name, e.payload);
            }
        }
    }
    Ok(seen)
}

/// Whether every name is alive: two `ok` heartbeats with distinct sequence
/// numbers inside `window`. Retained heartbeats of a dead service show up
/// once and do not count.
pub fn probe_running(transport: &dyn Transport, ws_id: &str, names: &[String], window: Duration) -> Result<bool, BusError> {
    let sub = transport.subscribe(&format!("arthur/{ws_id}/service/+/status"))?;
    let deadline = Instant::now() + window;
    let mut seqs: BTreeMap<String, Vec<u64>> = BTreeMap::new();
    let alive = |s: &BTreeMap<String, Vec<u64>>| names.iter().all(|n| s.get(n).is_some_and(|v| v.len() >= 2));
    while !alive(&seqs) {
        let left = deadline.saturating_duration_since(Instant::now());
        if left.is_zero() {
            return Ok(false);
        }
        if let Some(e) = sub.recv_timeout(left.min(Duration::from_millis(50)))? {
            if let Ok(Topic::ServiceStatus { name, .. }) = Topic::parse(&e.topic) {
                let v = seqs.entry(name).or_default();
                if e.payload["state"] == "ok" && !v.contains(&e.seq) {
                    v.push(e.seq);
                } else if e.payload["state"] != "ok" {
                    v.clear();
                }
            }
        }
    }
    Ok(true)
}

/// Names from `names` without an `ok` heartbeat in `health`.
pub fn unhealthy(names: &[String], health: &Health) -> Vec<String> {
    names.iter().filter(|n| !health.get(*n).is_some_and(|v| v["state"] == "ok")).cloned().collect()
}

pub fn control_topic(ws_id: &str) -> Topic {
    Topic::Control { ws: ws_id.into() }
}

pub fn shutdown_message() -> Value {
    json!({"op": "shutdown"})
}

/// Blocks until a shutdown control message arrives, `limit` passes or the
/// subscription fails. Returns whether a shutdown was requested.
pub fn await_shutdown(transport: &dyn Transport, ws_id: &str, limit: Option<Duration>) -> Result<bool, BusError> {
    let sub = transport.subscribe(&control_topic(ws_id).to_string())?;
    let deadline = limit.map(|l| Instant::now() + l);
    loop {
        let wait = match deadline {
            Some(d) => {
                let left = d.saturating_duration_since(Instant::now());
                if left.is_zero() {
                    return Ok(false);
                }
                left.min(Duration::from_millis(200))
            }
            None => Duration::from_millis(200),
        };
        if let Some(e) = sub.recv_timeout(wait)? {
            if e.payload.get("op").and_then(Value::as_str) == Some("shutdown") {
                return Ok(true);
            }
        }
    }
}

/// Marks each service as stopped so that late readers of the retained
/// heartbeats do not see it as alive.
pub fn publish_stopped(transport: Arc<dyn Transport>, ws_id: &str, names: &[String]) {
    let p = Publisher::new(transport, "supervisor");
    for n in names {
        let topic = Topic::ServiceStatus { ws: ws_id.into(), name: n.clone() };
        let _ = p.publish_to(&topic, json!({"service": n, "state": "stopped", "t_ms": 0, "detail": null}), true);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use hrc_core::bus::InProcessBus;

    #[test]
    fn five_services_report_healthy_and_stop() {
        let bus: Arc<dyn Transport> = Arc::new(InProcessBus::new());
        let cfg = SupervisorConfig::new("ws", "test");
        assert_eq!(cfg.service_names().len(), 5);
        let sup = Supervisor::start(&cfg, bus.clone()).unwrap();
        let health = wait_healthy(bus.as_ref(), "ws", sup.names(), Duration::from_secs(5)).unwrap();
        assert!(unhealthy(sup.names(), &health).is_empty(), "{health:?}");
        assert!(probe_running(bus.as_ref(), "ws", sup.names(), Duration::from_secs(5)).unwrap());
        let names = sup.names().to_vec();
        assert!(sup.stop().is_empty());
        publish_stopped(bus.clone(), "ws", &names);
        assert!(!probe_running(bus.as_ref(), "ws", &names, Duration::from_millis(300)).unwrap());
    }

    #[test]
    fn shutdown_message_is_recognized() {
        let bus: Arc<dyn Transport> = Arc::new(InProcessBus::new());
        let b2 = bus.clone();
        let t = std::thread::spawn(move || await_shutdown(b2.as_ref(), "ws", Some(Duration::from_secs(5))).unwrap());
        std::thread::sleep(Duration::from_millis(100));
        Publisher::new(bus, "cli").publish_to(&control_topic("ws"), shutdown_message(), false).unwrap();
        assert!(t.join().unwrap());
    }
}
