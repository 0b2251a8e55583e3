//! Drives services against a bus.
//!
//! [`Runtime`] is single-threaded with a virtual clock: every step ticks the
//! services in a fixed order and then delivers messages until the bus is
//! quiet, so runs are reproducible. [`spawn`] runs one service on its own
//! thread against wall-clock time.

use crate::assembly::AssemblyService;
use crate::authoring::{AuthoringConfig, AuthoringError, AuthoringService};
use crate::engine::EngineService;
use crate::preview::PreviewService;
use crate::robot::kinematics::RobotModel;
use crate::robot::{AdapterConfig, AdapterError, RobotAdapter};
use crate::scene::SceneClient;
use crate::service::Service;
use crate::store::StoreError;
use hrc_core::bus::{BusError, Dedup, Envelope, InProcessBus, Publisher, Subscription, Transport};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};
use thiserror::Error;

/// Virtual clock resolution.
pub const STEP_MS: u64 = 10;
/// Delivery rounds per step before the runtime gives up on quiescence.
pub const MAX_ROUNDS: usize = 1_000;

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Authoring(#[from] AuthoringError),
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error("bus did not settle after {0} delivery rounds")]
    NoQuiescence(usize),
}

/// A service with its subscription.
pub struct Node<S> {
    pub svc: S,
    sub: Subscription,
    dedup: Dedup,
}

impl<S: Service> Node<S> {
    pub fn new(svc: S, transport: &dyn Transport) -> Result<Self, BusError> {
        let sub = transport.subscribe(&svc.filter())?;
        Ok(Node { svc, sub, dedup: Dedup::default() })
    }

    /// Delivers everything queued; returns the number of envelopes taken.
    fn deliver(&mut self, now_ms: u64) -> Result<usize, BusError> {
        let envs = self.sub.drain()?;
        for e in &envs {
            if self.dedup.accept(e) {
                self.svc.on_message(e, now_ms);
            }
        }
        Ok(envs.len())
    }
}

#[derive(Debug, Clone, Default)]
pub struct RuntimeConfig {
    pub ws_id: String,
    pub ws_name: String,
    pub store: Option<PathBuf>,
    pub preview_dir: Option<PathBuf>,
    pub authoring: AuthoringConfig,
    /// Per-subscriber queue bound; 0 selects the bus default.
    pub queue: usize,
}

impl RuntimeConfig {
    pub fn new(ws_id: &str, ws_name: &str) -> Self {
        RuntimeConfig { ws_id: ws_id.into(), ws_name: ws_name.into(), ..Default::default() }
    }
}

pub struct Runtime {
    pub bus: Arc<InProcessBus>,
    ws_id: String,
    now_ms: u64,
    pub authoring: Node<AuthoringService>,
    pub engine: Node<EngineService>,
    pub assembly: Node<AssemblyService>,
    pub preview: Node<PreviewService>,
    pub robots: Vec<Node<RobotAdapter>>,
    pub scenes: Vec<Node<SceneClient>>,
    /// Additional services, ticked right after the robots.
    pub extras: Vec<Node<Box<dyn Service + Send>>>,
    observer: Subscription,
    /// Every envelope published on the workstation, with delivery time.
    pub log: Vec<(u64, Envelope)>,
}

impl Runtime {
    pub fn new(cfg: RuntimeConfig) -> Result<Self, RuntimeError> {
        let bus = Arc::new(if cfg.queue == 0 { InProcessBus::new() } else { InProcessBus::with_queue(cfg.queue) });
        let t: Arc<dyn Transport> = bus.clone();
        let observer = t.subscribe(&format!("arthur/{}/#", cfg.ws_id))?;
        let sidecar = cfg.store.as_ref().map(|p| p.with_extension("tasks.json"));
        let mut authoring_cfg = cfg.authoring.clone();
        authoring_cfg.store = cfg.store.clone();
        let authoring = AuthoringService::open(&cfg.ws_id, &cfg.ws_name, Publisher::new(t.clone(), "authoring"), authoring_cfg)?;
        let engine = EngineService::new(&cfg.ws_id, Publisher::new(t.clone(), "condition-engine"));
        let assembly = AssemblyService::new(&cfg.ws_id, Publisher::new(t.clone(), "assembly"), sidecar);
        let preview = PreviewService::new(&cfg.ws_id, Publisher::new(t.clone(), "preview"), cfg.preview_dir.clone())?;
        Ok(Runtime {
            ws_id: cfg.ws_id.clone(),
            now_ms: 0,
            authoring: Node::new(authoring, bus.as_ref())?,
            engine: Node::new(engine, bus.as_ref())?,
            assembly: Node::new(assembly, bus.as_ref())?,
            preview: Node::new(preview, bus.as_ref())?,
            robots: Vec::new(),
            scenes: Vec::new(),
            extras: Vec::new(),
            observer,
            log: Vec::new(),
            bus,
        })
    }

    pub fn ws_id(&self) -> &str {
        &self.ws_id
    }

    pub fn now_ms(&self) -> u64 {
        self.now_ms
    }

    fn transport(&self) -> Arc<dyn Transport> {
        self.bus.clone()
    }

    pub fn add_robot(&mut self, agent: &str, model: RobotModel, cfg: AdapterConfig) -> Result<usize, RuntimeError> {
        let p = Publisher::new(self.transport(), &format!("robot-{agent}"));
        let r = RobotAdapter::new(&self.ws_id, agent, model, p, cfg)?;
        self.robots.push(Node::new(r, self.bus.as_ref())?);
        self.pump()?;
        Ok(self.robots.len() - 1)
    }

    pub fn add_scene(&mut self, name: &str) -> Result<usize, RuntimeError> {
        let p = Publisher::new(self.transport(), &format!("scene-{name}"));
        let mut s = SceneClient::new(&self.ws_id, name, p);
        s.on_tick(self.now_ms);
        self.scenes.push(Node::new(s, self.bus.as_ref())?);
        self.pump()?;
        Ok(self.scenes.len() - 1)
    }

    pub fn add_service(&mut self, svc: Box<dyn Service + Send>) -> Result<(), RuntimeError> {
        self.extras.push(Node::new(svc, self.bus.as_ref())?);
        self.pump()
    }

    pub fn authoring(&mut self) -> &mut AuthoringService {
        self.authoring.svc.set_now(self.now_ms);
        &mut self.authoring.svc
    }

    pub fn scene(&mut self, i: usize) -> &mut SceneClient {
        &mut self.scenes[i].svc
    }

    pub fn robot(&self, agent: &str) -> Option<&RobotAdapter> {
        self.robots.iter().map(|n| &n.svc).find(|r| r.agent() == agent)
    }

    /// Delivers messages until no service has anything queued.
    pub fn pump(&mut self) -> Result<(), RuntimeError> {
        let now = self.now_ms;
        for _ in 0..MAX_ROUNDS {
            let mut n = 0;
            for r in &mut self.robots {
                n += r.deliver(now)?;
            }
            for x in &mut self.extras {
                n += x.deliver(now)?;
            }
            n += self.assembly.deliver(now)?;
            n += self.preview.deliver(now)?;
            n += self.authoring.deliver(now)?;
            n += self.engine.deliver(now)?;
            for s in &mut self.scenes {
                n += s.deliver(now)?;
            }
            for e in self.observer.drain()? {
                self.log.push((now, e));
            }
            if n == 0 {
                return Ok(());
            }
        }
        Err(RuntimeError::NoQuiescence(MAX_ROUNDS))
    }

    /// One clock step: tick every service in order, then settle.
    pub fn step(&mut self) -> Result<(), RuntimeError> {
        self.now_ms += STEP_MS;
        let now = self.now_ms;
        for r in &mut self.robots {
            r.svc.on_tick(now);
        }
        for x in &mut self.extras {
            x.svc.on_tick(now);
        }
        self.assembly.svc.on_tick(now);
        self.preview.svc.on_tick(now);
        self.authoring.svc.on_tick(now);
        self.pump()?;
        self.engine.svc.on_tick(now);
        self.pump()?;
        for s in &mut self.scenes {
            s.svc.on_tick(now);
        }
        self.pump()
    }

    /// Advances the clock by `ms`, rounded up to whole steps.
    pub fn advance(&mut self, ms: u64) -> Result<(), RuntimeError> {
        for _ in 0..ms.div_ceil(STEP_MS) {
            self.step()?;
        }
        Ok(())
    }

    /// Steps until `pred` holds or `limit_ms` elapses; returns whether it held.
    pub fn run_until(&mut self, limit_ms: u64, mut pred: impl FnMut(&Runtime) -> bool) -> Result<bool, RuntimeError> {
        let end = self.now_ms + limit_ms;
        while self.now_ms < end {
            if pred(self) {
                return Ok(true);
            }
            self.step()?;
        }
        Ok(pred(self))
    }
}

/// Runs a service on its own thread until `stop` is set, ticking every
/// `tick` of wall-clock time.
pub fn spawn<S>(mut svc: S, transport: Arc<dyn Transport>, stop: Arc<AtomicBool>, tick: Duration) -> Result<JoinHandle<S>, BusError>
where
    S: Service + Send + 'static,
{
    let sub = transport.subscribe(&svc.filter())?;
    let name = svc.name().to_string();
    std::thread::Builder::new()
        .name(name)
        .spawn(move || {
            let start = Instant::now();
            let mut dedup = Dedup::default();
            let mut next_tick = Duration::ZERO;
            while !stop.load(Ordering::SeqCst) {
                let now = start.elapsed();
                if now >= next_tick {
                    svc.on_tick(now.as_millis() as u64);
                    next_tick = now + tick;
                }
                match sub.recv_timeout(tick.min(next_tick.saturating_sub(start.elapsed())).max(Duration::from_millis(1))) {
                    Ok(Some(e)) => {
                        if dedup.accept(&e) {
                            svc.on_message(&e, start.elapsed().as_millis() as u64);
                        }
                    }
                    Ok(None) => {}
                    Err(e) => {
                        tracing::error!("{}: {e}", svc.name());
                        break;
                    }
                }
            }
            svc
        })
        .map_err(|e| BusError::unavailable("thread", e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use hrc_core::{Agent, Pose};
    use serde_json::json;

    #[test]
    fn scene_joins_late_and_converges() {
        let mut rt = Runtime::new(RuntimeConfig::new("ws", "test")).unwrap();
        rt.authoring().add_tracker("t1", "table", Pose::IDENTITY).unwrap();
        rt.authoring().add_agent(Agent::robot("robot-1", "UR5e", "ur5e", "t1-root")).unwrap();
        let props = json!({"text": "hello", "anchor": "t1-root"}).as_object().unwrap().clone().into_iter().collect();
        let id = rt.authoring().create_component("message", props).unwrap();
        rt.pump().unwrap();
        let a = rt.add_scene("a").unwrap();
        rt.advance(100).unwrap();
        let b = rt.add_scene("b").unwrap();
        rt.advance(100).unwrap();
        assert!(rt.scene(a).dump_scene().contains(&id));
        assert_eq!(rt.scene(a).dump_scene(), rt.scene(b).dump_scene());
        assert!(rt.log.iter().any(|(_, e)| e.topic.ends_with("/config/meta/workstation")));
    }
}
