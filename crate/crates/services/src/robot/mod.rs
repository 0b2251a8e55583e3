//! Robot adapter: streams state samples, polls the assembly service for tasks,
//! reports completion and executes robot actions.

pub mod kinematics;
pub mod sim;

use crate::assembly;
use crate::engine::ActionFiring;
use crate::service::{rpc_topic, Heartbeat, RequestIds, RpcRequest, RpcResponse, Service};
use crate::tracker::ProgressMsg;
use hrc_core::bus::{EventStream, Envelope, Publisher, RpcDir, Topic};
use kinematics::RobotModel;
use serde_json::{json, Value};
use sim::{RobotProgram, RobotSim, TickOutcome};
use std::collections::BTreeMap;
use thiserror::Error;
use tracing::{debug, warn};

pub const SERVICE: &str = "robot-sim";
pub const DEFAULT_RATE_HZ: u32 = 10;
pub const POLL_PERIOD_MS: u64 = 500;
pub const RPC_TIMEOUT_MS: u64 = 1_000;
pub const MAX_BACKOFF_MS: u64 = 8_000;

#[derive(Debug, Error, PartialEq)]
pub enum AdapterError {
    #[error("state rate {0} Hz outside [1, 125]")]
    Rate(u32),
}

#[derive(Debug, Clone)]
pub struct AdapterConfig {
    pub rate_hz: u32,
    /// Wait for an acknowledge before each task.
    pub require_ack: bool,
    pub program: RobotProgram,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        AdapterConfig { rate_hz: DEFAULT_RATE_HZ, require_ack: false, program: RobotProgram::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Pending {
    Poll,
    Done(String),
}

pub struct RobotAdapter {
    ws_id: String,
    sim: RobotSim,
    program: RobotProgram,
    publisher: Publisher,
    heartbeat: Heartbeat,
    period_ms: u64,
    next_sample_ms: u64,
    last_sample_ms: Option<u64>,
    next_poll_ms: u64,
    ids: RequestIds,
    pending: BTreeMap<String, (Pending, u64)>,
    backoff_ms: u64,
    all_done: bool,
    pub diagnostics: Vec<String>,
}

impl RobotAdapter {
    pub fn new(ws_id: &str, agent: &str, model: RobotModel, publisher: Publisher, cfg: AdapterConfig) -> Result<Self, AdapterError> {
        if !(1..=125).contains(&cfg.rate_hz) {
            return Err(AdapterError::Rate(cfg.rate_hz));
        }
        Ok(RobotAdapter {
            ws_id: ws_id.into(),
            sim: RobotSim::new(model, agent, cfg.require_ack),
            program: cfg.program,
            publisher,
            heartbeat: Heartbeat::new(ws_id, &format!("{SERVICE}-{agent}")),
            period_ms: (1000.0 / cfg.rate_hz as f64).round() as u64,
            next_sample_ms: 0,
            last_sample_ms: None,
            next_poll_ms: 0,
            ids: RequestIds::new(&format!("robot-{agent}")),
            pending: BTreeMap::new(),
            backoff_ms: RPC_TIMEOUT_MS,
            all_done: false,
            diagnostics: Vec::new(),
        })
    }

    pub fn agent(&self) -> &str {
        &self.sim.agent
    }

    pub fn sim(&self) -> &RobotSim {
        &self.sim
    }

    fn diag(&mut self, msg: String) {
        warn!("{msg}");
        self.diagnostics.push(msg);
    }

    fn request(&mut self, op: &str, params: Value, kind: Pending, now_ms: u64) {
        let id = self.ids.issue();
        let req = RpcRequest { request_id: id.clone(), op: op.into(), params };
        let _ = self.publisher.publish_to(&rpc_topic(&self.ws_id, assembly::SERVICE, RpcDir::Request), json!(req), false);
        self.pending.insert(id, (kind, now_ms));
    }

    fn poll(&mut self, now_ms: u64) {
        let agent = self.sim.agent.clone();
        self.request("next_task", json!({"agent": agent}), Pending::Poll, now_ms);
    }

    fn on_response(&mut self, resp: RpcResponse) {
        let Some((kind, _)) = self.pending.remove(&resp.request_id) else {
            return;
        };
        self.backoff_ms = RPC_TIMEOUT_MS;
        self.heartbeat.detail = None;
        if !resp.ok {
            self.diag(format!("assembly rejected request: {}", resp.error.unwrap_or_default()));
            return;
        }
        if kind == Pending::Poll {
            let task = resp.result.get("task").and_then(|t| t.get("id")).and_then(Value::as_str);
            match task {
                Some(t) if self.sim.wants_task() => {
                    let prog = self.program.for_task(&self.sim.model, t);
                    debug!(task = t, "starting task");
                    self.sim.start_task(t, prog);
                }
                _ => {}
            }
        }
    }

    fn handle_action(&mut self, f: &ActionFiring) {
        let mine = f.properties.get("agent").and_then(Value::as_str) == Some(self.sim.agent.as_str());
        match f.kind.as_str() {
            "global-play-pause" => self.sim.play_pause(),
            "robot-play-pause" if mine => self.sim.play_pause(),
            "robot-move-mode" if mine => {
                if !self.sim.move_mode() {
                    self.diag(format!("move mode ignored while stopped ({})", f.action));
                }
            }
            "robot-acknowledge" if mine
                && !self.sim.acknowledge() => {
                    self.diag(format!("acknowledge with no pending confirmation ({})", f.action));
                }
            _ => {}
        }
    }

    /// Direct control over `rpc/robot/<agent>/request`.
    pub fn handle_request(&mut self, op: &str, params: &Value, now_ms: u64) -> Result<Value, String> {
        Ok(match op {
            "state" => json!(self.sim.sample(self.last_sample_ms.unwrap_or(now_ms))),
            "play_pause" => {
                self.sim.play_pause();
                json!({"run_state": self.sim.mode().run_state()})
            }
            "move_mode" => json!({"accepted": self.sim.move_mode()}),
            "acknowledge" => json!({"released": self.sim.acknowledge()}),
            "poll_next_task" => {
                if self.sim.wants_task() {
                    self.poll(now_ms);
                    json!({"polling": true})
                } else {
                    json!({"polling": false, "task": Value::Null})
                }
            }
            "update_progress" => {
                let task = params.get("task").and_then(Value::as_str).ok_or("missing 'task'")?.to_string();
                let done = params.get("done").and_then(Value::as_bool).unwrap_or(false);
                let agent = self.sim.agent.clone();
                self.request("update_progress", json!({"task": task, "agent": agent, "done": done}), Pending::Done(task.clone()), now_ms);
                json!({"task": task})
            }
            other => return Err(format!("unknown op '{other}'")),
        })
    }

    fn retry_timeouts(&mut self, now_ms: u64) {
        let expired: Vec<(String, Pending)> = self
            .pending
            .iter()
            .filter(|(_, (_, sent))| now_ms >= sent + self.backoff_ms)
            .map(|(id, (k, _))| (id.clone(), k.clone()))
            .collect();
        if expired.is_empty() {
            return;
        }
        self.heartbeat.detail = Some("assembly service unreachable, retrying".into());
        self.backoff_ms = (self.backoff_ms * 2).min(MAX_BACKOFF_MS);
        for (id, kind) in expired {
            self.pending.remove(&id);
            match kind {
                Pending::Poll => {}
                Pending::Done(task) => {
                    let agent = self.sim.agent.clone();
                    self.request("update_progress", json!({"task": task, "agent": agent, "done": true}), Pending::Done(task.clone()), now_ms);
                }
            }
        }
    }
}

impl Service for RobotAdapter {
    fn name(&self) -> &str {
        SERVICE
    }

    fn filter(&self) -> String {
        format!("arthur/{}/#", self.ws_id)
    }

    fn on_message(&mut self, env: &Envelope, now_ms: u64) {
        match Topic::parse(&env.topic) {
            Ok(Topic::Rpc { service, dir: RpcDir::Response, .. }) if service == assembly::SERVICE => {
                if let Ok(r) = serde_json::from_value::<RpcResponse>(env.payload.clone()) {
                    self.on_response(r);
                }
            }
            Ok(Topic::Events { stream: EventStream::Action, .. }) => match serde_json::from_value(env.payload.clone()) {
                Ok(f) => self.handle_action(&f),
                Err(e) => self.diag(format!("malformed action event: {e}")),
            },
            Ok(Topic::Dispatch { agent, .. }) if agent == self.sim.agent => {
                if env.payload.get("action").and_then(Value::as_str) == Some("revoked") {
                    if let Some(t) = env.payload.get("task").and_then(Value::as_str) {
                        if self.sim.abort(t) {
                            debug!(task = t, "task revoked");
                        }
                    }
                }
            }
            Ok(Topic::TaskProgress { .. }) => {
                if let Ok(p) = serde_json::from_value::<ProgressMsg>(env.payload.clone()) {
                    self.all_done = p.total > 0 && p.completed == p.total;
                }
            }
            Ok(Topic::RobotRpc { agent, dir: RpcDir::Request, .. }) if agent == self.sim.agent => {
                let resp = match serde_json::from_value::<RpcRequest>(env.payload.clone()) {
                    Ok(req) => match self.handle_request(&req.op, &req.params, now_ms) {
                        Ok(v) => RpcResponse::ok(&req.request_id, v),
                        Err(e) => RpcResponse::err(&req.request_id, e),
                    },
                    Err(e) => RpcResponse::err("", format!("malformed request: {e}")),
                };
                let topic = Topic::RobotRpc { ws: self.ws_id.clone(), agent: self.sim.agent.clone(), dir: RpcDir::Response };
                let _ = self.publisher.publish_to(&topic, json!(resp), false);
            }
            _ => {}
        }
    }

    fn on_tick(&mut self, now_ms: u64) {
        self.heartbeat.tick(&self.publisher, now_ms);
        self.retry_timeouts(now_ms);
        if now_ms < self.next_sample_ms {
            return;
        }
        self.next_sample_ms = now_ms + self.period_ms;
        let dt = self.last_sample_ms.map_or(0, |t| now_ms - t);
        if let TickOutcome::Finished(task) = self.sim.advance(dt) {
            let agent = self.sim.agent.clone();
            self.request("update_progress", json!({"task": task, "agent": agent, "done": true}), Pending::Done(task.clone()), now_ms);
            self.next_poll_ms = now_ms;
        }
        self.last_sample_ms = Some(now_ms);
        let sample = self.sim.sample(now_ms);
        let topic = Topic::RobotState { ws: self.ws_id.clone(), agent: self.sim.agent.clone() };
        let _ = self.publisher.publish_to(&topic, json!(sample), true);
        let awaiting = !self.pending.is_empty();
        if self.all_done && self.sim.current_task().is_none() && !awaiting {
            // Nothing left anywhere; a pending acknowledge cannot start more work.
            self.sim.finish_program();
        } else if self.sim.wants_task() && !awaiting
            && now_ms >= self.next_poll_ms {
                self.next_poll_ms = now_ms + POLL_PERIOD_MS;
                self.poll(now_ms);
            }
    }
}
