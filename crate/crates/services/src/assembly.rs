//! Assembly bookkeeping: task statuses, dispatch and completion.
//!
//! [`TaskBoard`] is the pure state machine. [`AssemblyService`] feeds it from
//! the shared configuration and publishes statuses retained.

use crate::process::{self, Bom, Bop, ProcessDoc, ProcessViolation};
use crate::replica::ConfigReplica;
use crate::service::{rpc_topic, Heartbeat, RpcRequest, RpcResponse, Service};
use crate::store::{write_atomic, StoreError};
use crate::tracker::{ProgressMsg, TaskStatusMsg};
use hrc_core::bus::{EventStream, Envelope, Publisher, RpcDir, Topic};
use hrc_core::{TaskSpec, TaskStatus, Workstation};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::path::PathBuf;
use thiserror::Error;
use tracing::warn;

pub const SERVICE: &str = "assembly";

#[derive(Debug, Error, PartialEq)]
pub enum AssemblyError {
    #[error("invalid sequence: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Sequence(Vec<ProcessViolation>),
    #[error("unknown agent '{0}'")]
    UnknownAgent(String),
    #[error("unknown task '{0}'")]
    UnknownTask(String),
    #[error("task '{task}' is waiting for {}", .waiting.join(", "))]
    Precedence { task: String, waiting: Vec<String> },
    #[error("task '{0}' is completed and cannot change")]
    Immutable(String),
    #[error("no assembly sequence loaded")]
    NotLoaded,
    #[error("saved statuses do not match the task graph")]
    Mismatch,
    #[error("invalid request: {0}")]
    Invalid(String),
}

type Result<T> = std::result::Result<T, AssemblyError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoardEntry {
    pub status: TaskStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<String>,
    pub t_ms: u64,
}

/// Persisted board state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoardState {
    pub entries: BTreeMap<String, BoardEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected: Option<String>,
}

/// Notice for an agent that lost its active task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Revocation {
    pub agent: String,
    pub task: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskBoard {
    order: BTreeMap<String, u32>,
    preds: BTreeMap<String, Vec<String>>,
    /// agent id → is robot
    agents: BTreeMap<String, bool>,
    state: BoardState,
}

impl TaskBoard {
    /// Validates the sequence and initializes statuses: roots ready, the rest
    /// pending, operator tasks activated.
    pub fn load(ws: &Workstation, now_ms: u64) -> Result<TaskBoard> {
        let doc = ProcessDoc {
            bop: Bop { tasks: ws.tasks_in_order().into_iter().cloned().collect() },
            bom: Bom { parts: ws.parts.values().cloned().collect(), tools: ws.tools.values().cloned().collect() },
        };
        process::validate(&doc).map_err(AssemblyError::Sequence)?;
        let entries = ws
            .tasks
            .values()
            .map(|t| (t.id.clone(), BoardEntry { status: TaskStatus::Pending, agent: t.agent.clone(), t_ms: now_ms }))
            .collect();
        let mut b = TaskBoard {
            order: ws.tasks.values().map(|t| (t.id.clone(), t.order)).collect(),
            preds: ws.tasks.values().map(|t| (t.id.clone(), t.predecessors.clone())).collect(),
            agents: ws.agents.values().map(|a| (a.id.clone(), a.is_robot())).collect(),
            state: BoardState { entries, selected: None },
        };
        b.settle(now_ms);
        Ok(b)
    }

    /// Loads the sequence and replaces the statuses with a saved state.
    pub fn restore(ws: &Workstation, state: BoardState) -> Result<TaskBoard> {
        let mut b = TaskBoard::load(ws, 0)?;
        if !state.entries.keys().eq(b.state.entries.keys()) {
            return Err(AssemblyError::Mismatch);
        }
        b.state = state;
        Ok(b)
    }

    pub fn state(&self) -> &BoardState {
        &self.state
    }

    pub fn entries(&self) -> &BTreeMap<String, BoardEntry> {
        &self.state.entries
    }

    pub fn status(&self, task: &str) -> Option<TaskStatus> {
        self.state.entries.get(task).map(|e| e.status)
    }

    pub fn selected(&self) -> Option<&str> {
        self.state.selected.as_deref()
    }

    pub fn progress(&self) -> ProgressMsg {
        let total = self.state.entries.len();
        let completed = self.state.entries.values().filter(|e| e.status == TaskStatus::Completed).count();
        let fraction = if total == 0 { 0.0 } else { completed as f64 / total as f64 };
        ProgressMsg { completed, total, fraction, selected_task: self.state.selected.clone() }
    }

    fn key(&self, id: &str) -> (u32, String) {
        (self.order.get(id).copied().unwrap_or(u32::MAX), id.to_string())
    }

    fn waiting(&self, task: &str) -> Vec<String> {
        self.preds[task]
            .iter()
            .filter(|p| self.state.entries.get(*p).map(|e| e.status) != Some(TaskStatus::Completed))
            .cloned()
            .collect()
    }

    fn lowest(&self, f: impl Fn(&str, &BoardEntry) -> bool) -> Option<String> {
        self.state.entries.iter().filter(|(id, e)| f(id, e)).map(|(id, _)| self.key(id)).min().map(|(_, id)| id)
    }

    /// Promotes pending tasks whose predecessors are done and activates the
    /// next task of every idle operator.
    fn settle(&mut self, now_ms: u64) {
        let promote: Vec<String> = self
            .state
            .entries
            .iter()
            .filter(|(id, e)| e.status == TaskStatus::Pending && self.waiting(id).is_empty())
            .map(|(id, _)| id.clone())
            .collect();
        for id in promote {
            let e = self.state.entries.get_mut(&id).expect("present");
            e.status = TaskStatus::Ready;
            e.t_ms = now_ms;
        }
        let operators: Vec<String> = self.agents.iter().filter(|(_, robot)| !**robot).map(|(a, _)| a.clone()).collect();
        for op in operators {
            let mine = |e: &BoardEntry| e.agent.as_deref() == Some(op.as_str());
            if self.state.entries.values().any(|e| mine(e) && e.status == TaskStatus::Active) {
                continue;
            }
            if let Some(id) = self.lowest(|_, e| mine(e) && e.status == TaskStatus::Ready) {
                let e = self.state.entries.get_mut(&id).expect("present");
                e.status = TaskStatus::Active;
                e.t_ms = now_ms;
            }
        }
    }

    fn check_agent(&self, agent: &str) -> Result<()> {
        if self.agents.contains_key(agent) {
            Ok(())
        } else {
            Err(AssemblyError::UnknownAgent(agent.into()))
        }
    }

    /// The agent's active task, or the lowest-order ready task it may take,
    /// now active. Repeated calls return the same task.
    pub fn next_task(&mut self, agent: &str, now_ms: u64) -> Result<Option<String>> {
        self.check_agent(agent)?;
        if let Some(id) = self.lowest(|_, e| e.status == TaskStatus::Active && e.agent.as_deref() == Some(agent)) {
            return Ok(Some(id));
        }
        let Some(id) = self.lowest(|_, e| {
            e.status == TaskStatus::Ready && e.agent.as_deref().is_none_or(|a| a == agent)
        }) else {
            return Ok(None);
        };
        let e = self.state.entries.get_mut(&id).expect("present");
        e.status = TaskStatus::Active;
        e.agent = Some(agent.into());
        e.t_ms = now_ms;
        Ok(Some(id))
    }

    /// The task `complete-task` would complete for an agent.
    pub fn current_of(&self, agent: &str) -> Option<String> {
        let mine = |e: &BoardEntry| e.agent.as_deref() == Some(agent);
        self.lowest(|_, e| mine(e) && e.status == TaskStatus::Active)
            .or_else(|| self.lowest(|_, e| mine(e) && e.status == TaskStatus::Ready))
    }

    pub fn complete_task(&mut self, task: &str, by: Option<&str>, now_ms: u64) -> Result<()> {
        let e = self.state.entries.get(task).ok_or_else(|| AssemblyError::UnknownTask(task.into()))?;
        match e.status {
            TaskStatus::Completed => return Err(AssemblyError::Immutable(task.into())),
            TaskStatus::Pending => {
                return Err(AssemblyError::Precedence { task: task.into(), waiting: self.waiting(task) })
            }
            TaskStatus::Ready | TaskStatus::Active => {}
        }
        if let Some(a) = by {
            self.check_agent(a)?;
        }
        let e = self.state.entries.get_mut(task).expect("present");
        e.status = TaskStatus::Completed;
        e.t_ms = now_ms;
        if e.agent.is_none() {
            e.agent = by.map(str::to_string);
        }
        self.settle(now_ms);
        Ok(())
    }

    /// Changes the assignment of an unfinished task. An active task keeps its
    /// status; the previous agent gets a revocation.
    pub fn reassign_task(&mut self, task: &str, agent: &str, now_ms: u64) -> Result<Option<Revocation>> {
        self.check_agent(agent)?;
        let e = self.state.entries.get_mut(task).ok_or_else(|| AssemblyError::UnknownTask(task.into()))?;
        if e.status == TaskStatus::Completed {
            return Err(AssemblyError::Immutable(task.into()));
        }
        let old = e.agent.replace(agent.into());
        e.t_ms = now_ms;
        let revoked = match old {
            Some(o) if e.status == TaskStatus::Active && o != agent => Some(Revocation { agent: o, task: task.into() }),
            _ => None,
        };
        self.settle(now_ms);
        Ok(revoked)
    }

    pub fn select_task(&mut self, task: &str) -> Result<()> {
        if !self.state.entries.contains_key(task) {
            return Err(AssemblyError::UnknownTask(task.into()));
        }
        self.state.selected = Some(task.into());
        Ok(())
    }
}

/// What a loaded board depends on: task ids, orders and predecessors.
fn signature(ws: &Workstation) -> BTreeMap<String, (u32, Vec<String>)> {
    ws.tasks.values().map(|t| (t.id.clone(), (t.order, t.predecessors.clone()))).collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    signature: BTreeMap<String, (u32, Vec<String>)>,
    state: BoardState,
}

pub struct AssemblyService {
    ws_id: String,
    publisher: Publisher,
    heartbeat: Heartbeat,
    replica: ConfigReplica,
    board: Option<TaskBoard>,
    signature: Option<BTreeMap<String, (u32, Vec<String>)>>,
    sidecar: Option<PathBuf>,
    published: BTreeMap<String, BoardEntry>,
    published_progress: Option<ProgressMsg>,
    now_ms: u64,
    pub diagnostics: Vec<String>,
}

impl AssemblyService {
    /// `sidecar` persists statuses across restarts.
    pub fn new(ws_id: &str, publisher: Publisher, sidecar: Option<PathBuf>) -> Self {
        AssemblyService {
            ws_id: ws_id.into(),
            publisher,
            heartbeat: Heartbeat::new(ws_id, SERVICE),
            replica: ConfigReplica::new(ws_id),
            board: None,
            signature: None,
            sidecar,
            published: BTreeMap::new(),
            published_progress: None,
            now_ms: 0,
            diagnostics: Vec::new(),
        }
    }

    pub fn board(&self) -> Option<&TaskBoard> {
        self.board.as_ref()
    }

    fn diag(&mut self, msg: String) {
        warn!("{msg}");
        self.diagnostics.push(msg);
        self.heartbeat.detail = self.diagnostics.last().cloned();
    }

    /// (Re)loads the sequence from the replicated configuration, restoring
    /// saved statuses when they match.
    pub fn load_sequence(&mut self) -> Result<()> {
        let ws = self.replica.workstation().clone();
        let sig = signature(&ws);
        let saved = self.sidecar.as_ref().and_then(|p| std::fs::read_to_string(p).ok()).and_then(|s| {
            serde_json::from_str::<Sidecar>(&s).ok()
        });
        let board = match saved {
            Some(s) if s.signature == sig => TaskBoard::restore(&ws, s.state)?,
            _ => TaskBoard::load(&ws, self.now_ms)?,
        };
        self.board = Some(board);
        self.signature = Some(sig);
        self.heartbeat.detail = None;
        self.after_change(None);
        Ok(())
    }

    fn maybe_reload(&mut self) {
        if self.replica.revision().is_none() {
            return;
        }
        let ws = self.replica.workstation();
        if self.signature.as_ref() == Some(&signature(ws)) {
            if let Some(b) = self.board.as_mut() {
                b.agents = ws.agents.values().map(|a| (a.id.clone(), a.is_robot())).collect();
            }
            return;
        }
        if let Err(e) = self.load_sequence() {
            self.board = None;
            self.signature = None;
            self.after_change(None);
            self.diag(format!("load_sequence: {e}"));
        }
    }

    fn save(&mut self) {
        let (Some(p), Some(b), Some(sig)) = (&self.sidecar, &self.board, &self.signature) else {
            return;
        };
        let doc = Sidecar { signature: sig.clone(), state: b.state.clone() };
        let mut s = serde_json::to_string_pretty(&doc).expect("sidecar serializes");
        s.push('\n');
        if let Err(e) = write_atomic(p, &s) {
            let e: StoreError = e;
            self.diag(e.to_string());
        }
    }

    /// Publishes changed statuses, removed tasks, progress and notices.
    fn after_change(&mut self, revoked: Option<Revocation>) {
        self.save();
        let entries = self.board.as_ref().map(|b| b.entries().clone()).unwrap_or_default();
        for (id, e) in &entries {
            if self.published.get(id) == Some(e) {
                continue;
            }
            let newly_active = e.status == TaskStatus::Active
                && self.published.get(id).map(|p| (p.status, &p.agent)) != Some((TaskStatus::Active, &e.agent));
            let msg = TaskStatusMsg { task: id.clone(), status: e.status, agent: e.agent.clone(), t_ms: e.t_ms };
            let topic = Topic::TaskStatus { ws: self.ws_id.clone(), id: id.clone() };
            let _ = self.publisher.publish_to(&topic, json!(msg), true);
            if let (true, Some(agent)) = (newly_active, &e.agent) {
                self.dispatch(agent, id, "assigned");
            }
        }
        for id in self.published.keys().filter(|id| !entries.contains_key(*id)) {
            let _ = self.publisher.clear_retained(&Topic::TaskStatus { ws: self.ws_id.clone(), id: id.clone() });
        }
        if let Some(r) = revoked {
            self.dispatch(&r.agent, &r.task, "revoked");
        }
        self.published = entries;
        let progress = self.board.as_ref().map(TaskBoard::progress);
        if progress != self.published_progress {
            let topic = Topic::TaskProgress { ws: self.ws_id.clone() };
            match &progress {
                Some(p) => {
                    let _ = self.publisher.publish_to(&topic, json!(p), true);
                }
                None => {
                    let _ = self.publisher.clear_retained(&topic);
                }
            }
            self.published_progress = progress;
        }
    }

    fn dispatch(&self, agent: &str, task: &str, action: &str) {
        let topic = Topic::Dispatch { ws: self.ws_id.clone(), agent: agent.into() };
        let _ = self.publisher.publish_to(&topic, json!({"task": task, "action": action, "t_ms": self.now_ms}), false);
    }

    fn board_mut(&mut self) -> Result<&mut TaskBoard> {
        self.board.as_mut().ok_or(AssemblyError::NotLoaded)
    }

    fn spec(&self, id: &str) -> Value {
        self.replica.workstation().tasks.get(id).map(|t: &TaskSpec| json!(t)).unwrap_or(Value::Null)
    }

    pub fn handle_request(&mut self, op: &str, params: &Value) -> Result<Value> {
        let s = |n: &str| -> Result<String> {
            params
                .get(n)
                .and_then(Value::as_str)
                .map(str::to_string)
                .ok_or_else(|| AssemblyError::Invalid(format!("missing string parameter '{n}'")))
        };
        let now = self.now_ms;
        let out = match op {
            "next_task" => {
                let agent = s("agent")?;
                let t = self.board_mut()?.next_task(&agent, now)?;
                self.after_change(None);
                json!({"task": t.as_deref().map(|t| self.spec(t)).unwrap_or(Value::Null)})
            }
            "complete_task" => {
                let by = params.get("agent").and_then(Value::as_str).map(str::to_string);
                self.board_mut()?.complete_task(&s("task")?, by.as_deref(), now)?;
                self.after_change(None);
                json!({"progress": self.board.as_ref().map(TaskBoard::progress)})
            }
            "update_progress" => {
                let task = s("task")?;
                let done = params.get("done").and_then(Value::as_bool).unwrap_or(false);
                if done {
                    let by = params.get("agent").and_then(Value::as_str).map(str::to_string);
                    self.board_mut()?.complete_task(&task, by.as_deref(), now)?;
                    self.after_change(None);
                } else if self.board_mut()?.status(&task).is_none() {
                    return Err(AssemblyError::UnknownTask(task));
                }
                json!({"task": task, "done": done})
            }
            "reassign_task" => {
                let r = self.board_mut()?.reassign_task(&s("task")?, &s("agent")?, now)?;
                self.after_change(r.clone());
                json!({"revoked": r})
            }
            "select_task" => {
                self.board_mut()?.select_task(&s("task")?)?;
                self.after_change(None);
                json!({})
            }
            "load_sequence" => {
                self.load_sequence()?;
                json!({"tasks": self.board.as_ref().map(|b| b.entries().len())})
            }
            "status" => {
                let b = self.board.as_ref().ok_or(AssemblyError::NotLoaded)?;
                json!({"tasks": b.entries(), "progress": b.progress()})
            }
            other => return Err(AssemblyError::Invalid(format!("unknown op '{other}'"))),
        };
        Ok(out)
    }

    fn handle_action(&mut self, f: &crate::engine::ActionFiring) {
        let p = |n: &str| f.properties.get(n).and_then(Value::as_str).map(str::to_string);
        let now = self.now_ms;
        let res = match f.kind.as_str() {
            "complete-task" => {
                let agent = p("agent").unwrap_or_default();
                match self.board_mut() {
                    Ok(b) => match b.current_of(&agent) {
                        Some(t) => b.complete_task(&t, Some(&agent), now).map(|_| None),
                        None => Err(AssemblyError::Invalid(format!("agent '{agent}' has no open task"))),
                    },
                    Err(e) => Err(e),
                }
            }
            "reassign-task" => {
                let (t, a) = (p("task").unwrap_or_default(), p("agent").unwrap_or_default());
                self.board_mut().and_then(|b| b.reassign_task(&t, &a, now))
            }
            "select-task" => {
                let t = p("task").unwrap_or_default();
                self.board_mut().and_then(|b| b.select_task(&t)).map(|_| None)
            }
            _ => return,
        };
        match res {
            Ok(r) => self.after_change(r),
            Err(e) => self.diag(format!("{} '{}': {e}", f.kind, f.action)),
        }
    }
}

impl Service for AssemblyService {
    fn name(&self) -> &str {
        SERVICE
    }

    fn filter(&self) -> String {
        format!("arthur/{}/#", self.ws_id)
    }

    fn on_message(&mut self, env: &Envelope, now_ms: u64) {
        self.now_ms = now_ms;
        match Topic::parse(&env.topic) {
            Ok(Topic::Config { .. } | Topic::Deleted { .. }) => {
                if self.replica.apply(env) {
                    self.maybe_reload();
                }
            }
            Ok(Topic::Rpc { service, dir: RpcDir::Request, .. }) if service == SERVICE => {
                let resp = match serde_json::from_value::<RpcRequest>(env.payload.clone()) {
                    Ok(req) => match self.handle_request(&req.op, &req.params) {
                        Ok(v) => RpcResponse::ok(&req.request_id, v),
                        Err(e) => RpcResponse::err(&req.request_id, e),
                    },
                    Err(e) => RpcResponse::err("", format!("malformed request: {e}")),
                };
                let _ = self.publisher.publish_to(&rpc_topic(&self.ws_id, SERVICE, RpcDir::Response), json!(resp), false);
            }
            Ok(Topic::Events { stream: EventStream::Action, .. }) => {
                if let Ok(f) = serde_json::from_value(env.payload.clone()) {
                    self.handle_action(&f);
                }
            }
            _ => {}
        }
    }

    fn on_tick(&mut self, now_ms: u64) {
        self.now_ms = now_ms;
        self.heartbeat.tick(&self.publisher, now_ms);
    }
}
