//! Records robot trajectories per (agent, task) while a task is active and
//! serves them for path and silhouette feedback.

use crate::replica::ConfigReplica;
use crate::service::{rpc_topic, Heartbeat, RpcRequest, RpcResponse, Service};
use crate::store::{write_atomic, StoreError};
use crate::tracker::TaskStatusMsg;
use hrc_core::bus::{Envelope, Publisher, RpcDir, Topic};
use hrc_core::{Pose, RobotStateSample, TaskStatus};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use tracing::warn;

pub const SERVICE: &str = "preview";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedSample {
    pub t_ms: u64,
    pub q: [f64; 6],
    pub tcp: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecording {
    pub agent: String,
    pub task: String,
    pub revision: u64,
    /// Time the task became active.
    pub start_ms: u64,
    /// Time the task was completed.
    pub end_ms: u64,
    pub samples: Vec<RecordedSample>,
}

impl TrajectoryRecording {
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("recording serializes");
        s.push('\n');
        s
    }
}

pub fn file_name(agent: &str, task: &str) -> String {
    format!("{agent}__{task}.json")
}

#[derive(Debug, Clone)]
struct Open {
    task: String,
    start_ms: u64,
    samples: Vec<RecordedSample>,
}

pub struct PreviewService {
    ws_id: String,
    publisher: Publisher,
    heartbeat: Heartbeat,
    replica: ConfigReplica,
    dir: Option<PathBuf>,
    /// agent → recording in progress
    open: BTreeMap<String, Open>,
    done: BTreeMap<(String, String), TrajectoryRecording>,
    pub diagnostics: Vec<String>,
}

impl PreviewService {
    /// Loads previously stored recordings from `dir`.
    pub fn new(ws_id: &str, publisher: Publisher, dir: Option<PathBuf>) -> Result<Self, StoreError> {
        let mut done = BTreeMap::new();
        if let Some(d) = &dir {
            for r in load_dir(d)? {
                done.insert((r.agent.clone(), r.task.clone()), r);
            }
        }
        Ok(PreviewService {
            ws_id: ws_id.into(),
            publisher,
            heartbeat: Heartbeat::new(ws_id, SERVICE),
            replica: ConfigReplica::new(ws_id),
            dir,
            open: BTreeMap::new(),
            done,
            diagnostics: Vec::new(),
        })
    }

    pub fn get_preview(&self, agent: &str, task: &str) -> Option<&TrajectoryRecording> {
        self.done.get(&(agent.to_string(), task.to_string()))
    }

    /// Adds a recording made elsewhere, e.g. an offline simulation. It is
    /// not written to the directory.
    pub fn import(&mut self, rec: TrajectoryRecording) {
        self.done.insert((rec.agent.clone(), rec.task.clone()), rec);
    }

    pub fn recordings(&self) -> impl Iterator<Item = &TrajectoryRecording> {
        self.done.values()
    }

    fn diag(&mut self, msg: String) {
        warn!("{msg}");
        self.diagnostics.push(msg);
    }

    fn is_robot(&self, agent: &str) -> bool {
        self.replica.workstation().agents.get(agent).is_some_and(|a| a.is_robot())
    }

    fn on_status(&mut self, m: TaskStatusMsg) {
        let Some(agent) = m.agent.clone() else { return };
        match m.status {
            TaskStatus::Active if self.is_robot(&agent) => {
                if self.open.get(&agent).is_some_and(|o| o.task == m.task) {
                    return;
                }
                self.open.insert(agent, Open { task: m.task, start_ms: m.t_ms, samples: Vec::new() });
            }
            TaskStatus::Completed => {
                let Some(o) = self.open.remove(&agent).filter(|o| o.task == m.task) else {
                    return;
                };
                let samples: Vec<RecordedSample> =
                    o.samples.into_iter().filter(|s| s.t_ms >= o.start_ms && s.t_ms <= m.t_ms).collect();
                if samples.is_empty() {
                    self.diag(format!("task '{}' of '{agent}' completed without samples; nothing recorded", m.task));
                    return;
                }
                let key = (agent.clone(), m.task.clone());
                let revision = self.done.get(&key).map_or(1, |r| r.revision + 1);
                let rec = TrajectoryRecording { agent, task: m.task, revision, start_ms: o.start_ms, end_ms: m.t_ms, samples };
                if let Some(d) = &self.dir {
                    if let Err(e) = write_atomic(&d.join(file_name(&rec.agent, &rec.task)), &rec.to_canonical_json()) {
                        self.diag(e.to_string());
                    }
                }
                self.done.insert(key, rec);
            }
            // Reassigned away or reset: the open recording no longer applies.
            _ => {
                if self.open.get(&agent).is_some_and(|o| o.task == m.task) && m.status != TaskStatus::Active {
                    self.open.remove(&agent);
                }
            }
        }
    }

    fn on_sample(&mut self, s: RobotStateSample) {
        if let Some(o) = self.open.get_mut(&s.agent) {
            let later = o.samples.last().is_none_or(|l| s.t_ms > l.t_ms);
            if later && s.t_ms >= o.start_ms {
                o.samples.push(RecordedSample { t_ms: s.t_ms, q: s.joints, tcp: s.tcp });
            }
        }
    }

    pub fn handle_request(&self, op: &str, params: &Value) -> Result<Value, String> {
        match op {
            "get_preview" => {
                let agent = params.get("agent").and_then(Value::as_str).ok_or("missing 'agent'")?;
                let task = params.get("task").and_then(Value::as_str).ok_or("missing 'task'")?;
                Ok(self.get_preview(agent, task).map_or(Value::Null, |r| json!(r)))
            }
            "list" => Ok(json!(self
                .done
                .values()
                .map(|r| json!({"agent": r.agent, "task": r.task, "revision": r.revision}))
                .collect::<Vec<_>>())),
            other => Err(format!("unknown op '{other}'")),
        }
    }
}

/// Reads every recording file in a directory, sorted by file name.
pub fn load_dir(dir: &Path) -> Result<Vec<TrajectoryRecording>, StoreError> {
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let io = |e: std::io::Error| StoreError::Io { path: dir.to_path_buf(), reason: e.to_string() };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let text = std::fs::read_to_string(&p).map_err(io)?;
            serde_json::from_str(&text)
                .map_err(|e| StoreError::Corrupt { path: p.clone(), reason: e.to_string() })
        })
        .collect()
}

impl Service for PreviewService {
    fn name(&self) -> &str {
        SERVICE
    }

    fn filter(&self) -> String {
        format!("arthur/{}/#", self.ws_id)
    }

    fn on_message(&mut self, env: &Envelope, _now_ms: u64) {
        match Topic::parse(&env.topic) {
            Ok(Topic::Config { .. } | Topic::Deleted { .. }) => {
                self.replica.apply(env);
            }
            Ok(Topic::TaskStatus { .. }) => {
                if let Ok(m) = serde_json::from_value(env.payload.clone()) {
                    self.on_status(m);
                }
            }
            Ok(Topic::RobotState { .. }) => {
                if let Ok(s) = serde_json::from_value(env.payload.clone()) {
                    self.on_sample(s);
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
            _ => {}
        }
    }

    fn on_tick(&mut self, now_ms: u64) {
        self.heartbeat.tick(&self.publisher, now_ms);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use hrc_core::bus::InProcessBus;
    use hrc_core::{Agent, RunState, Workstation};
    use std::sync::Arc;

    fn env(topic: &str, payload: Value) -> Envelope {
        Envelope { topic: topic.into(), payload, retained: false, publisher: "p".into(), seq: 1 }
    }

    fn sample(t: u64, x: f64) -> Value {
        json!(RobotStateSample {
            agent: "robot".into(),
            t_ms: t,
            joints: [x, 0.0, 0.0, 0.0, 0.0, 0.0],
            tcp: Pose::translation(x, 0.0, 0.0).unwrap(),
            run_state: RunState::Playing,
            moving: true,
            move_mode: false,
            assistance: false,
            sensors: Default::default(),
            task: Some("t1".into()),
            progress: 0.0,
        })
    }

    fn status(task: &str, s: &str, agent: &str, t: u64) -> Value {
        json!({"task": task, "status": s, "agent": agent, "t_ms": t})
    }

    fn service(dir: Option<PathBuf>) -> PreviewService {
        let bus = Arc::new(InProcessBus::new());
        let mut p = PreviewService::new("ws", Publisher::new(bus, "preview"), dir).unwrap();
        let mut ws = Workstation::new("ws", "t");
        ws.agents.insert("robot".into(), Agent::robot("robot", "UR5e", "ur5e", "user-head"));
        ws.agents.insert("op".into(), Agent::operator("op", "Op", 2));
        for ((cat, id), v) in crate::replica::entities(&ws) {
            let t = Topic::Config { ws: "ws".into(), category: cat, id };
            p.on_message(&env(&t.to_string(), v), 0);
        }
        p
    }

    fn run(p: &mut PreviewService, task: &str, agent: &str, t0: u64, n: u64) {
        p.on_message(&env(&format!("arthur/ws/task/{task}/status"), status(task, "active", agent, t0)), t0);
        for k in 0..n {
            p.on_message(&env("arthur/ws/robot/robot/state", sample(t0 + 100 * k, k as f64)), t0);
        }
        p.on_message(&env(&format!("arthur/ws/task/{task}/status"), status(task, "completed", agent, t0 + 100 * n)), t0);
    }

    #[test]
    fn records_within_bounds_and_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = service(Some(dir.path().to_path_buf()));
        p.on_message(&env("arthur/ws/robot/robot/state", sample(50, 9.0)), 50);
        run(&mut p, "t1", "robot", 100, 5);
        let r = p.get_preview("robot", "t1").unwrap().clone();
        assert_eq!(r.revision, 1);
        assert_eq!(r.samples.len(), 5);
        assert!(r.samples[0].t_ms >= r.start_ms && r.samples.last().unwrap().t_ms <= r.end_ms);
        let stored = std::fs::read_to_string(dir.path().join("robot__t1.json")).unwrap();
        assert_eq!(stored, r.to_canonical_json());
        run(&mut p, "t1", "robot", 2000, 3);
        assert_eq!(p.get_preview("robot", "t1").unwrap().revision, 2);
        let reloaded = service(Some(dir.path().to_path_buf()));
        assert_eq!(reloaded.get_preview("robot", "t1"), p.get_preview("robot", "t1"));
    }

    #[test]
    fn operator_tasks_and_empty_runs_are_not_recorded() {
        let mut p = service(None);
        run(&mut p, "t2", "op", 0, 4);
        assert!(p.get_preview("op", "t2").is_none());
        run(&mut p, "t3", "robot", 0, 0);
        assert!(p.get_preview("robot", "t3").is_none());
        assert_eq!(p.diagnostics.len(), 1);
        assert_eq!(p.handle_request("get_preview", &json!({"agent": "robot", "task": "zz"})), Ok(Value::Null));
    }
}
