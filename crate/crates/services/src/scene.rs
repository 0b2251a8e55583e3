//! Headless scene client: replicates configuration and live data, projects
//! every feedback component to a scene node and injects user input.

use crate::authoring::{self, robot_base};
use crate::engine::{visibility, CondState};
use crate::fake::{FakeMessage, PathSample};
use crate::preview::{self, TrajectoryRecording};
use crate::replica::ConfigReplica;
use crate::service::{rpc_topic, RequestIds, RpcRequest, RpcResponse, Service};
use crate::tracker::{body_pose_payload, TaskStatusMsg, WorldTracker};
use hrc_core::bus::{BusError, EventStream, Envelope, Publisher, RpcDir, Topic};
use hrc_core::{
    registry, resolve_anchor, BodyPart, ComponentDescriptor, InputEvent, InputKind, Pose, TaskSpec, TaskStatus, Vec3,
    WorldState, Workstation,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "kebab-case")]
pub enum Geometry {
    None,
    Pose(Pose),
    Polyline(Vec<Vec3>),
    Points(Vec<Vec3>),
    Polygon(Vec<Vec3>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneNode {
    pub id: String,
    pub kind: String,
    pub geometry: Geometry,
    pub visible: bool,
    pub data: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

/// Synthetic data received from `fake/<kind>`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FakeData {
    pub path: BTreeMap<String, Vec<PathSample>>,
    pub waypoints: BTreeMap<String, Vec<Vec3>>,
    pub messages: Vec<FakeMessage>,
}

pub type Previews = BTreeMap<(String, String), TrajectoryRecording>;

/// Task an agent is working on or will work on next.
pub fn current_task<'w>(ws: &'w Workstation, world: &WorldState, agent: &str) -> Option<&'w TaskSpec> {
    let from_world = world.current_task(agent, |id| ws.task_order(id));
    let id = from_world.or_else(|| {
        // Before statuses are published, fall back to the authored assignment.
        ws.tasks_in_order()
            .into_iter()
            .find(|t| t.agent.as_deref() == Some(agent) && !world.tasks.contains_key(&t.id))
            .map(|t| t.id.clone())
    })?;
    ws.tasks.get(&id)
}

fn step_pose(ws: &Workstation, world: &WorldState, t: &TaskSpec) -> Option<Result<Pose, String>> {
    let step = t.step.as_ref()?;
    Some(resolve_anchor(&step.anchor, ws, world).map(|p| p.compose(&step.pose)).map_err(|e| e.to_string()))
}

fn material_points(ws: &Workstation, world: &WorldState, ids: &[String], tools: bool) -> Vec<Vec3> {
    let table = if tools { &ws.tools } else { &ws.parts };
    ids.iter()
        .filter_map(|id| table.get(id))
        .filter_map(|m| {
            let a = m.anchor.as_ref()?;
            let base = resolve_anchor(a, ws, world).ok()?;
            Some(base.compose(&m.offset.unwrap_or(Pose::IDENTITY)).position)
        })
        .collect()
}

/// Projects the configuration and live state to scene nodes, sorted by id.
pub fn project(
    ws: &Workstation,
    world: &WorldState,
    conds: &BTreeMap<String, CondState>,
    previews: &Previews,
    fake: &FakeData,
) -> Vec<SceneNode> {
    let reg = registry();
    let live_conds: BTreeMap<String, CondState> =
        conds.iter().filter(|(id, _)| ws.conditions.contains_key(*id)).map(|(k, v)| (k.clone(), v.clone())).collect();
    ws.feedback
        .values()
        .map(|fb| {
            let mut data = Map::new();
            if let Some(spec) = reg.lookup(&fb.kind) {
                for p in &spec.properties {
                    if p.name == "anchor" || p.name == "offset" {
                        continue;
                    }
                    if let Some(v) = fb.value_or_default(reg, &p.name) {
                        data.insert(p.name.clone(), v.clone());
                    }
                }
            }
            let mut diagnostic = None;
            let mut geometry = match ws.feedback_pose(fb, world) {
                Some(Ok(p)) => Geometry::Pose(p),
                Some(Err(e)) => {
                    diagnostic = Some(format!("unresolved anchor: {e}"));
                    Geometry::None
                }
                None => Geometry::None,
            };
            derive(ws, world, previews, fake, fb, &mut data, &mut geometry, &mut diagnostic);
            let vis = visibility(fb, &live_conds);
            if diagnostic.is_none() {
                diagnostic = vis.diagnostic.clone();
            }
            let anchored_ok = !(fb.str_prop("anchor").is_some() && geometry == Geometry::None);
            SceneNode {
                id: fb.id.clone(),
                kind: fb.kind.clone(),
                geometry,
                visible: vis.visible && anchored_ok,
                data: Value::Object(data),
                diagnostic,
            }
        })
        .collect()
}

fn agent_preview<'p>(ws: &Workstation, world: &WorldState, previews: &'p Previews, agent: &str) -> Option<&'p TrajectoryRecording> {
    let t = current_task(ws, world, agent)?;
    previews.get(&(agent.to_string(), t.id.clone()))
}

#[allow(clippy::too_many_arguments)]
fn derive(
    ws: &Workstation,
    world: &WorldState,
    previews: &Previews,
    fake: &FakeData,
    fb: &ComponentDescriptor,
    data: &mut Map<String, Value>,
    geometry: &mut Geometry,
    diagnostic: &mut Option<String>,
) {
    let agent = fb.str_prop("agent").unwrap_or_default();
    let robot = world.robots.get(agent);
    let task = current_task(ws, world, agent);
    let base = || ws.agents.get(agent).and_then(|a| robot_base(ws, a).ok());
    let set = |data: &mut Map<String, Value>, k: &str, v: Value| {
        data.insert(k.to_string(), v);
    };
    match fb.kind.as_str() {
        "robot-path" | "robot-waypoints" | "robot-silhouette" => {
            let rec = agent_preview(ws, world, previews, agent);
            set(data, "task", json!(task.map(|t| &t.id)));
            let pts: Option<(Vec<Vec3>, &str)> = match (rec, base()) {
                (Some(r), Some(b)) => Some((r.samples.iter().map(|s| b.transform_point(s.tcp.position)).collect(), "preview")),
                _ if fb.kind == "robot-path" => {
                    fake.path.get(agent).map(|s| (s.iter().map(|p| p.position).collect(), "fake"))
                }
                _ if fb.kind == "robot-waypoints" => fake.waypoints.get(agent).map(|w| (w.clone(), "fake")),
                _ => None,
            };
            set(data, "source", json!(pts.as_ref().map_or("none", |p| p.1)));
            if let Some(r) = rec {
                set(data, "revision", json!(r.revision));
            }
            match (fb.kind.as_str(), pts) {
                ("robot-path", Some((p, _))) => *geometry = Geometry::Polyline(p),
                ("robot-waypoints", Some((p, "preview"))) => {
                    let n = p.len();
                    let k = n.min(8);
                    let idx: BTreeSet<usize> = (0..k).map(|i| if k == 1 { 0 } else { i * (n - 1) / (k - 1) }).collect();
                    *geometry = Geometry::Points(idx.into_iter().map(|i| p[i]).collect());
                }
                ("robot-waypoints", Some((p, _))) => *geometry = Geometry::Points(p),
                ("robot-silhouette", Some(_)) => {
                    let (r, b) = (rec.expect("preview source"), base().expect("base resolved"));
                    let last = r.samples.last().expect("recordings are non-empty");
                    *geometry = Geometry::Pose(b.compose(&last.tcp));
                    set(data, "joints", json!(last.q));
                }
                _ => {}
            }
        }
        "robot-state" => {
            set(data, "run_state", json!(robot.map_or("unknown", |r| r.run_state.as_str())));
            set(data, "move_mode", json!(robot.is_some_and(|r| r.move_mode)));
            set(data, "moving", json!(robot.is_some_and(|r| r.moving)));
        }
        "robot-sensor" => {
            let name = fb.str_prop("sensor").unwrap_or_default();
            let v = robot.and_then(|r| r.sensors.get(name)).copied();
            let (lo, hi) = (fb.f64_prop("min").unwrap_or(0.0), fb.f64_prop("max").unwrap_or(1.0));
            set(data, "value", json!(v));
            let norm = v.map(|v| if hi > lo { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 });
            set(data, "normalized", json!(norm));
        }
        "robot-task-status" => {
            set(data, "task", json!(robot.and_then(|r| r.task.clone())));
            set(data, "progress", json!(robot.map_or(0.0, |r| r.progress)));
        }
        "task-image" => {
            set(data, "task", json!(task.map(|t| &t.id)));
            set(data, "name", json!(task.map(|t| &t.name)));
            set(data, "description", json!(task.map(|t| &t.description)));
            set(data, "image", json!(task.and_then(|t| t.image.as_ref())));
        }
        "task-part-image" => {
            set(data, "task", json!(task.map(|t| &t.id)));
            let parts: Vec<Value> = task
                .map(|t| t.parts.iter().filter_map(|p| ws.parts.get(p)).map(|m| json!({"id": m.id, "name": m.name})).collect())
                .unwrap_or_default();
            set(data, "parts", json!(parts));
        }
        "task-highlight" | "task-model-highlight" | "step-instructions-3d" => {
            set(data, "task", json!(task.map(|t| &t.id)));
            if fb.kind == "task-model-highlight" {
                set(data, "parts", json!(task.map(|t| &t.parts)));
            }
            if fb.kind != "step-instructions-3d" {
                match task.and_then(|t| step_pose(ws, world, t)) {
                    Some(Ok(p)) => *geometry = Geometry::Pose(p),
                    Some(Err(e)) => *diagnostic = Some(format!("unresolved step: {e}")),
                    None => {}
                }
            }
        }
        "tool-highlight" | "part-highlight" => {
            let tools = fb.kind == "tool-highlight";
            let ids = task.map(|t| if tools { t.tools.clone() } else { t.parts.clone() }).unwrap_or_default();
            *geometry = Geometry::Points(material_points(ws, world, &ids, tools));
            set(data, "task", json!(task.map(|t| &t.id)));
            set(data, if tools { "tools" } else { "parts" }, json!(ids));
        }
        "task-list-status" => {
            let rows: Vec<Value> = ws
                .tasks_in_order()
                .into_iter()
                .map(|t| {
                    let st = world.tasks.get(&t.id);
                    json!({
                        "id": t.id,
                        "name": t.name,
                        "status": st.map_or("pending", |s| s.status.as_str()),
                        "agent": st.and_then(|s| s.agent.clone()).or_else(|| t.agent.clone()),
                    })
                })
                .collect();
            let done = world.tasks.values().filter(|s| s.status == TaskStatus::Completed).count();
            let total = ws.tasks.len();
            set(data, "tasks", json!(rows));
            set(data, "progress", json!(if total == 0 { 0.0 } else { done as f64 / total as f64 }));
            set(data, "selected", json!(world.selected_task));
        }
        "zone" => {
            let z = fb.str_prop("zone").unwrap_or_default();
            match world.zones.get(z) {
                Some(p) => {
                    set(data, "points", json!(p.len()));
                    *geometry = Geometry::Polygon(p.clone());
                }
                None => {
                    set(data, "points", json!(0));
                }
            }
        }
        "message"
            if !fake.messages.is_empty() => {
                set(data, "feed", json!(fake.messages.iter().map(|m| &m.text).collect::<Vec<_>>()));
            }
        _ => {}
    }
}

fn num(x: f64) -> String {
    let s = format!("{x:.6}");
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

fn vec3(p: &Vec3) -> String {
    format!("{},{},{}", num(p[0]), num(p[1]), num(p[2]))
}

fn pts(p: &[Vec3]) -> String {
    p.iter().map(vec3).collect::<Vec<_>>().join(";")
}

/// Line-oriented canonical scene text: one node per line, sorted by id.
pub fn dump(nodes: &[SceneNode]) -> String {
    let mut out = String::new();
    for n in nodes {
        let geo = match &n.geometry {
            Geometry::None => "none".to_string(),
            Geometry::Pose(p) => {
                let q = p.orientation.to_array();
                format!("pose({}|{},{},{},{})", vec3(&p.position), num(q[0]), num(q[1]), num(q[2]), num(q[3]))
            }
            Geometry::Polyline(p) => format!("polyline[{}]({})", p.len(), pts(p)),
            Geometry::Points(p) => format!("points[{}]({})", p.len(), pts(p)),
            Geometry::Polygon(p) => format!("polygon[{}]({})", p.len(), pts(p)),
        };
        let _ = write!(out, "{} kind={} visible={} geometry={} data={}", n.id, n.kind, n.visible, geo, canonical(&n.data));
        if let Some(d) = &n.diagnostic {
            let _ = write!(out, " diagnostic={d:?}");
        }
        out.push('\n');
    }
    out
}

/// JSON with sorted keys and floats rounded like the geometry.
fn canonical(v: &Value) -> String {
    match v {
        Value::Number(n) if n.is_f64() => num(n.as_f64().unwrap_or_default()),
        Value::Array(a) => format!("[{}]", a.iter().map(canonical).collect::<Vec<_>>().join(",")),
        Value::Object(m) => {
            let sorted: BTreeMap<&String, &Value> = m.iter().collect();
            format!(
                "{{{}}}",
                sorted.iter().map(|(k, v)| format!("{}:{}", json!(k), canonical(v))).collect::<Vec<_>>().join(",")
            )
        }
        other => other.to_string(),
    }
}

pub struct SceneClient {
    ws_id: String,
    name: String,
    publisher: Publisher,
    replica: ConfigReplica,
    tracker: WorldTracker,
    conds: BTreeMap<String, CondState>,
    previews: Previews,
    fake: FakeData,
    ids: RequestIds,
    preview_requests: BTreeMap<String, (String, String)>,
    requested: BTreeSet<(String, String)>,
    own_requests: BTreeSet<String>,
    responses: BTreeMap<String, RpcResponse>,
    now_ms: u64,
    pub diagnostics: Vec<String>,
}

impl SceneClient {
    pub fn new(ws_id: &str, name: &str, publisher: Publisher) -> Self {
        SceneClient {
            ws_id: ws_id.into(),
            name: name.into(),
            publisher,
            replica: ConfigReplica::new(ws_id),
            tracker: WorldTracker::new(ws_id),
            conds: BTreeMap::new(),
            previews: BTreeMap::new(),
            fake: FakeData::default(),
            ids: RequestIds::new(&format!("scene-{name}")),
            preview_requests: BTreeMap::new(),
            requested: BTreeSet::new(),
            own_requests: BTreeSet::new(),
            responses: BTreeMap::new(),
            now_ms: 0,
            diagnostics: Vec::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn workstation(&self) -> &Workstation {
        self.replica.workstation()
    }

    pub fn world(&self) -> &WorldState {
        &self.tracker.world
    }

    pub fn condition_states(&self) -> &BTreeMap<String, CondState> {
        &self.conds
    }

    pub fn nodes(&self) -> Vec<SceneNode> {
        project(self.replica.workstation(), &self.tracker.world, &self.conds, &self.previews, &self.fake)
    }

    pub fn node(&self, id: &str) -> Option<SceneNode> {
        self.nodes().into_iter().find(|n| n.id == id)
    }

    pub fn dump_scene(&self) -> String {
        dump(&self.nodes())
    }

    /// Whether an input target names something the engine can match.
    fn resolves(&self, e: &InputEvent) -> bool {
        let ws = self.replica.workstation();
        match e.kind {
            InputKind::Speech | InputKind::Message => true,
            InputKind::Button => ws
                .conditions
                .values()
                .any(|c| c.kind == "workstation-button" && c.str_prop("button") == Some(e.target.as_str())),
            InputKind::Pinch => e.target == "*" || ws.feedback.contains_key(&e.target),
            _ => ws.feedback.contains_key(&e.target),
        }
    }

    /// Publishes a user input event stamped with the current time.
    pub fn inject(&mut self, kind: InputKind, target: &str, source: Option<BodyPart>, payload: Option<String>) -> Result<InputEvent, BusError> {
        let mut e = InputEvent { kind, target: target.into(), source, t_ms: self.now_ms, payload, unresolved: false };
        if !self.resolves(&e) {
            e.unresolved = true;
            self.diagnostics.push(format!("input {} on unknown target '{target}'", kind.as_str()));
        }
        let topic = Topic::Events { ws: self.ws_id.clone(), stream: EventStream::Input };
        self.publisher.publish_to(&topic, json!(e), false)?;
        Ok(e)
    }

    pub fn set_body_pose(&mut self, part: BodyPart, pose: Pose) -> Result<(), BusError> {
        let topic = Topic::BodyPose { ws: self.ws_id.clone(), part: part.anchor_id().into() };
        self.publisher.publish_to(&topic, body_pose_payload(&pose, self.now_ms), true).map(|_| ())
    }

    fn rpc(&mut self, service: &str, op: &str, params: Value) -> Result<String, BusError> {
        let id = self.ids.issue();
        let req = RpcRequest { request_id: id.clone(), op: op.into(), params };
        self.publisher.publish_to(&rpc_topic(&self.ws_id, service, RpcDir::Request), json!(req), false)?;
        Ok(id)
    }

    /// Routes a placement through the authoring service; the response is
    /// available from [`SceneClient::take_response`].
    pub fn set_position(&mut self, id: &str, pose: Pose) -> Result<String, BusError> {
        let r = self.rpc(authoring::SERVICE, "set_position", json!({"id": id, "pose": pose}))?;
        self.own_requests.insert(r.clone());
        Ok(r)
    }

    /// Sends any authoring request on behalf of the user.
    pub fn authoring_request(&mut self, op: &str, params: Value) -> Result<String, BusError> {
        let r = self.rpc(authoring::SERVICE, op, params)?;
        self.own_requests.insert(r.clone());
        Ok(r)
    }

    pub fn take_response(&mut self, request_id: &str) -> Option<RpcResponse> {
        self.responses.remove(request_id)
    }

    /// Requests previews for the upcoming task of every robot shown by a
    /// path, waypoint or silhouette node.
    fn refresh_previews(&mut self) {
        let ws = self.replica.workstation();
        let mut wanted = BTreeSet::new();
        for fb in ws.feedback.values() {
            if !matches!(fb.kind.as_str(), "robot-path" | "robot-waypoints" | "robot-silhouette") {
                continue;
            }
            let Some(agent) = fb.str_prop("agent") else { continue };
            if let Some(t) = current_task(ws, &self.tracker.world, agent) {
                wanted.insert((agent.to_string(), t.id.clone()));
            }
        }
        for key in wanted.difference(&self.requested.clone()) {
            match self.rpc(preview::SERVICE, "get_preview", json!({"agent": key.0, "task": key.1})) {
                Ok(id) => {
                    self.preview_requests.insert(id, key.clone());
                    self.requested.insert(key.clone());
                }
                Err(e) => self.diagnostics.push(format!("preview request: {e}")),
            }
        }
    }

    fn on_rpc_response(&mut self, env: &Envelope) {
        let Ok(resp) = serde_json::from_value::<RpcResponse>(env.payload.clone()) else { return };
        if let Some(key) = self.preview_requests.remove(&resp.request_id) {
            match serde_json::from_value::<Option<TrajectoryRecording>>(resp.result.clone()) {
                Ok(Some(r)) => {
                    self.previews.insert(key, r);
                }
                Ok(None) => {}
                Err(e) => self.diagnostics.push(format!("preview payload: {e}")),
            }
        } else if self.own_requests.remove(&resp.request_id) {
            self.responses.insert(resp.request_id.clone(), resp);
        }
    }

    /// Read-only query endpoint for the UI.
    fn handle_query(&self, op: &str) -> Result<Value, String> {
        match op {
            "dump" => Ok(json!(self.dump_scene())),
            "nodes" => Ok(json!(self.nodes())),
            other => Err(format!("unknown op '{other}'")),
        }
    }

    pub fn query_service(&self) -> String {
        format!("scene-{}", self.name)
    }
}

impl Service for SceneClient {
    fn name(&self) -> &str {
        &self.name
    }

    fn filter(&self) -> String {
        format!("arthur/{}/#", self.ws_id)
    }

    fn on_message(&mut self, env: &Envelope, now_ms: u64) {
        self.now_ms = now_ms;
        let Ok(topic) = Topic::parse(&env.topic) else { return };
        match topic {
            Topic::Config { .. } | Topic::Deleted { .. } => {
                if self.replica.apply(env) {
                    self.refresh_previews();
                }
            }
            Topic::ConditionState { id, .. } => {
                if let Ok(s) = serde_json::from_value::<CondState>(env.payload.clone()) {
                    self.conds.insert(id, s);
                }
            }
            Topic::Fake { kind, .. } => {
                let agent = env.payload.get("agent").and_then(Value::as_str).unwrap_or_default().to_string();
                let res = match kind.as_str() {
                    "path" => serde_json::from_value(env.payload["samples"].clone()).map(|s| {
                        self.fake.path.insert(agent, s);
                    }),
                    "waypoints" => serde_json::from_value(env.payload["points"].clone()).map(|p| {
                        self.fake.waypoints.insert(agent, p);
                    }),
                    "messages" => serde_json::from_value(env.payload["messages"].clone()).map(|m| {
                        self.fake.messages = m;
                    }),
                    _ => Ok(()),
                };
                if let Err(e) = res {
                    self.diagnostics.push(format!("{}: {e}", env.topic));
                }
            }
            Topic::Rpc { service, dir: RpcDir::Response, .. }
                if service == preview::SERVICE || service == authoring::SERVICE =>
            {
                self.on_rpc_response(env)
            }
            Topic::Rpc { ref service, dir: RpcDir::Request, .. } if *service == self.query_service() => {
                let resp = match serde_json::from_value::<RpcRequest>(env.payload.clone()) {
                    Ok(req) => match self.handle_query(&req.op) {
                        Ok(v) => RpcResponse::ok(&req.request_id, v),
                        Err(e) => RpcResponse::err(&req.request_id, e),
                    },
                    Err(e) => RpcResponse::err("", format!("malformed request: {e}")),
                };
                let topic = rpc_topic(&self.ws_id, service, RpcDir::Response);
                let _ = self.publisher.publish_to(&topic, json!(resp), false);
            }
            Topic::TaskStatus { .. } => {
                if let Ok(m) = serde_json::from_value::<TaskStatusMsg>(env.payload.clone()) {
                    if m.status == TaskStatus::Completed {
                        if let Some(a) = &m.agent {
                            self.requested.remove(&(a.clone(), m.task.clone()));
                        }
                    }
                }
                self.tracker.apply(env);
                self.refresh_previews();
            }
            _ => {
                self.tracker.apply(env);
            }
        }
    }

    fn on_tick(&mut self, now_ms: u64) {
        self.now_ms = now_ms;
        self.tracker.advance(now_ms);
    }
}
