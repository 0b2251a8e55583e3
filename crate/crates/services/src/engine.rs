//! Condition evaluation, edge detection and action firing.
//!
//! Boundary rules: proximity `within` is `d < threshold`, `beyond` is
//! `d > threshold`; a tie is inactive. Gaze casts a ray from the head anchor
//! along its local +Z axis and hits when it passes within `radius` of the
//! target feedback's world position. Input-event conditions look for a matching
//! event no older than `window_ms` (inclusive).

use hrc_core::bus::{EventStream, Envelope, Publisher, Topic};
use hrc_core::pose::{dot, sub};
use hrc_core::registry::LOGIC_OPERANDS;
use hrc_core::{
    registry, resolve_anchor, validate_component, BodyPart, ComponentDescriptor, Edge, InputEvent,
    InputKind, RunState, TaskStatus, Vec3, WorldState, Workstation,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

use crate::replica::ConfigReplica;
use crate::service::{Heartbeat, Service};
use crate::tracker::WorldTracker;

/// Evaluation period of the engine loop.
pub const EVAL_PERIOD_MS: u64 = 50;
pub const DEFAULT_WINDOW_MS: u64 = 200;
pub const DEFAULT_GAZE_RADIUS: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CondState {
    pub active: bool,
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl CondState {
    fn ok(active: bool) -> Self {
        CondState { active, valid: true, reason: None }
    }

    fn invalid(reason: String) -> Self {
        CondState { active: false, valid: false, reason: Some(reason) }
    }

    /// Active and valid.
    pub fn holds(&self) -> bool {
        self.active && self.valid
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub condition: String,
    pub edge: Edge,
    pub t_ms: u64,
}

/// An action triggered by a binding. Carries the action's properties so
/// executors need no configuration lookup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionFiring {
    pub binding: String,
    pub action: String,
    pub kind: String,
    pub properties: BTreeMap<String, Value>,
    pub condition: String,
    pub edge: Edge,
    pub t_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub t_ms: u64,
    pub states: BTreeMap<String, CondState>,
    pub edges: Vec<EdgeRecord>,
    pub fired: Vec<ActionFiring>,
}

impl EvaluationReport {
    pub fn holds(&self, id: &str) -> bool {
        self.states.get(id).is_some_and(CondState::holds)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("cyclic logic conditions: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
}

/// Condition ids referenced by a logic condition.
pub fn operands(desc: &ComponentDescriptor) -> Vec<&str> {
    match desc.kind.as_str() {
        "and" | "or" => LOGIC_OPERANDS.iter().filter_map(|n| desc.str_prop(n)).collect(),
        "not" => desc.str_prop("operand").into_iter().collect(),
        _ => Vec::new(),
    }
}

/// All conditions ordered so that operands precede the logic conditions using
/// them. Ties follow id order.
pub fn evaluation_order(conditions: &BTreeMap<String, ComponentDescriptor>) -> Result<Vec<String>, EngineError> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Open,
        Done,
    }
    fn visit<'a>(
        id: &'a str,
        conditions: &'a BTreeMap<String, ComponentDescriptor>,
        marks: &mut BTreeMap<&'a str, Mark>,
        stack: &mut Vec<&'a str>,
        out: &mut Vec<String>,
    ) -> Result<(), EngineError> {
        match marks.get(id) {
            Some(Mark::Done) => return Ok(()),
            Some(Mark::Open) => {
                let start = stack.iter().position(|s| *s == id).unwrap_or(0);
                let mut cycle: Vec<String> = stack[start..].iter().map(|s| s.to_string()).collect();
                cycle.push(id.to_string());
                return Err(EngineError::Cycle(cycle));
            }
            None => {}
        }
        let Some(desc) = conditions.get(id) else {
            return Ok(());
        };
        marks.insert(id, Mark::Open);
        stack.push(id);
        for op in operands(desc) {
            if let Some((k, _)) = conditions.get_key_value(op) {
                visit(k, conditions, marks, stack, out)?;
            }
        }
        stack.pop();
        marks.insert(id, Mark::Done);
        out.push(id.to_string());
        Ok(())
    }
    let mut marks = BTreeMap::new();
    let mut out = Vec::with_capacity(conditions.len());
    for id in conditions.keys() {
        visit(id, conditions, &mut marks, &mut Vec::new(), &mut out)?;
    }
    Ok(out)
}

fn window(desc: &ComponentDescriptor) -> u64 {
    desc.value_or_default(registry(), "window_ms").and_then(Value::as_u64).unwrap_or(DEFAULT_WINDOW_MS)
}

fn prop_f64(desc: &ComponentDescriptor, name: &str) -> Option<f64> {
    desc.value_or_default(registry(), name).and_then(Value::as_f64)
}

fn recent<'w>(world: &'w WorldState, kind: InputKind, window_ms: u64, pred: impl Fn(&InputEvent) -> bool) -> bool {
    world.events.iter().any(|e: &'w InputEvent| {
        e.kind == kind && !e.unresolved && e.t_ms <= world.t_ms && world.t_ms - e.t_ms <= window_ms && pred(e)
    })
}

/// Does the ray from `origin` along unit `dir` pass within `radius` of `center`?
pub fn ray_hits_sphere(origin: Vec3, dir: Vec3, center: Vec3, radius: f64) -> bool {
    let oc = sub(center, origin);
    let t = dot(oc, dir);
    let d2 = dot(oc, oc);
    if t < 0.0 {
        return d2 <= radius * radius;
    }
    d2 - t * t <= radius * radius
}

fn gazed_at(ws: &Workstation, world: &WorldState, target: &str, radius: f64) -> bool {
    let Some(head) = world.body.get(&BodyPart::UserHead) else {
        return false;
    };
    let Some(fb) = ws.feedback.get(target) else {
        return false;
    };
    let Some(Ok(p)) = ws.feedback_pose(fb, world) else {
        return false;
    };
    let dir = head.orientation.rotate([0.0, 0.0, 1.0]);
    ray_hits_sphere(head.position, dir, p.position, radius)
}

fn cross2(o: Vec3, a: Vec3, b: Vec3) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Counter-clockwise convex hull of the XY projection (monotone chain).
pub fn convex_hull_xy(points: &[Vec3]) -> Vec<Vec3> {
    let mut pts: Vec<Vec3> = points.iter().map(|p| [p[0], p[1], 0.0]).collect();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Vec3> = Vec::with_capacity(pts.len() * 2);
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Vec3>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for p in iter {
            while hull.len() >= start + 2 && cross2(hull[hull.len() - 2], hull[hull.len() - 1], *p) <= 0.0 {
                hull.pop();
            }
            hull.push(*p);
        }
        hull.pop();
    }
    hull
}

/// Point-in-hull test on the XY plane; boundary counts as inside.
pub fn inside_hull_xy(hull: &[Vec3], p: Vec3) -> bool {
    if hull.len() < 3 {
        return false;
    }
    (0..hull.len()).all(|i| cross2(hull[i], hull[(i + 1) % hull.len()], p) >= 0.0)
}

/// Evaluates one condition. `done` holds the states of conditions evaluated
/// earlier in the same pass; logic operands must be among them.
pub fn evaluate(
    desc: &ComponentDescriptor,
    ws: &Workstation,
    world: &WorldState,
    done: &BTreeMap<String, CondState>,
) -> CondState {
    if let Err(v) = validate_component(desc, registry(), ws) {
        let reason = v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ");
        return CondState::invalid(reason);
    }
    let s = |n: &str| desc.str_prop(n).unwrap_or_default();
    let robot = |n: &str| world.robots.get(desc.str_prop(n).unwrap_or_default());
    let active = match desc.kind.as_str() {
        "proximity" => {
            let a = resolve_anchor(s("a"), ws, world);
            let b = resolve_anchor(s("b"), ws, world);
            match (a, b) {
                (Ok(a), Ok(b)) => {
                    let d = hrc_core::pose::distance(a.position, b.position);
                    let thr = prop_f64(desc, "threshold").unwrap_or(0.0);
                    if s("direction") == "beyond" {
                        d > thr
                    } else {
                        d < thr
                    }
                }
                _ => false,
            }
        }
        "inside-zone" => match (world.zones.get(s("zone")), resolve_anchor(s("anchor"), ws, world)) {
            (Some(pts), Ok(p)) => inside_hull_xy(&convex_hull_xy(pts), p.position),
            _ => false,
        },
        "gaze" => {
            let target = s("target");
            gazed_at(ws, world, target, prop_f64(desc, "radius").unwrap_or(DEFAULT_GAZE_RADIUS))
                || recent(world, InputKind::Gaze, DEFAULT_WINDOW_MS, |e| e.target == target)
        }
        "gaze-pinch" => {
            let target = s("target");
            let w = window(desc);
            let looking = gazed_at(ws, world, target, prop_f64(desc, "radius").unwrap_or(DEFAULT_GAZE_RADIUS))
                || recent(world, InputKind::Gaze, w, |e| e.target == target);
            looking && recent(world, InputKind::Pinch, w, |e| e.target == target || e.target == "*")
        }
        "poke" => {
            let target = s("target");
            recent(world, InputKind::Poke, window(desc), |e| e.target == target)
        }
        "speech-command" => {
            let cmd = s("command").trim().to_lowercase();
            recent(world, InputKind::Speech, window(desc), |e| e.target.trim().to_lowercase() == cmd)
        }
        "operator-skill" => {
            let level = desc.i64_prop("level").unwrap_or(0);
            match ws.agents.get(s("agent")).and_then(|a| a.skill_level()) {
                Some(k) => match s("comparison") {
                    "at-least" => i64::from(k) >= level,
                    "at-most" => i64::from(k) <= level,
                    _ => i64::from(k) == level,
                },
                None => false,
            }
        }
        "robot-run-state" => robot("agent").is_some_and(|r| Some(r.run_state) == RunState::parse(s("state"))),
        "robot-moving" => robot("agent").is_some_and(|r| r.moving),
        "robot-assistance" => robot("agent").is_some_and(|r| r.assistance),
        "robot-sensor-threshold" => {
            let thr = prop_f64(desc, "threshold").unwrap_or(0.0);
            match robot("agent").and_then(|r| r.sensors.get(s("sensor"))) {
                Some(v) if s("comparison") == "above" => *v > thr,
                Some(v) => *v < thr,
                None => false,
            }
        }
        "workstation-button" => {
            let b = s("button");
            recent(world, InputKind::Button, window(desc), |e| e.target == b)
        }
        "message-received" => {
            let (ch, needle) = (s("channel"), desc.value_or_default(registry(), "contains").and_then(Value::as_str).unwrap_or(""));
            recent(world, InputKind::Message, window(desc), |e| {
                e.target == ch && e.payload.as_deref().unwrap_or("").contains(needle)
            })
        }
        "task-status" => {
            let want = TaskStatus::parse(s("status"));
            world.tasks.get(s("task")).is_some_and(|t| Some(t.status) == want)
        }
        "task-assigned-to" => {
            let task = s("task");
            let agent = world
                .tasks
                .get(task)
                .and_then(|t| t.agent.as_deref())
                .or_else(|| ws.tasks.get(task).and_then(|t| t.agent.as_deref()));
            agent == Some(s("agent"))
        }
        "and" | "or" | "not" => {
            let mut vals = Vec::new();
            for op in operands(desc) {
                match done.get(op) {
                    Some(st) => vals.push(st.holds()),
                    None => return CondState::invalid(format!("operand '{op}' not evaluated")),
                }
            }
            match desc.kind.as_str() {
                "and" => vals.iter().all(|v| *v),
                "or" => vals.iter().any(|v| *v),
                _ => !vals[0],
            }
        }
        other => return CondState::invalid(format!("no evaluator for '{other}'")),
    };
    CondState::ok(active)
}

/// Evaluates every condition, marks edges against `prev` and collects the
/// bound actions to fire.
pub fn evaluate_all(
    ws: &Workstation,
    world: &WorldState,
    prev: Option<&EvaluationReport>,
) -> Result<EvaluationReport, EngineError> {
    let order = evaluation_order(&ws.conditions)?;
    let mut states = BTreeMap::new();
    for id in &order {
        let st = evaluate(&ws.conditions[id], ws, world, &states);
        states.insert(id.clone(), st);
    }
    let mut edges = Vec::new();
    for (id, st) in &states {
        let was = prev.is_some_and(|p| p.holds(id));
        let now = st.holds();
        if now != was {
            edges.push(EdgeRecord {
                condition: id.clone(),
                edge: if now { Edge::Rising } else { Edge::Falling },
                t_ms: world.t_ms,
            });
        }
    }
    let mut fired = Vec::new();
    for b in ws.bindings.values() {
        let Some(action) = ws.actions.get(&b.action) else {
            continue;
        };
        let fire = match b.edge {
            Edge::WhileActive => states.get(&b.condition).is_some_and(CondState::holds),
            e => edges.iter().any(|r| r.condition == b.condition && r.edge == e),
        };
        if fire {
            fired.push(ActionFiring {
                binding: b.id.clone(),
                action: action.id.clone(),
                kind: action.kind.clone(),
                properties: action.properties.clone(),
                condition: b.condition.clone(),
                edge: b.edge,
                t_ms: world.t_ms,
            });
        }
    }
    Ok(EvaluationReport { t_ms: world.t_ms, states, edges, fired })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Visibility {
    pub visible: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

/// Visibility verdict of a feedback: enabled, and its visibility condition (if
/// any) active and valid. Fails closed.
pub fn visibility(feedback: &ComponentDescriptor, states: &BTreeMap<String, CondState>) -> Visibility {
    if !feedback.enabled {
        return Visibility { visible: false, diagnostic: None };
    }
    match &feedback.visible_when {
        None => Visibility { visible: true, diagnostic: None },
        Some(c) => match states.get(c) {
            Some(st) if st.valid => Visibility { visible: st.active, diagnostic: None },
            Some(st) => Visibility {
                visible: false,
                diagnostic: Some(format!("visibility condition '{c}' invalid: {}", st.reason.clone().unwrap_or_default())),
            },
            None => Visibility { visible: false, diagnostic: Some(format!("visibility condition '{c}' unknown")) },
        },
    }
}

/// Condition ids a feedback, condition or binding would leave dangling if
/// `target` disappeared.
pub fn condition_dependents(ws: &Workstation, target: &str) -> Vec<String> {
    let mut out = BTreeSet::new();
    for c in ws.conditions.values() {
        if operands(c).contains(&target) {
            out.insert(c.id.clone());
        }
    }
    for f in ws.feedback.values() {
        if f.visible_when.as_deref() == Some(target) {
            out.insert(f.id.clone());
        }
    }
    out.into_iter().collect()
}

/// The condition engine as a bus service.
pub struct EngineService {
    ws_id: String,
    publisher: Publisher,
    replica: ConfigReplica,
    tracker: WorldTracker,
    last: Option<EvaluationReport>,
    published: BTreeMap<String, CondState>,
    next_eval: u64,
    heartbeat: Heartbeat,
}

impl EngineService {
    pub const NAME: &'static str = "condition-engine";

    pub fn new(ws_id: &str, publisher: Publisher) -> Self {
        EngineService {
            ws_id: ws_id.into(),
            publisher,
            replica: ConfigReplica::new(ws_id),
            tracker: WorldTracker::new(ws_id),
            last: None,
            published: BTreeMap::new(),
            next_eval: 0,
            heartbeat: Heartbeat::new(ws_id, Self::NAME),
        }
    }

    pub fn last_report(&self) -> Option<&EvaluationReport> {
        self.last.as_ref()
    }

    pub fn world(&self) -> &WorldState {
        &self.tracker.world
    }

    /// Runs one evaluation pass and publishes its results.
    pub fn step(&mut self, now_ms: u64) {
        self.tracker.advance(now_ms);
        let ws = self.replica.workstation();
        let report = match evaluate_all(ws, &self.tracker.world, self.last.as_ref()) {
            Ok(r) => r,
            Err(e) => {
                self.heartbeat.detail = Some(e.to_string());
                return;
            }
        };
        self.heartbeat.detail = None;
        for (id, st) in &report.states {
            if self.published.get(id) != Some(st) {
                let topic = Topic::ConditionState { ws: self.ws_id.clone(), id: id.clone() };
                let _ = self.publisher.publish_to(
                    &topic,
                    json!({"condition": id, "active": st.active, "valid": st.valid, "reason": st.reason, "t_ms": now_ms}),
                    true,
                );
                self.published.insert(id.clone(), st.clone());
            }
        }
        let gone: Vec<String> = self.published.keys().filter(|k| !report.states.contains_key(*k)).cloned().collect();
        for id in gone {
            let _ = self.publisher.clear_retained(&Topic::ConditionState { ws: self.ws_id.clone(), id: id.clone() });
            self.published.remove(&id);
        }
        let events = |s| Topic::Events { ws: self.ws_id.clone(), stream: s };
        for e in &report.edges {
            let _ = self.publisher.publish_to(&events(EventStream::Condition), json!(e), false);
        }
        for f in &report.fired {
            let _ = self.publisher.publish_to(&events(EventStream::Action), json!(f), false);
        }
        self.last = Some(report);
    }
}

impl Service for EngineService {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn filter(&self) -> String {
        format!("arthur/{}/#", self.ws_id)
    }

    fn on_message(&mut self, env: &Envelope, _now_ms: u64) {
        if !self.replica.apply(env) {
            self.tracker.apply(env);
        }
    }

    fn on_tick(&mut self, now_ms: u64) {
        self.heartbeat.tick(&self.publisher, now_ms);
        if now_ms >= self.next_eval {
            self.next_eval = now_ms - now_ms % EVAL_PERIOD_MS + EVAL_PERIOD_MS;
            self.step(now_ms);
        }
    }
}
