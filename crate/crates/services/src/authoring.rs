//! Owner of the workstation configuration.
//!
//! Every mutation works on a copy of the workstation, is checked as a whole,
//! bumps the revision, is persisted, and only then published as retained
//! config topics. A failed mutation leaves the revision, the store and the bus
//! untouched.

use crate::engine::evaluation_order;
use crate::fake;
use crate::process::{self, ProcessDoc};
use crate::replica::{self, Meta, META_ID};
use crate::service::{rpc_topic, Heartbeat, RpcRequest, RpcResponse, Service};
use crate::store::{load_workstation, save_workstation, StoreError};
use crate::tracker::MessageMsg;
use hrc_core::anchor::AnchorError;
use hrc_core::bus::{ConfigCategory, EventStream, Envelope, Publisher, RpcDir, Topic};
use hrc_core::property::{check_value, RefTarget};
use hrc_core::{
    registry, resolve_anchor, validate_component, Agent, AgentRole, Anchor, AnchorParent, Binding, BodyPart,
    Category, ComponentDescriptor, Edge, Material, Phase, Pose, PropertyKind, TaskSpec, Tracker, Violation,
    WorldState, Workstation,
};
use serde::Deserialize;
use serde_json::{json, Value};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::PathBuf;
use thiserror::Error;
use tracing::{info, warn};

pub const SERVICE: &str = "authoring";

#[derive(Debug, Error)]
pub enum AuthoringError {
    #[error("validation failed for '{id}': {}", join(.violations))]
    Validation { id: String, violations: Vec<Violation> },
    #[error("unknown id '{0}'")]
    UnknownId(String),
    #[error("id '{0}' already in use")]
    DuplicateId(String),
    #[error("'{op}' is not permitted in the {phase} phase")]
    Phase { phase: Phase, op: String },
    #[error("'{id}' is still referenced by: {}", .dependents.join(", "))]
    Dependents { id: String, dependents: Vec<String> },
    #[error("'{0}' is an implicit condition managed by its feedback")]
    ImplicitManaged(String),
    #[error("'{0}' cannot be re-positioned")]
    NotPositionable(String),
    #[error("cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("unsupported fake data kind '{0}' (expected one of path, waypoints, zones, messages)")]
    UnsupportedFakeKind(String),
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

type Result<T> = std::result::Result<T, AuthoringError>;

#[derive(Debug, Clone)]
pub struct AuthoringConfig {
    /// Interactive feedback kind → kind of the condition created with it.
    pub implicit: BTreeMap<String, String>,
    pub store: Option<PathBuf>,
}

impl Default for AuthoringConfig {
    fn default() -> Self {
        let implicit = [("indicator-3d", "poke"), ("task-model-highlight", "gaze-pinch")]
            .into_iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        AuthoringConfig { implicit, store: None }
    }
}

/// Every entity id that refers to `id`.
pub fn referrers(ws: &Workstation, id: &str) -> Vec<String> {
    let mut out = BTreeSet::new();
    for a in ws.anchors.values() {
        match &a.parent {
            AnchorParent::TrackerRoot(p) | AnchorParent::Anchor(p) if p == id => {
                out.insert(a.id.clone());
            }
            _ => {}
        }
    }
    for t in ws.trackers.values().filter(|t| t.root_anchor == id) {
        out.insert(t.id.clone());
    }
    for ag in ws.agents.values().filter(|a| a.mount_anchor() == Some(id)) {
        out.insert(ag.id.clone());
    }
    let reg = registry();
    for (_, d) in ws.all_components() {
        let by_prop = reg.lookup(&d.kind).is_some_and(|spec| {
            spec.properties.iter().any(|p| {
                let is_ref = matches!(p.kind, PropertyKind::Anchor | PropertyKind::Agent | PropertyKind::Condition)
                    || p.refers_to.is_some();
                is_ref && d.str_prop(&p.name) == Some(id)
            })
        });
        if by_prop || d.visible_when.as_deref() == Some(id) || d.owner.as_deref() == Some(id) {
            out.insert(d.id.clone());
        }
    }
    for b in ws.bindings.values().filter(|b| b.condition == id || b.action == id) {
        out.insert(b.id.clone());
    }
    for t in ws.tasks.values() {
        let hit = t.predecessors.iter().any(|p| p == id)
            || t.agent.as_deref() == Some(id)
            || t.parts.iter().any(|p| p == id)
            || t.tools.iter().any(|p| p == id)
            || t.step.as_ref().is_some_and(|s| s.anchor == id);
        if hit {
            out.insert(t.id.clone());
        }
    }
    for m in ws.parts.values().chain(ws.tools.values()) {
        if m.anchor.as_deref() == Some(id) {
            out.insert(m.id.clone());
        }
    }
    out.remove(id);
    out.into_iter().collect()
}

/// Dangling references to feedback or conditions are kept after deletion and
/// surface as invalid conditions at evaluation time.
fn tolerated(ws: &Workstation, owner: &str, v: &Violation) -> bool {
    let Violation::DanglingReference { property, .. } = v else {
        return false;
    };
    if property == "visible_when" {
        return true;
    }
    ws.component(owner)
        .and_then(|(_, d)| registry().lookup(&d.kind))
        .and_then(|s| s.property(property))
        .is_some_and(|p| p.kind == PropertyKind::Condition || p.refers_to == Some(RefTarget::Feedback))
}

/// Robot base pose in world coordinates, resolvable without live data.
pub fn robot_base(ws: &Workstation, agent: &Agent) -> std::result::Result<Pose, AnchorError> {
    match &agent.role {
        AgentRole::Robot { mount_anchor, mount_offset, .. } => {
            resolve_anchor(mount_anchor, ws, &WorldState::default()).map(|p| p.compose(mount_offset))
        }
        AgentRole::Operator { .. } => Err(AnchorError::Unresolved { anchor: agent.id.clone(), missing: "mount".into() }),
    }
}

pub struct AuthoringService {
    ws: Workstation,
    cfg: AuthoringConfig,
    publisher: Publisher,
    heartbeat: Heartbeat,
    now_ms: u64,
    pub diagnostics: Vec<String>,
}

impl AuthoringService {
    /// Starts from the configured store if it exists, else from an empty
    /// workstation, and publishes the full configuration.
    pub fn open(ws_id: &str, name: &str, publisher: Publisher, cfg: AuthoringConfig) -> Result<Self> {
        let ws = match &cfg.store {
            Some(p) if p.exists() => load_workstation(p)?,
            _ => Workstation::new(ws_id, name),
        };
        Ok(Self::with_workstation(ws, publisher, cfg))
    }

    pub fn with_workstation(ws: Workstation, publisher: Publisher, cfg: AuthoringConfig) -> Self {
        let heartbeat = Heartbeat::new(&ws.id, SERVICE);
        let s = AuthoringService { ws, cfg, publisher, heartbeat, now_ms: 0, diagnostics: Vec::new() };
        s.publish_all();
        s
    }

    pub fn workstation(&self) -> &Workstation {
        &self.ws
    }

    pub fn snapshot(&self) -> Workstation {
        self.ws.clone()
    }

    pub fn revision(&self) -> u64 {
        self.ws.revision
    }

    pub fn set_now(&mut self, now_ms: u64) {
        self.now_ms = now_ms;
    }

    fn config_topic(&self, category: ConfigCategory, id: &str) -> Topic {
        Topic::Config { ws: self.ws.id.clone(), category, id: id.to_string() }
    }

    /// Publishes every entity and the meta record, retained.
    pub fn publish_all(&self) {
        for ((cat, id), v) in replica::entities(&self.ws) {
            let _ = self.publisher.publish_to(&self.config_topic(cat, &id), v, true);
        }
        self.publish_meta();
    }

    fn publish_meta(&self) {
        let meta = serde_json::to_value(Meta::of(&self.ws)).expect("meta serializes");
        let _ = self.publisher.publish_to(&self.config_topic(ConfigCategory::Meta, META_ID), meta, true);
    }

    fn structural(&self, op: &str) -> Result<()> {
        if self.ws.phase == Phase::Operation {
            return Err(AuthoringError::Phase { phase: self.ws.phase, op: op.into() });
        }
        Ok(())
    }

    fn check(&self, new: &Workstation) -> Result<()> {
        let old: BTreeSet<(String, String)> =
            self.ws.integrity_violations().into_iter().map(|(id, v)| (id, v.to_string())).collect();
        let mut fresh: BTreeMap<String, Vec<Violation>> = BTreeMap::new();
        for (id, v) in new.integrity_violations() {
            if !tolerated(new, &id, &v) && !old.contains(&(id.clone(), v.to_string())) {
                fresh.entry(id).or_default().push(v);
            }
        }
        if let Some((id, violations)) = fresh.into_iter().next() {
            return Err(AuthoringError::Validation { id, violations });
        }
        if let Err(crate::engine::EngineError::Cycle(c)) = evaluation_order(&new.conditions) {
            return Err(AuthoringError::Cycle(c));
        }
        let mut world = WorldState::default();
        for b in BodyPart::ALL {
            world.body.insert(b, Pose::IDENTITY);
        }
        for a in new.anchors.keys() {
            if let Err(AnchorError::Cycle(c)) = resolve_anchor(a, new, &world) {
                return Err(AuthoringError::Cycle(c));
            }
        }
        Ok(())
    }

    /// Checks, persists and publishes `new` as the next revision.
    fn commit(&mut self, mut new: Workstation) -> Result<u64> {
        self.check(&new)?;
        new.revision = self.ws.revision + 1;
        if let Some(p) = &self.cfg.store {
            save_workstation(p, &new)?;
        }
        let d = replica::diff(&self.ws, &new);
        let old = std::mem::replace(&mut self.ws, new);
        drop(old);
        for (cat, id, v) in d.upserts {
            let _ = self.publisher.publish_to(&self.config_topic(cat, &id), v, true);
        }
        for (cat, id) in d.deletes {
            let _ = self.publisher.clear_retained(&self.config_topic(cat, &id));
            let tomb = Topic::Deleted { ws: self.ws.id.clone(), id: id.clone() };
            let _ = self.publisher.publish_to(&tomb, replica::tombstone(cat, &id), false);
        }
        self.publish_meta();
        Ok(self.ws.revision)
    }

    // ---- components ----

    pub fn create_component(&mut self, kind: &str, properties: BTreeMap<String, Value>) -> Result<String> {
        self.create_descriptor(ComponentDescriptor::new("", kind, properties))
    }

    /// Creates a component from a full descriptor. An empty id is generated.
    pub fn create_descriptor(&mut self, mut desc: ComponentDescriptor) -> Result<String> {
        self.structural("create_component")?;
        let Some(spec) = registry().lookup(&desc.kind) else {
            return Err(AuthoringError::Validation {
                id: desc.id.clone(),
                violations: vec![Violation::UnknownKind { kind: desc.kind.clone() }],
            });
        };
        let mut new = self.ws.clone();
        if desc.id.is_empty() {
            desc.id = new.fresh_id(&desc.kind);
        } else if new.id_in_use(&desc.id) {
            return Err(AuthoringError::DuplicateId(desc.id));
        }
        desc.implicit = false;
        desc.owner = None;
        validate_component(&desc, registry(), &new)
            .map_err(|violations| AuthoringError::Validation { id: desc.id.clone(), violations })?;
        let id = desc.id.clone();
        let category = spec.category;
        new.components_mut(category).insert(id.clone(), desc);
        if category == Category::Feedback {
            if let Some(ckind) = self.cfg.implicit.get(&spec.kind) {
                let cid = new.fresh_id(ckind);
                let mut c = ComponentDescriptor::new(&cid, ckind, BTreeMap::from([("target".to_string(), json!(id))]));
                c.implicit = true;
                c.owner = Some(id.clone());
                new.conditions.insert(cid, c);
            }
        }
        self.commit(new)?;
        Ok(id)
    }

    /// Implicit conditions owned by a feedback.
    pub fn implicit_of(&self, feedback: &str) -> Vec<String> {
        self.ws.conditions.values().filter(|c| c.owner.as_deref() == Some(feedback)).map(|c| c.id.clone()).collect()
    }

    pub fn update_property(&mut self, id: &str, name: &str, value: Value) -> Result<u64> {
        let (cat, desc) = self.ws.component(id).ok_or_else(|| AuthoringError::UnknownId(id.into()))?;
        if desc.implicit && name == "target" {
            return Err(AuthoringError::ImplicitManaged(id.into()));
        }
        let spec = registry().lookup(&desc.kind).ok_or_else(|| AuthoringError::Validation {
            id: id.into(),
            violations: vec![Violation::UnknownKind { kind: desc.kind.clone() }],
        })?;
        let Some(schema) = spec.property(name) else {
            return Err(AuthoringError::Validation {
                id: id.into(),
                violations: vec![Violation::UnknownProperty { property: name.into() }],
            });
        };
        let mut new = self.ws.clone();
        let d = new.components_mut(cat).get_mut(id).expect("present");
        if value.is_null() {
            if schema.required {
                return Err(AuthoringError::Validation {
                    id: id.into(),
                    violations: vec![Violation::MissingProperty { property: name.into() }],
                });
            }
            d.properties.remove(name);
        } else {
            let v = check_value(schema, &value, &self.ws);
            if !v.is_empty() {
                return Err(AuthoringError::Validation { id: id.into(), violations: v });
            }
            d.properties.insert(name.into(), value);
        }
        self.commit(new)
    }

    pub fn set_visibility(&mut self, id: &str, condition: Option<&str>) -> Result<u64> {
        let mut new = self.ws.clone();
        let d = new.feedback.get_mut(id).ok_or_else(|| AuthoringError::UnknownId(id.into()))?;
        if let Some(c) = condition {
            if !self.ws.conditions.contains_key(c) {
                return Err(AuthoringError::Validation {
                    id: id.into(),
                    violations: vec![Violation::DanglingReference { property: "visible_when".into(), target: c.into() }],
                });
            }
        }
        d.visible_when = condition.map(str::to_string);
        self.commit(new)
    }

    pub fn set_enabled(&mut self, id: &str, enabled: bool) -> Result<u64> {
        let mut new = self.ws.clone();
        let d = new.feedback.get_mut(id).ok_or_else(|| AuthoringError::UnknownId(id.into()))?;
        d.enabled = enabled;
        self.commit(new)
    }

    /// Deletes a component, its implicit conditions and every binding that
    /// used any of them.
    pub fn delete_component(&mut self, id: &str) -> Result<u64> {
        let (cat, desc) = self.ws.component(id).ok_or_else(|| AuthoringError::UnknownId(id.into()))?;
        if desc.implicit {
            return Err(AuthoringError::ImplicitManaged(id.into()));
        }
        self.structural("delete_component")?;
        let mut new = self.ws.clone();
        let mut removed = vec![id.to_string()];
        new.components_mut(cat).remove(id);
        if cat == Category::Feedback {
            for c in self.implicit_of(id) {
                new.conditions.remove(&c);
                removed.push(c);
            }
        }
        new.bindings.retain(|_, b| !removed.contains(&b.condition) && !removed.contains(&b.action));
        self.commit(new)
    }

    pub fn add_binding(&mut self, condition: &str, action: &str, edge: Edge) -> Result<String> {
        self.structural("add_binding")?;
        let mut new = self.ws.clone();
        let id = new.fresh_id("binding");
        new.bindings.insert(id.clone(), Binding { id: id.clone(), condition: condition.into(), action: action.into(), edge });
        self.commit(new)?;
        Ok(id)
    }

    pub fn remove_binding(&mut self, id: &str) -> Result<u64> {
        self.structural("remove_binding")?;
        let mut new = self.ws.clone();
        new.bindings.remove(id).ok_or_else(|| AuthoringError::UnknownId(id.into()))?;
        self.commit(new)
    }

    // ---- agents, trackers, anchors, materials, tasks ----

    fn insert_new<T>(&mut self, op: &str, id: &str, f: impl FnOnce(&mut Workstation) -> T) -> Result<u64> {
        self.structural(op)?;
        if id.is_empty() {
            return Err(AuthoringError::Invalid("empty id".into()));
        }
        if self.ws.id_in_use(id) {
            return Err(AuthoringError::DuplicateId(id.into()));
        }
        let mut new = self.ws.clone();
        f(&mut new);
        self.commit(new)
    }

    fn remove_entity(&mut self, op: &str, id: &str, f: impl FnOnce(&mut Workstation) -> bool) -> Result<u64> {
        self.structural(op)?;
        let mut new = self.ws.clone();
        if !f(&mut new) {
            return Err(AuthoringError::UnknownId(id.into()));
        }
        let dependents = referrers(&new, id);
        if !dependents.is_empty() {
            return Err(AuthoringError::Dependents { id: id.into(), dependents });
        }
        self.commit(new)
    }

    pub fn add_agent(&mut self, agent: Agent) -> Result<u64> {
        let id = agent.id.clone();
        self.insert_new("add_agent", &id, |ws| ws.agents.insert(id.clone(), agent))
    }

    pub fn update_agent(&mut self, agent: Agent) -> Result<u64> {
        if !self.ws.agents.contains_key(&agent.id) {
            return Err(AuthoringError::UnknownId(agent.id));
        }
        let mut new = self.ws.clone();
        new.agents.insert(agent.id.clone(), agent);
        self.commit(new)
    }

    pub fn remove_agent(&mut self, id: &str) -> Result<u64> {
        self.remove_entity("remove_agent", id, |ws| ws.agents.remove(id).is_some())
    }

    /// Adds a tracker together with its root anchor `<id>-root`.
    pub fn add_tracker(&mut self, id: &str, label: &str, world_pose: Pose) -> Result<String> {
        let root = format!("{id}-root");
        if self.ws.id_in_use(&root) {
            return Err(AuthoringError::DuplicateId(root));
        }
        self.insert_new("add_tracker", id, |ws| {
            ws.trackers.insert(
                id.into(),
                Tracker { id: id.into(), label: label.into(), world_pose, root_anchor: root.clone() },
            );
            ws.anchors.insert(
                root.clone(),
                Anchor {
                    id: root.clone(),
                    label: format!("{label} origin"),
                    parent: AnchorParent::TrackerRoot(id.into()),
                    local_pose: Pose::IDENTITY,
                },
            );
        })?;
        Ok(root)
    }

    pub fn set_tracker_pose(&mut self, id: &str, world_pose: Pose) -> Result<u64> {
        let mut new = self.ws.clone();
        new.trackers.get_mut(id).ok_or_else(|| AuthoringError::UnknownId(id.into()))?.world_pose = world_pose;
        self.commit(new)
    }

    /// Removes a tracker and its root anchor; rejected while anything else
    /// hangs off the root.
    pub fn remove_tracker(&mut self, id: &str) -> Result<u64> {
        self.structural("remove_tracker")?;
        let t = self.ws.trackers.get(id).ok_or_else(|| AuthoringError::UnknownId(id.into()))?;
        let root = t.root_anchor.clone();
        let mut new = self.ws.clone();
        new.trackers.remove(id);
        new.anchors.remove(&root);
        let mut dependents = referrers(&new, &root);
        dependents.extend(referrers(&new, id));
        dependents.retain(|d| d != id && d != &root);
        if !dependents.is_empty() {
            dependents.sort();
            dependents.dedup();
            return Err(AuthoringError::Dependents { id: id.into(), dependents });
        }
        self.commit(new)
    }

    pub fn add_anchor(&mut self, anchor: Anchor) -> Result<u64> {
        if matches!(anchor.parent, AnchorParent::TrackerRoot(_) | AnchorParent::Body(_)) {
            return Err(AuthoringError::Invalid("root anchors are created with their tracker".into()));
        }
        let id = anchor.id.clone();
        self.insert_new("add_anchor", &id, |ws| ws.anchors.insert(id.clone(), anchor))
    }

    pub fn update_anchor(&mut self, anchor: Anchor) -> Result<u64> {
        let old = self.ws.anchors.get(&anchor.id).ok_or_else(|| AuthoringError::UnknownId(anchor.id.clone()))?;
        if old.is_root() && (old.parent != anchor.parent || old.local_pose != anchor.local_pose) {
            return Err(AuthoringError::NotPositionable(anchor.id));
        }
        let mut new = self.ws.clone();
        new.anchors.insert(anchor.id.clone(), anchor);
        self.commit(new)
    }

    pub fn remove_anchor(&mut self, id: &str) -> Result<u64> {
        if self.ws.anchors.get(id).is_some_and(Anchor::is_root) {
            return Err(AuthoringError::Invalid(format!("'{id}' is a root anchor")));
        }
        self.remove_entity("remove_anchor", id, |ws| ws.anchors.remove(id).is_some())
    }

    pub fn add_tool(&mut self, m: Material) -> Result<u64> {
        let id = m.id.clone();
        self.insert_new("add_tool", &id, |ws| ws.tools.insert(id.clone(), m))
    }

    pub fn add_part(&mut self, m: Material) -> Result<u64> {
        let id = m.id.clone();
        self.insert_new("add_part", &id, |ws| ws.parts.insert(id.clone(), m))
    }

    pub fn update_material(&mut self, m: Material) -> Result<u64> {
        let mut new = self.ws.clone();
        let slot = if new.tools.contains_key(&m.id) {
            new.tools.get_mut(&m.id)
        } else {
            new.parts.get_mut(&m.id)
        };
        let id = m.id.clone();
        *slot.ok_or(AuthoringError::UnknownId(id))? = m;
        self.commit(new)
    }

    pub fn remove_material(&mut self, id: &str) -> Result<u64> {
        self.remove_entity("remove_material", id, |ws| ws.tools.remove(id).is_some() || ws.parts.remove(id).is_some())
    }

    pub fn add_task(&mut self, t: TaskSpec) -> Result<u64> {
        let id = t.id.clone();
        self.insert_new("add_task", &id, |ws| ws.tasks.insert(id.clone(), t))
    }

    pub fn update_task(&mut self, t: TaskSpec) -> Result<u64> {
        if !self.ws.tasks.contains_key(&t.id) {
            return Err(AuthoringError::UnknownId(t.id));
        }
        let mut new = self.ws.clone();
        new.tasks.insert(t.id.clone(), t);
        self.check_process(&new)?;
        self.commit(new)
    }

    pub fn remove_task(&mut self, id: &str) -> Result<u64> {
        self.remove_entity("remove_task", id, |ws| ws.tasks.remove(id).is_some())
    }

    fn check_process(&self, ws: &Workstation) -> Result<()> {
        let preds: BTreeMap<&str, Vec<&str>> = ws
            .tasks
            .values()
            .map(|t| (t.id.as_str(), t.predecessors.iter().map(String::as_str).collect()))
            .collect();
        match process::find_cycle(&preds) {
            Some(c) => Err(AuthoringError::Cycle(c)),
            None => Ok(()),
        }
    }

    /// Adds an imported bill of process and materials.
    pub fn import_process(&mut self, doc: &ProcessDoc) -> Result<u64> {
        self.structural("import_process")?;
        if let Err(v) = process::validate(doc) {
            let msg = v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ");
            return Err(AuthoringError::Invalid(msg));
        }
        let mut new = self.ws.clone();
        let ids = doc.bop.tasks.iter().map(|t| &t.id).chain(doc.bom.parts.iter().map(|m| &m.id)).chain(doc.bom.tools.iter().map(|m| &m.id));
        for id in ids {
            if new.id_in_use(id) {
                return Err(AuthoringError::DuplicateId(id.clone()));
            }
        }
        for t in &doc.bop.tasks {
            new.tasks.insert(t.id.clone(), t.clone());
        }
        for m in &doc.bom.parts {
            new.parts.insert(m.id.clone(), m.clone());
        }
        for m in &doc.bom.tools {
            new.tools.insert(m.id.clone(), m.clone());
        }
        self.commit(new)
    }

    // ---- workflow ----

    pub fn set_phase(&mut self, phase: Phase) -> Result<u64> {
        let mut new = self.ws.clone();
        new.phase = phase;
        info!(%phase, "phase change");
        self.commit(new)
    }

    /// Moves a positionable feedback (its `offset`) or a non-root anchor.
    pub fn set_position(&mut self, id: &str, pose: Pose) -> Result<u64> {
        if self.ws.phase != Phase::Refinement {
            return Err(AuthoringError::Phase { phase: self.ws.phase, op: "set_position".into() });
        }
        if let Some(a) = self.ws.anchors.get(id) {
            if a.is_root() {
                return Err(AuthoringError::NotPositionable(id.into()));
            }
            let mut new = self.ws.clone();
            new.anchors.get_mut(id).expect("present").local_pose = pose;
            return self.commit(new);
        }
        let Some(fb) = self.ws.feedback.get(id) else {
            return Err(if self.ws.id_in_use(id) {
                AuthoringError::NotPositionable(id.into())
            } else {
                AuthoringError::UnknownId(id.into())
            });
        };
        if !registry().lookup(&fb.kind).is_some_and(|s| s.is_positionable()) {
            return Err(AuthoringError::NotPositionable(id.into()));
        }
        let mut new = self.ws.clone();
        new.feedback.get_mut(id).expect("present").properties.insert("offset".into(), json!(pose));
        self.commit(new)
    }

    /// Publishes seeded synthetic data and returns the published payload.
    pub fn generate_fake_data(&mut self, kind: &str, seed: u64) -> Result<Value> {
        if !fake::KINDS.contains(&kind) {
            return Err(AuthoringError::UnsupportedFakeKind(kind.into()));
        }
        let ws = &self.ws;
        let fake_topic = |k: &str| Topic::Fake { ws: ws.id.clone(), kind: k.into() };
        if kind == "messages" {
            let payload = json!({"messages": fake::messages(seed, self.now_ms)});
            let _ = self.publisher.publish_to(&fake_topic(kind), payload.clone(), false);
            return Ok(payload);
        }
        let robot = ws
            .agents
            .values()
            .find(|a| a.is_robot())
            .ok_or_else(|| AuthoringError::Invalid("fake data needs a robot agent".into()))?;
        let base = robot_base(ws, robot).map_err(|e| AuthoringError::Invalid(e.to_string()))?;
        let (topic, payload, retained) = match kind {
            "zones" => (
                Topic::Zone { ws: ws.id.clone(), zone: fake::FAKE_ZONE_ID.into() },
                json!({"zone_id": fake::FAKE_ZONE_ID, "points": fake::zone_ring(&base)}),
                true,
            ),
            "path" => (fake_topic(kind), json!({"agent": robot.id, "samples": fake::path_arc(&base, self.now_ms)}), true),
            _ => (fake_topic(kind), json!({"agent": robot.id, "points": fake::waypoints(&base, seed)}), true),
        };
        let _ = self.publisher.publish_to(&topic, payload.clone(), retained);
        Ok(payload)
    }

    /// Executes the action kinds owned by this service.
    pub fn handle_action(&mut self, firing: &crate::engine::ActionFiring) {
        let p = |n: &str| firing.properties.get(n).and_then(Value::as_str).unwrap_or_default().to_string();
        match firing.kind.as_str() {
            "toggle-feedback" => {
                let target = p("target");
                let Some(fb) = self.ws.feedback.get(&target) else {
                    self.diag(format!("toggle-feedback '{}': unknown feedback '{target}'", firing.action));
                    return;
                };
                let enabled = match p("mode").as_str() {
                    "show" => true,
                    "hide" => false,
                    _ => !fb.enabled,
                };
                if enabled != fb.enabled {
                    if let Err(e) = self.set_enabled(&target, enabled) {
                        self.diag(format!("toggle-feedback '{}': {e}", firing.action));
                    }
                }
            }
            "send-mqtt-message" => self.send_message(&p("channel"), &p("payload")),
            "acknowledge" => self.send_message("acknowledge", &p("label")),
            _ => {}
        }
    }

    fn send_message(&mut self, channel: &str, payload: &str) {
        let topic = format!("arthur/{}/message/{channel}", self.ws.id);
        let msg = MessageMsg { channel: channel.into(), payload: payload.into(), t_ms: self.now_ms };
        if let Err(e) = self.publisher.publish(&topic, json!(msg), false) {
            self.diag(format!("message on '{channel}': {e}"));
        }
    }

    fn diag(&mut self, msg: String) {
        warn!("{msg}");
        self.diagnostics.push(msg);
    }

    /// Executes one request-response operation.
    pub fn handle_request(&mut self, op: &str, params: &Value) -> Result<Value> {
        fn arg<T: for<'de> Deserialize<'de>>(params: &Value, name: &str) -> Result<T> {
            serde_json::from_value(params.get(name).cloned().unwrap_or(Value::Null))
                .map_err(|e| AuthoringError::Invalid(format!("parameter '{name}': {e}")))
        }
        let rev = |r: u64| json!({"revision": r});
        Ok(match op {
            "create_component" => {
                let mut d = ComponentDescriptor::new(
                    params.get("id").and_then(Value::as_str).unwrap_or_default(),
                    &arg::<String>(params, "kind")?,
                    params.get("properties").map(|_| arg(params, "properties")).transpose()?.unwrap_or_default(),
                );
                d.visible_when = params.get("visible_when").and_then(Value::as_str).map(str::to_string);
                d.enabled = params.get("enabled").and_then(Value::as_bool).unwrap_or(true);
                let id = self.create_descriptor(d)?;
                json!({"id": id, "revision": self.ws.revision})
            }
            "update_property" => {
                let value = params.get("value").cloned().unwrap_or(Value::Null);
                rev(self.update_property(&arg::<String>(params, "id")?, &arg::<String>(params, "name")?, value)?)
            }
            "set_visibility" => {
                let c: Option<String> = arg(params, "condition")?;
                rev(self.set_visibility(&arg::<String>(params, "id")?, c.as_deref())?)
            }
            "set_enabled" => rev(self.set_enabled(&arg::<String>(params, "id")?, arg(params, "enabled")?)?),
            "delete_component" => rev(self.delete_component(&arg::<String>(params, "id")?)?),
            "add_binding" => {
                let id = self.add_binding(&arg::<String>(params, "condition")?, &arg::<String>(params, "action")?, arg(params, "edge")?)?;
                json!({"id": id, "revision": self.ws.revision})
            }
            "remove_binding" => rev(self.remove_binding(&arg::<String>(params, "id")?)?),
            "set_position" => rev(self.set_position(&arg::<String>(params, "id")?, arg(params, "pose")?)?),
            "set_phase" => {
                let name: String = arg(params, "phase")?;
                let phase = Phase::parse(&name).ok_or_else(|| AuthoringError::Invalid(format!("unknown phase '{name}'")))?;
                rev(self.set_phase(phase)?)
            }
            "add_agent" => rev(self.add_agent(arg(params, "agent")?)?),
            "update_agent" => rev(self.update_agent(arg(params, "agent")?)?),
            "remove_agent" => rev(self.remove_agent(&arg::<String>(params, "id")?)?),
            "add_tracker" => {
                let root = self.add_tracker(&arg::<String>(params, "id")?, &arg::<String>(params, "label")?, arg(params, "world_pose")?)?;
                json!({"root_anchor": root, "revision": self.ws.revision})
            }
            "set_tracker_pose" => rev(self.set_tracker_pose(&arg::<String>(params, "id")?, arg(params, "world_pose")?)?),
            "remove_tracker" => rev(self.remove_tracker(&arg::<String>(params, "id")?)?),
            "add_anchor" => rev(self.add_anchor(arg(params, "anchor")?)?),
            "update_anchor" => rev(self.update_anchor(arg(params, "anchor")?)?),
            "remove_anchor" => rev(self.remove_anchor(&arg::<String>(params, "id")?)?),
            "add_tool" => rev(self.add_tool(arg(params, "material")?)?),
            "add_part" => rev(self.add_part(arg(params, "material")?)?),
            "update_material" => rev(self.update_material(arg(params, "material")?)?),
            "remove_material" => rev(self.remove_material(&arg::<String>(params, "id")?)?),
            "add_task" => rev(self.add_task(arg(params, "task")?)?),
            "update_task" => rev(self.update_task(arg(params, "task")?)?),
            "remove_task" => rev(self.remove_task(&arg::<String>(params, "id")?)?),
            "import_process" => rev(self.import_process(&arg(params, "process")?)?),
            "generate_fake_data" => {
                let seed = params.get("seed").and_then(Value::as_u64).unwrap_or(0);
                self.generate_fake_data(&arg::<String>(params, "kind")?, seed)?
            }
            "snapshot" => serde_json::to_value(&self.ws).expect("workstation serializes"),
            other => return Err(AuthoringError::Invalid(format!("unknown op '{other}'"))),
        })
    }
}

impl Service for AuthoringService {
    fn name(&self) -> &str {
        SERVICE
    }

    fn filter(&self) -> String {
        format!("arthur/{}/#", self.ws.id)
    }

    fn on_message(&mut self, env: &Envelope, now_ms: u64) {
        self.now_ms = now_ms;
        match Topic::parse(&env.topic) {
            Ok(Topic::Rpc { service, dir: RpcDir::Request, .. }) if service == SERVICE => {
                let resp = match serde_json::from_value::<RpcRequest>(env.payload.clone()) {
                    Ok(req) => match self.handle_request(&req.op, &req.params) {
                        Ok(v) => RpcResponse::ok(&req.request_id, v),
                        Err(e) => RpcResponse::err(&req.request_id, e),
                    },
                    Err(e) => {
                        let id = env.payload.get("request_id").and_then(Value::as_str).unwrap_or_default();
                        RpcResponse::err(id, format!("malformed request: {e}"))
                    }
                };
                let topic = rpc_topic(&self.ws.id, SERVICE, RpcDir::Response);
                let _ = self.publisher.publish_to(&topic, json!(resp), false);
            }
            Ok(Topic::Events { stream: EventStream::Action, .. }) => {
                match serde_json::from_value::<crate::engine::ActionFiring>(env.payload.clone()) {
                    Ok(f) => self.handle_action(&f),
                    Err(e) => self.diag(format!("malformed action event: {e}")),
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

/// Human-readable summary of a workstation, one entity per line.
pub fn summary(ws: &Workstation) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "workstation {} rev {} phase {}", ws.id, ws.revision, ws.phase);
    for (cat, d) in ws.all_components() {
        let _ = writeln!(s, "{cat} {} {}{}", d.id, d.kind, if d.implicit { " (implicit)" } else { "" });
    }
    s
}
