//! The authored workstation configuration.

use crate::agent::Agent;
use crate::anchor::{resolve_anchor, Anchor, AnchorError, AnchorParent, BodyPart, Tracker};
use crate::component::{validate_component, Binding, ComponentDescriptor};
use crate::pose::Pose;
use crate::property::{References, Violation};
use crate::registry::{registry, Category};
use crate::task::{Material, TaskSpec};
use crate::world::WorldState;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    #[default]
    Configuration,
    Refinement,
    Operation,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Configuration => "configuration",
            Phase::Refinement => "refinement",
            Phase::Operation => "operation",
        }
    }

    pub fn parse(s: &str) -> Option<Phase> {
        [Phase::Configuration, Phase::Refinement, Phase::Operation]
            .into_iter()
            .find(|p| p.as_str() == s)
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workstation {
    pub id: String,
    pub name: String,
    pub revision: u64,
    #[serde(default)]
    pub phase: Phase,
    /// Source of generated ids.
    #[serde(default)]
    pub next_id: u64,
    #[serde(default)]
    pub agents: BTreeMap<String, Agent>,
    #[serde(default)]
    pub trackers: BTreeMap<String, Tracker>,
    #[serde(default)]
    pub anchors: BTreeMap<String, Anchor>,
    #[serde(default)]
    pub feedback: BTreeMap<String, ComponentDescriptor>,
    #[serde(default)]
    pub actions: BTreeMap<String, ComponentDescriptor>,
    #[serde(default)]
    pub conditions: BTreeMap<String, ComponentDescriptor>,
    #[serde(default)]
    pub bindings: BTreeMap<String, Binding>,
    #[serde(default)]
    pub tools: BTreeMap<String, Material>,
    #[serde(default)]
    pub parts: BTreeMap<String, Material>,
    #[serde(default)]
    pub tasks: BTreeMap<String, TaskSpec>,
}

impl Workstation {
    /// Empty workstation holding only the default body anchors.
    pub fn new(id: &str, name: &str) -> Self {
        let anchors = BodyPart::ALL
            .iter()
            .map(|b| {
                let a = Anchor {
                    id: b.anchor_id().into(),
                    label: b.anchor_id().into(),
                    parent: AnchorParent::Body(*b),
                    local_pose: Pose::IDENTITY,
                };
                (a.id.clone(), a)
            })
            .collect();
        Workstation {
            id: id.into(),
            name: name.into(),
            revision: 0,
            phase: Phase::Configuration,
            next_id: 0,
            agents: BTreeMap::new(),
            trackers: BTreeMap::new(),
            anchors,
            feedback: BTreeMap::new(),
            actions: BTreeMap::new(),
            conditions: BTreeMap::new(),
            bindings: BTreeMap::new(),
            tools: BTreeMap::new(),
            parts: BTreeMap::new(),
            tasks: BTreeMap::new(),
        }
    }

    pub fn components(&self, category: Category) -> &BTreeMap<String, ComponentDescriptor> {
        match category {
            Category::Feedback => &self.feedback,
            Category::Action => &self.actions,
            Category::Condition => &self.conditions,
        }
    }

    pub fn components_mut(&mut self, category: Category) -> &mut BTreeMap<String, ComponentDescriptor> {
        match category {
            Category::Feedback => &mut self.feedback,
            Category::Action => &mut self.actions,
            Category::Condition => &mut self.conditions,
        }
    }

    pub fn component(&self, id: &str) -> Option<(Category, &ComponentDescriptor)> {
        Category::ALL
            .into_iter()
            .find_map(|c| self.components(c).get(id).map(|d| (c, d)))
    }

    pub fn all_components(&self) -> impl Iterator<Item = (Category, &ComponentDescriptor)> {
        Category::ALL
            .into_iter()
            .flat_map(move |c| self.components(c).values().map(move |d| (c, d)))
    }

    /// Tasks in process order.
    pub fn tasks_in_order(&self) -> Vec<&TaskSpec> {
        let mut t: Vec<&TaskSpec> = self.tasks.values().collect();
        t.sort_by(|a, b| (a.order, &a.id).cmp(&(b.order, &b.id)));
        t
    }

    pub fn task_order(&self, id: &str) -> u32 {
        self.tasks.get(id).map_or(u32::MAX, |t| t.order)
    }

    pub fn id_in_use(&self, id: &str) -> bool {
        self.component(id).is_some()
            || self.agents.contains_key(id)
            || self.trackers.contains_key(id)
            || self.anchors.contains_key(id)
            || self.bindings.contains_key(id)
            || self.tools.contains_key(id)
            || self.parts.contains_key(id)
            || self.tasks.contains_key(id)
    }

    /// Generates an unused id with the given prefix.
    pub fn fresh_id(&mut self, prefix: &str) -> String {
        loop {
            self.next_id += 1;
            let id = format!("{prefix}-{}", self.next_id);
            if !self.id_in_use(&id) {
                return id;
            }
        }
    }

    /// World pose of a feedback component placed by `anchor` + `offset`.
    /// `None` when the kind carries no placement.
    pub fn feedback_pose(
        &self,
        desc: &ComponentDescriptor,
        world: &WorldState,
    ) -> Option<Result<Pose, AnchorError>> {
        let anchor = desc.str_prop("anchor")?;
        let offset = desc
            .get("offset")
            .and_then(|v| serde_json::from_value::<Pose>(v.clone()).ok())
            .unwrap_or(Pose::IDENTITY);
        Some(resolve_anchor(anchor, self, world).map(|p| p.compose(&offset)))
    }

    /// Full integrity check. Logic operands and visibility conditions pointing
    /// at deleted conditions are reported too, as they are left in place on
    /// deletion.
    pub fn integrity_violations(&self) -> Vec<(String, Violation)> {
        let mut out = Vec::new();
        let reg = registry();
        for (cat, d) in self.all_components() {
            match reg.lookup(&d.kind) {
                Some(spec) if spec.category != cat => out.push((
                    d.id.clone(),
                    Violation::InvalidField { field: "kind".into(), reason: format!("{} is not a {cat}", d.kind) },
                )),
                _ => {}
            }
            if let Err(v) = validate_component(d, reg, self) {
                out.extend(v.into_iter().map(|v| (d.id.clone(), v)));
            }
        }
        for a in self.anchors.values() {
            let ok = match &a.parent {
                AnchorParent::TrackerRoot(t) => self.trackers.contains_key(t),
                AnchorParent::Anchor(p) => self.anchors.contains_key(p),
                AnchorParent::Body(_) => true,
            };
            if !ok {
                out.push((a.id.clone(), Violation::DanglingReference { property: "parent".into(), target: format!("{:?}", a.parent) }));
            }
        }
        for t in self.trackers.values() {
            if !self.anchors.contains_key(&t.root_anchor) {
                out.push((t.id.clone(), Violation::DanglingReference { property: "root_anchor".into(), target: t.root_anchor.clone() }));
            }
        }
        for ag in self.agents.values() {
            if let Some(m) = ag.mount_anchor() {
                if !self.anchors.contains_key(m) {
                    out.push((ag.id.clone(), Violation::DanglingReference { property: "mount_anchor".into(), target: m.into() }));
                }
            }
        }
        for b in self.bindings.values() {
            if !self.conditions.contains_key(&b.condition) {
                out.push((b.id.clone(), Violation::DanglingReference { property: "condition".into(), target: b.condition.clone() }));
            }
            if !self.actions.contains_key(&b.action) {
                out.push((b.id.clone(), Violation::DanglingReference { property: "action".into(), target: b.action.clone() }));
            }
        }
        for t in self.tasks.values() {
            let refs = t.predecessors.iter().filter(|p| !self.tasks.contains_key(*p)).map(|p| ("predecessors", p))
                .chain(t.parts.iter().filter(|p| !self.parts.contains_key(*p)).map(|p| ("parts", p)))
                .chain(t.tools.iter().filter(|p| !self.tools.contains_key(*p)).map(|p| ("tools", p)))
                .chain(t.agent.iter().filter(|a| !self.agents.contains_key(*a)).map(|a| ("agent", a)));
            for (prop, target) in refs {
                out.push((t.id.clone(), Violation::DanglingReference { property: prop.into(), target: target.clone() }));
            }
            if let Some(s) = &t.step {
                if !self.anchors.contains_key(&s.anchor) {
                    out.push((t.id.clone(), Violation::DanglingReference { property: "step".into(), target: s.anchor.clone() }));
                }
            }
        }
        for m in self.parts.values().chain(self.tools.values()) {
            if let Some(a) = &m.anchor {
                if !self.anchors.contains_key(a) {
                    out.push((m.id.clone(), Violation::DanglingReference { property: "anchor".into(), target: a.clone() }));
                }
            }
        }
        out
    }

    /// Canonical serialized form: pretty JSON with sorted keys.
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("workstation serializes");
        s.push('\n');
        s
    }
}

impl References for Workstation {
    fn has_anchor(&self, id: &str) -> bool {
        self.anchors.contains_key(id)
    }
    fn has_agent(&self, id: &str) -> bool {
        self.agents.contains_key(id)
    }
    fn has_condition(&self, id: &str) -> bool {
        self.conditions.contains_key(id)
    }
    fn has_feedback(&self, id: &str) -> bool {
        self.feedback.contains_key(id)
    }
    fn has_task(&self, id: &str) -> bool {
        self.tasks.contains_key(id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_workstation_has_body_anchors() {
        let ws = Workstation::new("ws1", "Mold");
        for b in BodyPart::ALL {
            assert_eq!(ws.anchors[b.anchor_id()].parent, AnchorParent::Body(b));
        }
        assert!(ws.integrity_violations().is_empty());
    }

    #[test]
    fn canonical_round_trip() {
        let ws = Workstation::new("ws1", "Mold");
        let s = ws.to_canonical_json();
        let back: Workstation = serde_json::from_str(&s).unwrap();
        assert_eq!(back, ws);
        assert_eq!(back.to_canonical_json(), s);
    }

    #[test]
    fn fresh_ids_skip_taken() {
        let mut ws = Workstation::new("ws1", "Mold");
        ws.tools.insert("tool-1".into(), Material::new("tool-1", "hammer"));
        assert_eq!(ws.fresh_id("tool"), "tool-2");
    }
}
