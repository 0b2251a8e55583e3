//! Mapping between a workstation and its retained configuration topics.
//!
//! The authoring service publishes every entity on
//! `config/<category>/<id>` (retained) and a `config/meta/workstation`
//! record carrying id, name, phase, revision and entity count, published
//! last in each commit. Deletions clear the retained entity and publish a tombstone on
//! `config/deleted/<id>`. [`ConfigReplica`] folds that stream back into a
//! [`Workstation`].

use hrc_core::bus::{ConfigCategory, Envelope, Topic};
use hrc_core::{Phase, Workstation};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub id: String,
    pub name: String,
    pub revision: u64,
    pub phase: Phase,
    pub next_id: u64,
    /// Number of entities at this revision. Retained topics may replay in
    /// any order, so a replica is complete only once it holds this many.
    pub entities: usize,
}

impl Meta {
    pub fn of(ws: &Workstation) -> Self {
        Meta {
            id: ws.id.clone(),
            name: ws.name.clone(),
            revision: ws.revision,
            phase: ws.phase,
            next_id: ws.next_id,
            entities: entity_count(ws),
        }
    }
}

pub fn entity_count(ws: &Workstation) -> usize {
    ws.feedback.len()
        + ws.actions.len()
        + ws.conditions.len()
        + ws.bindings.len()
        + ws.agents.len()
        + ws.trackers.len()
        + ws.anchors.len()
        + ws.tools.len()
        + ws.parts.len()
        + ws.tasks.len()
}

pub const META_ID: &str = "workstation";

/// Every (category, id) → JSON entry of a workstation, meta excluded.
pub fn entities(ws: &Workstation) -> BTreeMap<(ConfigCategory, String), Value> {
    fn put<T: Serialize>(
        out: &mut BTreeMap<(ConfigCategory, String), Value>,
        cat: ConfigCategory,
        m: &BTreeMap<String, T>,
    ) {
        for (id, v) in m {
            out.insert((cat, id.clone()), serde_json::to_value(v).expect("entity serializes"));
        }
    }
    let mut out = BTreeMap::new();
    put(&mut out, ConfigCategory::Feedback, &ws.feedback);
    put(&mut out, ConfigCategory::Action, &ws.actions);
    put(&mut out, ConfigCategory::Condition, &ws.conditions);
    put(&mut out, ConfigCategory::Binding, &ws.bindings);
    put(&mut out, ConfigCategory::Agent, &ws.agents);
    put(&mut out, ConfigCategory::Tracker, &ws.trackers);
    put(&mut out, ConfigCategory::Anchor, &ws.anchors);
    put(&mut out, ConfigCategory::Tool, &ws.tools);
    put(&mut out, ConfigCategory::Part, &ws.parts);
    put(&mut out, ConfigCategory::Task, &ws.tasks);
    out
}

/// Retained-topic changes turning `before` into `after`.
#[derive(Debug, Default)]
pub struct ConfigDiff {
    pub upserts: Vec<(ConfigCategory, String, Value)>,
    pub deletes: Vec<(ConfigCategory, String)>,
}

pub fn diff(before: &Workstation, after: &Workstation) -> ConfigDiff {
    let a = entities(before);
    let b = entities(after);
    let mut d = ConfigDiff::default();
    for (k, v) in &b {
        if a.get(k) != Some(v) {
            d.upserts.push((k.0, k.1.clone(), v.clone()));
        }
    }
    for k in a.keys() {
        if !b.contains_key(k) {
            d.deletes.push((k.0, k.1.clone()));
        }
    }
    d
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tombstone {
    pub category: String,
    pub id: String,
}

pub fn tombstone(category: ConfigCategory, id: &str) -> Value {
    json!({"category": category.as_str(), "id": id})
}

/// Workstation rebuilt from configuration topics.
#[derive(Debug, Clone)]
pub struct ConfigReplica {
    ws: Workstation,
    seen_meta: bool,
    expected: usize,
    pub errors: Vec<String>,
}

impl ConfigReplica {
    pub fn new(ws_id: &str) -> Self {
        let mut ws = Workstation::new(ws_id, "");
        // body anchors arrive over the bus like every other anchor
        ws.anchors.clear();
        ConfigReplica { ws, seen_meta: false, expected: 0, errors: Vec::new() }
    }

    pub fn workstation(&self) -> &Workstation {
        &self.ws
    }

    /// The replicated revision, once the meta record and every entity it
    /// counts have arrived.
    pub fn revision(&self) -> Option<u64> {
        (self.seen_meta && entity_count(&self.ws) == self.expected).then_some(self.ws.revision)
    }

    /// Applies a config envelope. Returns `true` if the envelope was a
    /// configuration message for this workstation.
    pub fn apply(&mut self, env: &Envelope) -> bool {
        let Ok(topic) = Topic::parse(&env.topic) else {
            return false;
        };
        if topic.ws() != self.ws.id {
            return false;
        }
        match topic {
            Topic::Config { category: ConfigCategory::Meta, .. } => {
                match serde_json::from_value::<Meta>(env.payload.clone()) {
                    Ok(m) => {
                        self.ws.name = m.name;
                        self.ws.revision = m.revision;
                        self.ws.phase = m.phase;
                        self.ws.next_id = m.next_id;
                        self.expected = m.entities;
                        self.seen_meta = true;
                    }
                    Err(e) => self.errors.push(format!("{}: {e}", env.topic)),
                }
                true
            }
            Topic::Config { category, id, .. } => {
                if let Err(e) = self.upsert(category, &id, env.payload.clone()) {
                    self.errors.push(format!("{}: {e}", env.topic));
                }
                true
            }
            Topic::Deleted { id, .. } => {
                let cat = env.payload.get("category").and_then(Value::as_str).and_then(ConfigCategory::parse);
                match cat {
                    Some(c) => self.remove(c, &id),
                    None => {
                        for c in ConfigCategory::ALL {
                            self.remove(c, &id);
                        }
                    }
                }
                true
            }
            _ => false,
        }
    }

    fn upsert(&mut self, cat: ConfigCategory, id: &str, v: Value) -> Result<(), serde_json::Error> {
        let ws = &mut self.ws;
        let id = id.to_string();
        match cat {
            ConfigCategory::Meta => {}
            ConfigCategory::Feedback => {
                ws.feedback.insert(id, serde_json::from_value(v)?);
            }
            ConfigCategory::Action => {
                ws.actions.insert(id, serde_json::from_value(v)?);
            }
            ConfigCategory::Condition => {
                ws.conditions.insert(id, serde_json::from_value(v)?);
            }
            ConfigCategory::Binding => {
                ws.bindings.insert(id, serde_json::from_value(v)?);
            }
            ConfigCategory::Agent => {
                ws.agents.insert(id, serde_json::from_value(v)?);
            }
            ConfigCategory::Tracker => {
                ws.trackers.insert(id, serde_json::from_value(v)?);
            }
            ConfigCategory::Anchor => {
                ws.anchors.insert(id, serde_json::from_value(v)?);
            }
            ConfigCategory::Tool => {
                ws.tools.insert(id, serde_json::from_value(v)?);
            }
            ConfigCategory::Part => {
                ws.parts.insert(id, serde_json::from_value(v)?);
            }
            ConfigCategory::Task => {
                ws.tasks.insert(id, serde_json::from_value(v)?);
            }
        }
        Ok(())
    }

    fn remove(&mut self, cat: ConfigCategory, id: &str) {
        let ws = &mut self.ws;
        match cat {
            ConfigCategory::Meta => {}
            ConfigCategory::Feedback => {
                ws.feedback.remove(id);
            }
            ConfigCategory::Action => {
                ws.actions.remove(id);
            }
            ConfigCategory::Condition => {
                ws.conditions.remove(id);
            }
            ConfigCategory::Binding => {
                ws.bindings.remove(id);
            }
            ConfigCategory::Agent => {
                ws.agents.remove(id);
            }
            ConfigCategory::Tracker => {
                ws.trackers.remove(id);
            }
            ConfigCategory::Anchor => {
                ws.anchors.remove(id);
            }
            ConfigCategory::Tool => {
                ws.tools.remove(id);
            }
            ConfigCategory::Part => {
                ws.parts.remove(id);
            }
            ConfigCategory::Task => {
                ws.tasks.remove(id);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use hrc_core::task::Material;

    #[test]
    fn diff_reports_changes_only() {
        let a = Workstation::new("ws", "n");
        let mut b = a.clone();
        b.tools.insert("t1".into(), Material::new("t1", "hammer"));
        b.anchors.remove("user-head");
        let d = diff(&a, &b);
        assert_eq!(d.upserts.len(), 1);
        assert_eq!(d.deletes, vec![(ConfigCategory::Anchor, "user-head".to_string())]);
        assert!(diff(&b, &b).upserts.is_empty());
    }

    #[test]
    fn incomplete_until_every_counted_entity_arrives() {
        use hrc_core::bus::{Envelope, Topic};
        let mut ws = Workstation::new("ws", "n");
        ws.tools.insert("t1".into(), Material::new("t1", "hammer"));
        let env = |topic: Topic, payload: Value| Envelope { topic: topic.to_string(), payload, retained: true, publisher: "a".into(), seq: 0 };
        let mut r = ConfigReplica::new("ws");
        let meta = Topic::Config { ws: "ws".into(), category: ConfigCategory::Meta, id: META_ID.into() };
        r.apply(&env(meta, serde_json::to_value(Meta::of(&ws)).unwrap()));
        assert_eq!(r.revision(), None);
        for ((cat, id), v) in entities(&ws) {
            r.apply(&env(Topic::Config { ws: "ws".into(), category: cat, id }, v));
        }
        assert_eq!(r.revision(), Some(ws.revision));
        assert_eq!(r.workstation().tools, ws.tools);
    }
}
