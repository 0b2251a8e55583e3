use crate::property::{check_value, References, Violation};
use crate::registry::{Category, Registry};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;

/// One authored feedback, action or condition instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentDescriptor {
    pub id: String,
    pub kind: String,
    #[serde(default)]
    pub properties: BTreeMap<String, Value>,
    /// Created automatically alongside an interactive feedback.
    #[serde(default)]
    pub implicit: bool,
    /// Feedback that created this implicit condition.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub owner: Option<String>,
    /// Feedback only: condition gating visibility.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visible_when: Option<String>,
    /// Feedback only: switched by toggle-feedback actions.
    #[serde(default = "enabled_default")]
    pub enabled: bool,
}

fn enabled_default() -> bool {
    true
}

impl ComponentDescriptor {
    pub fn new(id: &str, kind: &str, properties: BTreeMap<String, Value>) -> Self {
        ComponentDescriptor {
            id: id.into(),
            kind: kind.into(),
            properties,
            implicit: false,
            owner: None,
            visible_when: None,
            enabled: true,
        }
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.properties.get(name)
    }

    pub fn str_prop(&self, name: &str) -> Option<&str> {
        self.properties.get(name).and_then(Value::as_str)
    }

    pub fn f64_prop(&self, name: &str) -> Option<f64> {
        self.properties.get(name).and_then(Value::as_f64)
    }

    pub fn i64_prop(&self, name: &str) -> Option<i64> {
        self.properties.get(name).and_then(Value::as_i64)
    }

    /// Property value, falling back to the schema default.
    pub fn value_or_default<'a>(&'a self, registry: &'a Registry, name: &str) -> Option<&'a Value> {
        self.properties.get(name).or_else(|| {
            registry.lookup(&self.kind)?.property(name)?.default.as_ref()
        })
    }
}

/// Checks kind, property names, presence and every value against its schema.
pub fn validate_component(
    desc: &ComponentDescriptor,
    registry: &Registry,
    refs: &dyn References,
) -> Result<(), Vec<Violation>> {
    let Some(spec) = registry.lookup(&desc.kind) else {
        return Err(vec![Violation::UnknownKind { kind: desc.kind.clone() }]);
    };
    let mut out = Vec::new();
    if desc.id.is_empty() {
        out.push(Violation::InvalidField { field: "id".into(), reason: "empty id".into() });
    }
    for name in desc.properties.keys() {
        if spec.property(name).is_none() {
            out.push(Violation::UnknownProperty { property: name.clone() });
        }
    }
    for schema in &spec.properties {
        match desc.properties.get(&schema.name) {
            Some(v) => out.extend(check_value(schema, v, refs)),
            None if schema.required => {
                out.push(Violation::MissingProperty { property: schema.name.clone() })
            }
            None => {}
        }
    }
    if let Some(c) = &desc.visible_when {
        if spec.category != Category::Feedback {
            out.push(Violation::InvalidField {
                field: "visible_when".into(),
                reason: "only feedback has a visibility condition".into(),
            });
        } else if !refs.has_condition(c) {
            out.push(Violation::DanglingReference { property: "visible_when".into(), target: c.clone() });
        }
    }
    if let Some(o) = &desc.owner {
        if !refs.has_feedback(o) {
            out.push(Violation::DanglingReference { property: "owner".into(), target: o.clone() });
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Edge {
    Rising,
    Falling,
    WhileActive,
}

/// Links a condition to the action it triggers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Binding {
    pub id: String,
    pub condition: String,
    pub action: String,
    pub edge: Edge,
}
