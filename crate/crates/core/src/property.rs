//! Typed property schemas and value checking.
//!
//! Property values travel as JSON. Each kind has a fixed JSON shape:
//!
//! | kind                | JSON                                   |
//! |---------------------|----------------------------------------|
//! | `boolean`           | `true` / `false`                       |
//! | `integer`           | integral number                        |
//! | `float`             | number                                 |
//! | `string`            | string                                 |
//! | `anchor`            | anchor id (string)                     |
//! | `pose`              | `{position:[x,y,z], orientation:[w,x,y,z]}` |
//! | `vector3`           | `[x, y, z]`                            |
//! | `condition`         | condition id (string)                  |
//! | `color`             | `#RRGGBB` or `#RRGGBBAA`               |
//! | `agent`             | agent id (string)                      |
//! | `enum`              | one string of the domain               |
//! | `multi-select-enum` | array of distinct domain strings       |

use crate::pose::Pose;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PropertyKind {
    Boolean,
    Integer,
    Float,
    String,
    Anchor,
    Pose,
    Vector3,
    Condition,
    Color,
    Agent,
    Enum,
    MultiSelectEnum,
}

impl PropertyKind {
    pub const ALL: [PropertyKind; 12] = [
        PropertyKind::Boolean,
        PropertyKind::Integer,
        PropertyKind::Float,
        PropertyKind::String,
        PropertyKind::Anchor,
        PropertyKind::Pose,
        PropertyKind::Vector3,
        PropertyKind::Condition,
        PropertyKind::Color,
        PropertyKind::Agent,
        PropertyKind::Enum,
        PropertyKind::MultiSelectEnum,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PropertyKind::Boolean => "boolean",
            PropertyKind::Integer => "integer",
            PropertyKind::Float => "float",
            PropertyKind::String => "string",
            PropertyKind::Anchor => "anchor",
            PropertyKind::Pose => "pose",
            PropertyKind::Vector3 => "vector3",
            PropertyKind::Condition => "condition",
            PropertyKind::Color => "color",
            PropertyKind::Agent => "agent",
            PropertyKind::Enum => "enum",
            PropertyKind::MultiSelectEnum => "multi-select-enum",
        }
    }
}

impl fmt::Display for PropertyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Entity class a string property points at. Used for references that have no
/// dedicated property kind (feedback, task, zone ids).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefTarget {
    Feedback,
    Task,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericRange {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertySchema {
    pub name: String,
    pub kind: PropertyKind,
    #[serde(default = "yes")]
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<NumericRange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refers_to: Option<RefTarget>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Value>,
}

fn yes() -> bool {
    true
}

impl PropertySchema {
    pub fn new(name: &str, kind: PropertyKind) -> Self {
        PropertySchema {
            name: name.to_string(),
            kind,
            required: true,
            domain: None,
            range: None,
            refers_to: None,
            default: None,
        }
    }

    pub fn optional(mut self) -> Self {
        self.required = false;
        self
    }

    pub fn with_default(mut self, v: Value) -> Self {
        self.required = false;
        self.default = Some(v);
        self
    }

    pub fn range(mut self, min: f64, max: f64) -> Self {
        self.range = Some(NumericRange { min, max });
        self
    }

    pub fn domain(mut self, values: &[&str]) -> Self {
        self.domain = Some(values.iter().map(|s| s.to_string()).collect());
        self
    }

    pub fn refers_to(mut self, target: RefTarget) -> Self {
        self.refers_to = Some(target);
        self
    }
}

/// Lookup surface used to check reference-typed values.
pub trait References {
    fn has_anchor(&self, id: &str) -> bool;
    fn has_agent(&self, id: &str) -> bool;
    fn has_condition(&self, id: &str) -> bool;
    fn has_feedback(&self, id: &str) -> bool;
    fn has_task(&self, id: &str) -> bool;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "kebab-case")]
pub enum Violation {
    UnknownKind { kind: String },
    UnknownProperty { property: String },
    MissingProperty { property: String },
    TypeMismatch { property: String, expected: PropertyKind },
    OutOfRange { property: String },
    NotInDomain { property: String, value: String },
    DanglingReference { property: String, target: String },
    InvalidField { field: String, reason: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnknownKind { kind } => write!(f, "unknown kind '{kind}'"),
            Violation::UnknownProperty { property } => write!(f, "unknown property '{property}'"),
            Violation::MissingProperty { property } => write!(f, "missing property '{property}'"),
            Violation::TypeMismatch { property, expected } => {
                write!(f, "type mismatch on '{property}': expected {expected}")
            }
            Violation::OutOfRange { property } => write!(f, "'{property}' out of range"),
            Violation::NotInDomain { property, value } => {
                write!(f, "'{value}' is not allowed for '{property}'")
            }
            Violation::DanglingReference { property, target } => {
                write!(f, "dangling reference on '{property}': '{target}'")
            }
            Violation::InvalidField { field, reason } => write!(f, "{field}: {reason}"),
        }
    }
}

pub fn is_color(s: &str) -> bool {
    let Some(hex) = s.strip_prefix('#') else {
        return false;
    };
    matches!(hex.len(), 6 | 8) && hex.chars().all(|c| c.is_ascii_hexdigit())
}

fn as_vector3(v: &Value) -> Option<[f64; 3]> {
    let arr = v.as_array()?;
    if arr.len() != 3 {
        return None;
    }
    let mut out = [0.0; 3];
    for (o, x) in out.iter_mut().zip(arr) {
        *o = x.as_f64().filter(|f| f.is_finite())?;
    }
    Some(out)
}

/// Checks a single value against its schema. Returns every violation found.
pub fn check_value(schema: &PropertySchema, value: &Value, refs: &dyn References) -> Vec<Violation> {
    let name = &schema.name;
    let mismatch = || vec![Violation::TypeMismatch { property: name.clone(), expected: schema.kind }];
    let in_range = |x: f64| schema.range.is_none_or(|r| x >= r.min && x <= r.max);
    let out_of_range = || vec![Violation::OutOfRange { property: name.clone() }];
    let dangling = |target: &str| {
        vec![Violation::DanglingReference { property: name.clone(), target: target.to_string() }]
    };

    match schema.kind {
        PropertyKind::Boolean => {
            if value.is_boolean() {
                vec![]
            } else {
                mismatch()
            }
        }
        PropertyKind::Integer => match value.as_i64() {
            Some(i) if in_range(i as f64) => vec![],
            Some(_) => out_of_range(),
            None => mismatch(),
        },
        PropertyKind::Float => match value.as_f64() {
            Some(x) if !x.is_finite() => mismatch(),
            Some(x) if in_range(x) => vec![],
            Some(_) => out_of_range(),
            None => mismatch(),
        },
        PropertyKind::String => match value.as_str() {
            None => mismatch(),
            Some(s) => match schema.refers_to {
                Some(RefTarget::Feedback) if !refs.has_feedback(s) => dangling(s),
                Some(RefTarget::Task) if !refs.has_task(s) => dangling(s),
                _ => vec![],
            },
        },
        PropertyKind::Anchor => match value.as_str() {
            None => mismatch(),
            Some(s) if refs.has_anchor(s) => vec![],
            Some(s) => dangling(s),
        },
        PropertyKind::Agent => match value.as_str() {
            None => mismatch(),
            Some(s) if refs.has_agent(s) => vec![],
            Some(s) => dangling(s),
        },
        PropertyKind::Condition => match value.as_str() {
            None => mismatch(),
            Some(s) if refs.has_condition(s) => vec![],
            Some(s) => dangling(s),
        },
        PropertyKind::Pose => {
            if serde_json::from_value::<Pose>(value.clone()).is_ok() {
                vec![]
            } else {
                mismatch()
            }
        }
        PropertyKind::Vector3 => {
            if as_vector3(value).is_some() {
                vec![]
            } else {
                mismatch()
            }
        }
        PropertyKind::Color => match value.as_str() {
            Some(s) if is_color(s) => vec![],
            _ => mismatch(),
        },
        PropertyKind::Enum => match value.as_str() {
            None => mismatch(),
            Some(s) => check_domain(schema, s).into_iter().collect(),
        },
        PropertyKind::MultiSelectEnum => {
            let Some(items) = value.as_array() else {
                return mismatch();
            };
            let mut out = Vec::new();
            let mut seen = std::collections::BTreeSet::new();
            for item in items {
                let Some(s) = item.as_str() else {
                    return mismatch();
                };
                if !seen.insert(s) {
                    out.push(Violation::NotInDomain {
                        property: name.clone(),
                        value: format!("{s} (duplicate)"),
                    });
                }
                out.extend(check_domain(schema, s));
            }
            out
        }
    }
}

fn check_domain(schema: &PropertySchema, s: &str) -> Option<Violation> {
    match &schema.domain {
        Some(d) if !d.iter().any(|x| x == s) => {
            Some(Violation::NotInDomain { property: schema.name.clone(), value: s.to_string() })
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    struct Refs;
    impl References for Refs {
        fn has_anchor(&self, id: &str) -> bool {
            id == "a1"
        }
        fn has_agent(&self, id: &str) -> bool {
            id == "robot-1"
        }
        fn has_condition(&self, id: &str) -> bool {
            id == "c1"
        }
        fn has_feedback(&self, id: &str) -> bool {
            id == "f1"
        }
        fn has_task(&self, id: &str) -> bool {
            id == "t1"
        }
    }

    #[test]
    fn twelve_kinds_serialize_to_their_names() {
        let names: Vec<String> =
            PropertyKind::ALL.iter().map(|k| serde_json::to_value(k).unwrap().as_str().unwrap().to_string()).collect();
        assert_eq!(
            names,
            [
                "boolean", "integer", "float", "string", "anchor", "pose", "vector3", "condition",
                "color", "agent", "enum", "multi-select-enum"
            ]
        );
        for (k, n) in PropertyKind::ALL.iter().zip(&names) {
            assert_eq!(k.as_str(), n);
        }
    }

    #[test]
    fn float_range_and_type() {
        let s = PropertySchema::new("width", PropertyKind::Float).range(0.0, 1.0);
        assert!(check_value(&s, &json!(0.02), &Refs).is_empty());
        assert!(check_value(&s, &json!(1), &Refs).is_empty());
        assert_eq!(check_value(&s, &json!(2.0), &Refs), vec![Violation::OutOfRange { property: "width".into() }]);
        assert!(matches!(check_value(&s, &json!("wide"), &Refs)[0], Violation::TypeMismatch { .. }));
    }

    #[test]
    fn integer_rejects_fractions() {
        let s = PropertySchema::new("n", PropertyKind::Integer);
        assert!(check_value(&s, &json!(3), &Refs).is_empty());
        assert!(!check_value(&s, &json!(3.5), &Refs).is_empty());
    }

    #[test]
    fn colors() {
        assert!(is_color("#00FF00"));
        assert!(is_color("#00ff00cc"));
        assert!(!is_color("00FF00"));
        assert!(!is_color("#00FF0"));
        assert!(!is_color("#GG0000"));
    }

    #[test]
    fn references() {
        let a = PropertySchema::new("anchor", PropertyKind::Anchor);
        assert!(check_value(&a, &json!("a1"), &Refs).is_empty());
        assert_eq!(
            check_value(&a, &json!("gone"), &Refs),
            vec![Violation::DanglingReference { property: "anchor".into(), target: "gone".into() }]
        );
        let f = PropertySchema::new("target", PropertyKind::String).refers_to(RefTarget::Feedback);
        assert!(check_value(&f, &json!("f1"), &Refs).is_empty());
        assert!(!check_value(&f, &json!("f2"), &Refs).is_empty());
        let c = PropertySchema::new("operand", PropertyKind::Condition);
        assert!(check_value(&c, &json!("c1"), &Refs).is_empty());
        assert!(!check_value(&c, &json!("f1"), &Refs).is_empty());
    }

    #[test]
    fn enums() {
        let e = PropertySchema::new("shape", PropertyKind::Enum).domain(&["sphere", "cube"]);
        assert!(check_value(&e, &json!("sphere"), &Refs).is_empty());
        assert!(!check_value(&e, &json!("cone"), &Refs).is_empty());
        let m = PropertySchema::new("days", PropertyKind::MultiSelectEnum).domain(&["a", "b"]);
        assert!(check_value(&m, &json!(["a", "b"]), &Refs).is_empty());
        assert!(check_value(&m, &json!([]), &Refs).is_empty());
        assert!(!check_value(&m, &json!(["a", "a"]), &Refs).is_empty());
        assert!(!check_value(&m, &json!(["c"]), &Refs).is_empty());
        assert!(!check_value(&m, &json!("a"), &Refs).is_empty());
    }

    #[test]
    fn geometry_kinds() {
        let p = PropertySchema::new("offset", PropertyKind::Pose);
        assert!(check_value(&p, &json!({"position":[0,0,0],"orientation":[1,0,0,0]}), &Refs).is_empty());
        assert!(!check_value(&p, &json!({"position":[0,0],"orientation":[1,0,0,0]}), &Refs).is_empty());
        let v = PropertySchema::new("v", PropertyKind::Vector3);
        assert!(check_value(&v, &json!([1, 2, 3.5]), &Refs).is_empty());
        assert!(!check_value(&v, &json!([1, 2]), &Refs).is_empty());
    }
}
