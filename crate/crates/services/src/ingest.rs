//! Conversion of exported process XML into the canonical process document.
//!
//! Grammar (see `docs/process-xml.md` for the full reference):
//!
//! ```text
//! process
//!   materials?
//!     part @id @name @anchor? (offset @x @y @z)?
//!     tool @id @name @anchor? (offset @x @y @z)?
//!   operations?
//!     operation @id @name @seq? @agent?
//!       description?   text
//!       predecessor    @ref
//!       uses           @part | @tool
//!       step           @anchor @x? @y? @z? @qw? @qx? @qy? @qz?
//!       image          @src
//! ```
//!
//! Ids are lowercased and every character outside `[a-z0-9_-]` becomes `-`.
//! Without `@seq` an operation's order is ten times its position.

use crate::process::{self, Bom, Bop, ProcessDoc, ProcessViolation};
use hrc_core::{AnchoredPose, Material, Pose, Quat, TaskSpec};
use roxmltree::{Document, Node};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum IngestError {
    #[error("{line}:{column}: malformed XML: {message}")]
    Parse { line: u32, column: u32, message: String },
    #[error("{path}: {reason}")]
    Field { path: String, reason: String },
    #[error("invalid process: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<ProcessViolation>),
}

impl IngestError {
    /// 1 for documents that convert but violate process rules, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            IngestError::Invalid(_) => 1,
            _ => 2,
        }
    }
}

pub fn normalize_id(raw: &str) -> String {
    raw.trim()
        .chars()
        .map(|c| c.to_ascii_lowercase())
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '-' })
        .collect()
}

fn elements<'a, 'i>(n: Node<'a, 'i>, name: &'a str) -> impl Iterator<Item = Node<'a, 'i>> + 'a {
    n.children().filter(move |c| c.is_element() && c.tag_name().name() == name)
}

fn path_of(n: Node) -> String {
    let mut segs: Vec<String> = n
        .ancestors()
        .filter(|a| a.is_element())
        .map(|a| {
            let name = a.tag_name().name();
            let idx = a.prev_siblings().skip(1).filter(|s| s.is_element() && s.tag_name().name() == name).count();
            let multi = a.parent().is_some_and(|p| elements(p, name).nth(1).is_some());
            if multi {
                format!("{name}[{}]", idx + 1)
            } else {
                name.to_string()
            }
        })
        .collect();
    segs.reverse();
    segs.join("/")
}

fn required(n: Node, attr: &str) -> Result<String, IngestError> {
    match n.attribute(attr).map(str::trim) {
        Some(v) if !v.is_empty() => Ok(v.to_string()),
        _ => Err(IngestError::Field { path: format!("{}/@{attr}", path_of(n)), reason: "missing mandatory attribute".into() }),
    }
}

fn number(n: Node, attr: &str, default: f64) -> Result<f64, IngestError> {
    match n.attribute(attr) {
        None => Ok(default),
        Some(v) => v.trim().parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| IngestError::Field {
            path: format!("{}/@{attr}", path_of(n)),
            reason: format!("'{v}' is not a finite number"),
        }),
    }
}

fn pose(n: Node) -> Result<Pose, IngestError> {
    let p = [number(n, "x", 0.0)?, number(n, "y", 0.0)?, number(n, "z", 0.0)?];
    let q = [number(n, "qw", 1.0)?, number(n, "qx", 0.0)?, number(n, "qy", 0.0)?, number(n, "qz", 0.0)?];
    Quat::new(q[0], q[1], q[2], q[3])
        .and_then(|q| Pose::new(p, q))
        .map_err(|e| IngestError::Field { path: path_of(n), reason: e.to_string() })
}

fn material(n: Node) -> Result<Material, IngestError> {
    let mut m = Material::new(&normalize_id(&required(n, "id")?), &required(n, "name")?);
    m.anchor = n.attribute("anchor").map(normalize_id);
    if let Some(o) = elements(n, "offset").next() {
        m.offset = Some(pose(o)?);
    }
    Ok(m)
}

fn operation(n: Node, position: usize) -> Result<TaskSpec, IngestError> {
    let order = match n.attribute("seq") {
        None => 10 * (position as u32 + 1),
        Some(v) => v.trim().parse().map_err(|_| IngestError::Field {
            path: format!("{}/@seq", path_of(n)),
            reason: format!("'{v}' is not a non-negative integer"),
        })?,
    };
    let mut t = TaskSpec {
        id: normalize_id(&required(n, "id")?),
        name: required(n, "name")?,
        description: String::new(),
        order,
        predecessors: vec![],
        agent: n.attribute("agent").map(normalize_id),
        step: None,
        parts: vec![],
        tools: vec![],
        image: None,
    };
    for c in n.children().filter(Node::is_element) {
        match c.tag_name().name() {
            "description" => t.description = c.text().unwrap_or_default().split_whitespace().collect::<Vec<_>>().join(" "),
            "predecessor" => t.predecessors.push(normalize_id(&required(c, "ref")?)),
            "uses" => match (c.attribute("part"), c.attribute("tool")) {
                (Some(p), None) => t.parts.push(normalize_id(p)),
                (None, Some(tl)) => t.tools.push(normalize_id(tl)),
                _ => {
                    return Err(IngestError::Field {
                        path: path_of(c),
                        reason: "needs exactly one of @part or @tool".into(),
                    })
                }
            },
            "step" => t.step = Some(AnchoredPose { anchor: normalize_id(&required(c, "anchor")?), pose: pose(c)? }),
            "image" => t.image = Some(required(c, "src")?),
            other => {
                return Err(IngestError::Field { path: path_of(c), reason: format!("unexpected element '{other}'") })
            }
        }
    }
    Ok(t)
}

/// Converts an XML document. Structure errors come first; process rules are
/// checked on the converted document.
pub fn convert(xml: &str) -> Result<ProcessDoc, IngestError> {
    let doc = Document::parse(xml).map_err(|e| {
        let pos = e.pos();
        IngestError::Parse { line: pos.row, column: pos.col, message: e.to_string() }
    })?;
    let root = doc.root_element();
    if root.tag_name().name() != "process" {
        return Err(IngestError::Field {
            path: root.tag_name().name().to_string(),
            reason: "root element must be 'process'".into(),
        });
    }
    let mut out = ProcessDoc::default();
    for m in elements(root, "materials") {
        for c in m.children().filter(Node::is_element) {
            match c.tag_name().name() {
                "part" => out.bom.parts.push(material(c)?),
                "tool" => out.bom.tools.push(material(c)?),
                other => {
                    return Err(IngestError::Field { path: path_of(c), reason: format!("unexpected element '{other}'") })
                }
            }
        }
    }
    for ops in elements(root, "operations") {
        for (i, op) in elements(ops, "operation").enumerate() {
            out.bop.tasks.push(operation(op, i)?);
        }
    }
    out.bop.tasks.sort_by(|a, b| (a.order, &a.id).cmp(&(b.order, &b.id)));
    process::validate(&out).map_err(IngestError::Invalid)?;
    Ok(out)
}

/// Agent ids named by the operations, sorted.
pub fn agent_hints(doc: &ProcessDoc) -> Vec<String> {
    let mut v: Vec<String> = doc.bop.tasks.iter().filter_map(|t| t.agent.clone()).collect();
    v.sort();
    v.dedup();
    v
}

pub fn empty() -> ProcessDoc {
    ProcessDoc { bop: Bop::default(), bom: Bom::default() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn converts_small_document() {
        let xml = r#"<process id="x">
          <materials><part id="P 1" name="Plate"/><tool id="T1" name="Driver"/></materials>
          <operations>
            <operation id="A" name="Place" agent="Operator-1"><uses part="P 1"/></operation>
            <operation id="B" name="Screw" agent="robot-1">
              <description>  Screw the
                plate  </description>
              <predecessor ref="A"/><uses tool="T1"/>
              <step anchor="table-root" x="0.1" qw="1"/>
            </operation>
          </operations></process>"#;
        let d = convert(xml).unwrap();
        assert_eq!(d.bop.tasks[0].id, "a");
        assert_eq!(d.bop.tasks[0].order, 10);
        assert_eq!(d.bop.tasks[0].parts, vec!["p-1"]);
        assert_eq!(d.bop.tasks[1].description, "Screw the plate");
        assert_eq!(d.bop.tasks[1].step.as_ref().unwrap().pose.position, [0.1, 0.0, 0.0]);
        assert_eq!(agent_hints(&d), vec!["operator-1", "robot-1"]);
    }

    #[test]
    fn error_classes() {
        let e = convert("<process><operations>").unwrap_err();
        assert!(matches!(e, IngestError::Parse { line: 1, .. }) && e.exit_code() == 2, "{e:?}");
        let e = convert(r#"<process><operations><operation id="a"/><operation id="b" name="B"/></operations></process>"#).unwrap_err();
        assert_eq!(e, IngestError::Field { path: "process/operations/operation[1]/@name".into(), reason: "missing mandatory attribute".into() });
        let e = convert(r#"<process><operations><operation id="a" name="A"><uses part="nope"/></operation></operations></process>"#).unwrap_err();
        assert_eq!(e.exit_code(), 1);
        assert!(e.to_string().contains("nope"));
    }

    #[test]
    fn empty_task_list_is_valid() {
        assert_eq!(convert("<process/>").unwrap(), empty());
    }
}
