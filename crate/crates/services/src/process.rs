//! Canonical bill of process / bill of materials and their validation.

use hrc_core::task::{Material, TaskSpec};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Bop {
    pub tasks: Vec<TaskSpec>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Bom {
    pub parts: Vec<Material>,
    pub tools: Vec<Material>,
}

/// Canonical process document: `{"bop": {...}, "bom": {...}}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProcessDoc {
    pub bop: Bop,
    pub bom: Bom,
}

impl ProcessDoc {
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("process serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "kebab-case")]
pub enum ProcessViolation {
    DuplicateId { id: String },
    UnknownPredecessor { task: String, missing: String },
    UnknownPart { task: String, part: String },
    UnknownTool { task: String, tool: String },
    Cycle { cycle: Vec<String> },
}

impl fmt::Display for ProcessViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProcessViolation::DuplicateId { id } => write!(f, "duplicate id '{id}'"),
            ProcessViolation::UnknownPredecessor { task, missing } => {
                write!(f, "task '{task}' references unknown predecessor '{missing}'")
            }
            ProcessViolation::UnknownPart { task, part } => write!(f, "task '{task}' references unknown part '{part}'"),
            ProcessViolation::UnknownTool { task, tool } => write!(f, "task '{task}' references unknown tool '{tool}'"),
            ProcessViolation::Cycle { cycle } => write!(f, "precedence cycle {}", cycle.join(" -> ")),
        }
    }
}

/// First precedence cycle found, as a closed path `a -> ... -> a`.
pub fn find_cycle<'a>(preds: &BTreeMap<&'a str, Vec<&'a str>>) -> Option<Vec<String>> {
    fn visit<'a>(
        n: &'a str,
        preds: &BTreeMap<&'a str, Vec<&'a str>>,
        state: &mut BTreeMap<&'a str, bool>,
        stack: &mut Vec<&'a str>,
    ) -> Option<Vec<String>> {
        match state.get(n) {
            Some(true) => return None,
            Some(false) => {
                let i = stack.iter().position(|s| *s == n).unwrap_or(0);
                let mut c: Vec<String> = stack[i..].iter().map(|s| s.to_string()).collect();
                c.push(n.to_string());
                return Some(c);
            }
            None => {}
        }
        state.insert(n, false);
        stack.push(n);
        for p in preds.get(n).into_iter().flatten() {
            if preds.contains_key(p) {
                if let Some(c) = visit(p, preds, state, stack) {
                    return Some(c);
                }
            }
        }
        stack.pop();
        state.insert(n, true);
        None
    }
    let mut state = BTreeMap::new();
    for n in preds.keys() {
        if let Some(c) = visit(n, preds, &mut state, &mut Vec::new()) {
            return Some(c);
        }
    }
    None
}

/// Checks id uniqueness, reference resolution and acyclicity.
pub fn validate(doc: &ProcessDoc) -> Result<(), Vec<ProcessViolation>> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    let ids = doc.bop.tasks.iter().map(|t| &t.id).chain(doc.bom.parts.iter().map(|m| &m.id)).chain(doc.bom.tools.iter().map(|m| &m.id));
    for id in ids {
        if !seen.insert(id.as_str()) {
            out.push(ProcessViolation::DuplicateId { id: id.clone() });
        }
    }
    let tasks: BTreeSet<&str> = doc.bop.tasks.iter().map(|t| t.id.as_str()).collect();
    let parts: BTreeSet<&str> = doc.bom.parts.iter().map(|m| m.id.as_str()).collect();
    let tools: BTreeSet<&str> = doc.bom.tools.iter().map(|m| m.id.as_str()).collect();
    for t in &doc.bop.tasks {
        for p in &t.predecessors {
            if !tasks.contains(p.as_str()) {
                out.push(ProcessViolation::UnknownPredecessor { task: t.id.clone(), missing: p.clone() });
            }
        }
        for p in &t.parts {
            if !parts.contains(p.as_str()) {
                out.push(ProcessViolation::UnknownPart { task: t.id.clone(), part: p.clone() });
            }
        }
        for p in &t.tools {
            if !tools.contains(p.as_str()) {
                out.push(ProcessViolation::UnknownTool { task: t.id.clone(), tool: p.clone() });
            }
        }
    }
    let preds: BTreeMap<&str, Vec<&str>> = doc
        .bop
        .tasks
        .iter()
        .map(|t| (t.id.as_str(), t.predecessors.iter().map(String::as_str).collect()))
        .collect();
    if let Some(cycle) = find_cycle(&preds) {
        out.push(ProcessViolation::Cycle { cycle });
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub fn task(id: &str, order: u32, preds: &[&str]) -> TaskSpec {
        TaskSpec {
            id: id.into(),
            name: id.into(),
            description: String::new(),
            order,
            predecessors: preds.iter().map(|s| s.to_string()).collect(),
            agent: None,
            step: None,
            parts: vec![],
            tools: vec![],
            image: None,
        }
    }

    #[test]
    fn diamond_is_valid() {
        let doc = ProcessDoc {
            bop: Bop { tasks: vec![task("a", 1, &[]), task("b", 2, &["a"]), task("c", 3, &["a"]), task("d", 4, &["b", "c"])] },
            bom: Bom::default(),
        };
        assert_eq!(validate(&doc), Ok(()));
    }

    #[test]
    fn reports_duplicates_cycles_and_refs() {
        let mut b = task("b", 2, &["a"]);
        b.parts.push("p9".into());
        let doc = ProcessDoc {
            bop: Bop { tasks: vec![task("a", 1, &["b"]), b] },
            bom: Bom { parts: vec![Material::new("a", "clashing part")], tools: vec![] },
        };
        let v = validate(&doc).unwrap_err();
        assert!(v.contains(&ProcessViolation::DuplicateId { id: "a".into() }));
        assert!(v.contains(&ProcessViolation::UnknownPart { task: "b".into(), part: "p9".into() }));
        assert!(v.iter().any(|x| matches!(x, ProcessViolation::Cycle { cycle } if cycle.len() == 3)));
    }
}
