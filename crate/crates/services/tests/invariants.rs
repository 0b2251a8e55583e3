//! Property tests for invariants that must hold for any input.

use hrc_core::bus::{InProcessBus, Publisher};
use hrc_core::{
    Agent, Anchor, AnchorParent, BodyPart, ComponentDescriptor, InputEvent, InputKind, Pose, Quat, TaskSpec, TaskStatus,
    Tracker, Workstation, WorldState,
};
use hrc_services::assembly::TaskBoard;
use hrc_services::authoring::{AuthoringConfig, AuthoringService};
use hrc_services::engine::evaluate_all;
use proptest::prelude::*;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::sync::Arc;

fn props(v: Value) -> BTreeMap<String, Value> {
    v.as_object().unwrap().iter().map(|(k, v)| (k.clone(), v.clone())).collect()
}

fn with_tracker(mut ws: Workstation) -> Workstation {
    ws.trackers.insert("t1".into(), Tracker { id: "t1".into(), label: "t1".into(), world_pose: Pose::IDENTITY, root_anchor: "t1-root".into() });
    ws.anchors.insert(
        "t1-root".into(),
        Anchor { id: "t1-root".into(), label: "root".into(), parent: AnchorParent::TrackerRoot("t1".into()), local_pose: Pose::IDENTITY },
    );
    ws
}

// ---------- logic trees ----------

#[derive(Debug, Clone)]
enum Tree {
    Leaf(usize),
    And(Vec<Tree>),
    Or(Vec<Tree>),
    Not(Box<Tree>),
}

impl Tree {
    fn eval(&self, bits: u8) -> bool {
        match self {
            Tree::Leaf(i) => bits & (1 << i) != 0,
            Tree::And(v) => v.iter().all(|t| t.eval(bits)),
            Tree::Or(v) => v.iter().any(|t| t.eval(bits)),
            Tree::Not(t) => !t.eval(bits),
        }
    }

    /// Adds the tree's conditions to `ws`; returns the root id.
    fn build(&self, ws: &mut Workstation, next: &mut usize) -> String {
        let (kind, p) = match self {
            Tree::Leaf(i) => return format!("b{i}"),
            Tree::Not(t) => ("not", json!({"operand": t.build(ws, next)})),
            Tree::And(v) | Tree::Or(v) => {
                let ops: serde_json::Map<String, Value> =
                    v.iter().enumerate().map(|(i, t)| (format!("operand-{}", i + 1), json!(t.build(ws, next)))).collect();
                (if matches!(self, Tree::And(_)) { "and" } else { "or" }, Value::Object(ops))
            }
        };
        *next += 1;
        let id = format!("c{next}");
        ws.conditions.insert(id.clone(), ComponentDescriptor::new(&id, kind, props(p)));
        id
    }
}

fn tree() -> impl Strategy<Value = Tree> {
    (0usize..4).prop_map(Tree::Leaf).prop_recursive(4, 32, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..=4).prop_map(Tree::And),
            prop::collection::vec(inner.clone(), 2..=4).prop_map(Tree::Or),
            inner.prop_map(|t| Tree::Not(Box::new(t))),
        ]
    })
}

proptest! {
    #[test]
    fn logic_trees_match_boolean_oracle(t in tree(), bits in 0u8..16) {
        let mut ws = Workstation::new("ws", "p");
        for i in 0..4 {
            let id = format!("b{i}");
            ws.conditions.insert(id.clone(), ComponentDescriptor::new(&id, "workstation-button", props(json!({"button": id}))));
        }
        let root = t.build(&mut ws, &mut 0);
        let mut w = WorldState { t_ms: 500, ..Default::default() };
        for i in (0..4).filter(|i| bits & (1 << i) != 0) {
            w.events.push(InputEvent { kind: InputKind::Button, target: format!("b{i}"), source: None, t_ms: 500, payload: None, unresolved: false });
        }
        let rep = evaluate_all(&ws, &w, None).unwrap();
        prop_assert!(rep.states[&root].valid);
        prop_assert_eq!(rep.holds(&root), t.eval(bits));
    }

    #[test]
    fn proximity_directions_partition_off_the_boundary(
        d in 0.0f64..20.0,
        threshold in 0.1f64..10.0,
        axis in prop::array::uniform3(-1.0f64..1.0),
    ) {
        let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        prop_assume!(norm > 1e-3 && (d - threshold).abs() > 1e-9);
        let target = axis.map(|a| a / norm * d);
        let mut ws = with_tracker(Workstation::new("ws", "p"));
        ws.anchors.insert(
            "target".into(),
            Anchor { id: "target".into(), label: "t".into(), parent: AnchorParent::Anchor("t1-root".into()), local_pose: Pose::new(target, Quat::IDENTITY).unwrap() },
        );
        for dir in ["within", "beyond"] {
            ws.conditions.insert(dir.into(), ComponentDescriptor::new(dir, "proximity", props(json!({"a": "user-head", "b": "target", "threshold": threshold, "direction": dir}))));
        }
        let mut w = WorldState::default();
        w.body.insert(BodyPart::UserHead, Pose::IDENTITY);
        let rep = evaluate_all(&ws, &w, None).unwrap();
        prop_assert_eq!(rep.holds("within"), d < threshold);
        prop_assert_eq!(rep.holds("beyond"), d > threshold);
    }

    #[test]
    fn implicit_conditions_track_interactive_feedback(ops in prop::collection::vec((0u8..5, any::<prop::sample::Index>()), 1..40)) {
        let mut ws = with_tracker(Workstation::new("ws", "p"));
        ws.agents.insert("robot-1".into(), Agent::robot("robot-1", "UR5e", "ur5e", "t1-root"));
        let bus = Arc::new(InProcessBus::new());
        let mut s = AuthoringService::with_workstation(ws, Publisher::new(bus, "authoring"), AuthoringConfig::default());
        for (op, pick) in ops {
            let _ = match op {
                0 => s.create_component("indicator-3d", props(json!({"anchor": "t1-root", "shape": "arrow", "color": "#FFFFFF"}))).map(drop),
                1 => s.create_component("task-model-highlight", props(json!({"agent": "robot-1", "color": "#FF0000", "opacity": 0.3}))).map(drop),
                2 => s.create_component("icon", props(json!({"anchor": "t1-root", "symbol": "check", "color": "#00FF00"}))).map(drop),
                _ => {
                    let w = s.snapshot();
                    let ids: Vec<String> = w.feedback.keys().cloned().collect();
                    if ids.is_empty() { Ok(()) } else { s.delete_component(&ids[pick.index(ids.len())]).map(drop) }
                }
            };
            let w = s.snapshot();
            let interactive = w.feedback.values().filter(|f| f.kind == "indicator-3d" || f.kind == "task-model-highlight").count();
            let implicit: Vec<&ComponentDescriptor> = w.conditions.values().filter(|c| c.implicit).collect();
            prop_assert_eq!(implicit.len(), interactive);
            for c in implicit {
                let owner = c.owner.as_deref().unwrap_or_default();
                prop_assert!(w.feedback.contains_key(owner));
            }
        }
    }

    #[test]
    fn board_respects_precedence_and_round_trips(
        edges in prop::collection::vec(prop::collection::vec(any::<prop::sample::Index>(), 0..3), 1..25),
        owners in prop::collection::vec(0u8..3, 25),
        moves in prop::collection::vec((any::<bool>(), any::<prop::sample::Index>()), 1..80),
    ) {
        let mut ws = with_tracker(Workstation::new("ws", "p"));
        ws.agents.insert("robot-1".into(), Agent::robot("robot-1", "UR5e", "ur5e", "t1-root"));
        ws.agents.insert("op".into(), Agent::operator("op", "Operator", 2));
        for (i, e) in edges.iter().enumerate() {
            let mut preds: Vec<String> = if i == 0 { vec![] } else { e.iter().map(|x| format!("t{:02}", x.index(i))).collect() };
            preds.sort();
            preds.dedup();
            let agent = [None, Some("robot-1"), Some("op")][owners[i] as usize];
            let spec: TaskSpec = serde_json::from_value(json!({
                "id": format!("t{i:02}"), "name": "t", "description": "", "order": (i + 1) * 10,
                "predecessors": preds, "agent": agent,
            })).unwrap();
            ws.tasks.insert(spec.id.clone(), spec);
        }
        let mut b = TaskBoard::load(&ws, 0).unwrap();
        let mut last = b.progress().completed;
        for (t, (next, pick)) in moves.into_iter().enumerate() {
            let now = t as u64 * 10;
            if next {
                let _ = b.next_task(if pick.index(2) == 0 { "robot-1" } else { "op" }, now);
            } else {
                let open: Vec<String> = b.entries().iter()
                    .filter(|(_, e)| matches!(e.status, TaskStatus::Ready | TaskStatus::Active))
                    .map(|(id, _)| id.clone()).collect();
                if !open.is_empty() {
                    b.complete_task(&open[pick.index(open.len())], None, now).unwrap();
                }
            }
            for (id, e) in b.entries() {
                if e.status != TaskStatus::Pending {
                    for p in &ws.tasks[id].predecessors {
                        prop_assert_eq!(b.status(p), Some(TaskStatus::Completed), "{} {:?} before {}", id, e.status, p);
                    }
                }
            }
            let done = b.progress().completed;
            prop_assert!(done >= last);
            last = done;
            prop_assert_eq!(&TaskBoard::restore(&ws, b.state().clone()).unwrap(), &b);
        }
    }
}
