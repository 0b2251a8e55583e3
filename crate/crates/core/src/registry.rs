//! The catalogue of feedback, action and condition kinds.
//!
//! Every kind carries a name, an icon, a one-line description and its property
//! schemas. Kind ids are stable and double as the `kind` field of
//! [`ComponentDescriptor`](crate::component::ComponentDescriptor).

use crate::property::{PropertyKind as K, PropertySchema as P, RefTarget};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    Feedback,
    Action,
    Condition,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Feedback, Category::Action, Category::Condition];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Feedback => "feedback",
            Category::Action => "action",
            Category::Condition => "condition",
        }
    }

    pub fn parse(s: &str) -> Option<Category> {
        Category::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubGroup {
    Robot,
    Task,
    General,
    Spatial,
    Operator,
    Environment,
    Logic,
}

impl SubGroup {
    pub fn allowed_for(self, category: Category) -> bool {
        use SubGroup::*;
        match category {
            Category::Feedback | Category::Action => matches!(self, Robot | Task | General),
            Category::Condition => {
                matches!(self, Spatial | Operator | Robot | Environment | Task | Logic)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub kind: String,
    pub category: Category,
    pub group: SubGroup,
    pub name: String,
    pub icon: String,
    pub description: String,
    pub properties: Vec<P>,
}

impl ComponentSpec {
    pub fn property(&self, name: &str) -> Option<&P> {
        self.properties.iter().find(|p| p.name == name)
    }

    /// Kinds whose placement comes from the robot or the process definition.
    pub fn is_positionable(&self) -> bool {
        self.category == Category::Feedback
            && !FIXED_PLACEMENT.contains(&self.kind.as_str())
            && self.property("offset").is_some()
    }
}

/// Feedback kinds that cannot be moved by hand: they follow the robot or the
/// step pose from the process definition.
pub const FIXED_PLACEMENT: [&str; 4] =
    ["robot-path", "robot-waypoints", "robot-silhouette", "task-model-highlight"];

#[derive(Debug)]
pub struct Registry {
    specs: BTreeMap<String, ComponentSpec>,
    order: Vec<String>,
}

impl Registry {
    pub fn lookup(&self, kind: &str) -> Option<&ComponentSpec> {
        self.specs.get(kind)
    }

    /// All specs in catalogue order (feedback, then actions, then conditions).
    pub fn all(&self) -> impl Iterator<Item = &ComponentSpec> {
        self.order.iter().map(|k| &self.specs[k])
    }

    pub fn by_category(&self, category: Category) -> impl Iterator<Item = &ComponentSpec> {
        self.all().filter(move |s| s.category == category)
    }

    pub fn count(&self, category: Category) -> usize {
        self.by_category(category).count()
    }
}

/// The process-wide registry.
pub fn registry() -> &'static Registry {
    static REGISTRY: OnceLock<Registry> = OnceLock::new();
    REGISTRY.get_or_init(build)
}

fn anchor() -> P {
    P::new("anchor", K::Anchor)
}

fn offset() -> P {
    P::new("offset", K::Pose).optional()
}

fn agent() -> P {
    P::new("agent", K::Agent)
}

fn color() -> P {
    P::new("color", K::Color)
}

fn window() -> P {
    P::new("window_ms", K::Integer).range(1.0, 60_000.0).with_default(json!(200))
}

fn feedback_target() -> P {
    P::new("target", K::String).refers_to(RefTarget::Feedback)
}

fn task_ref() -> P {
    P::new("task", K::String).refers_to(RefTarget::Task)
}

fn spec(
    kind: &str,
    category: Category,
    group: SubGroup,
    name: &str,
    icon: &str,
    description: &str,
    properties: Vec<P>,
) -> ComponentSpec {
    ComponentSpec {
        kind: kind.into(),
        category,
        group,
        name: name.into(),
        icon: icon.into(),
        description: description.into(),
        properties,
    }
}

fn build() -> Registry {
    use Category::*;
    use SubGroup::*;

    let specs = vec![
        // feedback / robot
        spec("robot-path", Feedback, Robot, "Robot path", "route",
            "Polyline of the robot's expected tool-center-point motion",
            vec![agent(), P::new("width", K::Float).range(0.0, 1.0), color()]),
        spec("robot-waypoints", Feedback, Robot, "Robot waypoints", "scatter-plot",
            "Markers at the waypoints of the robot's upcoming motion",
            vec![agent(), P::new("size", K::Float).range(0.0, 1.0), color()]),
        spec("robot-silhouette", Feedback, Robot, "Robot silhouette", "robot-outline",
            "Ghost of the robot at the end of its upcoming motion",
            vec![agent(), color(), P::new("opacity", K::Float).range(0.0, 1.0)]),
        spec("robot-state", Feedback, Robot, "Robot state", "state-machine",
            "Panel showing whether the robot is playing, paused or stopped",
            vec![agent(), anchor(), offset()]),
        spec("robot-sensor", Feedback, Robot, "Robot sensor", "gauge",
            "Scale visualizing a named robot or tool sensor value",
            vec![agent(), P::new("sensor", K::String), anchor(), offset(),
                 P::new("min", K::Float).with_default(json!(0.0)),
                 P::new("max", K::Float).with_default(json!(1.0))]),
        spec("robot-task-status", Feedback, Robot, "Robot task status", "progress-clock",
            "Current robot task and its progress",
            vec![agent(), anchor(), offset()]),
        // feedback / task
        spec("task-image", Feedback, Task, "Task image panel", "image-text",
            "Panel with image and instructions of an agent's current task",
            vec![agent(), anchor(), offset()]),
        spec("task-part-image", Feedback, Task, "Task part image", "image-filter-center-focus",
            "Images of the parts required by the current task",
            vec![agent(), anchor(), offset()]),
        spec("task-highlight", Feedback, Task, "Task highlight", "target",
            "Highlights the location of the current task step",
            vec![agent(), color()]),
        spec("task-model-highlight", Feedback, Task, "Task model highlight", "cube-scan",
            "Hologram of where parts of the current step are to be placed",
            vec![agent(), color(), P::new("opacity", K::Float).range(0.0, 1.0)]),
        spec("tool-highlight", Feedback, Task, "Tool highlight", "hammer-wrench",
            "Highlights the tools required by the current task",
            vec![agent(), color()]),
        spec("part-highlight", Feedback, Task, "Part highlight", "puzzle",
            "Highlights the parts required by the current task",
            vec![agent(), color()]),
        spec("task-list-status", Feedback, Task, "Task list status", "format-list-checks",
            "Overall task list with per-task status and progress",
            vec![anchor(), offset()]),
        spec("step-instructions-3d", Feedback, Task, "3D step instructions", "numeric",
            "Text instructions placed at a step location",
            vec![agent(), anchor(), offset(), P::new("text", K::String)]),
        // feedback / general
        spec("indicator-3d", Feedback, General, "3D indicator", "sphere",
            "Primitive shape that can act as a virtual button",
            vec![anchor(), offset(),
                 P::new("shape", K::Enum).domain(&["sphere", "cube", "cylinder", "arrow"]),
                 color(),
                 P::new("size", K::Float).range(0.0, 2.0).with_default(json!(0.1))]),
        spec("icon", Feedback, General, "Icon", "emoticon",
            "Symbol conveying a system state",
            vec![anchor(), offset(),
                 P::new("symbol", K::Enum).domain(&["info", "warning", "check", "error", "robot"]),
                 color()]),
        spec("zone", Feedback, General, "Zone", "vector-polygon",
            "Semi-transparent wall along a published point set",
            vec![P::new("zone", K::String), color(),
                 P::new("height", K::Float).range(0.0, 5.0).with_default(json!(2.0))]),
        spec("light", Feedback, General, "Light", "lightbulb",
            "Physical light in the workspace",
            vec![P::new("device", K::String), color(),
                 P::new("mode", K::Enum).domain(&["on", "off", "blink"])]),
        spec("sound", Feedback, General, "Sound", "volume-high",
            "Spatial audio cue",
            vec![P::new("clip", K::Enum).domain(&["beep", "chime", "warning", "alarm"]),
                 P::new("volume", K::Float).range(0.0, 1.0),
                 P::new("anchor", K::Anchor).optional()]),
        spec("message", Feedback, General, "Message", "message-text",
            "Free text panel",
            vec![P::new("text", K::String), anchor(), offset()]),
        // actions / robot
        spec("robot-play-pause", Action, Robot, "Robot play/pause", "play-pause",
            "Toggles the robot program between playing and paused",
            vec![agent()]),
        spec("robot-acknowledge", Action, Robot, "Robot acknowledge", "check-decagram",
            "Tells the robot it may start its next task",
            vec![agent()]),
        spec("robot-move-mode", Action, Robot, "Robot move mode", "hand-back-right",
            "Toggles hand-guiding mode",
            vec![agent()]),
        // actions / task
        spec("complete-task", Action, Task, "Complete task", "check-circle",
            "Confirms completion of the agent's active task",
            vec![agent()]),
        spec("reassign-task", Action, Task, "Reassign task", "account-switch",
            "Assigns a task to a different agent",
            vec![task_ref(), agent()]),
        spec("select-task", Action, Task, "Select task", "cursor-default-click",
            "Selects a task to show more information about it",
            vec![task_ref()]),
        // actions / general
        spec("acknowledge", Action, General, "Acknowledge", "thumb-up",
            "General acknowledgement",
            vec![P::new("label", K::String).with_default(json!(""))]),
        spec("global-play-pause", Action, General, "Global play/pause", "motion-pause",
            "Play/pause for every robot in the workspace",
            vec![]),
        spec("send-mqtt-message", Action, General, "Send message", "send",
            "Publishes a custom message on a message channel",
            vec![P::new("channel", K::String), P::new("payload", K::String)]),
        spec("toggle-feedback", Action, General, "Toggle feedback", "eye-off",
            "Shows, hides or toggles a feedback component",
            vec![feedback_target(),
                 P::new("mode", K::Enum).domain(&["toggle", "show", "hide"])]),
        // conditions / spatial
        spec("proximity", Condition, Spatial, "Proximity", "ruler",
            "Distance between two anchors compared with a threshold",
            vec![P::new("a", K::Anchor), P::new("b", K::Anchor),
                 P::new("threshold", K::Float).range(0.0, 1000.0),
                 P::new("direction", K::Enum).domain(&["within", "beyond"])]),
        spec("inside-zone", Condition, Spatial, "Inside zone", "select-marker",
            "Anchor inside the horizontal hull of a zone's points",
            vec![P::new("zone", K::String), anchor()]),
        // conditions / operator
        spec("gaze", Condition, Operator, "Gaze", "eye",
            "Operator looks at a feedback component",
            vec![feedback_target(),
                 P::new("radius", K::Float).range(0.0, 10.0).with_default(json!(0.15))]),
        spec("gaze-pinch", Condition, Operator, "Gaze + pinch", "gesture-pinch",
            "Operator pinches while looking at a feedback component",
            vec![feedback_target(),
                 P::new("radius", K::Float).range(0.0, 10.0).with_default(json!(0.15)),
                 window()]),
        spec("poke", Condition, Operator, "Poke", "gesture-tap",
            "Operator touches a feedback component",
            vec![feedback_target(), window()]),
        spec("speech-command", Condition, Operator, "Speech command", "microphone",
            "Operator speaks a command",
            vec![P::new("command", K::String), window()]),
        spec("operator-skill", Condition, Operator, "Operator skill", "school",
            "Compares an operator's skill level",
            vec![agent(), P::new("level", K::Integer).range(0.0, 10.0),
                 P::new("comparison", K::Enum).domain(&["at-least", "at-most", "equal"])]),
        // conditions / robot
        spec("robot-run-state", Condition, Robot, "Robot state", "robot",
            "Robot run state equals the configured state",
            vec![agent(), P::new("state", K::Enum).domain(&["playing", "paused", "stopped"])]),
        spec("robot-moving", Condition, Robot, "Robot moving", "robot-industrial",
            "Robot is in motion",
            vec![agent()]),
        spec("robot-sensor-threshold", Condition, Robot, "Robot sensor threshold", "gauge-full",
            "Named robot sensor value compared with a threshold",
            vec![agent(), P::new("sensor", K::String), P::new("threshold", K::Float),
                 P::new("comparison", K::Enum).domain(&["above", "below"])]),
        spec("robot-assistance", Condition, Robot, "Robot assistance", "hand-extended",
            "Robot requests operator assistance",
            vec![agent()]),
        // conditions / environment
        spec("workstation-button", Condition, Environment, "Workstation button", "gesture-tap-button",
            "Physical button at the workstation is pressed",
            vec![P::new("button", K::String), window()]),
        spec("message-received", Condition, Environment, "Message received", "email-receive",
            "A message arrived on a channel",
            vec![P::new("channel", K::String),
                 P::new("contains", K::String).with_default(json!("")),
                 window()]),
        // conditions / task
        spec("task-status", Condition, Task, "Task status", "list-status",
            "Task is in the configured status",
            vec![task_ref(),
                 P::new("status", K::Enum).domain(&["pending", "ready", "active", "completed"])]),
        spec("task-assigned-to", Condition, Task, "Task assigned to", "account-arrow-right",
            "Task is assigned to the configured agent",
            vec![task_ref(), agent()]),
        // conditions / logic
        spec("and", Condition, Logic, "AND", "gate-and",
            "All operands active",
            logic_operands()),
        spec("or", Condition, Logic, "OR", "gate-or",
            "Any operand active",
            logic_operands()),
        spec("not", Condition, Logic, "NOT", "gate-not",
            "Operand inactive",
            vec![P::new("operand", K::Condition)]),
    ];

    let order = specs.iter().map(|s| s.kind.clone()).collect();
    let specs = specs.into_iter().map(|s| (s.kind.clone(), s)).collect();
    Registry { specs, order }
}

/// Property names of the operands of AND/OR, in evaluation order.
pub const LOGIC_OPERANDS: [&str; 4] = ["operand-1", "operand-2", "operand-3", "operand-4"];

fn logic_operands() -> Vec<P> {
    LOGIC_OPERANDS
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let p = P::new(n, K::Condition);
            if i < 2 {
                p
            } else {
                p.optional()
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn counts_per_category() {
        let r = registry();
        assert_eq!(
            (r.count(Category::Feedback), r.count(Category::Action), r.count(Category::Condition)),
            (20, 10, 18)
        );
    }

    #[test]
    fn robot_path_schema() {
        let spec = registry().lookup("robot-path").unwrap();
        let props: Vec<(&str, K)> =
            spec.properties.iter().map(|p| (p.name.as_str(), p.kind)).collect();
        assert_eq!(props, vec![("agent", K::Agent), ("width", K::Float), ("color", K::Color)]);
        assert!(!spec.is_positionable());
    }

    #[test]
    fn unknown_kind() {
        assert!(registry().lookup("unknown").is_none());
    }

    #[test]
    fn kinds_unique_and_groups_valid() {
        let r = registry();
        let kinds: BTreeSet<_> = r.all().map(|s| s.kind.clone()).collect();
        assert_eq!(kinds.len(), 48);
        for s in r.all() {
            assert!(s.group.allowed_for(s.category), "{} in {:?}", s.kind, s.group);
            assert!(!s.name.is_empty() && !s.icon.is_empty() && !s.description.is_empty());
            let names: BTreeSet<_> = s.properties.iter().map(|p| &p.name).collect();
            assert_eq!(names.len(), s.properties.len(), "{}", s.kind);
        }
    }

    #[test]
    fn condition_groups_cover_six_categories() {
        let groups: BTreeSet<_> = registry().by_category(Category::Condition).map(|s| s.group).collect();
        assert_eq!(groups.len(), 6);
        let fb: BTreeSet<_> = registry().by_category(Category::Feedback).map(|s| s.group).collect();
        assert_eq!(fb, [SubGroup::Robot, SubGroup::Task, SubGroup::General].into_iter().collect());
    }
}
