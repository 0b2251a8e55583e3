//! Live state consumed by condition evaluation and the scene.

use crate::anchor::BodyPart;
use crate::pose::{Pose, Vec3};
use crate::task::TaskStatus;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunState {
    Playing,
    Paused,
    Stopped,
}

impl RunState {
    pub fn as_str(self) -> &'static str {
        match self {
            RunState::Playing => "playing",
            RunState::Paused => "paused",
            RunState::Stopped => "stopped",
        }
    }

    pub fn parse(s: &str) -> Option<RunState> {
        [RunState::Playing, RunState::Paused, RunState::Stopped].into_iter().find(|r| r.as_str() == s)
    }
}

impl fmt::Display for RunState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One sample of the robot state stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotStateSample {
    pub agent: String,
    /// Monotonic milliseconds.
    pub t_ms: u64,
    pub joints: [f64; 6],
    pub tcp: Pose,
    pub run_state: RunState,
    pub moving: bool,
    /// Hand-guiding stub engaged; reported run state is `paused`.
    #[serde(default)]
    pub move_mode: bool,
    #[serde(default)]
    pub assistance: bool,
    #[serde(default)]
    pub sensors: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<String>,
    #[serde(default)]
    pub progress: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputKind {
    Poke,
    Gaze,
    Pinch,
    Button,
    Speech,
    Message,
}

impl InputKind {
    pub fn as_str(self) -> &'static str {
        match self {
            InputKind::Poke => "poke",
            InputKind::Gaze => "gaze",
            InputKind::Pinch => "pinch",
            InputKind::Button => "button",
            InputKind::Speech => "speech",
            InputKind::Message => "message",
        }
    }
}

/// A discrete user or environment input. `target` holds the feedback id for
/// poke/gaze/pinch, the button id, the spoken token or the message channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputEvent {
    pub kind: InputKind,
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<BodyPart>,
    pub t_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<String>,
    /// Target unknown to the publishing client; ignored by evaluation.
    #[serde(default)]
    pub unresolved: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskState {
    pub status: TaskStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<String>,
}

/// Latest snapshot of everything conditions can observe.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub t_ms: u64,
    pub robots: BTreeMap<String, RobotStateSample>,
    pub body: BTreeMap<BodyPart, Pose>,
    pub tasks: BTreeMap<String, TaskState>,
    /// Recent input events in arrival order.
    pub events: Vec<InputEvent>,
    pub zones: BTreeMap<String, Vec<Vec3>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected_task: Option<String>,
}

impl WorldState {
    /// Most recent event of `kind` on `target` no older than `window_ms`.
    pub fn recent_event(&self, kind: InputKind, target: &str, window_ms: u64) -> Option<&InputEvent> {
        self.events.iter().rev().find(|e| {
            e.kind == kind
                && !e.unresolved
                && e.target == target
                && e.t_ms <= self.t_ms
                && self.t_ms - e.t_ms <= window_ms
        })
    }

    /// Drops events older than `horizon_ms`.
    pub fn prune_events(&mut self, horizon_ms: u64) {
        let now = self.t_ms;
        self.events.retain(|e| e.t_ms + horizon_ms >= now);
    }

    /// Agent's current task: its active task, else its first ready task.
    pub fn current_task(&self, agent: &str, order: impl Fn(&str) -> u32) -> Option<String> {
        let mut mine: Vec<(&String, &TaskState)> =
            self.tasks.iter().filter(|(_, s)| s.agent.as_deref() == Some(agent)).collect();
        mine.sort_by_key(|(id, _)| (order(id), (*id).clone()));
        mine.iter()
            .find(|(_, s)| s.status == TaskStatus::Active)
            .or_else(|| mine.iter().find(|(_, s)| s.status == TaskStatus::Ready))
            .map(|(id, _)| (*id).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(kind: InputKind, target: &str, t: u64) -> InputEvent {
        InputEvent { kind, target: target.into(), source: None, t_ms: t, payload: None, unresolved: false }
    }

    #[test]
    fn event_window_is_inclusive() {
        let mut w = WorldState { t_ms: 1200, ..Default::default() };
        w.events.push(ev(InputKind::Poke, "b", 1000));
        assert!(w.recent_event(InputKind::Poke, "b", 200).is_some());
        assert!(w.recent_event(InputKind::Poke, "b", 199).is_none());
        assert!(w.recent_event(InputKind::Gaze, "b", 200).is_none());
        w.t_ms = 900;
        assert!(w.recent_event(InputKind::Poke, "b", 200).is_none(), "future events ignored");
    }

    #[test]
    fn unresolved_events_ignored() {
        let mut w = WorldState { t_ms: 10, ..Default::default() };
        let mut e = ev(InputKind::Poke, "x", 10);
        e.unresolved = true;
        w.events.push(e);
        assert!(w.recent_event(InputKind::Poke, "x", 200).is_none());
    }

    #[test]
    fn run_state_names() {
        for (s, r) in [("playing", RunState::Playing), ("paused", RunState::Paused), ("stopped", RunState::Stopped)] {
            assert_eq!(RunState::parse(s), Some(r));
            assert_eq!(serde_json::to_value(r).unwrap(), serde_json::json!(s));
        }
        assert_eq!(RunState::parse("move-mode"), None);
    }
}
