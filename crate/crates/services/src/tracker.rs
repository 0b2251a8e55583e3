//! Folds live topics into a [`WorldState`].

use hrc_core::bus::{EventStream, Envelope, Topic};
use hrc_core::{BodyPart, InputEvent, InputKind, Pose, RobotStateSample, TaskState, TaskStatus, Vec3, WorldState};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Payload of `task/<id>/status`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskStatusMsg {
    pub task: String,
    pub status: TaskStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<String>,
    pub t_ms: u64,
}

/// Payload of `task/progress`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressMsg {
    pub completed: usize,
    pub total: usize,
    pub fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected_task: Option<String>,
}

/// Payload of `zone/<id>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneMsg {
    pub zone_id: String,
    pub points: Vec<Vec3>,
}

/// Payload of `message/<channel>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageMsg {
    pub channel: String,
    #[serde(default)]
    pub payload: String,
    pub t_ms: u64,
}

pub fn body_pose_payload(pose: &Pose, t_ms: u64) -> Value {
    json!({"pose": pose, "t_ms": t_ms})
}

/// Events older than this are dropped from the world snapshot.
pub const EVENT_HORIZON_MS: u64 = 60_000;

#[derive(Debug, Clone)]
pub struct WorldTracker {
    ws: String,
    pub world: WorldState,
    pub errors: Vec<String>,
}

impl WorldTracker {
    pub fn new(ws: &str) -> Self {
        WorldTracker { ws: ws.into(), world: WorldState::default(), errors: Vec::new() }
    }

    /// Applies a live-data envelope; returns `true` if the world changed.
    pub fn apply(&mut self, env: &Envelope) -> bool {
        let Ok(topic) = Topic::parse(&env.topic) else {
            return false;
        };
        if topic.ws() != self.ws {
            return false;
        }
        let res: Result<bool, serde_json::Error> = (|| {
            let p = env.payload.clone();
            Ok(match topic {
                Topic::RobotState { agent, .. } => {
                    let s: RobotStateSample = serde_json::from_value(p)?;
                    self.world.robots.insert(agent, s);
                    true
                }
                Topic::Events { stream: EventStream::Input, .. } => {
                    let e: InputEvent = serde_json::from_value(p)?;
                    self.world.events.push(e);
                    true
                }
                Topic::Message { channel, .. } => {
                    let m: MessageMsg = serde_json::from_value(p)?;
                    self.world.events.push(InputEvent {
                        kind: InputKind::Message,
                        target: channel,
                        source: None,
                        t_ms: m.t_ms,
                        payload: Some(m.payload),
                        unresolved: false,
                    });
                    true
                }
                Topic::TaskStatus { id, .. } => {
                    let m: TaskStatusMsg = serde_json::from_value(p)?;
                    self.world.tasks.insert(id, TaskState { status: m.status, agent: m.agent });
                    true
                }
                Topic::TaskProgress { .. } => {
                    let m: ProgressMsg = serde_json::from_value(p)?;
                    self.world.selected_task = m.selected_task;
                    true
                }
                Topic::Zone { zone, .. } => {
                    let m: ZoneMsg = serde_json::from_value(p)?;
                    if m.points.is_empty() {
                        self.world.zones.remove(&zone);
                    } else {
                        self.world.zones.insert(zone, m.points);
                    }
                    true
                }
                Topic::BodyPose { part, .. } => {
                    let Some(b) = BodyPart::parse(&part) else {
                        return Ok(false);
                    };
                    let pose: Pose = serde_json::from_value(p["pose"].clone())?;
                    self.world.body.insert(b, pose);
                    true
                }
                _ => false,
            })
        })();
        match res {
            Ok(changed) => changed,
            Err(e) => {
                self.errors.push(format!("{}: {e}", env.topic));
                false
            }
        }
    }

    /// Moves the snapshot clock and drops stale events.
    pub fn advance(&mut self, now_ms: u64) {
        self.world.t_ms = now_ms;
        self.world.prune_events(EVENT_HORIZON_MS);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(topic: &str, payload: Value) -> Envelope {
        Envelope { topic: topic.into(), payload, retained: false, publisher: "p".into(), seq: 1 }
    }

    #[test]
    fn folds_live_topics() {
        let mut t = WorldTracker::new("ws");
        assert!(t.apply(&env("arthur/ws/zone/z1", json!({"zone_id": "z1", "points": [[1.0, 0.0, 0.0]]}))));
        assert!(t.apply(&env(
            "arthur/ws/task/t1/status",
            json!({"task": "t1", "status": "ready", "agent": "op", "t_ms": 5})
        )));
        assert!(t.apply(&env("arthur/ws/message/alerts", json!({"channel": "alerts", "payload": "hi", "t_ms": 7}))));
        assert!(!t.apply(&env("arthur/other/zone/z1", json!({"zone_id": "z1", "points": []}))));
        assert_eq!(t.world.zones["z1"].len(), 1);
        assert_eq!(t.world.tasks["t1"].status, TaskStatus::Ready);
        assert_eq!(t.world.events[0].kind, InputKind::Message);
        assert!(!t.apply(&env("arthur/ws/zone/z2", json!({"bad": 1}))));
        assert_eq!(t.errors.len(), 1);
    }
}
