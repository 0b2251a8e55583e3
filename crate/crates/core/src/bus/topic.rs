//! Topic grammar.
//!
//! ```text
//! arthur/<ws>/config/<category>/<id>        retained configuration entity
//! arthur/<ws>/config/deleted/<id>           deletion tombstone
//! arthur/<ws>/robot/<agent>/state           robot state stream
//! arthur/<ws>/events/{input|action|condition}
//! arthur/<ws>/condition/<id>/state          retained condition verdict
//! arthur/<ws>/task/<id>/status              retained task status
//! arthur/<ws>/task/progress                 retained progress summary
//! arthur/<ws>/zone/<zone-id>                zone point sets
//! arthur/<ws>/user/<body-part>/pose         scripted head/hand poses
//! arthur/<ws>/dispatch/<agent>              dispatch notices
//! arthur/<ws>/message/<channel>             custom messages
//! arthur/<ws>/fake/<kind>                   generated test data
//! arthur/<ws>/service/<name>/status         retained heartbeat
//! arthur/<ws>/control                       supervisor commands
//! arthur/<ws>/rpc/<service>/{request|response}
//! arthur/<ws>/rpc/robot/<agent>/{request|response}
//! ```

use std::fmt;
use thiserror::Error;

pub const ROOT: &str = "arthur";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopicError {
    #[error("malformed topic '{0}'")]
    Malformed(String),
    #[error("malformed filter '{0}'")]
    MalformedFilter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConfigCategory {
    Meta,
    Feedback,
    Action,
    Condition,
    Binding,
    Agent,
    Tracker,
    Anchor,
    Tool,
    Part,
    Task,
}

impl ConfigCategory {
    pub const ALL: [ConfigCategory; 11] = [
        ConfigCategory::Meta,
        ConfigCategory::Feedback,
        ConfigCategory::Action,
        ConfigCategory::Condition,
        ConfigCategory::Binding,
        ConfigCategory::Agent,
        ConfigCategory::Tracker,
        ConfigCategory::Anchor,
        ConfigCategory::Tool,
        ConfigCategory::Part,
        ConfigCategory::Task,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConfigCategory::Meta => "meta",
            ConfigCategory::Feedback => "feedback",
            ConfigCategory::Action => "action",
            ConfigCategory::Condition => "condition",
            ConfigCategory::Binding => "binding",
            ConfigCategory::Agent => "agent",
            ConfigCategory::Tracker => "tracker",
            ConfigCategory::Anchor => "anchor",
            ConfigCategory::Tool => "tool",
            ConfigCategory::Part => "part",
            ConfigCategory::Task => "task",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventStream {
    Input,
    Action,
    Condition,
}

impl EventStream {
    fn as_str(self) -> &'static str {
        match self {
            EventStream::Input => "input",
            EventStream::Action => "action",
            EventStream::Condition => "condition",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RpcDir {
    Request,
    Response,
}

impl RpcDir {
    fn as_str(self) -> &'static str {
        match self {
            RpcDir::Request => "request",
            RpcDir::Response => "response",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "request" => Some(RpcDir::Request),
            "response" => Some(RpcDir::Response),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Topic {
    Config { ws: String, category: ConfigCategory, id: String },
    Deleted { ws: String, id: String },
    RobotState { ws: String, agent: String },
    Events { ws: String, stream: EventStream },
    ConditionState { ws: String, id: String },
    TaskStatus { ws: String, id: String },
    TaskProgress { ws: String },
    Zone { ws: String, zone: String },
    BodyPose { ws: String, part: String },
    Dispatch { ws: String, agent: String },
    Message { ws: String, channel: String },
    Fake { ws: String, kind: String },
    ServiceStatus { ws: String, name: String },
    Control { ws: String },
    Rpc { ws: String, service: String, dir: RpcDir },
    RobotRpc { ws: String, agent: String, dir: RpcDir },
}

fn valid_segment(s: &str) -> bool {
    !s.is_empty() && !s.contains(['+', '#', '/', '\0'])
}

impl Topic {
    pub fn parse(s: &str) -> Result<Topic, TopicError> {
        let bad = || TopicError::Malformed(s.to_string());
        let seg: Vec<&str> = s.split('/').collect();
        if seg.len() < 3 || seg[0] != ROOT || !seg.iter().all(|x| valid_segment(x)) {
            return Err(bad());
        }
        let ws = seg[1].to_string();
        let t = match &seg[2..] {
            ["config", "deleted", id] => Topic::Deleted { ws, id: id.to_string() },
            ["config", cat, id] => Topic::Config {
                ws,
                category: ConfigCategory::parse(cat).ok_or_else(bad)?,
                id: id.to_string(),
            },
            ["robot", agent, "state"] => Topic::RobotState { ws, agent: agent.to_string() },
            ["events", "input"] => Topic::Events { ws, stream: EventStream::Input },
            ["events", "action"] => Topic::Events { ws, stream: EventStream::Action },
            ["events", "condition"] => Topic::Events { ws, stream: EventStream::Condition },
            ["condition", id, "state"] => Topic::ConditionState { ws, id: id.to_string() },
            ["task", "progress"] => Topic::TaskProgress { ws },
            ["task", id, "status"] => Topic::TaskStatus { ws, id: id.to_string() },
            ["zone", z] => Topic::Zone { ws, zone: z.to_string() },
            ["user", part, "pose"] => Topic::BodyPose { ws, part: part.to_string() },
            ["dispatch", a] => Topic::Dispatch { ws, agent: a.to_string() },
            ["message", c] => Topic::Message { ws, channel: c.to_string() },
            ["fake", k] => Topic::Fake { ws, kind: k.to_string() },
            ["service", n, "status"] => Topic::ServiceStatus { ws, name: n.to_string() },
            ["control"] => Topic::Control { ws },
            ["rpc", "robot", agent, dir] => Topic::RobotRpc {
                ws,
                agent: agent.to_string(),
                dir: RpcDir::parse(dir).ok_or_else(bad)?,
            },
            ["rpc", service, dir] if *service != "robot" => Topic::Rpc {
                ws,
                service: service.to_string(),
                dir: RpcDir::parse(dir).ok_or_else(bad)?,
            },
            _ => return Err(bad()),
        };
        Ok(t)
    }

    pub fn ws(&self) -> &str {
        match self {
            Topic::Config { ws, .. }
            | Topic::Deleted { ws, .. }
            | Topic::RobotState { ws, .. }
            | Topic::Events { ws, .. }
            | Topic::ConditionState { ws, .. }
            | Topic::TaskStatus { ws, .. }
            | Topic::TaskProgress { ws }
            | Topic::Zone { ws, .. }
            | Topic::BodyPose { ws, .. }
            | Topic::Dispatch { ws, .. }
            | Topic::Message { ws, .. }
            | Topic::Fake { ws, .. }
            | Topic::ServiceStatus { ws, .. }
            | Topic::Control { ws }
            | Topic::Rpc { ws, .. }
            | Topic::RobotRpc { ws, .. } => ws,
        }
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Topic::Config { ws, category, id } => write!(f, "{ROOT}/{ws}/config/{}/{id}", category.as_str()),
            Topic::Deleted { ws, id } => write!(f, "{ROOT}/{ws}/config/deleted/{id}"),
            Topic::RobotState { ws, agent } => write!(f, "{ROOT}/{ws}/robot/{agent}/state"),
            Topic::Events { ws, stream } => write!(f, "{ROOT}/{ws}/events/{}", stream.as_str()),
            Topic::ConditionState { ws, id } => write!(f, "{ROOT}/{ws}/condition/{id}/state"),
            Topic::TaskStatus { ws, id } => write!(f, "{ROOT}/{ws}/task/{id}/status"),
            Topic::TaskProgress { ws } => write!(f, "{ROOT}/{ws}/task/progress"),
            Topic::Zone { ws, zone } => write!(f, "{ROOT}/{ws}/zone/{zone}"),
            Topic::BodyPose { ws, part } => write!(f, "{ROOT}/{ws}/user/{part}/pose"),
            Topic::Dispatch { ws, agent } => write!(f, "{ROOT}/{ws}/dispatch/{agent}"),
            Topic::Message { ws, channel } => write!(f, "{ROOT}/{ws}/message/{channel}"),
            Topic::Fake { ws, kind } => write!(f, "{ROOT}/{ws}/fake/{kind}"),
            Topic::ServiceStatus { ws, name } => write!(f, "{ROOT}/{ws}/service/{name}/status"),
            Topic::Control { ws } => write!(f, "{ROOT}/{ws}/control"),
            Topic::Rpc { ws, service, dir } => write!(f, "{ROOT}/{ws}/rpc/{service}/{}", dir.as_str()),
            Topic::RobotRpc { ws, agent, dir } => write!(f, "{ROOT}/{ws}/rpc/robot/{agent}/{}", dir.as_str()),
        }
    }
}

/// Checks MQTT filter syntax: `+` spans one whole level, `#` only as the last level.
pub fn validate_filter(filter: &str) -> Result<(), TopicError> {
    let bad = || TopicError::MalformedFilter(filter.to_string());
    if filter.is_empty() {
        return Err(bad());
    }
    let levels: Vec<&str> = filter.split('/').collect();
    for (i, l) in levels.iter().enumerate() {
        if l.contains('#') && (*l != "#" || i != levels.len() - 1) {
            return Err(bad());
        }
        if l.contains('+') && *l != "+" {
            return Err(bad());
        }
    }
    Ok(())
}

/// MQTT filter matching.
pub fn matches(filter: &str, topic: &str) -> bool {
    let mut f = filter.split('/');
    let mut t = topic.split('/');
    loop {
        match (f.next(), t.next()) {
            (Some("#"), _) => return true,
            (Some("+"), Some(_)) => {}
            (Some(a), Some(b)) if a == b => {}
            (None, None) => return true,
            _ => return false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        for s in [
            "arthur/ws1/config/feedback/f42",
            "arthur/ws1/config/meta/workstation",
            "arthur/ws1/config/deleted/f42",
            "arthur/ws1/robot/robot-1/state",
            "arthur/ws1/events/input",
            "arthur/ws1/events/action",
            "arthur/ws1/events/condition",
            "arthur/ws1/condition/c1/state",
            "arthur/ws1/task/t1/status",
            "arthur/ws1/task/progress",
            "arthur/ws1/zone/z1",
            "arthur/ws1/user/user-head/pose",
            "arthur/ws1/dispatch/robot-1",
            "arthur/ws1/message/mes",
            "arthur/ws1/fake/path",
            "arthur/ws1/service/authoring/status",
            "arthur/ws1/control",
            "arthur/ws1/rpc/preview/request",
            "arthur/ws1/rpc/robot/robot-1/response",
        ] {
            assert_eq!(Topic::parse(s).unwrap().to_string(), s);
        }
    }

    #[test]
    fn rejects_malformed() {
        for s in [
            "",
            "arthur",
            "other/ws1/events/input",
            "arthur/ws1/config/widgets/x",
            "arthur/ws1/events/input/extra",
            "arthur/ws1//events",
            "arthur/+/events/input",
            "arthur/ws1/rpc/preview/sideways",
        ] {
            assert!(Topic::parse(s).is_err(), "{s}");
        }
    }

    #[test]
    fn wildcards() {
        assert!(matches("arthur/ws1/config/#", "arthur/ws1/config/feedback/f1"));
        assert!(matches("arthur/ws1/config/#", "arthur/ws1/config"));
        assert!(matches("arthur/+/robot/+/state", "arthur/ws9/robot/r2/state"));
        assert!(!matches("arthur/+/robot/+/state", "arthur/ws9/robot/r2/state/x"));
        assert!(!matches("arthur/ws1/config/#", "arthur/ws2/config/feedback/f1"));
        assert!(!matches("arthur/ws1/events/input", "arthur/ws1/events/action"));
    }

    #[test]
    fn filter_syntax() {
        assert!(validate_filter("arthur/#").is_ok());
        assert!(validate_filter("arthur/+/x").is_ok());
        assert!(validate_filter("arthur/#/x").is_err());
        assert!(validate_filter("arthur/a+/x").is_err());
        assert!(validate_filter("").is_err());
    }
}
