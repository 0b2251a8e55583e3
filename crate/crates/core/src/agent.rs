use crate::pose::Pose;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub id: String,
    pub name: String,
    #[serde(flatten)]
    pub role: AgentRole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "kebab-case")]
pub enum AgentRole {
    Operator {
        /// Ordinal skill level, higher is more experienced.
        skill_level: u8,
    },
    Robot {
        robot_type: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tool: Option<String>,
        /// Anchor the robot base is mounted relative to.
        mount_anchor: String,
        #[serde(default)]
        mount_offset: Pose,
    },
}

impl Agent {
    pub fn operator(id: &str, name: &str, skill_level: u8) -> Self {
        Agent { id: id.into(), name: name.into(), role: AgentRole::Operator { skill_level } }
    }

    pub fn robot(id: &str, name: &str, robot_type: &str, mount_anchor: &str) -> Self {
        Agent {
            id: id.into(),
            name: name.into(),
            role: AgentRole::Robot {
                robot_type: robot_type.into(),
                tool: None,
                mount_anchor: mount_anchor.into(),
                mount_offset: Pose::IDENTITY,
            },
        }
    }

    pub fn is_robot(&self) -> bool {
        matches!(self.role, AgentRole::Robot { .. })
    }

    pub fn skill_level(&self) -> Option<u8> {
        match self.role {
            AgentRole::Operator { skill_level } => Some(skill_level),
            AgentRole::Robot { .. } => None,
        }
    }

    pub fn mount_anchor(&self) -> Option<&str> {
        match &self.role {
            AgentRole::Robot { mount_anchor, .. } => Some(mount_anchor),
            AgentRole::Operator { .. } => None,
        }
    }
}
