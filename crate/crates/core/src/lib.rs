//! Shared domain model for the HRC authoring platform: poses and anchor
//! chains, the component registry with typed property schemas, the
//! workstation configuration, live world state and the message bus.

pub mod agent;
pub mod anchor;
pub mod bus;
pub mod component;
pub mod pose;
pub mod property;
pub mod registry;
pub mod task;
pub mod workstation;
pub mod world;

pub use agent::{Agent, AgentRole};
pub use anchor::{resolve_anchor, Anchor, AnchorError, AnchorParent, BodyPart, Tracker};
pub use component::{validate_component, Binding, ComponentDescriptor, Edge};
pub use pose::{compose, Pose, PoseError, Quat, Vec3};
pub use property::{PropertyKind, PropertySchema, References, Violation};
pub use registry::{registry, Category, ComponentSpec, Registry, SubGroup};
pub use task::{AnchoredPose, Material, TaskSpec, TaskStatus};
pub use workstation::{Phase, Workstation};
pub use world::{InputEvent, InputKind, RobotStateSample, RunState, TaskState, WorldState};
