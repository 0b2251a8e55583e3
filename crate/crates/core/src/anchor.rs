//! Trackers, anchors and transform-chain resolution.

use crate::pose::Pose;
use crate::world::WorldState;
use crate::workstation::Workstation;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

/// Body-tracked frames present in every workstation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BodyPart {
    UserHead,
    UserHandLeft,
    UserHandRight,
}

impl BodyPart {
    pub const ALL: [BodyPart; 3] = [BodyPart::UserHead, BodyPart::UserHandLeft, BodyPart::UserHandRight];

    /// Id of the default anchor attached to this body part.
    pub fn anchor_id(self) -> &'static str {
        match self {
            BodyPart::UserHead => "user-head",
            BodyPart::UserHandLeft => "user-hand-left",
            BodyPart::UserHandRight => "user-hand-right",
        }
    }

    pub fn parse(s: &str) -> Option<BodyPart> {
        BodyPart::ALL.into_iter().find(|b| b.anchor_id() == s)
    }
}

impl fmt::Display for BodyPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.anchor_id())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tracker {
    pub id: String,
    pub label: String,
    /// Asserted world pose; stands in for marker detection.
    pub world_pose: Pose,
    pub root_anchor: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnchorParent {
    TrackerRoot(String),
    Anchor(String),
    Body(BodyPart),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub id: String,
    pub label: String,
    pub parent: AnchorParent,
    pub local_pose: Pose,
}

impl Anchor {
    pub fn is_root(&self) -> bool {
        matches!(self.parent, AnchorParent::TrackerRoot(_) | AnchorParent::Body(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnchorError {
    #[error("unresolved anchor '{anchor}': missing '{missing}'")]
    Unresolved { anchor: String, missing: String },
    #[error("anchor cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
}

/// Walks the parent chain of `anchor_id` and folds the local poses from the
/// root frame (tracker or body part) down to the anchor.
pub fn resolve_anchor(anchor_id: &str, ws: &Workstation, world: &WorldState) -> Result<Pose, AnchorError> {
    let mut chain: Vec<&Anchor> = Vec::new();
    let mut seen = BTreeSet::new();
    let mut current = anchor_id;
    let root = loop {
        let Some(a) = ws.anchors.get(current) else {
            return Err(AnchorError::Unresolved {
                anchor: anchor_id.to_string(),
                missing: current.to_string(),
            });
        };
        if !seen.insert(current) {
            let mut cycle: Vec<String> = chain.iter().map(|a| a.id.clone()).collect();
            cycle.push(current.to_string());
            return Err(AnchorError::Cycle(cycle));
        }
        chain.push(a);
        match &a.parent {
            AnchorParent::Anchor(p) => current = p,
            AnchorParent::TrackerRoot(t) => match ws.trackers.get(t) {
                Some(tr) => break tr.world_pose,
                None => {
                    return Err(AnchorError::Unresolved {
                        anchor: anchor_id.to_string(),
                        missing: t.clone(),
                    })
                }
            },
            AnchorParent::Body(b) => match world.body.get(b) {
                Some(p) => break *p,
                None => {
                    return Err(AnchorError::Unresolved {
                        anchor: anchor_id.to_string(),
                        missing: b.anchor_id().to_string(),
                    })
                }
            },
        }
    };
    Ok(chain.iter().rev().fold(root, |acc, a| acc.compose(&a.local_pose)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::Quat;

    fn ws_with_chain() -> Workstation {
        let mut ws = Workstation::new("ws1", "test");
        ws.trackers.insert(
            "t1".into(),
            Tracker { id: "t1".into(), label: "qr".into(), world_pose: Pose::IDENTITY, root_anchor: "t1-root".into() },
        );
        let mut add = |id: &str, parent: AnchorParent, p: Pose| {
            ws.anchors.insert(id.into(), Anchor { id: id.into(), label: id.into(), parent, local_pose: p });
        };
        add("t1-root", AnchorParent::TrackerRoot("t1".into()), Pose::IDENTITY);
        add("a", AnchorParent::Anchor("t1-root".into()), Pose::translation(1.0, 0.0, 0.0).unwrap());
        add("b", AnchorParent::Anchor("a".into()), Pose::translation(0.0, 2.0, 0.0).unwrap());
        add("hand-tip", AnchorParent::Anchor("user-hand-left".into()), Pose::translation(0.0, 0.0, 0.1).unwrap());
        ws
    }

    #[test]
    fn tracker_root_is_tracker_pose() {
        let mut ws = ws_with_chain();
        let p = Pose::new([1.0, 2.0, 3.0], Quat::rot_z(0.3)).unwrap();
        ws.trackers.get_mut("t1").unwrap().world_pose = p;
        assert_eq!(resolve_anchor("t1-root", &ws, &WorldState::default()).unwrap(), p);
    }

    #[test]
    fn chain_folds() {
        let ws = ws_with_chain();
        let p = resolve_anchor("b", &ws, &WorldState::default()).unwrap();
        assert_eq!(p.position, [1.0, 2.0, 0.0]);
    }

    #[test]
    fn missing_body_pose_is_unresolved() {
        let ws = ws_with_chain();
        let err = resolve_anchor("hand-tip", &ws, &WorldState::default()).unwrap_err();
        assert_eq!(
            err,
            AnchorError::Unresolved { anchor: "hand-tip".into(), missing: "user-hand-left".into() }
        );
        let mut world = WorldState::default();
        world.body.insert(BodyPart::UserHandLeft, Pose::translation(0.0, 0.0, 1.0).unwrap());
        assert_eq!(resolve_anchor("hand-tip", &ws, &world).unwrap().position, [0.0, 0.0, 1.1]);
    }

    #[test]
    fn dangling_and_cycle() {
        let mut ws = ws_with_chain();
        ws.anchors.get_mut("a").unwrap().parent = AnchorParent::Anchor("gone".into());
        assert!(matches!(
            resolve_anchor("b", &ws, &WorldState::default()),
            Err(AnchorError::Unresolved { missing, .. }) if missing == "gone"
        ));
        ws.anchors.get_mut("a").unwrap().parent = AnchorParent::Anchor("b".into());
        assert!(matches!(resolve_anchor("b", &ws, &WorldState::default()), Err(AnchorError::Cycle(_))));
    }
}
