//! Forward kinematics over a Denavit-Hartenberg table.

use hrc_core::{Pose, Quat};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const UR5E_JSON: &str = include_str!("../../data/ur5e.json");

#[derive(Debug, Error, PartialEq)]
pub enum KinematicsError {
    #[error("joint vector is not finite")]
    NonFinite,
    #[error("robot model: {0}")]
    Model(String),
}

/// One standard DH row: rot_z(θ + offset) · trans_z(d) · trans_x(a) · rot_x(α).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DhRow {
    pub a: f64,
    pub d: f64,
    pub alpha: f64,
    #[serde(default)]
    pub theta_offset: f64,
}

impl DhRow {
    pub fn pose(&self, theta: f64) -> Pose {
        let t = theta + self.theta_offset;
        Pose {
            position: [self.a * t.cos(), self.a * t.sin(), self.d],
            orientation: Quat::rot_z(t).mul(&Quat::rot_x(self.alpha)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotModel {
    pub model: String,
    #[serde(default)]
    pub note: String,
    pub dh: [DhRow; 6],
    pub joint_limits: [[f64; 2]; 6],
    /// rad/s
    pub max_speed: [f64; 6],
    pub home: [f64; 6],
}

impl RobotModel {
    pub fn ur5e() -> Self {
        Self::from_json(UR5E_JSON).expect("bundled model is valid")
    }

    pub fn from_json(s: &str) -> Result<Self, KinematicsError> {
        let m: RobotModel = serde_json::from_str(s).map_err(|e| KinematicsError::Model(e.to_string()))?;
        let finite = m.dh.iter().all(|r| [r.a, r.d, r.alpha, r.theta_offset].iter().all(|v| v.is_finite()));
        if !finite {
            return Err(KinematicsError::Model("DH table must be finite".into()));
        }
        if !m.max_speed.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(KinematicsError::Model("joint speeds must be positive".into()));
        }
        if !m.joint_limits.iter().all(|[lo, hi]| lo < hi) {
            return Err(KinematicsError::Model("joint limits must be ordered".into()));
        }
        Ok(m)
    }

    /// Flange pose in the base frame.
    pub fn fk(&self, q: &[f64; 6]) -> Result<Pose, KinematicsError> {
        if !q.iter().all(|v| v.is_finite()) {
            return Err(KinematicsError::NonFinite);
        }
        Ok(self.dh.iter().zip(q).fold(Pose::IDENTITY, |acc, (row, &t)| acc.compose(&row.pose(t))))
    }

    pub fn clamp(&self, q: [f64; 6]) -> [f64; 6] {
        let mut out = q;
        for (v, [lo, hi]) in out.iter_mut().zip(self.joint_limits) {
            *v = v.clamp(lo, hi);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn zero_configuration_is_stretched_along_x() {
        let m = RobotModel::ur5e();
        let p = m.fk(&[0.0; 6]).unwrap();
        // With α1 = π/2 the shoulder chain extends along -x, wrist offsets along y and z.
        let expected = [-0.425 - 0.3922, -(0.1333 + 0.0996), 0.1625 - 0.0997];
        for i in 0..3 {
            assert!((p.position[i] - expected[i]).abs() < 1e-12, "{:?}", p.position);
        }
    }

    #[test]
    fn base_rotation_rotates_tcp() {
        let m = RobotModel::ur5e();
        let q = m.home;
        let p0 = m.fk(&q).unwrap().position;
        let mut q1 = q;
        q1[0] += FRAC_PI_2;
        let p1 = m.fk(&q1).unwrap().position;
        assert!((p1[0] + p0[1]).abs() < 1e-12 && (p1[1] - p0[0]).abs() < 1e-12 && (p1[2] - p0[2]).abs() < 1e-12);
    }

    #[test]
    fn rejects_nan() {
        assert_eq!(RobotModel::ur5e().fk(&[f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0]), Err(KinematicsError::NonFinite));
    }
}
