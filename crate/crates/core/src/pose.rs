//! Rigid transforms.
//!
//! Rotations are unit quaternions stored as `(w, x, y, z)` and act actively on
//! vectors. `compose(parent, child)` expresses `child` in the frame of `parent`:
//! the child position is rotated by the parent orientation and then translated,
//! and orientations multiply as `q_parent * q_child`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum deviation of a quaternion norm from 1 accepted at construction.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PoseError {
    #[error("invalid pose: non-finite component")]
    NonFinite,
    #[error("invalid pose: quaternion norm {0} is not unit")]
    NotUnit(f64),
}

pub type Vec3 = [f64; 3];

pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn distance(a: Vec3, b: Vec3) -> f64 {
    norm(sub(a, b))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quat {
    pub const IDENTITY: Quat = Quat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    /// Builds a unit quaternion, renormalizing small drift and rejecting
    /// anything non-finite or clearly not a rotation.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self, PoseError> {
        let q = Quat { w, x, y, z };
        if ![w, x, y, z].iter().all(|c| c.is_finite()) {
            return Err(PoseError::NonFinite);
        }
        let n = q.norm();
        if (n - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(PoseError::NotUnit(n));
        }
        // unit values are kept bit-exact so serialized poses round-trip
        Ok(q.normalized())
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Result<Self, PoseError> {
        let n = norm(axis);
        if !n.is_finite() || !angle.is_finite() {
            return Err(PoseError::NonFinite);
        }
        if n == 0.0 {
            return Ok(Self::IDENTITY);
        }
        let (s, c) = (angle / 2.0).sin_cos();
        let k = s / n;
        Ok(Quat { w: c, x: axis[0] * k, y: axis[1] * k, z: axis[2] * k }.normalized())
    }

    pub fn rot_x(angle: f64) -> Self {
        let (s, c) = (angle / 2.0).sin_cos();
        Quat { w: c, x: s, y: 0.0, z: 0.0 }
    }

    pub fn rot_z(angle: f64) -> Self {
        let (s, c) = (angle / 2.0).sin_cos();
        Quat { w: c, x: 0.0, y: 0.0, z: s }
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    fn normalized(self) -> Self {
        let n = self.norm();
        if (n - 1.0).abs() <= 1e-12 {
            return self;
        }
        Quat { w: self.w / n, x: self.x / n, y: self.y / n, z: self.z / n }
    }

    pub fn conjugate(&self) -> Self {
        Quat { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    /// Hamilton product, renormalized when drift exceeds 1e-12.
    pub fn mul(&self, o: &Quat) -> Quat {
        self.mul_raw(o).normalized()
    }

    pub fn rotate(&self, v: Vec3) -> Vec3 {
        // v' = v + 2w (u x v) + 2 u x (u x v)
        let u = [self.x, self.y, self.z];
        let t = scale(cross(u, v), 2.0);
        add(add(v, scale(t, self.w)), cross(u, t))
    }

    /// Rotation angle in `[0, pi]` between two orientations.
    pub fn angle_to(&self, other: &Quat) -> f64 {
        let d = self.conjugate().mul_raw(other);
        let v = (d.x * d.x + d.y * d.y + d.z * d.z).sqrt();
        2.0 * v.atan2(d.w.abs())
    }

    fn mul_raw(&self, o: &Quat) -> Quat {
        Quat {
            w: self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            x: self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            y: self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            z: self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPose", into = "RawPose")]
pub struct Pose {
    pub position: Vec3,
    pub orientation: Quat,
}

#[derive(Serialize, Deserialize)]
struct RawPose {
    position: [f64; 3],
    orientation: [f64; 4],
}

impl TryFrom<RawPose> for Pose {
    type Error = PoseError;

    fn try_from(raw: RawPose) -> Result<Self, Self::Error> {
        let [w, x, y, z] = raw.orientation;
        Pose::new(raw.position, Quat::new(w, x, y, z)?)
    }
}

impl From<Pose> for RawPose {
    fn from(p: Pose) -> Self {
        RawPose { position: p.position, orientation: p.orientation.to_array() }
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Pose {
    pub const IDENTITY: Pose = Pose { position: [0.0; 3], orientation: Quat::IDENTITY };

    pub fn new(position: Vec3, orientation: Quat) -> Result<Self, PoseError> {
        if !position.iter().all(|c| c.is_finite()) {
            return Err(PoseError::NonFinite);
        }
        let q = Quat::new(orientation.w, orientation.x, orientation.y, orientation.z)?;
        Ok(Pose { position, orientation: q })
    }

    pub fn translation(x: f64, y: f64, z: f64) -> Result<Self, PoseError> {
        Pose::new([x, y, z], Quat::IDENTITY)
    }

    pub fn rotation(orientation: Quat) -> Self {
        Pose { position: [0.0; 3], orientation }
    }

    pub fn compose(&self, child: &Pose) -> Pose {
        Pose {
            position: add(self.position, self.orientation.rotate(child.position)),
            orientation: self.orientation.mul(&child.orientation),
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.orientation.conjugate();
        Pose { position: scale(inv.rotate(self.position), -1.0), orientation: inv }
    }

    pub fn transform_point(&self, p: Vec3) -> Vec3 {
        add(self.position, self.orientation.rotate(p))
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().chain(self.orientation.to_array().iter()).all(|c| c.is_finite())
    }
}

/// Checked composition for inputs that did not come through a constructor.
pub fn compose(parent: &Pose, child: &Pose) -> Result<Pose, PoseError> {
    if !parent.is_finite() || !child.is_finite() {
        return Err(PoseError::NonFinite);
    }
    Ok(parent.compose(child))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn close(a: Vec3, b: Vec3, tol: f64) -> bool {
        a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn identity_is_neutral() {
        let p = Pose::new([0.3, -1.0, 2.0], Quat::from_axis_angle([1.0, 2.0, 3.0], 0.7).unwrap())
            .unwrap();
        let a = compose(&Pose::IDENTITY, &p).unwrap();
        let b = compose(&p, &Pose::IDENTITY).unwrap();
        for q in [a, b] {
            assert!(close(q.position, p.position, 1e-12));
            assert!(q.orientation.angle_to(&p.orientation) < 1e-12);
        }
    }

    #[test]
    fn translations_add() {
        let a = Pose::translation(1.0, 0.0, 0.0).unwrap();
        let b = Pose::translation(0.0, 2.0, 0.0).unwrap();
        let c = compose(&a, &b).unwrap();
        assert_eq!(c.position, [1.0, 2.0, 0.0]);
        assert_eq!(c.orientation, Quat::IDENTITY);
    }

    #[test]
    fn rotation_then_translation() {
        let r = Pose::rotation(Quat::rot_z(FRAC_PI_2));
        let t = Pose::translation(1.0, 0.0, 0.0).unwrap();
        let c = compose(&r, &t).unwrap();
        assert!(close(c.position, [0.0, 1.0, 0.0], 1e-12));
    }

    #[test]
    fn rejects_non_finite() {
        assert_eq!(Pose::translation(f64::NAN, 0.0, 0.0), Err(PoseError::NonFinite));
        assert_eq!(Quat::new(f64::INFINITY, 0.0, 0.0, 0.0), Err(PoseError::NonFinite));
        let bad = Pose { position: [f64::NAN, 0.0, 0.0], orientation: Quat::IDENTITY };
        assert_eq!(compose(&bad, &Pose::IDENTITY), Err(PoseError::NonFinite));
    }

    #[test]
    fn rejects_non_unit_quaternion() {
        assert!(matches!(Quat::new(2.0, 0.0, 0.0, 0.0), Err(PoseError::NotUnit(_))));
        assert!(matches!(Quat::new(0.0, 0.0, 0.0, 0.0), Err(PoseError::NotUnit(_))));
    }

    #[test]
    fn serializes_as_arrays() {
        let p = Pose::translation(1.0, 2.0, 3.0).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"position":[1.0,2.0,3.0],"orientation":[1.0,0.0,0.0,0.0]}"#);
        let back: Pose = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<Pose>(r#"{"position":[0,0,0],"orientation":[3,0,0,0]}"#)
            .is_err());
    }
}
