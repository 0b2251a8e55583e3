//! Seeded synthetic data for visual testing of path, waypoint, zone and
//! message feedback.

use hrc_core::{Pose, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

pub const KINDS: [&str; 4] = ["path", "waypoints", "zones", "messages"];
pub const FAKE_ZONE_ID: &str = "fake-zone";

pub const ZONE_POINTS: usize = 16;
pub const ZONE_RADIUS: f64 = 1.0;
pub const PATH_SAMPLES: usize = 50;
pub const PATH_RADIUS: f64 = 0.5;
pub const PATH_HEIGHT: f64 = 0.4;
pub const PATH_STEP_MS: u64 = 100;
pub const WAYPOINTS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub t_ms: u64,
    pub position: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FakeMessage {
    pub t_ms: u64,
    pub text: String,
}

/// Ring of points around the robot base in its horizontal plane.
pub fn zone_ring(base: &Pose) -> Vec<Vec3> {
    (0..ZONE_POINTS)
        .map(|k| {
            let a = TAU * k as f64 / ZONE_POINTS as f64;
            base.transform_point([ZONE_RADIUS * a.cos(), ZONE_RADIUS * a.sin(), 0.0])
        })
        .collect()
}

/// Half-circle arc above the base with timestamps every [`PATH_STEP_MS`].
pub fn path_arc(base: &Pose, t0_ms: u64) -> Vec<PathSample> {
    (0..PATH_SAMPLES)
        .map(|k| {
            let a = PI * k as f64 / (PATH_SAMPLES - 1) as f64;
            PathSample {
                t_ms: t0_ms + PATH_STEP_MS * k as u64,
                position: base.transform_point([PATH_RADIUS * a.cos(), PATH_RADIUS * a.sin(), PATH_HEIGHT]),
            }
        })
        .collect()
}

/// Random waypoints in a box in front of the base.
pub fn waypoints(base: &Pose, seed: u64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..WAYPOINTS)
        .map(|_| {
            let (u, v, w): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
            base.transform_point([0.3 + 0.3 * u, -0.4 + 0.8 * v, 0.2 + 0.3 * w])
        })
        .collect()
}

const TEXTS: [&str; 5] = [
    "Robot entering shared zone",
    "Check part alignment",
    "Tool change requested",
    "Cycle time nominal",
    "Please confirm the last step",
];

pub fn messages(seed: u64, t0_ms: u64) -> Vec<FakeMessage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..3)
        .map(|k| FakeMessage { t_ms: t0_ms + 1000 * k, text: TEXTS[rng.gen_range(0..TEXTS.len())].to_string() })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_radius_and_count() {
        let base = Pose::translation(2.0, 1.0, 0.5).unwrap();
        let ring = zone_ring(&base);
        assert_eq!(ring.len(), 16);
        for p in ring {
            let d = ((p[0] - 2.0).powi(2) + (p[1] - 1.0).powi(2)).sqrt();
            assert!((d - 1.0).abs() < 1e-12);
            assert_eq!(p[2], 0.5);
        }
    }

    #[test]
    fn path_timestamps_increase() {
        let p = path_arc(&Pose::IDENTITY, 1000);
        assert_eq!(p.len(), 50);
        assert!(p.windows(2).all(|w| w[0].t_ms < w[1].t_ms));
    }

    #[test]
    fn seeded_generators_repeat() {
        assert_eq!(waypoints(&Pose::IDENTITY, 7), waypoints(&Pose::IDENTITY, 7));
        assert_ne!(waypoints(&Pose::IDENTITY, 7), waypoints(&Pose::IDENTITY, 8));
        assert_eq!(messages(3, 0), messages(3, 0));
    }
}
