use hrc_core::pose::{compose, Pose, Quat};
use nalgebra::{Matrix4, Quaternion, Rotation3, UnitQuaternion, Vector3};
use proptest::prelude::*;

fn to_matrix(p: &Pose) -> Matrix4<f64> {
    let q = p.orientation;
    let uq = UnitQuaternion::from_quaternion(Quaternion::new(q.w, q.x, q.y, q.z));
    let mut m = uq.to_homogeneous();
    m[(0, 3)] = p.position[0];
    m[(1, 3)] = p.position[1];
    m[(2, 3)] = p.position[2];
    m
}

fn pose_error(p: &Pose, m: &Matrix4<f64>) -> (f64, f64) {
    let t = Vector3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)]);
    let dp = (Vector3::from(p.position) - t).norm();
    let r = Rotation3::from_matrix_unchecked(m.fixed_view::<3, 3>(0, 0).into_owned());
    let q = UnitQuaternion::from_rotation_matrix(&r);
    let mine = Quat::new(q.w, q.i, q.j, q.k).unwrap();
    (dp, mine.angle_to(&p.orientation))
}

fn arb_pose() -> impl Strategy<Value = Pose> {
    (
        prop::array::uniform3(-5.0f64..5.0),
        prop::array::uniform3(-1.0f64..1.0),
        -std::f64::consts::PI..std::f64::consts::PI,
    )
        .prop_map(|(p, axis, angle)| Pose::new(p, Quat::from_axis_angle(axis, angle).unwrap()).unwrap())
}

#[test]
fn rot_z_then_translate_matches_matrix() {
    let r = Pose::rotation(Quat::rot_z(std::f64::consts::FRAC_PI_2));
    let t = Pose::translation(1.0, 0.0, 0.0).unwrap();
    let c = compose(&r, &t).unwrap();
    let m = to_matrix(&r) * to_matrix(&t);
    let (dp, dr) = pose_error(&c, &m);
    assert!(dp < 1e-12 && dr < 1e-12);
    assert!((c.position[0]).abs() < 1e-12 && (c.position[1] - 1.0).abs() < 1e-12);
}

proptest! {
    #[test]
    fn associative(a in arb_pose(), b in arb_pose(), c in arb_pose()) {
        let l = a.compose(&b).compose(&c);
        let r = a.compose(&b.compose(&c));
        prop_assert!(hrc_core::pose::distance(l.position, r.position) < 1e-9);
        prop_assert!(l.orientation.angle_to(&r.orientation) < 1e-9);
    }

    #[test]
    fn inverse_cancels(a in arb_pose()) {
        for p in [a.compose(&a.inverse()), a.inverse().compose(&a)] {
            prop_assert!(hrc_core::pose::norm(p.position) < 1e-9);
            prop_assert!(p.orientation.angle_to(&Quat::IDENTITY) < 1e-9);
        }
    }

    #[test]
    fn unit_norm_preserved(poses in prop::collection::vec(arb_pose(), 1..20)) {
        let p = poses.iter().fold(Pose::IDENTITY, |acc, p| acc.compose(p));
        prop_assert!((p.orientation.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn compose_matches_matrix_product(a in arb_pose(), b in arb_pose()) {
        let (dp, dr) = pose_error(&a.compose(&b), &(to_matrix(&a) * to_matrix(&b)));
        prop_assert!(dp < 1e-9 && dr < 1e-9);
    }

    #[test]
    fn json_round_trip_is_exact(a in arb_pose()) {
        let s = serde_json::to_string(&a).unwrap();
        let b: Pose = serde_json::from_str(&s).unwrap();
        prop_assert_eq!(a, b);
    }
}
