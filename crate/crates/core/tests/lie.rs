mod common;

use std::f64::consts::PI;

use common::rng;
use compliant_core::geometry::{pose_error, skew, Frame, Pose, Rotation};
use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use rand::Rng;

fn random_axis(r: &mut impl Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Uniformly distributed rotation, built without the exponential map.
fn random_rotation(r: &mut impl Rng) -> Rotation {
    let q = [
        r.random_range(-1.0..1.0),
        r.random_range(-1.0..1.0),
        r.random_range(-1.0..1.0),
        r.random_range(-1.0..1.0),
    ];
    Rotation::from_wxyz(q).unwrap()
}

/// Rodrigues' formula evaluated by nalgebra, as an independent reference for exp.
fn reference_exp(w: &Vector3<f64>) -> Matrix3<f64> {
    *UnitQuaternion::from_scaled_axis(*w).to_rotation_matrix().matrix()
}

fn angle_for_regime(r: &mut impl Rng, regime: usize) -> f64 {
    match regime {
        0 => r.random_range(0.0..PI),
        1 => 10f64.powf(r.random_range(-12.0..-2.0)),
        2 => PI - 10f64.powf(r.random_range(-9.0..-2.0)),
        _ => PI,
    }
}

#[test]
fn exp_log_round_trips_over_ten_thousand_rotations() {
    let mut r = rng(11);
    let mut worst = [0.0f64; 4];
    for i in 0..10_000 {
        let regime = i % 4;
        let w = random_axis(&mut r) * angle_for_regime(&mut r, regime);
        let rot = Rotation::exp(&w);
        assert!((rot.matrix() - reference_exp(&w)).amax() < 1e-12);
        let back = rot.log();
        // exp(log(R)) = R everywhere; log(exp(w)) = w wherever w is the unique preimage
        let err = (Rotation::exp(&back).matrix() - rot.matrix()).amax();
        worst[regime] = worst[regime].max(err);
        assert!(err < 1e-9, "regime {regime}: {err}");
        if regime < 3 {
            assert!((back - w).amax() < 1e-9, "regime {regime}: {w} -> {back}");
        } else {
            assert!((back.norm() - PI).abs() < 1e-12);
            assert!((back.normalize() - w.normalize()).amax() < 1e-9 || (back.normalize() + w.normalize()).amax() < 1e-9);
        }
    }
    for i in 0..2_000 {
        let rot = random_rotation(&mut r);
        let err = (Rotation::exp(&rot.log()).matrix() - rot.matrix()).amax();
        assert!(err < 1e-9, "sample {i}: {err}");
    }
}

#[test]
fn log_stays_in_the_principal_range() {
    let mut r = rng(12);
    for _ in 0..2_000 {
        let w = random_axis(&mut r) * r.random_range(0.0..3.0 * PI);
        let n = Rotation::exp(&w).log().norm();
        assert!(n <= PI + 1e-12);
    }
}

#[test]
fn exp_is_a_homomorphism_on_a_fixed_axis() {
    let mut r = rng(13);
    for _ in 0..1_000 {
        let axis = random_axis(&mut r);
        let (a, b) = (r.random_range(-2.0..2.0), r.random_range(-2.0..2.0));
        let lhs = Rotation::exp(&(axis * a)) * Rotation::exp(&(axis * b));
        assert!((lhs.matrix() - Rotation::exp(&(axis * (a + b))).matrix()).amax() < 1e-12);
    }
}

#[test]
fn skew_is_the_cross_product() {
    let mut r = rng(14);
    for _ in 0..1_000 {
        let a = random_axis(&mut r) * 3.0;
        let b = random_axis(&mut r) * 0.5;
        assert!((skew(&a) * b - a.cross(&b)).amax() < 1e-15);
        assert_eq!(skew(&a), -skew(&a).transpose());
    }
}

fn random_pose(r: &mut impl Rng) -> Pose {
    Pose::new(
        Vector3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)),
        random_rotation(r),
    )
}

/// Keeps the relative rotation away from pi, where the log flips sign discontinuously.
fn nearby(r: &mut impl Rng, base: &Pose) -> Pose {
    let w = random_axis(r) * r.random_range(0.0..2.5);
    let dp = random_axis(r) * r.random_range(0.0..0.5);
    Pose::new(base.position + dp, base.rotation * Rotation::exp(&w))
}

#[test]
fn pose_error_frame_equivariance() {
    let mut r = rng(15);
    for _ in 0..5_000 {
        let current = random_pose(&mut r);
        let target = nearby(&mut r, &current);
        let base = pose_error(&target, &current, Frame::Base);
        let ee = pose_error(&target, &current, Frame::EndEffector);
        let rc_t = current.rotation.transpose();
        assert!((ee.pos - rc_t * base.pos).amax() < 1e-12);
        assert!((ee.rot - rc_t * base.rot).amax() < 1e-12);

        // a common change of world frame rotates the base error and leaves the tool error alone
        let g = random_pose(&mut r);
        let (gt, gc) = (g.compose(&target), g.compose(&current));
        let base_g = pose_error(&gt, &gc, Frame::Base);
        let ee_g = pose_error(&gt, &gc, Frame::EndEffector);
        assert!((base_g.pos - g.rotation * base.pos).amax() < 1e-12);
        assert!((base_g.rot - g.rotation * base.rot).amax() < 1e-12);
        assert!((ee_g.pos - ee.pos).amax() < 1e-12);
        assert!((ee_g.rot - ee.rot).amax() < 1e-12);
    }
}

#[test]
fn pose_error_is_zero_on_target_and_reverses_sign() {
    let mut r = rng(16);
    for _ in 0..1_000 {
        let a = random_pose(&mut r);
        let b = nearby(&mut r, &a);
        for frame in [Frame::Base, Frame::EndEffector] {
            let e = pose_error(&a, &a, frame);
            assert!(e.to_vector().amax() < 1e-12);
        }
        let ab = pose_error(&a, &b, Frame::Base);
        let ba = pose_error(&b, &a, Frame::Base);
        assert!((ab.pos + ba.pos).amax() < 1e-15);
        assert!((ab.rot + ba.rot).amax() < 1e-12);
    }
}

#[test]
fn quaternion_round_trip_keeps_w_nonnegative() {
    let mut r = rng(17);
    for _ in 0..1_000 {
        let rot = random_rotation(&mut r);
        let q = rot.to_wxyz();
        assert!(q[0] >= 0.0);
        assert!((q.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((Rotation::from_wxyz(q).unwrap().matrix() - rot.matrix()).amax() < 1e-12);
    }
}
