use compliant_core::control::*;
use compliant_core::dynamics::{damped_pseudoinverse, Wrench};
use compliant_core::geometry::{pose_error, Frame, Pose, PoseError, Rotation};
use compliant_core::mailbox::Mailbox;
use compliant_core::urdf::JointLimits;
use nalgebra::{DMatrix, DVector, Vector3, Vector6};
use proptest::prelude::*;

fn vec3(scale: f64) -> impl Strategy<Value = Vector3<f64>> {
    prop::array::uniform3(-scale..scale).prop_map(Vector3::from)
}

fn vec6(scale: f64) -> impl Strategy<Value = Vector6<f64>> {
    prop::array::uniform6(-scale..scale).prop_map(Vector6::from)
}

fn pose() -> impl Strategy<Value = Pose> {
    (vec3(2.0), vec3(3.0)).prop_map(|(p, w)| Pose::new(p, Rotation::exp(&w)))
}

proptest! {
    #[test]
    fn exp_yields_a_rotation(w in vec3(10.0)) {
        let r = Rotation::exp(&w);
        let m = r.matrix();
        prop_assert!((m * m.transpose() - nalgebra::Matrix3::identity()).amax() < 1e-12);
        prop_assert!((m.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_inverts_exp_inside_the_principal_ball(w in vec3(1.8)) {
        prop_assert!((Rotation::exp(&w).log() - w).amax() < 1e-10);
    }

    #[test]
    fn clip_bounds_every_component(e in vec6(2.0), lim in prop::array::uniform6(1e-3..1.0f64)) {
        let lim = Vector6::from(lim);
        let out = clip_error(&PoseError::from_vector(&e, Frame::Base), &lim).to_vector();
        for i in 0..6 {
            prop_assert!(out[i].abs() <= lim[i]);
            prop_assert_eq!(out[i].signum(), e[i].signum());
            if e[i].abs() <= lim[i] {
                prop_assert_eq!(out[i], e[i]);
            }
        }
    }

    #[test]
    fn rate_limit_contract_is_exact(
        steps in prop::collection::vec(prop::array::uniform3(-500.0..500.0f64), 1..60),
        limit in 0.5..100.0f64,
        rate in 1e-3..5.0f64,
    ) {
        let lim = DVector::from_element(3, limit);
        let rl = DVector::from_element(3, rate);
        let mut prev = DVector::zeros(3);
        for cmd in steps {
            let out = limit_torque(&DVector::from_column_slice(&cmd), &prev, &lim, &rl);
            for i in 0..3 {
                prop_assert!((out[i] - prev[i]).abs() <= rate);
                prop_assert!(out[i].abs() <= limit);
            }
            prev = out;
        }
    }

    #[test]
    fn barrier_vanishes_strictly_inside(
        bounds in prop::collection::vec((-3.0..-0.5f64, 0.5..3.0f64), 1..8),
        frac in prop::collection::vec(0.0..1.0f64, 8),
        eps in 0.01..0.4f64,
        k in 0.0..1e4f64,
    ) {
        let limits: Vec<JointLimits> = bounds
            .iter()
            .map(|&(lower, upper)| JointLimits { lower, upper, effort: 1.0, velocity: 1.0 })
            .collect();
        let q = DVector::from_iterator(
            limits.len(),
            limits.iter().zip(&frac).map(|(l, f)| l.lower + eps + f * (l.upper - l.lower - 2.0 * eps)),
        );
        let tau = barrier_torque(&q, &limits, &DVector::from_element(limits.len(), k), eps);
        prop_assert!(tau.iter().all(|t| *t == 0.0));
    }

    #[test]
    fn friction_is_odd_without_offset(dq in -5.0..5.0f64, p1 in 0.0..5.0f64, p2 in 0.0..50.0f64) {
        let v = |x: f64| DVector::from_element(1, x);
        let plus = friction_torque(&v(dq), &v(p1), &v(p2), &v(0.0))[0];
        let minus = friction_torque(&v(-dq), &v(p1), &v(p2), &v(0.0))[0];
        prop_assert!((plus + minus).abs() < 1e-12);
        prop_assert_eq!(friction_torque(&v(0.0), &v(p1), &v(p2), &v(dq))[0], 0.0);
    }

    #[test]
    fn ema_with_unit_alpha_is_the_identity(a in pose(), b in pose()) {
        prop_assert_eq!(ema_filter(&a, &b, 1.0), b);
    }

    #[test]
    fn ema_moves_toward_the_target(a in pose(), b in pose(), alpha in 0.01..0.99f64) {
        let out = ema_filter(&a, &b, alpha);
        prop_assert!((out.position - b.position).norm() <= (a.position - b.position).norm() + 1e-12);
        let before = pose_error(&b, &a, Frame::Base).rot.norm();
        let after = pose_error(&b, &out, Frame::Base).rot.norm();
        prop_assert!(after <= before + 1e-9);
    }

    #[test]
    fn pinv_satisfies_penrose_conditions(entries in prop::collection::vec(-1.0..1.0f64, 42)) {
        let a = DMatrix::from_vec(6, 7, entries);
        prop_assume!(a.singular_values().min() > 1e-3);
        let p = damped_pseudoinverse(&a, 0.0);
        prop_assert!((&a * &p * &a - &a).amax() < 1e-9);
        prop_assert!((&p * &a * &p - &p).amax() < 1e-9 * (1.0 + p.amax()));
        prop_assert!((&a * &p - (&a * &p).transpose()).amax() < 1e-9);
    }

    #[test]
    fn wrench_torque_is_linear(f in vec6(10.0), g in vec6(10.0), entries in prop::collection::vec(-1.0..1.0f64, 18)) {
        let j = compliant_core::dynamics::Jacobian { matrix: DMatrix::from_vec(6, 3, entries), frame: Frame::Base };
        let lhs = wrench_torque(&j, &(f + g * 2.0));
        let rhs = wrench_torque(&j, &f) + wrench_torque(&j, &g) * 2.0;
        prop_assert!((lhs - rhs).amax() < 1e-12);
    }

    /// Any interleaving of posts and takes behaves like a one-slot register.
    #[test]
    fn mailbox_is_a_one_slot_register(ops in prop::collection::vec(prop::option::of(0u32..1000), 0..200)) {
        let m = Mailbox::new();
        let mut model: Option<u32> = None;
        for op in ops {
            match op {
                Some(v) => {
                    prop_assert_eq!(m.post(v), model.is_some());
                    model = Some(v);
                }
                None => prop_assert_eq!(m.take(), model.take()),
            }
        }
    }

    #[test]
    fn target_inputs_keep_the_latest_of_each_kind(
        kinds in prop::collection::vec(0u8..3, 1..50),
    ) {
        let mut inputs = TargetInputs::default();
        let mut last = [None::<usize>; 3];
        for (i, k) in kinds.iter().enumerate() {
            let target = match k {
                0 => Target::Pose(Pose::new(Vector3::new(i as f64, 0.0, 0.0), Rotation::identity())),
                1 => Target::Joint { q: DVector::from_element(2, i as f64), dq: None },
                _ => Target::Wrench(Wrench::repeat(i as f64)),
            };
            inputs.apply(TargetCommand { stamp: i as f64, target });
            last[*k as usize] = Some(i);
        }
        prop_assert_eq!(inputs.pose.map(|p| p.position.x as usize), last[0]);
        prop_assert_eq!(inputs.joint.as_ref().map(|(q, dq)| (q[0] as usize, dq[0])), last[1].map(|i| (i, 0.0)));
        prop_assert_eq!(inputs.wrench.map(|w| w[0] as usize), last[2]);
        prop_assert_eq!(inputs.last_stamp, Some((kinds.len() - 1) as f64));
    }
}
