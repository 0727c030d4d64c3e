mod common;

use common::{random_q, random_vec, rng};
use compliant_core::dynamics::{
    coriolis_torque, forward_dynamics, forward_kinematics, geometric_jacobian, gravity_torque, mass_matrix, rnea,
    Kinematics, Wrench,
};
use compliant_core::fixtures::{self, planar2::*};
use compliant_core::sim::{step, Integrator, SimConfig, SimState};
use compliant_core::{parse_urdf, Frame, RobotModel};
use nalgebra::{DMatrix, DVector, Matrix2, Vector2, Vector3};

const G: f64 = 9.81;

fn planar2() -> RobotModel {
    parse_urdf(fixtures::PLANAR2).unwrap().with_gravity(Vector3::new(0.0, -G, 0.0))
}

fn generic7() -> RobotModel {
    parse_urdf(fixtures::GENERIC7).unwrap()
}

/// Two-link planar arm from the Lagrangian, gravity along -y.
struct Lagrangian2;

impl Lagrangian2 {
    fn mass(q: &[f64]) -> Matrix2<f64> {
        let c2 = q[1].cos();
        let m11 = M1 * LC1 * LC1 + I1 + M2 * (L1 * L1 + LC2 * LC2 + 2.0 * L1 * LC2 * c2) + I2;
        let m12 = M2 * (LC2 * LC2 + L1 * LC2 * c2) + I2;
        let m22 = M2 * LC2 * LC2 + I2;
        Matrix2::new(m11, m12, m12, m22)
    }

    fn coriolis(q: &[f64], dq: &[f64]) -> Vector2<f64> {
        let h = M2 * L1 * LC2 * q[1].sin();
        Vector2::new(-h * (2.0 * dq[0] * dq[1] + dq[1] * dq[1]), h * dq[0] * dq[0])
    }

    fn gravity(q: &[f64]) -> Vector2<f64> {
        let c1 = q[0].cos();
        let c12 = (q[0] + q[1]).cos();
        Vector2::new((M1 * LC1 + M2 * L1) * G * c1 + M2 * LC2 * G * c12, M2 * LC2 * G * c12)
    }
}

#[test]
fn planar2_matches_lagrangian() {
    let m = planar2();
    let mut r = rng(1);
    for _ in 0..100 {
        let q = random_q(&m, &mut r, 0.0);
        let dq = random_vec(2, &mut r, 3.0);
        let (qs, dqs) = (q.as_slice(), dq.as_slice());
        let mm = mass_matrix(&m, &q).unwrap();
        assert!((mm - DMatrix::from_column_slice(2, 2, Lagrangian2::mass(qs).as_slice())).amax() < 1e-9);
        let c = coriolis_torque(&m, &q, &dq).unwrap();
        assert!((c - DVector::from_column_slice(Lagrangian2::coriolis(qs, dqs).as_slice())).amax() < 1e-9);
        let g = gravity_torque(&m, &q).unwrap();
        assert!((g - DVector::from_column_slice(Lagrangian2::gravity(qs).as_slice())).amax() < 1e-9);
    }
}

fn finite_difference_jacobian(model: &RobotModel, q: &DVector<f64>, h: f64) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(6, model.dof);
    for i in 0..model.dof {
        let mut qp = q.clone();
        let mut qm = q.clone();
        qp[i] += h;
        qm[i] -= h;
        let (pp, pm) = (forward_kinematics(model, &qp).unwrap(), forward_kinematics(model, &qm).unwrap());
        let lin = (pp.position - pm.position) / (2.0 * h);
        let ang = (pp.rotation * pm.rotation.transpose()).log() / (2.0 * h);
        for r in 0..3 {
            j[(r, i)] = lin[r];
            j[(r + 3, i)] = ang[r];
        }
    }
    j
}

#[test]
fn jacobians_match_central_differences() {
    for (model, seed) in [(generic7(), 2), (planar2(), 3), (parse_urdf(fixtures::PLANAR3).unwrap(), 4)] {
        let mut r = rng(seed);
        for _ in 0..100 {
            let q = random_q(&model, &mut r, 1e-3);
            let fd = finite_difference_jacobian(&model, &q, 1e-6);
            let j = geometric_jacobian(&model, &q, Frame::Base).unwrap();
            assert!((&j.matrix - &fd).amax() < 1e-6, "{}", (&j.matrix - &fd).amax());

            let rt = forward_kinematics(&model, &q).unwrap().rotation.transpose();
            let je = geometric_jacobian(&model, &q, Frame::EndEffector).unwrap();
            for c in 0..model.dof {
                let lin = *rt.matrix() * fd.fixed_view::<3, 1>(0, c);
                let ang = *rt.matrix() * fd.fixed_view::<3, 1>(3, c);
                assert!((je.matrix.fixed_view::<3, 1>(0, c) - lin).amax() < 1e-6);
                assert!((je.matrix.fixed_view::<3, 1>(3, c) - ang).amax() < 1e-6);
            }
        }
    }
}

#[test]
fn inverse_and_forward_dynamics_round_trip() {
    let m = generic7();
    let mut r = rng(5);
    for _ in 0..100 {
        let q = random_q(&m, &mut r, 0.0);
        let dq = random_vec(7, &mut r, 2.0);
        let ddq = random_vec(7, &mut r, 5.0);
        let ext = Wrench::from_iterator(random_vec(6, &mut r, 10.0).iter().copied());
        let tau = rnea(&m, &q, &dq, &ddq, &m.gravity, &ext).unwrap();
        let back = forward_dynamics(&m, &q, &dq, &tau, &ext).unwrap();
        assert!((back - &ddq).amax() < 1e-8);
    }
}

#[test]
fn mass_matrix_is_symmetric_positive_definite() {
    let m = generic7();
    let mut r = rng(6);
    for _ in 0..100 {
        let mm = mass_matrix(&m, &random_q(&m, &mut r, 0.0)).unwrap();
        assert!((&mm - mm.transpose()).amax() < 1e-12);
        assert!(mm.symmetric_eigenvalues().min() > 0.0);
    }
}

/// `dqᵀ (Ṁ - 2C) dq = 0`, with `Ṁ` along `dq` from central differences.
#[test]
fn coriolis_satisfies_the_skew_identity() {
    let m = generic7();
    let mut r = rng(7);
    let h = 1e-6;
    for _ in 0..100 {
        let q = random_q(&m, &mut r, 0.01);
        let dq = random_vec(7, &mut r, 1.5);
        let m_dot = (mass_matrix(&m, &(&q + &dq * h)).unwrap() - mass_matrix(&m, &(&q - &dq * h)).unwrap()) / (2.0 * h);
        let c = coriolis_torque(&m, &q, &dq).unwrap();
        let lhs = dq.dot(&(m_dot * &dq));
        let rhs = 2.0 * dq.dot(&c);
        assert!((lhs - rhs).abs() < 1e-6 * (1.0 + lhs.abs()), "{lhs} vs {rhs}");
    }
}

fn potential_energy(model: &RobotModel, q: &DVector<f64>) -> f64 {
    let kin = Kinematics::compute(model, q).unwrap();
    model
        .links
        .iter()
        .zip(&kin.link_poses)
        .filter_map(|(link, pose)| {
            let i = link.inertial.as_ref()?;
            let com = pose.position + pose.rotation * i.com;
            Some(-i.mass * model.gravity.dot(&com))
        })
        .sum()
}

#[test]
fn gravity_torque_is_the_potential_gradient() {
    let m = generic7();
    let mut r = rng(8);
    let h = 1e-6;
    for _ in 0..100 {
        let q = random_q(&m, &mut r, 0.01);
        let g = gravity_torque(&m, &q).unwrap();
        for i in 0..m.dof {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[i] += h;
            qm[i] -= h;
            let grad = (potential_energy(&m, &qp) - potential_energy(&m, &qm)) / (2.0 * h);
            assert!((g[i] - grad).abs() < 1e-6, "joint {i}: {} vs {grad}", g[i]);
        }
    }
}

fn pendulum_energy(theta: f64, omega: f64) -> f64 {
    let (mass, l, inertia) = (1.0, 0.5, 0.01 + 0.25);
    0.5 * inertia * omega * omega - mass * G * l * theta.cos()
}

#[test]
fn pendulum_matches_scalar_ode_and_conserves_energy() {
    let m = parse_urdf(fixtures::PENDULUM).unwrap();
    let mut cfg = SimConfig::for_model(&m);
    cfg.integrator = Integrator::Rk4;
    let theta0 = 1.0;
    let mut s = SimState::new(DVector::from_element(1, theta0), DVector::zeros(1));
    let e0 = pendulum_energy(theta0, 0.0);

    // independent fine-step integration of θ̈ = -m g l sin θ / I
    let (mut th, mut om) = (theta0, 0.0f64);
    let f = |th: f64| -G * 0.5 * th.sin() / 0.26;
    let sub = 10;
    let h = cfg.dt / sub as f64;
    let mut max_drift: f64 = 0.0;
    for _ in 0..10_000 {
        s = step(&m, &s, &DVector::zeros(1), &cfg).unwrap();
        for _ in 0..sub {
            let (k1t, k1o) = (om, f(th));
            let (k2t, k2o) = (om + 0.5 * h * k1o, f(th + 0.5 * h * k1t));
            let (k3t, k3o) = (om + 0.5 * h * k2o, f(th + 0.5 * h * k2t));
            let (k4t, k4o) = (om + h * k3o, f(th + h * k3t));
            th += h / 6.0 * (k1t + 2.0 * k2t + 2.0 * k3t + k4t);
            om += h / 6.0 * (k1o + 2.0 * k2o + 2.0 * k3o + k4o);
        }
        max_drift = max_drift.max(((pendulum_energy(s.q[0], s.dq[0]) - e0) / e0).abs());
    }
    assert!((s.t - 10.0).abs() < 1e-9);
    assert!(max_drift < 1e-3, "energy drift {max_drift}");
    assert!((s.q[0] - th).abs() < 1e-6, "{} vs {th}", s.q[0]);
}

#[test]
fn semi_implicit_euler_converges_at_first_order() {
    let m = planar2();
    let q0 = DVector::from_vec(vec![0.3, -0.4]);
    let run = |integrator, dt: f64| {
        let mut cfg = SimConfig::for_model(&m);
        cfg.integrator = integrator;
        cfg.dt = dt;
        let mut s = SimState::new(q0.clone(), DVector::zeros(2));
        for _ in 0..(0.5 / dt).round() as usize {
            s = step(&m, &s, &DVector::zeros(2), &cfg).unwrap();
        }
        s.q
    };
    let reference = run(Integrator::Rk4, 1e-4);
    let errors: Vec<f64> = [2e-3, 1e-3, 5e-4]
        .iter()
        .map(|&dt| (run(Integrator::SemiImplicitEuler, dt) - &reference).norm())
        .collect();
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.6..2.4).contains(&ratio), "ratio {ratio}, errors {errors:?}");
    }
}
