use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Vector3, Vector6};

use super::{check_len, DynamicsError, Kinematics, Wrench};
use crate::geometry::skew;
use crate::urdf::{JointKind, RobotModel};

/// Mass, world-frame center of mass and world-frame inertia about it.
struct BodyInertia {
    mass: f64,
    com_offset: Vector3<f64>,
    inertia: Matrix3<f64>,
}

fn body_inertias(model: &RobotModel, kin: &Kinematics) -> Vec<BodyInertia> {
    model
        .links
        .iter()
        .zip(&kin.link_poses)
        .map(|(link, pose)| match &link.inertial {
            None => BodyInertia {
                mass: 0.0,
                com_offset: Vector3::zeros(),
                inertia: Matrix3::zeros(),
            },
            Some(i) => {
                let r = pose.rotation.matrix();
                BodyInertia {
                    mass: i.mass,
                    com_offset: r * i.com,
                    inertia: r * i.inertia * r.transpose(),
                }
            }
        })
        .collect()
}

/// Inverse dynamics by recursive Newton-Euler in the base frame.
///
/// Returns `τ = M(q) ddq + C(q, dq) dq + g(q) - Jᵀ F_ext` where `F_ext` is the
/// wrench applied to the tip by the environment, expressed in the base frame.
pub fn rnea(
    model: &RobotModel,
    q: &DVector<f64>,
    dq: &DVector<f64>,
    ddq: &DVector<f64>,
    gravity: &Vector3<f64>,
    ext_wrench: &Wrench,
) -> Result<DVector<f64>, DynamicsError> {
    check_len("dq", dq, model.dof)?;
    check_len("ddq", ddq, model.dof)?;
    let kin = Kinematics::compute(model, q)?;
    Ok(rnea_with(model, &kin, dq, ddq, gravity, ext_wrench))
}

pub(crate) fn rnea_with(
    model: &RobotModel,
    kin: &Kinematics,
    dq: &DVector<f64>,
    ddq: &DVector<f64>,
    gravity: &Vector3<f64>,
    ext_wrench: &Wrench,
) -> DVector<f64> {
    let n_links = model.links.len();
    let bodies = body_inertias(model, kin);

    // Forward pass: angular velocity/acceleration and linear acceleration of each link origin.
    let mut omega = vec![Vector3::zeros(); n_links];
    let mut alpha = vec![Vector3::zeros(); n_links];
    let mut accel = vec![Vector3::zeros(); n_links];
    accel[0] = -gravity;
    let mut dof_of = vec![None; model.joints.len()];
    let mut k = 0;
    for (i, joint) in model.joints.iter().enumerate() {
        let z = kin.joint_axes[i];
        let r = kin.link_poses[i + 1].position - kin.link_poses[i].position;
        let (w, a) = (omega[i], alpha[i]);
        let mut lin = accel[i] + a.cross(&r) + w.cross(&w.cross(&r));
        let (mut w_next, mut a_next) = (w, a);
        match joint.kind {
            JointKind::Fixed => {}
            JointKind::Revolute => {
                w_next += z * dq[k];
                a_next += z * ddq[k] + w.cross(&z) * dq[k];
            }
            JointKind::Prismatic => {
                lin += z * ddq[k] + w.cross(&z) * (2.0 * dq[k]);
            }
        }
        if joint.kind.is_movable() {
            dof_of[i] = Some(k);
            k += 1;
        }
        omega[i + 1] = w_next;
        alpha[i + 1] = a_next;
        accel[i + 1] = lin;
    }

    // Backward pass: force and moment (about the link origin) transmitted through each joint.
    let mut tau = DVector::zeros(model.dof);
    let mut force: Vector3<f64> = -ext_wrench.fixed_rows::<3>(0).into_owned();
    let mut moment: Vector3<f64> = -ext_wrench.fixed_rows::<3>(3).into_owned();
    let mut child_origin = kin.link_poses[n_links - 1].position;
    for l in (1..n_links).rev() {
        let body = &bodies[l];
        let (w, a) = (omega[l], alpha[l]);
        let c = body.com_offset;
        let a_com = accel[l] + a.cross(&c) + w.cross(&w.cross(&c));
        let inertial_force = a_com * body.mass;
        let r_child = child_origin - kin.link_poses[l].position;
        moment = body.inertia * a + w.cross(&(body.inertia * w)) + c.cross(&inertial_force) + moment + r_child.cross(&force);
        force = inertial_force + force;
        child_origin = kin.link_poses[l].position;

        let j = l - 1;
        if let Some(k) = dof_of[j] {
            let z = kin.joint_axes[j];
            tau[k] = match model.joints[j].kind {
                JointKind::Prismatic => z.dot(&force),
                _ => z.dot(&moment),
            };
        }
    }
    tau
}

/// `g(q) = RNEA(q, 0, 0)` with the model's gravity and no external wrench.
pub fn gravity_torque(model: &RobotModel, q: &DVector<f64>) -> Result<DVector<f64>, DynamicsError> {
    let z = DVector::zeros(model.dof);
    rnea(model, q, &z, &z, &model.gravity, &Wrench::zeros())
}

/// `C(q, dq) dq`, evaluated as RNEA with zero acceleration and zero gravity.
pub fn coriolis_torque(model: &RobotModel, q: &DVector<f64>, dq: &DVector<f64>) -> Result<DVector<f64>, DynamicsError> {
    rnea(model, q, dq, &DVector::zeros(model.dof), &Vector3::zeros(), &Wrench::zeros())
}

/// Joint-space mass matrix by the composite-rigid-body algorithm.
pub fn mass_matrix(model: &RobotModel, q: &DVector<f64>) -> Result<DMatrix<f64>, DynamicsError> {
    let kin = Kinematics::compute(model, q)?;
    Ok(mass_matrix_with(model, &kin))
}

pub(crate) fn mass_matrix_with(model: &RobotModel, kin: &Kinematics) -> DMatrix<f64> {
    let bodies = body_inertias(model, kin);
    let n_links = model.links.len();

    // Composite spatial inertia about the base origin, (angular, linear) ordering.
    let mut composite = vec![Matrix6::zeros(); n_links + 1];
    for l in (0..n_links).rev() {
        let b = &bodies[l];
        let c = kin.link_poses[l].position + b.com_offset;
        let cx = skew(&c);
        let mut spatial = Matrix6::zeros();
        spatial
            .fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&(b.inertia + cx * cx.transpose() * b.mass));
        spatial.fixed_view_mut::<3, 3>(0, 3).copy_from(&(cx * b.mass));
        spatial.fixed_view_mut::<3, 3>(3, 0).copy_from(&(cx.transpose() * b.mass));
        spatial
            .fixed_view_mut::<3, 3>(3, 3)
            .copy_from(&(Matrix3::identity() * b.mass));
        composite[l] = composite[l + 1] + spatial;
    }

    // Motion subspace of each movable joint and the link it drives.
    let subspaces: Vec<(Vector6<f64>, usize)> = model
        .joints
        .iter()
        .enumerate()
        .filter(|(_, j)| j.kind.is_movable())
        .map(|(i, j)| {
            let z = kin.joint_axes[i];
            let p = kin.link_poses[i + 1].position;
            let s = match j.kind {
                JointKind::Prismatic => Vector6::new(0.0, 0.0, 0.0, z.x, z.y, z.z),
                _ => {
                    let v = p.cross(&z);
                    Vector6::new(z.x, z.y, z.z, v.x, v.y, v.z)
                }
            };
            (s, i + 1)
        })
        .collect();

    let n = model.dof;
    let mut m = DMatrix::zeros(n, n);
    for b in 0..n {
        let (sb, link_b) = subspaces[b];
        let force = composite[link_b] * sb;
        for a in 0..=b {
            let v = subspaces[a].0.dot(&force);
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
    }
    m
}

/// Solves `M ddq = τ + Jᵀ F_ext - C dq - g`.
pub fn forward_dynamics(
    model: &RobotModel,
    q: &DVector<f64>,
    dq: &DVector<f64>,
    tau: &DVector<f64>,
    ext_wrench: &Wrench,
) -> Result<DVector<f64>, DynamicsError> {
    check_len("dq", dq, model.dof)?;
    check_len("tau", tau, model.dof)?;
    let kin = Kinematics::compute(model, q)?;
    forward_dynamics_with(model, &kin, dq, tau, &model.gravity, ext_wrench)
}

pub(crate) fn forward_dynamics_with(
    model: &RobotModel,
    kin: &Kinematics,
    dq: &DVector<f64>,
    tau: &DVector<f64>,
    gravity: &Vector3<f64>,
    ext_wrench: &Wrench,
) -> Result<DVector<f64>, DynamicsError> {
    let bias = rnea_with(model, kin, dq, &DVector::zeros(model.dof), gravity, ext_wrench);
    let m = mass_matrix_with(model, kin);
    let chol = m.cholesky().ok_or(DynamicsError::NotPositiveDefinite)?;
    Ok(chol.solve(&(tau - bias)))
}
