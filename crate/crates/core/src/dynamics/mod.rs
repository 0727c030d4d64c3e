//! Kinematics and rigid-body dynamics of a serial chain.
//!
//! Everything is computed in the base frame: link poses from forward kinematics,
//! the geometric Jacobian, inverse dynamics by recursive Newton-Euler, and the
//! joint-space mass matrix by the composite-rigid-body algorithm.
//!
//! Spatial 6-vectors (twists, wrenches, Jacobian rows) put the linear part first:
//! `(vx, vy, vz, wx, wy, wz)` and `(fx, fy, fz, tx, ty, tz)`.

mod rigid_body;
mod task_space;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3, Vector6};
use thiserror::Error;

use crate::geometry::{Frame, Pose, Rotation};
use crate::urdf::{JointKind, RobotModel};

pub use rigid_body::{coriolis_torque, forward_dynamics, gravity_torque, mass_matrix, rnea};
pub(crate) use rigid_body::{forward_dynamics_with, mass_matrix_with, rnea_with};
pub use task_space::{
    damped_pseudoinverse, generalized_inverse, generalized_inverse_with, svd_pseudoinverse, task_inertia,
    task_inertia_with, Damped, TaskInertiaVariant, DEFAULT_DAMPING,
};

/// Force (N) and torque (N·m) at the tip origin, linear part first.
pub type Wrench = Vector6<f64>;
/// Linear and angular velocity, linear part first.
pub type Twist = Vector6<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("{what} has length {got}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("mass matrix is not positive definite")]
    NotPositiveDefinite,
}

pub(crate) fn check_len(what: &'static str, v: &DVector<f64>, expected: usize) -> Result<(), DynamicsError> {
    if v.len() != expected {
        return Err(DynamicsError::DimensionMismatch {
            what,
            expected,
            got: v.len(),
        });
    }
    Ok(())
}

/// Joint positions and velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub q: DVector<f64>,
    pub dq: DVector<f64>,
}

impl JointState {
    pub fn new(q: DVector<f64>, dq: DVector<f64>) -> Self {
        Self { q, dq }
    }

    pub fn at_rest(q: DVector<f64>) -> Self {
        let n = q.len();
        Self { q, dq: DVector::zeros(n) }
    }

    pub fn validate(&self, model: &RobotModel) -> Result<(), DynamicsError> {
        check_len("q", &self.q, model.dof)?;
        check_len("dq", &self.dq, model.dof)
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.dq.iter()).all(|v| v.is_finite())
    }
}

/// A 6 x dof geometric Jacobian tagged with the frame its rows are expressed in.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    pub matrix: DMatrix<f64>,
    pub frame: Frame,
}

impl Jacobian {
    pub fn dof(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn twist(&self, dq: &DVector<f64>) -> Twist {
        let v = &self.matrix * dq;
        Vector6::from_iterator(v.iter().copied())
    }

    /// `Jᵀ F`.
    pub fn transpose_mul(&self, wrench: &Wrench) -> DVector<f64> {
        self.matrix.tr_mul(&DVector::from_column_slice(wrench.as_slice()))
    }
}

/// Rotates the linear and angular halves of a 6-row matrix by `rotation`.
pub(crate) fn rotate_rows(rotation: &Matrix3<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for c in 0..m.ncols() {
        let lin = rotation * Vector3::new(m[(0, c)], m[(1, c)], m[(2, c)]);
        let ang = rotation * Vector3::new(m[(3, c)], m[(4, c)], m[(5, c)]);
        for r in 0..3 {
            out[(r, c)] = lin[r];
            out[(r + 3, c)] = ang[r];
        }
    }
    out
}

/// Link poses and joint axes of one configuration, in the base frame.
#[derive(Debug, Clone)]
pub struct Kinematics {
    /// Pose of `model.links[i]`.
    pub link_poses: Vec<Pose>,
    /// Axis of `model.joints[i]`.
    pub joint_axes: Vec<Vector3<f64>>,
}

impl Kinematics {
    pub fn compute(model: &RobotModel, q: &DVector<f64>) -> Result<Self, DynamicsError> {
        check_len("q", q, model.dof)?;
        let mut link_poses = Vec::with_capacity(model.links.len());
        let mut joint_axes = Vec::with_capacity(model.joints.len());
        link_poses.push(Pose::identity());
        let mut qi = q.iter();
        for joint in &model.joints {
            let parent = link_poses.last().copied().unwrap_or_default();
            let joint_frame = parent.compose(&joint.origin);
            let motion = match joint.kind {
                JointKind::Fixed => Pose::identity(),
                JointKind::Revolute => {
                    let angle = *qi.next().unwrap_or(&0.0);
                    Pose::new(Vector3::zeros(), Rotation::exp(&(joint.axis * angle)))
                }
                JointKind::Prismatic => {
                    let d = *qi.next().unwrap_or(&0.0);
                    Pose::new(joint.axis * d, Rotation::identity())
                }
            };
            joint_axes.push(joint_frame.rotation * joint.axis);
            link_poses.push(joint_frame.compose(&motion));
        }
        Ok(Self { link_poses, joint_axes })
    }

    pub fn tip(&self) -> Pose {
        self.link_poses.last().copied().unwrap_or_default()
    }

    pub fn jacobian(&self, model: &RobotModel, frame: Frame) -> Jacobian {
        let tip = self.tip().position;
        let mut j = DMatrix::zeros(6, model.dof);
        let mut col = 0;
        for (i, joint) in model.joints.iter().enumerate() {
            let z = self.joint_axes[i];
            let (lin, ang) = match joint.kind {
                JointKind::Fixed => continue,
                JointKind::Revolute => (z.cross(&(tip - self.link_poses[i + 1].position)), z),
                JointKind::Prismatic => (z, Vector3::zeros()),
            };
            j.fixed_view_mut::<3, 1>(0, col).copy_from(&lin);
            j.fixed_view_mut::<3, 1>(3, col).copy_from(&ang);
            col += 1;
        }
        let matrix = match frame {
            Frame::Base => j,
            Frame::EndEffector => rotate_rows(&self.tip().rotation.transpose().matrix().clone_owned(), &j),
        };
        Jacobian { matrix, frame }
    }
}

/// Pose of the tip link in the base frame.
pub fn forward_kinematics(model: &RobotModel, q: &DVector<f64>) -> Result<Pose, DynamicsError> {
    Ok(Kinematics::compute(model, q)?.tip())
}

/// Geometric Jacobian of the tip origin.
pub fn geometric_jacobian(model: &RobotModel, q: &DVector<f64>, frame: Frame) -> Result<Jacobian, DynamicsError> {
    Ok(Kinematics::compute(model, q)?.jacobian(model, frame))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{self, planar2::*};
    use crate::urdf::parse_urdf;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn planar2_fk_closed_form() {
        let m = parse_urdf(fixtures::PLANAR2).unwrap();
        let p = forward_kinematics(&m, &DVector::from_vec(vec![0.0, 0.0])).unwrap();
        assert!((p.position - Vector3::new(L1 + L2, 0.0, 0.0)).norm() < 1e-15);
        assert_eq!(p.rotation, Rotation::identity());
        let p = forward_kinematics(&m, &DVector::from_vec(vec![FRAC_PI_2, 0.0])).unwrap();
        assert!((p.position - Vector3::new(0.0, L1 + L2, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn planar2_jacobian_at_zero() {
        let m = parse_urdf(fixtures::PLANAR2).unwrap();
        let j = geometric_jacobian(&m, &DVector::zeros(2), Frame::Base).unwrap();
        assert!((j.matrix.fixed_view::<3, 1>(0, 0) - Vector3::new(0.0, L1 + L2, 0.0)).norm() < 1e-15);
        assert!((j.matrix.fixed_view::<3, 1>(0, 1) - Vector3::new(0.0, L2, 0.0)).norm() < 1e-15);
        assert_eq!(j.matrix.fixed_view::<3, 1>(3, 0), Vector3::z());
    }

    #[test]
    fn dimension_mismatch() {
        let m = parse_urdf(fixtures::PLANAR2).unwrap();
        assert_eq!(
            forward_kinematics(&m, &DVector::zeros(3)).unwrap_err(),
            DynamicsError::DimensionMismatch {
                what: "q",
                expected: 2,
                got: 3
            }
        );
    }

    #[test]
    fn prismatic_joint_translates_along_axis() {
        let urdf = r#"<robot name="slider"><link name="a"/>
          <link name="b"><inertial><mass value="2"/><inertia ixx="1" ixy="0" ixz="0" iyy="1" iyz="0" izz="1"/></inertial></link>
          <joint name="s" type="prismatic"><parent link="a"/><child link="b"/><origin xyz="0 0 1"/><axis xyz="1 0 0"/>
          <limit lower="-1" upper="1" effort="10" velocity="1"/></joint></robot>"#;
        let m = parse_urdf(urdf).unwrap();
        let q = DVector::from_vec(vec![0.3]);
        let p = forward_kinematics(&m, &q).unwrap();
        assert!((p.position - Vector3::new(0.3, 0.0, 1.0)).norm() < 1e-15);
        let j = geometric_jacobian(&m, &q, Frame::Base).unwrap();
        assert_eq!(j.matrix.column(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        // horizontal slider under gravity along -z needs no force; mass is 2 kg
        let ddq = forward_dynamics(&m, &q, &DVector::zeros(1), &DVector::from_vec(vec![4.0]), &Wrench::zeros()).unwrap();
        assert!((ddq[0] - 2.0).abs() < 1e-12);
    }
}
