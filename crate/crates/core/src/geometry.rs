//! SO(3)/SE(3) primitives and the pose errors the task-space controllers act on.
//!
//! Rotations are stored as matrices everywhere inside the crate. Quaternions only
//! show up at the wire boundary, see [`Rotation::from_wxyz`] and [`Rotation::to_wxyz`].

use std::f64::consts::PI;

use nalgebra::{Matrix3, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Orthonormality and determinant tolerance for [`Rotation::from_matrix`].
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Below this angle the log map switches to its series expansion.
const SMALL_ANGLE: f64 = 1e-5;
/// Within this distance of pi the rotation axis is recovered from the symmetric part.
const NEAR_PI: f64 = 1e-2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("matrix is not a rotation (orthonormality residual {residual:e}, det {det})")]
    NotARotation { residual: f64, det: f64 },
    #[error("quaternion has zero norm")]
    ZeroQuaternion,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// Frame in which task-space quantities (errors, Jacobians, wrenches) are expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    #[default]
    Base,
    EndEffector,
}

/// A 3x3 rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Checks `RᵀR = I` and `det R = 1` to [`ROTATION_TOLERANCE`].
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite("rotation matrix"));
        }
        let residual = (m.transpose() * m - Matrix3::identity()).abs().max();
        let det = m.determinant();
        if residual > ROTATION_TOLERANCE || (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(GeometryError::NotARotation { residual, det });
        }
        Ok(Self(m))
    }

    /// Extrinsic roll-pitch-yaw as used by URDF: `Rz(yaw) * Ry(pitch) * Rx(roll)`.
    pub fn from_rpy(roll: f64, pitch: f64, yaw: f64) -> Self {
        let (sr, cr) = roll.sin_cos();
        let (sp, cp) = pitch.sin_cos();
        let (sy, cy) = yaw.sin_cos();
        Self(Matrix3::new(
            cy * cp,
            cy * sp * sr - sy * cr,
            cy * sp * cr + sy * sr,
            sy * cp,
            sy * sp * sr + cy * cr,
            sy * sp * cr - cy * sr,
            -sp,
            cp * sr,
            cp * cr,
        ))
    }

    /// Builds a rotation from a `(w, x, y, z)` quaternion, normalizing it first.
    pub fn from_wxyz(q: [f64; 4]) -> Result<Self, GeometryError> {
        if q.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite("quaternion"));
        }
        let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return Err(GeometryError::ZeroQuaternion);
        }
        let uq = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]));
        Ok(Self(*uq.to_rotation_matrix().matrix()))
    }

    /// Unit quaternion `(w, x, y, z)` with `w >= 0`.
    pub fn to_wxyz(&self) -> [f64; 4] {
        let rot = nalgebra::Rotation3::from_matrix_unchecked(self.0);
        let q = UnitQuaternion::from_rotation_matrix(&rot);
        let (w, x, y, z) = (q.w, q.i, q.j, q.k);
        if w < 0.0 {
            [-w, -x, -y, -z]
        } else {
            [w, x, y, z]
        }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn exp(omega: &Vector3<f64>) -> Self {
        exp_so3(omega)
    }

    pub fn log(&self) -> Vector3<f64> {
        log_rotation(&self.0)
    }

    /// Projects back onto SO(3); used after long chains of products.
    pub fn renormalized(&self) -> Self {
        // nearest rotation in the Frobenius norm: U diag(1, 1, det(U Vᵀ)) Vᵀ
        let svd = self.0.svd(true, true);
        let (u, v_t) = (svd.u.unwrap_or_default(), svd.v_t.unwrap_or_default());
        let d = (u * v_t).determinant().signum();
        Self(u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * v_t)
    }
}

impl std::ops::Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl std::ops::Mul<Vector3<f64>> for Rotation {
    type Output = Vector3<f64>;
    fn mul(self, rhs: Vector3<f64>) -> Vector3<f64> {
        self.0 * rhs
    }
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Rodrigues' formula. Exact identity at zero.
pub fn exp_so3(omega: &Vector3<f64>) -> Rotation {
    let theta_sq = omega.norm_squared();
    let theta = theta_sq.sqrt();
    let k = skew(omega);
    // a = sin(t)/t, b = (1 - cos(t))/t^2
    let (a, b) = if theta < SMALL_ANGLE {
        (1.0 - theta_sq / 6.0, 0.5 - theta_sq / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta_sq)
    };
    Rotation(Matrix3::identity() + k * a + k * k * b)
}

/// Log map of a matrix that has not been validated yet.
pub fn log_so3(m: &Matrix3<f64>) -> Result<Vector3<f64>, GeometryError> {
    Rotation::from_matrix(*m).map(|r| r.log())
}

/// Returns `omega` with `|omega|` in `[0, pi]`.
///
/// At exactly pi the sign of the axis is ambiguous. The axis is then chosen with its
/// first nonzero component positive.
fn log_rotation(m: &Matrix3<f64>) -> Vector3<f64> {
    let antisym = vee(&(m - m.transpose())) * 0.5; // sin(t) * axis
    let sin_t = antisym.norm();
    let cos_t = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = sin_t.atan2(cos_t);

    if theta < SMALL_ANGLE {
        // t / sin(t) = 1 + t^2/6 + 7 t^4 / 360
        let t2 = theta * theta;
        return antisym * (1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0);
    }
    if theta < PI - NEAR_PI {
        return antisym * (theta / sin_t);
    }

    // aaᵀ = (sym(R) - cos(t) I) / (1 - cos(t))
    let sym = (m + m.transpose()) * 0.5;
    let outer = (sym - Matrix3::identity() * cos_t) / (1.0 - cos_t);
    let k = (0..3)
        .max_by(|&i, &j| outer[(i, i)].total_cmp(&outer[(j, j)]))
        .unwrap_or(0);
    let ak = outer[(k, k)].max(0.0).sqrt();
    let mut axis = Vector3::zeros();
    for i in 0..3 {
        axis[i] = if i == k { ak } else { outer[(i, k)] / ak };
    }
    axis.normalize_mut();

    if sin_t > 1e-12 {
        if axis.dot(&antisym) < 0.0 {
            axis = -axis;
        }
    } else if let Some(first) = axis.iter().find(|v| v.abs() > 1e-12) {
        if *first < 0.0 {
            axis = -axis;
        }
    }
    axis * theta
}

/// Position plus rotation of a frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub rotation: Rotation,
}

impl Pose {
    pub fn new(position: Vector3<f64>, rotation: Rotation) -> Self {
        Self { position, rotation }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    /// `self * other`, i.e. `other` expressed in the frame of `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            position: self.position + self.rotation * other.position,
            rotation: self.rotation * other.rotation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            position: -(rt * self.position),
            rotation: rt,
        }
    }

    pub fn from_wire(pos: [f64; 3], quat_wxyz: [f64; 4]) -> Result<Self, GeometryError> {
        if pos.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite("position"));
        }
        Ok(Self {
            position: Vector3::from(pos),
            rotation: Rotation::from_wxyz(quat_wxyz)?,
        })
    }
}

/// Tracking error between a target and the current end-effector pose.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PoseError {
    pub pos: Vector3<f64>,
    pub rot: Vector3<f64>,
    pub frame: Frame,
}

impl PoseError {
    pub fn zero(frame: Frame) -> Self {
        Self {
            pos: Vector3::zeros(),
            rot: Vector3::zeros(),
            frame,
        }
    }

    /// Stacked `(e_pos, e_rot)`, matching the Jacobian row order.
    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(self.pos.x, self.pos.y, self.pos.z, self.rot.x, self.rot.y, self.rot.z)
    }

    pub fn from_vector(v: &Vector6<f64>, frame: Frame) -> Self {
        Self {
            pos: Vector3::new(v[0], v[1], v[2]),
            rot: Vector3::new(v[3], v[4], v[5]),
            frame,
        }
    }
}

/// Decoupled position/rotation error.
///
/// Base frame: `e_pos = x_t - x_c`, `e_rot = Log(R_t R_cᵀ)`.
/// End-effector frame: `e_pos = R_cᵀ (x_t - x_c)`, `e_rot = Log(R_cᵀ R_t)`.
pub fn pose_error(target: &Pose, current: &Pose, frame: Frame) -> PoseError {
    let dp = target.position - current.position;
    let rc_t = current.rotation.transpose();
    match frame {
        Frame::Base => PoseError {
            pos: dp,
            rot: (target.rotation * rc_t).log(),
            frame,
        },
        Frame::EndEffector => PoseError {
            pos: rc_t * dp,
            rot: (rc_t * target.rotation).log(),
            frame,
        },
    }
}
