//! The individual torque terms summed by the control law.

use nalgebra::{DMatrix, DVector, Vector6};

use super::{ControlError, Projector};
use crate::dynamics::{
    damped_pseudoinverse, generalized_inverse_with, task_inertia_with, Damped, Jacobian, TaskInertiaVariant, Wrench,
};
use crate::geometry::PoseError;
use crate::urdf::JointLimits;

fn check_dims(j: &Jacobian, e: Option<&PoseError>, dq: &DVector<f64>) -> Result<(), ControlError> {
    if let Some(e) = e {
        if e.frame != j.frame {
            return Err(ControlError::FrameMismatch {
                jacobian: j.frame,
                other: e.frame,
            });
        }
    }
    if dq.len() != j.dof() {
        return Err(ControlError::DimensionMismatch {
            what: "dq",
            expected: j.dof(),
            got: dq.len(),
        });
    }
    Ok(())
}

/// Task-space spring-damper wrench `Kp e - Kd J dq`.
fn spring_damper(j: &Jacobian, e: &PoseError, dq: &DVector<f64>, kp: &Vector6<f64>, kd: &Vector6<f64>) -> Wrench {
    kp.component_mul(&e.to_vector()) - kd.component_mul(&j.twist(dq))
}

/// Cartesian impedance: `τ = Jᵀ (Kp e - Kd J dq)`.
pub fn ci_task_torque(
    j: &Jacobian,
    e: &PoseError,
    dq: &DVector<f64>,
    kp: &Vector6<f64>,
    kd: &Vector6<f64>,
) -> Result<DVector<f64>, ControlError> {
    check_dims(j, Some(e), dq)?;
    Ok(j.transpose_mul(&spring_damper(j, e, dq, kp, kd)))
}

/// Operational-space control with a precomputed task inertia:
/// `τ = Jᵀ Λ (Kp e - Kd J dq)`.
pub fn osc_task_torque_with(
    lambda: &DMatrix<f64>,
    j: &Jacobian,
    e: &PoseError,
    dq: &DVector<f64>,
    kp: &Vector6<f64>,
    kd: &Vector6<f64>,
) -> Result<DVector<f64>, ControlError> {
    check_dims(j, Some(e), dq)?;
    let w = spring_damper(j, e, dq, kp, kd);
    let scaled = lambda * DVector::from_column_slice(w.as_slice());
    Ok(j.matrix.tr_mul(&scaled))
}

/// Operational-space control. Gravity and Coriolis are not folded in here; they
/// are compensated in joint space by their own terms.
#[allow(clippy::too_many_arguments)]
pub fn osc_task_torque(
    mass: &DMatrix<f64>,
    j: &Jacobian,
    e: &PoseError,
    dq: &DVector<f64>,
    kp: &Vector6<f64>,
    kd: &Vector6<f64>,
    variant: TaskInertiaVariant,
    damping: f64,
) -> Result<Damped<DVector<f64>>, ControlError> {
    let lambda = task_inertia_with(mass, &j.matrix, variant, damping)?;
    Ok(Damped {
        value: osc_task_torque_with(&lambda.value, j, e, dq, kp, kd)?,
        singular: lambda.singular,
    })
}

/// The nullspace projector `N` for the requested kind.
pub fn nullspace_projector(
    kind: Projector,
    j: &Jacobian,
    mass: Option<&DMatrix<f64>>,
    damping: f64,
) -> Result<Damped<DMatrix<f64>>, ControlError> {
    let n = j.dof();
    let identity = DMatrix::identity(n, n);
    match kind {
        Projector::Identity => Ok(Damped {
            value: identity,
            singular: false,
        }),
        Projector::Static => {
            let pinv = damped_pseudoinverse(&j.matrix, damping);
            Ok(Damped {
                value: identity - j.matrix.transpose() * pinv.transpose(),
                singular: false,
            })
        }
        Projector::Dynamic => {
            let mass = mass.ok_or(ControlError::MissingMassMatrix)?;
            let jbar = generalized_inverse_with(mass, &j.matrix, damping)?;
            Ok(Damped {
                value: identity - j.matrix.transpose() * jbar.value.transpose(),
                singular: jbar.singular,
            })
        }
    }
}

/// Joint impedance `Kp_s (q_t - q) + Kd_s (dq_t - dq)`, before projection.
pub fn joint_impedance(
    q: &DVector<f64>,
    dq: &DVector<f64>,
    q_target: &DVector<f64>,
    dq_target: &DVector<f64>,
    kp: &DVector<f64>,
    kd: &DVector<f64>,
) -> DVector<f64> {
    kp.component_mul(&(q_target - q)) + kd.component_mul(&(dq_target - dq))
}

/// Joint impedance projected into the task nullspace.
#[allow(clippy::too_many_arguments)]
pub fn nullspace_torque(
    projector: Projector,
    j: &Jacobian,
    mass: Option<&DMatrix<f64>>,
    q: &DVector<f64>,
    dq: &DVector<f64>,
    q_target: &DVector<f64>,
    dq_target: &DVector<f64>,
    kp: &DVector<f64>,
    kd: &DVector<f64>,
    damping: f64,
) -> Result<Damped<DVector<f64>>, ControlError> {
    check_dims(j, None, dq)?;
    for (what, v) in [("q", q), ("q_target", q_target), ("dq_target", dq_target), ("kp_null", kp), ("kd_null", kd)] {
        if v.len() != j.dof() {
            return Err(ControlError::DimensionMismatch {
                what,
                expected: j.dof(),
                got: v.len(),
            });
        }
    }
    let n = nullspace_projector(projector, j, mass, damping)?;
    let secondary = joint_impedance(q, dq, q_target, dq_target, kp, kd);
    Ok(Damped {
        value: n.value * secondary,
        singular: n.singular,
    })
}

/// Repulsive torque inside the margin `epsilon` of each joint limit.
///
/// Zero strictly inside `[lower + epsilon, upper - epsilon]`; otherwise
/// `-K (upper - q)` near the upper limit and `-K (lower - q)` near the lower one.
pub fn barrier_torque(q: &DVector<f64>, limits: &[JointLimits], k_joint: &DVector<f64>, epsilon: f64) -> DVector<f64> {
    DVector::from_iterator(
        q.len(),
        q.iter().zip(limits).zip(k_joint.iter()).map(|((&qi, lim), &k)| {
            if qi > lim.upper - epsilon {
                -k * (lim.upper - qi)
            } else if qi < lim.lower + epsilon {
                -k * (lim.lower - qi)
            } else {
                0.0
            }
        }),
    )
}

fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

/// Smoothed Coulomb friction with offset: `φ1 (σ(φ2 (dq + φ3)) - σ(φ2 φ3))`.
pub fn friction_torque(dq: &DVector<f64>, phi1: &DVector<f64>, phi2: &DVector<f64>, phi3: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        dq.len(),
        (0..dq.len()).map(|i| phi1[i] * (sigmoid(phi2[i] * (dq[i] + phi3[i])) - sigmoid(phi2[i] * phi3[i]))),
    )
}

/// `τ = Jᵀ F`, with `F` expressed in the Jacobian's frame.
pub fn wrench_torque(j: &Jacobian, wrench: &Wrench) -> DVector<f64> {
    j.transpose_mul(wrench)
}

/// Force feedback for a leader arm: `-k_p Jᵀ F_follower - k_d dq_leader`.
pub fn leader_feedback_torque(
    j_leader: &Jacobian,
    follower_wrench: &Wrench,
    dq_leader: &DVector<f64>,
    fb_kp: f64,
    fb_kd: f64,
) -> Result<DVector<f64>, ControlError> {
    check_dims(j_leader, None, dq_leader)?;
    Ok(-j_leader.transpose_mul(follower_wrench) * fb_kp - dq_leader * fb_kd)
}
