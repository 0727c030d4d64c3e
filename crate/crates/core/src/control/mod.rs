//! The compliant control law.
//!
//! Each torque term lives in [`terms`] as a plain function of its inputs. The
//! command is their sum, evaluated in a fixed order:
//! filter target, compute error, clip, task, nullspace, barrier, gravity,
//! Coriolis, friction, wrench, sum, limit.
//!
//! [`compute_command`] is the stateless-by-signature entry point used by the
//! simulator; [`Controller`] bundles it with its state and latest targets.

mod filters;
mod params;
mod terms;

use nalgebra::{DVector, Vector3};
use thiserror::Error;

use crate::dynamics::{mass_matrix_with, rnea_with, DynamicsError, JointState, Kinematics, Wrench};
use crate::geometry::{pose_error, Frame, Pose, PoseError};
use crate::urdf::RobotModel;

pub use filters::{clip_error, ema_filter, limit_torque};
pub use params::{
    critical_damping, Bound, ControllerConfig, ControllerParams, EnableFlags, ParamError, PerJoint, Projector,
    TaskType, CONFIG_VERSION,
};
pub use terms::{
    barrier_torque, ci_task_torque, friction_torque, joint_impedance, leader_feedback_torque, nullspace_projector,
    nullspace_torque, osc_task_torque, osc_task_torque_with, wrench_torque,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("Jacobian is expressed in {jacobian:?} but the operand is in {other:?}")]
    FrameMismatch { jacobian: Frame, other: Frame },
    #[error("{what} has length {got}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("the dynamic projector needs the mass matrix")]
    MissingMassMatrix,
    #[error("commanded torque is not finite")]
    NonFiniteTorque,
    #[error("invalid target: {0}")]
    InvalidTarget(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// One of the three kinds of target the controller tracks.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    /// End-effector pose in the base frame.
    Pose(Pose),
    /// Nullspace joint target; `dq` defaults to zero.
    Joint { q: DVector<f64>, dq: Option<DVector<f64>> },
    /// Feed-forward tip wrench, expressed in the controller's error frame.
    Wrench(Wrench),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetCommand {
    /// Sender's monotonic time in seconds.
    pub stamp: f64,
    pub target: Target,
}

impl TargetCommand {
    pub fn pose(stamp: f64, pose: Pose) -> Self {
        Self {
            stamp,
            target: Target::Pose(pose),
        }
    }

    pub fn validate(&self, model: &RobotModel) -> Result<(), ControlError> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !self.stamp.is_finite() {
            return Err(ControlError::InvalidTarget("stamp is not finite".into()));
        }
        match &self.target {
            Target::Pose(p) => {
                if !finite(p.position.as_slice()) {
                    return Err(ControlError::InvalidTarget("pose is not finite".into()));
                }
            }
            Target::Joint { q, dq } => {
                for (what, v) in [("q_target", Some(q)), ("dq_target", dq.as_ref())] {
                    let Some(v) = v else { continue };
                    if v.len() != model.dof {
                        return Err(ControlError::DimensionMismatch {
                            what,
                            expected: model.dof,
                            got: v.len(),
                        });
                    }
                    if !finite(v.as_slice()) {
                        return Err(ControlError::InvalidTarget(format!("{what} is not finite")));
                    }
                }
            }
            Target::Wrench(w) => {
                if !finite(w.as_slice()) {
                    return Err(ControlError::InvalidTarget("wrench is not finite".into()));
                }
            }
        }
        Ok(())
    }
}

/// The most recent target of each kind. A newer command of one kind replaces
/// only that kind.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TargetInputs {
    pub pose: Option<Pose>,
    pub joint: Option<(DVector<f64>, DVector<f64>)>,
    pub wrench: Option<Wrench>,
    pub last_stamp: Option<f64>,
}

impl TargetInputs {
    pub fn apply(&mut self, cmd: TargetCommand) {
        self.last_stamp = Some(cmd.stamp);
        match cmd.target {
            Target::Pose(p) => self.pose = Some(p),
            Target::Joint { q, dq } => {
                let dq = dq.unwrap_or_else(|| DVector::zeros(q.len()));
                self.joint = Some((q, dq));
            }
            Target::Wrench(w) => self.wrench = Some(w),
        }
    }
}

/// Memory carried between control cycles.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    /// Output of the target filter; `None` until the first cycle.
    pub filtered_target: Option<Pose>,
    /// Last limited command, the reference of the rate limiter.
    pub previous_tau: DVector<f64>,
    pub last_command_stamp: Option<f64>,
    /// Joint configuration held when no joint target has been received.
    pub hold_q: Option<DVector<f64>>,
}

impl ControllerState {
    pub fn new(dof: usize) -> Self {
        Self {
            filtered_target: None,
            previous_tau: DVector::zeros(dof),
            last_command_stamp: None,
            hold_q: None,
        }
    }
}

/// Every term of one command, zero where disabled.
#[derive(Debug, Clone, PartialEq)]
pub struct TorqueTerms {
    pub task: DVector<f64>,
    pub nullspace: DVector<f64>,
    pub barrier: DVector<f64>,
    pub gravity: DVector<f64>,
    pub coriolis: DVector<f64>,
    pub friction: DVector<f64>,
    pub wrench: DVector<f64>,
}

impl TorqueTerms {
    fn zeros(n: usize) -> Self {
        let z = DVector::zeros(n);
        Self {
            task: z.clone(),
            nullspace: z.clone(),
            barrier: z.clone(),
            gravity: z.clone(),
            coriolis: z.clone(),
            friction: z.clone(),
            wrench: z,
        }
    }

    pub fn sum(&self) -> DVector<f64> {
        &self.task + &self.nullspace + &self.barrier + &self.gravity + &self.coriolis + &self.friction + &self.wrench
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutput {
    /// Limited command sent to the actuators.
    pub tau: DVector<f64>,
    /// Sum of the enabled terms before limiting.
    pub unlimited: DVector<f64>,
    pub terms: TorqueTerms,
    /// Filtered target the task term tracked.
    pub target: Pose,
    /// Clipped error fed to the task term, in the configured frame.
    pub error: PoseError,
    /// Unfiltered, unclipped error to the latest raw target, in the base frame.
    pub tracking_error: PoseError,
    /// Current end-effector pose.
    pub pose: Pose,
    /// A regularized inverse was rank deficient this cycle.
    pub singular: bool,
    /// No pose target has been received yet; the initial pose is held.
    pub holding: bool,
}

/// One cycle of the control law.
///
/// Before the first pose target arrives, the pose at the first cycle is held.
/// Before the first joint target arrives, the configuration at the first cycle is
/// the nullspace target.
pub fn compute_command(
    model: &RobotModel,
    joint_state: &JointState,
    inputs: &TargetInputs,
    params: &ControllerParams,
    state: &mut ControllerState,
) -> Result<CommandOutput, ControlError> {
    joint_state.validate(model)?;
    let n = model.dof;
    let (q, dq) = (&joint_state.q, &joint_state.dq);
    let kin = Kinematics::compute(model, q)?;
    let pose = kin.tip();
    let j = kin.jacobian(model, params.error_frame);

    let raw_target = inputs.pose.unwrap_or(*state.filtered_target.get_or_insert(pose));
    let previous = state.filtered_target.unwrap_or(pose);
    let target = ema_filter(&previous, &raw_target, params.ema_alpha);
    state.filtered_target = Some(target);
    state.last_command_stamp = inputs.last_stamp;
    let error = clip_error(&pose_error(&target, &pose, params.error_frame), &params.error_clip);
    let tracking_error = pose_error(&raw_target, &pose, Frame::Base);

    let need_mass = params.enable.task && params.task_type == TaskType::Osc
        || params.enable.nullspace && params.projector == Projector::Dynamic;
    let mass = need_mass.then(|| mass_matrix_with(model, &kin));
    let mut singular = false;
    let mut terms = TorqueTerms::zeros(n);

    if params.enable.task {
        terms.task = match params.task_type {
            TaskType::CartesianImpedance => ci_task_torque(&j, &error, dq, &params.kp, &params.kd)?,
            TaskType::Osc => {
                let mass = mass.as_ref().ok_or(ControlError::MissingMassMatrix)?;
                let out = osc_task_torque(mass, &j, &error, dq, &params.kp, &params.kd, params.task_inertia, params.damping)?;
                singular |= out.singular;
                out.value
            }
        };
    }
    if params.enable.nullspace {
        let hold = state.hold_q.get_or_insert_with(|| q.clone()).clone();
        let zeros = DVector::zeros(n);
        let (q_t, dq_t) = match &inputs.joint {
            Some((q_t, dq_t)) => (q_t, dq_t),
            None => (&hold, &zeros),
        };
        let out = nullspace_torque(
            params.projector,
            &j,
            mass.as_ref(),
            q,
            dq,
            q_t,
            dq_t,
            &params.kp_null,
            &params.kd_null,
            params.damping,
        )?;
        singular |= out.singular;
        terms.nullspace = out.value;
    } else {
        state.hold_q.get_or_insert_with(|| q.clone());
    }
    if params.enable.barrier {
        terms.barrier = barrier_torque(q, &model.joint_limits(), &params.k_joint, params.epsilon);
    }
    let zeros = DVector::zeros(n);
    if params.enable.gravity {
        terms.gravity = rnea_with(model, &kin, &zeros, &zeros, &model.gravity, &Wrench::zeros());
    }
    if params.enable.coriolis {
        terms.coriolis = rnea_with(model, &kin, dq, &zeros, &Vector3::zeros(), &Wrench::zeros());
    }
    if params.enable.friction {
        terms.friction = friction_torque(dq, &params.friction_phi1, &params.friction_phi2, &params.friction_phi3);
    }
    if params.enable.wrench {
        terms.wrench = wrench_torque(&j, &inputs.wrench.unwrap_or(params.wrench_target));
    }

    let unlimited = terms.sum();
    if unlimited.iter().any(|v| !v.is_finite()) {
        return Err(ControlError::NonFiniteTorque);
    }
    let tau = limit_torque(&unlimited, &state.previous_tau, &params.tau_limit, &params.tau_rate_limit);
    state.previous_tau = tau.clone();
    Ok(CommandOutput {
        tau,
        unlimited,
        terms,
        target,
        error,
        tracking_error,
        pose,
        singular,
        holding: inputs.pose.is_none(),
    })
}

/// A control loop's view of one robot: parameters, cycle state and the latest targets.
#[derive(Debug, Clone)]
pub struct Controller {
    model: RobotModel,
    pub params: ControllerParams,
    pub state: ControllerState,
    pub inputs: TargetInputs,
}

impl Controller {
    pub fn new(model: RobotModel, params: ControllerParams) -> Self {
        let state = ControllerState::new(model.dof);
        Self {
            model,
            params,
            state,
            inputs: TargetInputs::default(),
        }
    }

    pub fn model(&self) -> &RobotModel {
        &self.model
    }

    /// Validates and records a target; invalid targets leave the inputs unchanged.
    pub fn apply_command(&mut self, cmd: TargetCommand) -> Result<(), ControlError> {
        cmd.validate(&self.model)?;
        self.inputs.apply(cmd);
        Ok(())
    }

    pub fn set_param(&mut self, key: &str, value: &serde_json::Value) -> Result<(), ParamError> {
        self.params.set(key, value, &self.model)
    }

    pub fn compute(&mut self, joint_state: &JointState) -> Result<CommandOutput, ControlError> {
        compute_command(&self.model, joint_state, &self.inputs, &self.params, &mut self.state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{forward_dynamics, gravity_torque};
    use crate::fixtures;
    use crate::urdf::parse_urdf;

    fn g7() -> RobotModel {
        parse_urdf(fixtures::GENERIC7).unwrap()
    }

    fn home() -> DVector<f64> {
        DVector::from_column_slice(&fixtures::GENERIC7_HOME)
    }

    #[test]
    fn all_flags_off_gives_zero() {
        let m = g7();
        let mut p = ControllerParams::defaults(&m);
        p.enable = EnableFlags::none();
        let mut c = Controller::new(m, p);
        let js = JointState::new(home(), DVector::from_element(7, 0.3));
        assert_eq!(c.compute(&js).unwrap().tau, DVector::zeros(7));
    }

    #[test]
    fn gravity_only_holds_still() {
        let m = g7();
        let mut p = ControllerParams::defaults(&m);
        p.enable = EnableFlags::none();
        p.enable.gravity = true;
        let mut c = Controller::new(m.clone(), p);
        let js = JointState::at_rest(home());
        let tau = c.compute(&js).unwrap().tau;
        assert!((&tau - gravity_torque(&m, &js.q).unwrap()).amax() < 1e-12);
        let ddq = forward_dynamics(&m, &js.q, &js.dq, &tau, &Wrench::zeros()).unwrap();
        assert!(ddq.amax() < 1e-10);
    }

    #[test]
    fn holds_initial_pose_until_a_target_arrives() {
        let m = g7();
        let mut c = Controller::new(m, ControllerParams::defaults(&g7()));
        let js = JointState::at_rest(home());
        let out = c.compute(&js).unwrap();
        assert!(out.holding);
        assert_eq!(out.error.to_vector(), nalgebra::Vector6::zeros());
        let shifted = Pose::new(out.pose.position + Vector3::new(0.0, 0.0, 0.1), out.pose.rotation);
        c.apply_command(TargetCommand::pose(0.1, shifted)).unwrap();
        let out = c.compute(&js).unwrap();
        assert!(!out.holding);
        assert!((out.error.pos.z - 0.1).abs() < 1e-12);
    }

    #[test]
    fn additivity_before_limits() {
        let m = g7();
        let mut p = ControllerParams::defaults(&m);
        p.enable.friction = true;
        p.enable.wrench = true;
        p.friction_phi1 = DVector::from_element(7, 1.0);
        p.friction_phi2 = DVector::from_element(7, 5.0);
        p.friction_phi3 = DVector::from_element(7, 0.1);
        p.wrench_target = Wrench::new(1.0, 2.0, 3.0, 0.1, 0.2, 0.3);
        p.kp_null = DVector::from_element(7, 5.0);
        p.tau_rate_limit = DVector::from_element(7, 0.5);
        let mut c = Controller::new(m, p);
        let js = JointState::new(home(), DVector::from_element(7, 0.2));
        let out = c.compute(&js).unwrap();
        assert_eq!(out.unlimited, out.terms.sum());
        assert!(out.tau.iter().all(|t| t.abs() <= 0.5));
    }

    #[test]
    fn rejects_wrong_joint_target_size() {
        let mut c = Controller::new(g7(), ControllerParams::defaults(&g7()));
        let cmd = TargetCommand {
            stamp: 0.0,
            target: Target::Joint {
                q: DVector::zeros(3),
                dq: None,
            },
        };
        assert!(matches!(c.apply_command(cmd), Err(ControlError::DimensionMismatch { .. })));
        assert!(c.inputs.joint.is_none());
    }
}
