//! Two simulated arms in a teleoperation loop.
//!
//! A scripted operator hand pulls the leader along a figure-eight through an
//! impedance. The leader's end-effector pose is sampled at the forwarding rate
//! and sent to the follower as its pose target. The wrench the follower measures
//! at its tip is reflected onto the leader as
//! `τ_fb = -k_p,fb Jᵀ F_follower - k_d,fb q̇_leader`.

use compliant_core::control::{leader_feedback_torque, Controller, TargetCommand};
use compliant_core::dynamics::{forward_kinematics, geometric_jacobian};
use compliant_core::sim::{step, LogRow, SimConfig, SimError, SimState, TrajectoryLog};
use compliant_core::Frame;
use nalgebra::DVector;

use crate::scenario::{LeaderSpec, Scenario};

#[derive(Debug, Clone, PartialEq)]
pub struct LeaderFollowerRun {
    /// `e_pos` and `e_rot` are relative to the forwarded leader poses;
    /// `wrench` is the follower's sensor reading.
    pub follower: TrajectoryLog,
    /// `tau` is the operator torque plus the feedback; `e_pos` and `e_rot` are
    /// relative to the operator's hand; `wrench` is the follower reading the
    /// feedback used.
    pub leader: TrajectoryLog,
    /// The feedback torque on the leader at each tick.
    pub feedback: Vec<DVector<f64>>,
}

/// Runs both arms on a common 1/dt grid for the scenario's duration.
pub fn run_leader_follower(scenario: &Scenario, spec: &LeaderSpec) -> Result<LeaderFollowerRun, SimError> {
    let sim = &scenario.sim;
    // the environment only touches the follower
    let leader_sim = SimConfig {
        joint_viscous_damping: DVector::zeros(spec.model.dof),
        disturbance: None,
        ..sim.clone()
    };
    sim.validate(&scenario.model)?;
    leader_sim.validate(&spec.model)?;
    scenario.initial.validate(&scenario.model)?;
    spec.initial.validate(&spec.model)?;

    let mut operator = Controller::new(spec.model.clone(), spec.params.clone());
    let mut follower = Controller::new(scenario.model.clone(), scenario.params.clone());
    let mut ls = SimState::new(spec.initial.q.clone(), spec.initial.dq.clone());
    let mut fs = SimState::new(scenario.initial.q.clone(), scenario.initial.dq.clone());
    let hand_start = forward_kinematics(&spec.model, &ls.q)?;

    let ticks = (scenario.duration / sim.dt).round() as u64;
    let mut leader_rows = Vec::with_capacity(ticks as usize);
    let mut follower_rows = Vec::with_capacity(ticks as usize);
    let mut feedback = Vec::with_capacity(ticks as usize);
    let mut forwarded: u64 = 0;
    let (mut saturated, mut singular) = (0, 0);
    for tick in 0..ticks {
        let t = ls.t;
        operator.apply_command(TargetCommand::pose(t, spec.script.pose_at(&hand_start, t)))?;
        let hand = operator.compute(&ls.joint_state())?;
        // forwarding instants k / rate, delivered on the first tick not before them
        while forwarded as f64 / spec.rate / sim.dt <= tick as f64 + 1e-9 {
            follower.apply_command(TargetCommand::pose(t, hand.pose))?;
            forwarded += 1;
        }
        let measured = fs.ee_wrench_estimate;
        let j = geometric_jacobian(&spec.model, &ls.q, Frame::Base)?;
        let fb = leader_feedback_torque(&j, &measured, &ls.dq, spec.params.fb_kp, spec.params.fb_kd)?;
        let tau_leader = &hand.tau + &fb;

        let out = follower.compute(&fs.joint_state())?;
        saturated += (out.tau != out.unlimited) as u64;
        singular += out.singular as u64;

        leader_rows.push(LogRow {
            t,
            q: ls.q.clone(),
            dq: ls.dq.clone(),
            tau: tau_leader.clone(),
            pose: hand.pose,
            e_pos: hand.tracking_error.pos,
            e_rot: hand.tracking_error.rot,
            wrench: measured,
        });
        follower_rows.push(LogRow {
            t: fs.t,
            q: fs.q.clone(),
            dq: fs.dq.clone(),
            tau: out.tau.clone(),
            pose: out.pose,
            e_pos: out.tracking_error.pos,
            e_rot: out.tracking_error.rot,
            wrench: measured,
        });
        feedback.push(fb);

        ls = step(&spec.model, &ls, &tau_leader, &leader_sim)?;
        fs = step(&scenario.model, &fs, &out.tau, sim)?;
    }

    Ok(LeaderFollowerRun {
        follower: TrajectoryLog {
            dof: scenario.model.dof,
            rows: follower_rows,
            torque_violations: fs.torque_violations,
            limit_breaches: fs.limit_breaches,
            saturated_ticks: saturated,
            singular_ticks: singular,
            final_state: fs,
        },
        leader: TrajectoryLog {
            dof: spec.model.dof,
            rows: leader_rows,
            torque_violations: ls.torque_violations,
            limit_breaches: ls.limit_breaches,
            saturated_ticks: 0,
            singular_ticks: 0,
            final_state: ls,
        },
        feedback,
    })
}
