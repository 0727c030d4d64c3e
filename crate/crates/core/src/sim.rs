//! Fixed-step forward-dynamics simulation and closed-loop runs.

use std::io::Write;

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{ControlError, Controller, ControllerParams, TargetCommand};
use crate::dynamics::{forward_dynamics_with, DynamicsError, JointState, Kinematics, Wrench};
use crate::geometry::Pose;
use crate::urdf::RobotModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("state became non-finite at t = {t}: q = {q:?}, dq = {dq:?}")]
    NonFiniteState { t: f64, q: Vec<f64>, dq: Vec<f64> },
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("target stream time {at} precedes {previous}")]
    NonMonotoneStream { previous: f64, at: f64 },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Control(#[from] ControlError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Updates `dq`, then `q` with the new `dq`.
    #[default]
    SemiImplicitEuler,
    Rk4,
}

/// A wrench the environment applies to the tip during `[start, end)`, in the base frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduledWrench {
    pub start: f64,
    #[serde(default = "unbounded")]
    pub end: f64,
    pub wrench: [f64; 6],
}

fn unbounded() -> f64 {
    f64::INFINITY
}

impl ScheduledWrench {
    pub fn at(&self, t: f64) -> Wrench {
        if t >= self.start && t < self.end {
            Wrench::from(self.wrench)
        } else {
            Wrench::zeros()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub gravity: Vector3<f64>,
    pub joint_viscous_damping: DVector<f64>,
    pub integrator: Integrator,
    pub disturbance: Option<ScheduledWrench>,
    /// Slack beyond the joint limits before a position counts as a breach.
    pub limit_guard: f64,
}

impl SimConfig {
    /// 1 ms steps, the model's gravity, no damping, no disturbance.
    pub fn for_model(model: &RobotModel) -> Self {
        Self {
            dt: 1e-3,
            gravity: model.gravity,
            joint_viscous_damping: DVector::zeros(model.dof),
            integrator: Integrator::default(),
            disturbance: None,
            limit_guard: 1e-2,
        }
    }

    pub fn validate(&self, model: &RobotModel) -> Result<(), SimError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SimError::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if self.joint_viscous_damping.len() != model.dof {
            return Err(SimError::InvalidConfig(format!(
                "joint_viscous_damping has {} entries, expected {}",
                self.joint_viscous_damping.len(),
                model.dof
            )));
        }
        if self.joint_viscous_damping.iter().any(|d| !(*d >= 0.0)) {
            return Err(SimError::InvalidConfig("joint_viscous_damping must be >= 0".into()));
        }
        if !(self.limit_guard >= 0.0) {
            return Err(SimError::InvalidConfig("limit_guard must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub steps: u64,
    pub q: DVector<f64>,
    pub dq: DVector<f64>,
    /// Torque actually applied in the last step, after clamping to effort limits.
    pub last_tau: DVector<f64>,
    /// Wrench the tip exerts on the environment: the negated applied disturbance.
    pub ee_wrench_estimate: Wrench,
    /// Steps whose commanded torque exceeded an effort limit.
    pub torque_violations: u64,
    /// Steps that ended with a joint beyond its limits plus the guard.
    pub limit_breaches: u64,
}

impl SimState {
    pub fn new(q: DVector<f64>, dq: DVector<f64>) -> Self {
        let n = q.len();
        Self {
            t: 0.0,
            steps: 0,
            q,
            dq,
            last_tau: DVector::zeros(n),
            ee_wrench_estimate: Wrench::zeros(),
            torque_violations: 0,
            limit_breaches: 0,
        }
    }

    pub fn joint_state(&self) -> JointState {
        JointState::new(self.q.clone(), self.dq.clone())
    }
}

fn acceleration(
    model: &RobotModel,
    q: &DVector<f64>,
    dq: &DVector<f64>,
    tau: &DVector<f64>,
    config: &SimConfig,
    ext: &Wrench,
) -> Result<DVector<f64>, DynamicsError> {
    let kin = Kinematics::compute(model, q)?;
    let applied = tau - config.joint_viscous_damping.component_mul(dq);
    forward_dynamics_with(model, &kin, dq, &applied, &config.gravity, ext)
}

/// Advances the simulation by one `dt` under torque `tau`.
///
/// Torques beyond the effort limits are clamped and counted in `torque_violations`.
pub fn step(model: &RobotModel, state: &SimState, tau: &DVector<f64>, config: &SimConfig) -> Result<SimState, SimError> {
    let limits = model.joint_limits();
    if tau.len() != model.dof {
        return Err(DynamicsError::DimensionMismatch {
            what: "tau",
            expected: model.dof,
            got: tau.len(),
        }
        .into());
    }
    let mut violated = false;
    let applied = DVector::from_iterator(
        tau.len(),
        tau.iter().zip(&limits).map(|(&t, l)| {
            violated |= t.abs() > l.effort;
            t.clamp(-l.effort, l.effort)
        }),
    );
    let ext = config.disturbance.map_or_else(Wrench::zeros, |d| d.at(state.t));
    let dt = config.dt;
    let (q, dq) = (&state.q, &state.dq);
    let (q, dq) = match config.integrator {
        Integrator::SemiImplicitEuler => {
            let ddq = acceleration(model, q, dq, &applied, config, &ext)?;
            let dq_next = dq + ddq * dt;
            (q + &dq_next * dt, dq_next)
        }
        Integrator::Rk4 => {
            let a1 = acceleration(model, q, dq, &applied, config, &ext)?;
            let (q2, dq2) = (q + dq * (dt / 2.0), dq + &a1 * (dt / 2.0));
            let a2 = acceleration(model, &q2, &dq2, &applied, config, &ext)?;
            let (q3, dq3) = (q + &dq2 * (dt / 2.0), dq + &a2 * (dt / 2.0));
            let a3 = acceleration(model, &q3, &dq3, &applied, config, &ext)?;
            let (q4, dq4) = (q + &dq3 * dt, dq + &a3 * dt);
            let a4 = acceleration(model, &q4, &dq4, &applied, config, &ext)?;
            (
                q + (dq + &dq2 * 2.0 + &dq3 * 2.0 + &dq4) * (dt / 6.0),
                dq + (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (dt / 6.0),
            )
        }
    };
    let steps = state.steps + 1;
    let t = steps as f64 * dt;
    if q.iter().chain(dq.iter()).any(|v| !v.is_finite()) {
        return Err(SimError::NonFiniteState {
            t,
            q: q.iter().copied().collect(),
            dq: dq.iter().copied().collect(),
        });
    }
    let breached = q
        .iter()
        .zip(&limits)
        .any(|(&qi, l)| qi > l.upper + config.limit_guard || qi < l.lower - config.limit_guard);
    Ok(SimState {
        t,
        steps,
        q,
        dq,
        last_tau: applied,
        ee_wrench_estimate: -ext,
        torque_violations: state.torque_violations + violated as u64,
        limit_breaches: state.limit_breaches + breached as u64,
    })
}

/// One control tick: the state the controller saw and what it commanded.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub q: DVector<f64>,
    pub dq: DVector<f64>,
    pub tau: DVector<f64>,
    pub pose: Pose,
    /// Error to the latest raw pose target, base frame.
    pub e_pos: Vector3<f64>,
    pub e_rot: Vector3<f64>,
    /// Wrench reported by the simulated sensor at `t`.
    pub wrench: Wrench,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub dof: usize,
    pub rows: Vec<LogRow>,
    pub torque_violations: u64,
    pub limit_breaches: u64,
    /// Ticks where a torque or rate limit changed the command.
    pub saturated_ticks: u64,
    /// Ticks where a regularized inverse was rank deficient.
    pub singular_ticks: u64,
    pub final_state: SimState,
}

/// CSV header of a trajectory log for `dof` joints.
pub fn csv_header(dof: usize) -> Vec<String> {
    let mut h = vec!["t".to_owned()];
    for prefix in ["q", "dq", "tau"] {
        h.extend((0..dof).map(|i| format!("{prefix}{i}")));
    }
    h.extend(
        ["x", "y", "z", "qw", "qx", "qy", "qz", "epx", "epy", "epz", "erx", "ery", "erz"]
            .iter()
            .map(|s| s.to_string()),
    );
    h
}

impl LogRow {
    /// Values in [`csv_header`] order.
    pub fn values(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(1 + 3 * self.q.len() + 13);
        v.push(self.t);
        v.extend(self.q.iter().chain(self.dq.iter()).chain(self.tau.iter()));
        v.extend(self.pose.position.iter());
        v.extend(self.pose.rotation.to_wxyz());
        v.extend(self.e_pos.iter().chain(self.e_rot.iter()));
        v
    }
}

impl TrajectoryLog {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(csv_header(self.dof))?;
        for row in &self.rows {
            w.write_record(row.values().iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Closes `params` around the simulated arm for `duration` seconds.
///
/// Commands in `stream` are delivered at the first tick whose time is not before
/// their release time; several due in one tick are applied in order, so the last
/// one of each kind wins.
pub fn run_closed_loop(
    model: &RobotModel,
    params: &ControllerParams,
    stream: &[(f64, TargetCommand)],
    duration: f64,
    config: &SimConfig,
    initial: JointState,
) -> Result<TrajectoryLog, SimError> {
    config.validate(model)?;
    initial.validate(model)?;
    for w in stream.windows(2) {
        if w[1].0 < w[0].0 {
            return Err(SimError::NonMonotoneStream {
                previous: w[0].0,
                at: w[1].0,
            });
        }
    }
    let mut controller = Controller::new(model.clone(), params.clone());
    let mut state = SimState::new(initial.q, initial.dq);
    let ticks = (duration / config.dt).round() as u64;
    let mut rows = Vec::with_capacity(ticks as usize);
    let mut pending = stream.iter().peekable();
    let (mut saturated, mut singular) = (0, 0);
    // release times are compared on the tick grid so that a command stamped at
    // k * dt is never deferred by rounding
    let due = |release: f64, tick: u64| release / config.dt <= tick as f64 + 1e-9;
    for tick in 0..ticks {
        while let Some((_, cmd)) = pending.next_if(|(release, _)| due(*release, tick)) {
            controller.apply_command(cmd.clone())?;
        }
        let out = controller.compute(&state.joint_state())?;
        saturated += (out.tau != out.unlimited) as u64;
        singular += out.singular as u64;
        rows.push(LogRow {
            t: state.t,
            q: state.q.clone(),
            dq: state.dq.clone(),
            tau: out.tau.clone(),
            pose: out.pose,
            e_pos: out.tracking_error.pos,
            e_rot: out.tracking_error.rot,
            wrench: state.ee_wrench_estimate,
        });
        state = step(model, &state, &out.tau, config)?;
    }
    Ok(TrajectoryLog {
        dof: model.dof,
        rows,
        torque_violations: state.torque_violations,
        limit_breaches: state.limit_breaches,
        saturated_ticks: saturated,
        singular_ticks: singular,
        final_state: state,
    })
}
