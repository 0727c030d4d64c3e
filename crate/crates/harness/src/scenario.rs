//! Scenario files: which robot, which controller, which targets and for how long.
//!
//! A scenario is a versioned TOML document. Paths inside it are resolved
//! relative to the file itself, so a scenario directory can be moved as a whole.
//!
//! ```toml
//! version = 1
//! name = "step_response_ci"
//! model = "../crates/core/fixtures/generic7.urdf"
//! params = "params/ci.toml"
//! duration = 5.0
//! seed = 0
//! initial_q = [0.0, -0.785, 0.0, -2.356, 0.0, 1.571, 0.785]
//!
//! [sim]
//! dt = 0.001
//! disturbance = { start = 0.0, wrench = [1.5, -1.0, -2.5, 0.2, 0.1, -0.1] }
//!
//! [stream]
//! kind = "step_pose"
//! at = 1.0
//! position_offset = [0.1, -0.05, 0.08]
//! rotation_offset = [0.2, -0.1, 0.15]
//! ```

use std::f64::consts::TAU;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use compliant_core::control::{ControllerParams, ParamError, PerJoint};
use compliant_core::sim::{Integrator, ScheduledWrench, SimConfig};
use compliant_core::urdf::UrdfError;
use compliant_core::{parse_urdf, JointState, Pose, RobotModel, Rotation};
use nalgebra::{DVector, Vector3};
use serde::Deserialize;
use thiserror::Error;

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Model { path: PathBuf, source: UrdfError },
    #[error("{path}: {source}")]
    Params { path: PathBuf, source: ParamError },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

/// A single pose step relative to the initial end-effector pose.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepPose {
    /// Release time of the new target.
    pub at: f64,
    /// Base-frame translation, m.
    pub position_offset: [f64; 3],
    /// Rotation vector applied in the end-effector frame, rad.
    #[serde(default)]
    pub rotation_offset: [f64; 3],
}

impl StepPose {
    pub fn target(&self, start: &Pose) -> Pose {
        Pose::new(
            start.position + Vector3::from(self.position_offset),
            start.rotation * Rotation::exp(&Vector3::from(self.rotation_offset)),
        )
    }

    pub fn magnitude(&self) -> f64 {
        Vector3::from(self.position_offset).norm()
    }
}

/// A seeded random walk of pose targets emitted at `rate`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomWalk {
    /// Targets per second.
    pub rate: f64,
    /// Half-width of the uniform per-sample translation, m.
    #[serde(default = "default_step_position")]
    pub step_position: f64,
    /// Half-width of the uniform per-sample rotation, rad.
    #[serde(default = "default_step_rotation")]
    pub step_rotation: f64,
    /// Fraction of the offset from the start pulled back each sample.
    #[serde(default = "default_leash")]
    pub leash: f64,
}

fn default_step_position() -> f64 {
    0.02
}

fn default_step_rotation() -> f64 {
    0.05
}

fn default_leash() -> f64 {
    0.1
}

/// The operator's hand motion: a figure-eight in the base y-z plane.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FigureEight {
    /// Half-widths along y and z, m.
    pub amplitude: [f64; 2],
    /// Seconds per loop.
    pub period: f64,
}

impl FigureEight {
    /// The hand target at `t`, starting from `start`; orientation is held.
    pub fn pose_at(&self, start: &Pose, t: f64) -> Pose {
        let w = TAU * t / self.period;
        let offset = Vector3::new(0.0, self.amplitude[0] * w.sin(), self.amplitude[1] * (2.0 * w).sin());
        Pose::new(start.position + offset, start.rotation)
    }
}

/// A second arm driven by a scripted operator, whose pose the scenario's arm follows.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaderSpec {
    pub model: RobotModel,
    /// The operator's hand impedance, plus `fb_kp` and `fb_kd` for force feedback.
    pub params: ControllerParams,
    pub initial: JointState,
    /// Leader poses forwarded to the follower per second.
    pub rate: f64,
    pub script: FigureEight,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StreamSpec {
    StepPose(StepPose),
    RandomWalk(RandomWalk),
    /// Poses read from a CSV with columns `t,x,y,z,qw,qx,qy,qz`.
    Replay { csv: PathBuf },
    LeaderFollower(Box<LeaderSpec>),
}

impl StreamSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            StreamSpec::StepPose(_) => "step_pose",
            StreamSpec::RandomWalk(_) => "random_walk",
            StreamSpec::Replay { .. } => "replay",
            StreamSpec::LeaderFollower(_) => "leader_follower",
        }
    }
}

/// A loaded scenario with every referenced file read and validated.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub model_path: PathBuf,
    pub model: RobotModel,
    pub params: ControllerParams,
    pub sim: SimConfig,
    pub initial: JointState,
    pub duration: f64,
    /// Fixes every random choice of the run.
    pub seed: u64,
    pub stream: StreamSpec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    version: u32,
    name: String,
    model: PathBuf,
    params: Option<PathBuf>,
    duration: f64,
    #[serde(default)]
    seed: u64,
    initial_q: Option<Vec<f64>>,
    initial_dq: Option<Vec<f64>>,
    #[serde(default)]
    sim: SimSection,
    stream: StreamFile,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimSection {
    dt: f64,
    gravity: Option<[f64; 3]>,
    joint_viscous_damping: PerJoint<f64>,
    integrator: Integrator,
    disturbance: Option<ScheduledWrench>,
    limit_guard: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            gravity: None,
            joint_viscous_damping: PerJoint::Uniform(0.0),
            integrator: Integrator::default(),
            disturbance: None,
            limit_guard: 1e-2,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum StreamFile {
    StepPose(StepPose),
    RandomWalk(RandomWalk),
    Replay {
        csv: PathBuf,
    },
    LeaderFollower {
        leader_model: Option<PathBuf>,
        leader_params: PathBuf,
        leader_initial_q: Option<Vec<f64>>,
        #[serde(default = "default_forward_rate")]
        rate: f64,
        script: FigureEight,
    },
}

fn default_forward_rate() -> f64 {
    30.0
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = read(path)?;
        Self::parse(&text, path)
    }

    /// Parses scenario text; relative paths resolve against `origin`'s directory.
    pub fn parse(text: &str, origin: &Path) -> Result<Self, ScenarioError> {
        let invalid = |message: String| ScenarioError::Invalid {
            path: origin.to_owned(),
            message,
        };
        let file: ScenarioFile = toml::from_str(text).map_err(|e| ScenarioError::Parse {
            path: origin.to_owned(),
            message: e.to_string(),
        })?;
        if file.version != SCENARIO_VERSION {
            return Err(invalid(format!(
                "unsupported scenario version {} (expected {SCENARIO_VERSION})",
                file.version
            )));
        }
        if !(file.duration > 0.0 && file.duration.is_finite()) {
            return Err(invalid(format!("duration must be positive, got {}", file.duration)));
        }
        let dir = origin.parent().unwrap_or(Path::new("."));
        let (model_path, model) = load_model(&dir.join(&file.model))?;
        let params = match &file.params {
            Some(p) => load_params(&dir.join(p), &model)?,
            None => ControllerParams::defaults(&model),
        };
        let sim = sim_config(&file.sim, &model).map_err(invalid)?;
        let initial = initial_state(&model, file.initial_q.as_deref(), file.initial_dq.as_deref()).map_err(invalid)?;
        if sim.dt > file.duration {
            return Err(invalid("dt exceeds the duration".into()));
        }

        let stream = match file.stream {
            StreamFile::StepPose(s) => {
                if !(s.at >= 0.0 && s.at < file.duration) {
                    return Err(invalid(format!("step time {} is outside the run", s.at)));
                }
                StreamSpec::StepPose(s)
            }
            StreamFile::RandomWalk(w) => {
                if !(w.rate > 0.0 && w.rate.is_finite()) {
                    return Err(invalid(format!("random_walk rate must be positive, got {}", w.rate)));
                }
                if !(w.step_position >= 0.0 && w.step_rotation >= 0.0 && (0.0..=1.0).contains(&w.leash)) {
                    return Err(invalid("random_walk steps must be >= 0 and leash in [0, 1]".into()));
                }
                StreamSpec::RandomWalk(w)
            }
            StreamFile::Replay { csv } => {
                let csv = dir.join(csv);
                if !csv.is_file() {
                    return Err(invalid(format!("replay file {} does not exist", csv.display())));
                }
                StreamSpec::Replay { csv }
            }
            StreamFile::LeaderFollower {
                leader_model,
                leader_params,
                leader_initial_q,
                rate,
                script,
            } => {
                let leader = match leader_model {
                    Some(p) => load_model(&dir.join(p))?.1,
                    None => model.clone(),
                };
                let leader_params = load_params(&dir.join(leader_params), &leader)?;
                let q = leader_initial_q.or_else(|| file.initial_q.clone());
                let leader_initial = initial_state(&leader, q.as_deref(), None).map_err(invalid)?;
                if !(rate > 0.0 && rate <= 1.0 / sim.dt) {
                    return Err(invalid(format!("leader rate must be in (0, 1/dt], got {rate}")));
                }
                if !(script.period > 0.0 && script.amplitude.iter().all(|a| a.is_finite())) {
                    return Err(invalid("figure-eight period must be positive".into()));
                }
                StreamSpec::LeaderFollower(Box::new(LeaderSpec {
                    model: leader,
                    params: leader_params,
                    initial: leader_initial,
                    rate,
                    script,
                }))
            }
        };

        Ok(Scenario {
            name: file.name,
            model_path,
            model,
            params,
            sim,
            initial,
            duration: file.duration,
            seed: file.seed,
            stream,
        })
    }
}

fn read(path: &Path) -> Result<String, ScenarioError> {
    fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_owned(),
        source,
    })
}

/// Reads and parses a URDF file.
pub fn load_model(path: &Path) -> Result<(PathBuf, RobotModel), ScenarioError> {
    let text = read(path)?;
    let model = parse_urdf(&text).map_err(|source| ScenarioError::Model {
        path: path.to_owned(),
        source,
    })?;
    Ok((path.to_owned(), model))
}

fn load_params(path: &Path, model: &RobotModel) -> Result<ControllerParams, ScenarioError> {
    ControllerParams::from_toml_str(&read(path)?, model).map_err(|source| ScenarioError::Params {
        path: path.to_owned(),
        source,
    })
}

fn sim_config(s: &SimSection, model: &RobotModel) -> Result<SimConfig, String> {
    let damping = s
        .joint_viscous_damping
        .resolve("joint_viscous_damping", model.dof)
        .map_err(|e| e.to_string())?;
    let config = SimConfig {
        dt: s.dt,
        gravity: s.gravity.map(Vector3::from).unwrap_or(model.gravity),
        joint_viscous_damping: DVector::from_vec(damping),
        integrator: s.integrator,
        disturbance: s.disturbance,
        limit_guard: s.limit_guard,
    };
    config.validate(model).map_err(|e| e.to_string())?;
    Ok(config)
}

/// `q` defaults to zero clamped into the joint limits, `dq` to rest.
fn initial_state(model: &RobotModel, q: Option<&[f64]>, dq: Option<&[f64]>) -> Result<JointState, String> {
    let limits = model.joint_limits();
    let q = match q {
        Some(q) => DVector::from_column_slice(q),
        None => DVector::from_iterator(model.dof, limits.iter().map(|l| 0.0_f64.clamp(l.lower, l.upper))),
    };
    let dq = dq.map(DVector::from_column_slice).unwrap_or_else(|| DVector::zeros(q.len()));
    let state = JointState::new(q, dq);
    state.validate(model).map_err(|e| format!("initial state: {e}"))?;
    if !state.is_finite() {
        return Err("initial state is not finite".into());
    }
    if let Some(i) = (0..model.dof).find(|&i| state.q[i] < limits[i].lower || state.q[i] > limits[i].upper) {
        return Err(format!("initial q{i} = {} is outside the joint limits", state.q[i]));
    }
    Ok(state)
}
