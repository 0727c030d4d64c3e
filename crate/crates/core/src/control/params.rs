//! Controller parameters and their file/wire representation.
//!
//! [`ControllerConfig`] is the human-edited document (TOML on disk, JSON on the
//! wire). It allows per-joint values to be given as a single number and leaves
//! some fields to be derived from the robot model. [`ControllerParams`] is the
//! resolved, validated form the control law reads every cycle.

use nalgebra::{DVector, Vector6};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::dynamics::{TaskInertiaVariant, Wrench, DEFAULT_DAMPING};
use crate::geometry::Frame;
use crate::urdf::RobotModel;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("unknown parameter `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },
    #[error("{0}")]
    Invalid(String),
    #[error("could not parse parameter file: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskType {
    #[default]
    CartesianImpedance,
    Osc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projector {
    /// `I - Jᵀ (J†)ᵀ`
    #[default]
    Static,
    /// `I - Jᵀ J̄ᵀ`, with the inertia-weighted generalized inverse `J̄`.
    Dynamic,
    /// No projection; meant for pure joint-space control with zero task gains.
    Identity,
}

/// Which terms of the control law are summed into the command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnableFlags {
    pub task: bool,
    pub nullspace: bool,
    pub barrier: bool,
    pub gravity: bool,
    pub coriolis: bool,
    pub friction: bool,
    pub wrench: bool,
}

impl Default for EnableFlags {
    fn default() -> Self {
        Self {
            task: true,
            nullspace: true,
            barrier: true,
            gravity: true,
            coriolis: true,
            friction: false,
            wrench: false,
        }
    }
}

impl EnableFlags {
    pub fn none() -> Self {
        Self {
            task: false,
            nullspace: false,
            barrier: false,
            gravity: false,
            coriolis: false,
            friction: false,
            wrench: false,
        }
    }
}

/// An upper bound that may be infinite. Infinity is written as `inf` in TOML and
/// `null` in JSON.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound(pub f64);

impl Bound {
    pub const UNBOUNDED: Bound = Bound(f64::INFINITY);
}

impl Serialize for Bound {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else {
            s.serialize_none()
        }
    }
}

impl<'de> Deserialize<'de> for Bound {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(Bound(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY)))
    }
}

/// One value for every joint, or one per joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerJoint<T> {
    Uniform(T),
    Each(Vec<T>),
}

impl<T: Copy> PerJoint<T> {
    /// Expands to `dof` values; `key` names the field in the error.
    pub fn resolve(&self, key: &str, dof: usize) -> Result<Vec<T>, ParamError> {
        match self {
            PerJoint::Uniform(v) => Ok(vec![*v; dof]),
            PerJoint::Each(v) if v.len() == dof => Ok(v.clone()),
            PerJoint::Each(v) => Err(ParamError::InvalidValue {
                key: key.to_owned(),
                reason: format!("expected {dof} values, got {}", v.len()),
            }),
        }
    }
}

fn each(v: &DVector<f64>) -> PerJoint<f64> {
    PerJoint::Each(v.iter().copied().collect())
}

/// `2 sqrt(k)` per axis: critical damping for a unit mass.
pub fn critical_damping(kp: &Vector6<f64>) -> Vector6<f64> {
    kp.map(|k| 2.0 * k.sqrt())
}

/// The parameter document as read from disk or received over the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub version: u32,
    pub task_type: TaskType,
    pub error_frame: Frame,
    pub kp: [f64; 6],
    pub kd: [f64; 6],
    pub kp_null: PerJoint<f64>,
    pub kd_null: PerJoint<f64>,
    pub projector: Projector,
    pub k_joint: PerJoint<f64>,
    pub epsilon: f64,
    pub friction_phi1: PerJoint<f64>,
    pub friction_phi2: PerJoint<f64>,
    pub friction_phi3: PerJoint<f64>,
    pub wrench_target: [f64; 6],
    pub enable: EnableFlags,
    pub error_clip: [Bound; 6],
    pub ema_alpha: f64,
    /// Defaults to the model's effort limits.
    pub tau_limit: Option<PerJoint<f64>>,
    pub tau_rate_limit: PerJoint<Bound>,
    pub fb_kp: f64,
    pub fb_kd: f64,
    pub task_inertia: TaskInertiaVariant,
    pub damping: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            task_type: TaskType::default(),
            error_frame: Frame::Base,
            kp: [600.0, 600.0, 600.0, 30.0, 30.0, 30.0],
            // rotational damping stays well below 2 I / dt for a light wrist at 1 kHz
            kd: [50.0, 50.0, 50.0, 3.0, 3.0, 3.0],
            // a damped posture hold; an undamped nullspace drifts on redundant arms
            kp_null: PerJoint::Uniform(5.0),
            kd_null: PerJoint::Uniform(2.0),
            projector: Projector::default(),
            k_joint: PerJoint::Uniform(50.0),
            epsilon: 0.1,
            friction_phi1: PerJoint::Uniform(0.0),
            friction_phi2: PerJoint::Uniform(0.0),
            friction_phi3: PerJoint::Uniform(0.0),
            wrench_target: [0.0; 6],
            enable: EnableFlags::default(),
            error_clip: [Bound::UNBOUNDED; 6],
            ema_alpha: 1.0,
            tau_limit: None,
            tau_rate_limit: PerJoint::Uniform(Bound::UNBOUNDED),
            fb_kp: 0.0,
            fb_kd: 0.0,
            task_inertia: TaskInertiaVariant::default(),
            damping: DEFAULT_DAMPING,
        }
    }
}

impl ControllerConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ParamError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ParamError::Parse(e.to_string()))?;
        if cfg.version != CONFIG_VERSION {
            return Err(ParamError::Parse(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        Ok(cfg)
    }
}

/// Every gain, limit and switch of the control law, sized for one robot.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerParams {
    pub task_type: TaskType,
    pub error_frame: Frame,
    pub kp: Vector6<f64>,
    pub kd: Vector6<f64>,
    pub kp_null: DVector<f64>,
    pub kd_null: DVector<f64>,
    pub projector: Projector,
    pub k_joint: DVector<f64>,
    pub epsilon: f64,
    pub friction_phi1: DVector<f64>,
    pub friction_phi2: DVector<f64>,
    pub friction_phi3: DVector<f64>,
    /// Expressed in `error_frame`.
    pub wrench_target: Wrench,
    pub enable: EnableFlags,
    pub error_clip: Vector6<f64>,
    pub ema_alpha: f64,
    pub tau_limit: DVector<f64>,
    pub tau_rate_limit: DVector<f64>,
    pub fb_kp: f64,
    pub fb_kd: f64,
    pub task_inertia: TaskInertiaVariant,
    pub damping: f64,
}

impl ControllerParams {
    pub fn defaults(model: &RobotModel) -> Self {
        Self::from_config(&ControllerConfig::default(), model).expect("default configuration is valid for any model")
    }

    pub fn from_toml_str(text: &str, model: &RobotModel) -> Result<Self, ParamError> {
        Self::from_config(&ControllerConfig::from_toml_str(text)?, model)
    }

    pub fn from_config(cfg: &ControllerConfig, model: &RobotModel) -> Result<Self, ParamError> {
        let n = model.dof;
        let vec = |key: &str, v: &PerJoint<f64>| v.resolve(key, n).map(DVector::from_vec);
        let params = Self {
            task_type: cfg.task_type,
            error_frame: cfg.error_frame,
            kp: Vector6::from(cfg.kp),
            kd: Vector6::from(cfg.kd),
            kp_null: vec("kp_null", &cfg.kp_null)?,
            kd_null: vec("kd_null", &cfg.kd_null)?,
            projector: cfg.projector,
            k_joint: vec("k_joint", &cfg.k_joint)?,
            epsilon: cfg.epsilon,
            friction_phi1: vec("friction_phi1", &cfg.friction_phi1)?,
            friction_phi2: vec("friction_phi2", &cfg.friction_phi2)?,
            friction_phi3: vec("friction_phi3", &cfg.friction_phi3)?,
            wrench_target: Wrench::from(cfg.wrench_target),
            enable: cfg.enable,
            error_clip: Vector6::from(cfg.error_clip.map(|b| b.0)),
            ema_alpha: cfg.ema_alpha,
            tau_limit: match &cfg.tau_limit {
                Some(v) => vec("tau_limit", v)?,
                None => DVector::from_vec(model.effort_limits()),
            },
            tau_rate_limit: DVector::from_vec(
                cfg.tau_rate_limit
                    .resolve("tau_rate_limit", n)?
                    .into_iter()
                    .map(|b| b.0)
                    .collect(),
            ),
            fb_kp: cfg.fb_kp,
            fb_kd: cfg.fb_kd,
            task_inertia: cfg.task_inertia,
            damping: cfg.damping,
        };
        params.validate(model)?;
        Ok(params)
    }

    pub fn to_config(&self) -> ControllerConfig {
        ControllerConfig {
            version: CONFIG_VERSION,
            task_type: self.task_type,
            error_frame: self.error_frame,
            kp: self.kp.into(),
            kd: self.kd.into(),
            kp_null: each(&self.kp_null),
            kd_null: each(&self.kd_null),
            projector: self.projector,
            k_joint: each(&self.k_joint),
            epsilon: self.epsilon,
            friction_phi1: each(&self.friction_phi1),
            friction_phi2: each(&self.friction_phi2),
            friction_phi3: each(&self.friction_phi3),
            wrench_target: self.wrench_target.into(),
            enable: self.enable,
            error_clip: <[f64; 6]>::from(self.error_clip).map(Bound),
            ema_alpha: self.ema_alpha,
            tau_limit: Some(each(&self.tau_limit)),
            tau_rate_limit: PerJoint::Each(self.tau_rate_limit.iter().map(|&v| Bound(v)).collect()),
            fb_kp: self.fb_kp,
            fb_kd: self.fb_kd,
            task_inertia: self.task_inertia,
            damping: self.damping,
        }
    }

    pub fn validate(&self, model: &RobotModel) -> Result<(), ParamError> {
        let bad = |msg: String| Err(ParamError::Invalid(msg));
        let nonneg = |name: &str, vals: &[f64]| -> Result<(), ParamError> {
            match vals.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
                Some(v) => Err(ParamError::Invalid(format!("{name} entries must be finite and >= 0, got {v}"))),
                None => Ok(()),
            }
        };
        nonneg("kp", self.kp.as_slice())?;
        nonneg("kd", self.kd.as_slice())?;
        nonneg("kp_null", self.kp_null.as_slice())?;
        nonneg("kd_null", self.kd_null.as_slice())?;
        nonneg("k_joint", self.k_joint.as_slice())?;
        nonneg("damping", &[self.damping])?;
        for (name, v) in [
            ("friction_phi1", &self.friction_phi1),
            ("friction_phi2", &self.friction_phi2),
            ("friction_phi3", &self.friction_phi3),
        ] {
            if v.iter().any(|x| !x.is_finite()) {
                return bad(format!("{name} must be finite"));
            }
        }
        if !(self.ema_alpha > 0.0 && self.ema_alpha <= 1.0) {
            return bad(format!("ema_alpha must be in (0, 1], got {}", self.ema_alpha));
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !self.fb_kp.is_finite() || !self.fb_kd.is_finite() {
            return bad("feedback gains must be finite".into());
        }
        if self.wrench_target.iter().any(|v| !v.is_finite()) {
            return bad("wrench_target must be finite".into());
        }
        if self.error_clip.iter().any(|v| !(*v > 0.0)) {
            return bad("error_clip entries must be positive".into());
        }
        if self.tau_rate_limit.iter().any(|v| !(*v > 0.0)) {
            return bad("tau_rate_limit entries must be positive".into());
        }
        for (i, limits) in model.joint_limits().iter().enumerate() {
            let tl = self.tau_limit[i];
            if !(tl > 0.0) || tl > limits.effort {
                return bad(format!(
                    "tau_limit[{i}] = {tl} must be in (0, {}] (effort limit)",
                    limits.effort
                ));
            }
            if self.epsilon >= (limits.upper - limits.lower) / 2.0 {
                return bad(format!("epsilon {} exceeds half the range of joint {i}", self.epsilon));
            }
        }
        if self.projector == Projector::Identity
            && self.enable.task
            && self.enable.nullspace
            && (self.kp.amax() > 0.0 || self.kd.amax() > 0.0)
        {
            log::warn!("identity nullspace projector with nonzero task gains: the joint law will fight the task");
        }
        Ok(())
    }

    /// Applies one runtime update. The parameters are unchanged if the update is rejected.
    ///
    /// `key` is a top-level field name of [`ControllerConfig`], or `enable.<term>`.
    pub fn set(&mut self, key: &str, value: &serde_json::Value, model: &RobotModel) -> Result<(), ParamError> {
        let mut doc = serde_json::to_value(self.to_config()).map_err(|e| ParamError::Invalid(e.to_string()))?;
        let slot = match key.split_once('.') {
            None if key != "version" => doc.get_mut(key),
            Some(("enable", flag)) => doc.get_mut("enable").and_then(|e| e.get_mut(flag)),
            _ => None,
        }
        .ok_or_else(|| ParamError::UnknownKey(key.to_owned()))?;
        *slot = value.clone();
        let cfg: ControllerConfig = serde_json::from_value(doc).map_err(|e| ParamError::InvalidValue {
            key: key.to_owned(),
            reason: e.to_string(),
        })?;
        let updated = Self::from_config(&cfg, model).map_err(|e| ParamError::InvalidValue {
            key: key.to_owned(),
            reason: e.to_string(),
        })?;
        *self = updated;
        Ok(())
    }
}
