//! Summary numbers of a closed-loop run.

use compliant_core::sim::TrajectoryLog;
use serde::{Deserialize, Serialize};

/// The steady state is the mean over this final fraction of the run.
pub const STEADY_STATE_FRACTION: f64 = 0.1;

/// A step has settled once the position error stays below this fraction of its size.
pub const SETTLING_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Mean `|e_pos|` over the steady-state window, m.
    pub steady_state_pos_err: f64,
    /// Mean `|e_rot|` over the steady-state window, rad.
    pub steady_state_rot_err: f64,
    /// Seconds from the step until `|e_pos|` stays below the settling band.
    /// `None` for runs without a step, or when the error never stays inside.
    pub settling_time: Option<f64>,
    /// Largest commanded joint torque magnitude, N·m.
    pub max_torque: f64,
    pub limit_breaches: u64,
    pub torque_violations: u64,
    pub peak_pos_err: f64,
    pub peak_rot_err: f64,
}

/// A target step: its release time and its translation magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub at: f64,
    pub magnitude: f64,
}

impl Metrics {
    pub fn from_log(log: &TrajectoryLog, step: Option<Step>) -> Self {
        let rows = &log.rows;
        let pos: Vec<f64> = rows.iter().map(|r| r.e_pos.norm()).collect();
        let rot: Vec<f64> = rows.iter().map(|r| r.e_rot.norm()).collect();
        let window = ((rows.len() as f64 * STEADY_STATE_FRACTION).round() as usize).max(1).min(rows.len());
        let mean = |v: &[f64]| {
            let tail = &v[v.len() - window..];
            if tail.is_empty() {
                0.0
            } else {
                tail.iter().sum::<f64>() / tail.len() as f64
            }
        };
        let peak = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
        Metrics {
            steady_state_pos_err: mean(&pos),
            steady_state_rot_err: mean(&rot),
            settling_time: step.and_then(|s| settling_time(log, &pos, s)),
            max_torque: rows.iter().map(|r| r.tau.amax()).fold(0.0, f64::max),
            limit_breaches: log.limit_breaches,
            torque_violations: log.torque_violations,
            peak_pos_err: peak(&pos),
            peak_rot_err: peak(&rot),
        }
    }

    /// No joint left its limits. Runs that fail this exit with a failure code.
    pub fn passed(&self) -> bool {
        self.limit_breaches == 0
    }
}

fn settling_time(log: &TrajectoryLog, pos: &[f64], step: Step) -> Option<f64> {
    let band = SETTLING_FRACTION * step.magnitude;
    let first = log.rows.iter().position(|r| r.t >= step.at)?;
    // the last tick at or after the step that is still outside the band
    match (first..pos.len()).rev().find(|&k| pos[k] >= band) {
        None => Some(log.rows[first].t - step.at),
        Some(k) if k + 1 < pos.len() => Some(log.rows[k + 1].t - step.at),
        Some(_) => None,
    }
}
