//! Target streams: timed pose commands fed into a closed-loop run.

use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use compliant_core::control::TargetCommand;
use compliant_core::{Pose, Rotation};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::scenario::{RandomWalk, StepPose};

/// Release time and command, in release order.
pub type Stream = Vec<(f64, TargetCommand)>;

/// Columns a replay file must have; any others are ignored.
pub const REPLAY_COLUMNS: [&str; 8] = ["t", "x", "y", "z", "qw", "qx", "qy", "qz"];

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    /// Missing columns, unparsable fields or an invalid quaternion.
    #[error("{path}, line {line}: {message}")]
    CsvFormat { path: PathBuf, line: u64, message: String },
    #[error("{path}, line {line}: time {at} precedes {previous}")]
    NonMonotoneTime { path: PathBuf, line: u64, previous: f64, at: f64 },
}

pub fn step_stream(start: &Pose, step: &StepPose) -> Stream {
    vec![(step.at, TargetCommand::pose(step.at, step.target(start)))]
}

/// Samples at `k / rate` for every `k` with `k / rate < duration`.
///
/// Each sample moves the previous target by a uniform step and pulls it back
/// toward `start` by the leash fraction, which keeps the walk near the workspace
/// it started in.
pub fn random_walk_stream(start: &Pose, walk: &RandomWalk, duration: f64, seed: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = |half: f64| -> Vector3<f64> {
        Vector3::from_fn(|_, _| if half > 0.0 { rng.random_range(-half..half) } else { 0.0 })
    };
    let mut pose = *start;
    let mut stream = Vec::new();
    for k in 0.. {
        let t = k as f64 / walk.rate;
        if t >= duration {
            break;
        }
        let dp = uniform(walk.step_position);
        let dw = uniform(walk.step_rotation);
        let position = pose.position + dp + (start.position - pose.position) * walk.leash;
        pose = Pose::new(position, pose.rotation * Rotation::exp(&dw));
        stream.push((t, TargetCommand::pose(t, pose)));
    }
    stream
}

pub fn pose_stream(poses: &[(f64, Pose)]) -> Stream {
    poses.iter().map(|(t, p)| (*t, TargetCommand::pose(*t, *p))).collect()
}

/// Reads stamped poses from a CSV file. See [`parse_pose_csv`].
pub fn read_pose_csv(path: &Path) -> Result<Vec<(f64, Pose)>, ReplayError> {
    let file = File::open(path).map_err(|source| ReplayError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_pose_csv(file, path)
}

/// Parses stamped poses; columns are found by header name, quaternions are normalized.
///
/// `origin` only labels errors.
pub fn parse_pose_csv<R: Read>(reader: R, origin: &Path) -> Result<Vec<(f64, Pose)>, ReplayError> {
    let format = |line: u64, message: String| ReplayError::CsvFormat {
        path: origin.to_owned(),
        line,
        message,
    };
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = csv.headers().map_err(|e| format(1, e.to_string()))?.clone();
    let mut columns = [0usize; 8];
    for (slot, name) in columns.iter_mut().zip(REPLAY_COLUMNS) {
        *slot = header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| format(1, format!("missing column `{name}`")))?;
    }

    let mut poses: Vec<(f64, Pose)> = Vec::new();
    for record in csv.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            format(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let mut v = [0.0; 8];
        for (k, (&col, name)) in columns.iter().zip(REPLAY_COLUMNS).enumerate() {
            let field = record.get(col).unwrap_or("");
            v[k] = field
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| format(line, format!("column `{name}`: `{field}` is not a finite number")))?;
        }
        let t = v[0];
        if let Some(&(previous, _)) = poses.last() {
            if t < previous {
                return Err(ReplayError::NonMonotoneTime {
                    path: origin.to_owned(),
                    line,
                    previous,
                    at: t,
                });
            }
        }
        let pose = Pose::from_wire([v[1], v[2], v[3]], [v[4], v[5], v[6], v[7]])
            .map_err(|e| format(line, format!("invalid orientation: {e}")))?;
        poses.push((t, pose));
    }
    if poses.is_empty() {
        return Err(format(1, "no rows".into()));
    }
    Ok(poses)
}

