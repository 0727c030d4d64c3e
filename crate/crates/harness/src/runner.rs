//! Running scenarios and writing their artifacts.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use compliant_core::dynamics::forward_kinematics;
use compliant_core::sim::{csv_header, run_closed_loop, SimError, TrajectoryLog};
use nalgebra::DVector;
use thiserror::Error;

use crate::leader_follower::run_leader_follower;
use crate::metrics::{Metrics, Step};
use crate::scenario::{Scenario, ScenarioError, StreamSpec};
use crate::streams::{pose_stream, random_walk_stream, read_pose_csv, step_stream, ReplayError, Stream};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("simulation failed: {0}")]
    Sim(#[from] SimError),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Serve(#[from] compliant_teleop::ServeError),
}

impl HarnessError {
    /// 2 for bad input, 1 for a run that could not complete.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Scenario(_)
            | HarnessError::Replay(_)
            | HarnessError::Usage(_)
            | HarnessError::Serve(compliant_teleop::ServeError::InvalidRate(_)) => 2,
            HarnessError::Sim(_) | HarnessError::Io { .. } | HarnessError::Serve(_) => 1,
        }
    }
}

/// The leader side of a leader-follower run.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaderArtifacts {
    pub log: TrajectoryLog,
    pub feedback: Vec<DVector<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub name: String,
    pub log: TrajectoryLog,
    pub metrics: Metrics,
    pub leader: Option<LeaderArtifacts>,
}

/// Builds the scenario's target stream and closes the loop around it.
pub fn run(scenario: &Scenario) -> Result<RunOutput, HarnessError> {
    let start = forward_kinematics(&scenario.model, &scenario.initial.q).map_err(SimError::from)?;
    let (stream, step): (Stream, Option<Step>) = match &scenario.stream {
        StreamSpec::StepPose(s) => (
            step_stream(&start, s),
            Some(Step {
                at: s.at,
                magnitude: s.magnitude(),
            }),
        ),
        StreamSpec::RandomWalk(w) => (random_walk_stream(&start, w, scenario.duration, scenario.seed), None),
        StreamSpec::Replay { csv } => (pose_stream(&read_pose_csv(csv)?), None),
        StreamSpec::LeaderFollower(spec) => {
            let lf = run_leader_follower(scenario, spec)?;
            return Ok(RunOutput {
                name: scenario.name.clone(),
                metrics: Metrics::from_log(&lf.follower, None),
                log: lf.follower,
                leader: Some(LeaderArtifacts {
                    log: lf.leader,
                    feedback: lf.feedback,
                }),
            });
        }
    };
    run_stream(scenario, &stream, step)
}

/// Runs the scenario's robot, controller and simulation against the poses in `csv`.
pub fn replay(scenario: &Scenario, csv: &Path) -> Result<RunOutput, HarnessError> {
    let poses = read_pose_csv(csv)?;
    run_stream(scenario, &pose_stream(&poses), None)
}

pub fn run_stream(scenario: &Scenario, stream: &[(f64, compliant_core::control::TargetCommand)], step: Option<Step>) -> Result<RunOutput, HarnessError> {
    let log = run_closed_loop(
        &scenario.model,
        &scenario.params,
        stream,
        scenario.duration,
        &scenario.sim,
        scenario.initial.clone(),
    )?;
    Ok(RunOutput {
        name: scenario.name.clone(),
        metrics: Metrics::from_log(&log, step),
        log,
        leader: None,
    })
}

impl RunOutput {
    /// Writes `log.csv`, `metrics.json` and, for leader-follower runs, `leader.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
        create_dir(dir)?;
        let mut written = Vec::new();
        let log_path = dir.join("log.csv");
        write_file(&log_path, |w| match &self.leader {
            Some(_) => write_log(w, &self.log, None),
            None => self.log.write_csv(w).map_err(csv_to_io),
        })?;
        written.push(log_path);
        if let Some(leader) = &self.leader {
            let path = dir.join("leader.csv");
            write_file(&path, |w| write_log(w, &leader.log, Some(&leader.feedback)))?;
            written.push(path);
        }
        let metrics_path = dir.join("metrics.json");
        write_file(&metrics_path, |w| {
            serde_json::to_writer_pretty(&mut *w, &self.metrics)?;
            w.write_all(b"\n")
        })?;
        written.push(metrics_path);
        Ok(written)
    }
}

/// Wrench columns appended to logs that carry a sensor reading.
pub const WRENCH_COLUMNS: [&str; 6] = ["fx", "fy", "fz", "mx", "my", "mz"];

/// The standard log columns, then the wrench, then `fb0..` if `feedback` is given.
pub fn write_log<W: Write>(out: W, log: &TrajectoryLog, feedback: Option<&[DVector<f64>]>) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = csv_header(log.dof);
    header.extend(WRENCH_COLUMNS.iter().map(|s| s.to_string()));
    if feedback.is_some() {
        header.extend((0..log.dof).map(|i| format!("fb{i}")));
    }
    w.write_record(&header).map_err(csv_to_io)?;
    for (k, row) in log.rows.iter().enumerate() {
        let mut v = row.values();
        v.extend(row.wrench.iter());
        if let Some(fb) = feedback {
            v.extend(fb[k].iter());
        }
        w.write_record(v.iter().map(|x| x.to_string())).map_err(csv_to_io)?;
    }
    w.flush()
}

fn csv_to_io(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

pub(crate) fn create_dir(dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.to_owned(),
        source,
    })
}

pub(crate) fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<(), HarnessError> {
    let io_err = |source| HarnessError::Io {
        path: path.to_owned(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    body(&mut w).map_err(io_err)?;
    w.flush().map_err(io_err)
}
