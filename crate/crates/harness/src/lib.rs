//! Scenarios, metrics and the `compliant` command line.
//!
//! A [`Scenario`] names a robot, a controller parameter file, simulation
//! settings and a target stream. [`run`] closes the loop and summarizes the
//! result as [`Metrics`]; [`compare`] runs several scenarios side by side.
//!
//! ```
//! use compliant_harness::{run, Scenario};
//! use std::path::Path;
//!
//! let text = r#"
//! version = 1
//! name = "hold"
//! model = "../core/fixtures/planar2.urdf"
//! duration = 0.5
//!
//! [stream]
//! kind = "step_pose"
//! at = 0.1
//! position_offset = [0.0, 0.0, 0.0]
//! "#;
//! let origin = Path::new(env!("CARGO_MANIFEST_DIR")).join("inline.toml");
//! let scenario = Scenario::parse(text, &origin).unwrap();
//! let out = run(&scenario).unwrap();
//! assert!(out.metrics.steady_state_pos_err < 1e-9);
//! assert_eq!(out.metrics.limit_breaches, 0);
//! ```

pub mod cli;
pub mod compare;
pub mod leader_follower;
pub mod metrics;
pub mod runner;
pub mod scenario;
pub mod streams;

pub use compare::compare;
pub use metrics::Metrics;
pub use runner::{replay, run, HarnessError, RunOutput};
pub use scenario::Scenario;
