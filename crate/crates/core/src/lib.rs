//! Torque-level compliant control for serial manipulators.
//!
//! The crate is organized bottom-up:
//!
//! - [`urdf`] parses a serial-chain robot description with inertials and limits.
//! - [`geometry`] holds rotations, poses and the decoupled pose error.
//! - [`dynamics`] computes forward kinematics, Jacobians, inverse dynamics (RNEA),
//!   the mass matrix (CRBA) and the task-space inverses.
//! - [`control`] builds the individual torque terms and sums them into one command.
//! - [`sim`] integrates the forward dynamics so controllers can be closed around a
//!   simulated arm.
//! - [`mailbox`] passes the most recent target into a control loop without blocking it.

// `!(x > 0.0)` style checks are deliberate: they reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod dynamics;
pub mod fixtures;
pub mod geometry;
pub mod mailbox;
pub mod sim;
pub mod urdf;

pub use dynamics::{JointState, Wrench};
pub use geometry::{Frame, Pose, PoseError, Rotation};
pub use urdf::{parse_urdf, RobotModel};
