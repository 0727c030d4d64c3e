//! Teleoperation endpoint for the simulated arm.
//!
//! Clients connect over TCP and exchange newline-delimited JSON ([`protocol`]).
//! The server broadcasts the robot state at a fixed rate, forwards the latest
//! target of each kind to the 1 kHz control loop, and applies parameter updates
//! key by key, replying with what was applied and what was rejected.
//!
//! ```no_run
//! use std::sync::Arc;
//! use compliant_core::{control::ControllerParams, fixtures, parse_urdf, sim::SimConfig, JointState};
//! use compliant_teleop::{clock::RealClock, serve, LiveSession, ServeOptions};
//!
//! let model = parse_urdf(fixtures::GENERIC7).unwrap();
//! let session = LiveSession {
//!     params: ControllerParams::defaults(&model),
//!     sim: SimConfig::for_model(&model),
//!     initial: JointState::at_rest(fixtures::GENERIC7_HOME.to_vec().into()),
//!     model,
//! };
//! let server = serve(session, &ServeOptions::default(), Arc::new(RealClock::new())).unwrap();
//! println!("listening on {}", server.local_addr());
//! ```

pub mod clock;
pub mod protocol;
mod server;

pub use protocol::{decode, encode, DecodeError, Message, StateMessage, WirePose};
pub use server::{
    serve, IntervalStats, LiveSession, ServeError, ServeOptions, Server, ServerReport, ServerStats, DEFAULT_BIND,
    DEFAULT_STATE_RATE,
};
