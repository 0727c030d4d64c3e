//! The guide's chapters, included so that `cargo test -p compliant-book --doc`
//! runs every Rust block in them.

#[doc = include_str!("src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("src/models.md")]
pub mod models {}

#[doc = include_str!("src/rotations.md")]
pub mod rotations {}

#[doc = include_str!("src/control_law.md")]
pub mod control_law {}

#[doc = include_str!("src/safety.md")]
pub mod safety {}

#[doc = include_str!("src/simulation.md")]
pub mod simulation {}

#[doc = include_str!("src/scenarios.md")]
pub mod scenarios {}

#[doc = include_str!("src/teleoperation.md")]
pub mod teleoperation {}

#[doc = include_str!("src/leader_follower.md")]
pub mod leader_follower {}
