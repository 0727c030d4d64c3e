//! URDF fixtures bundled with the crate, with their documented total masses.

pub const PLANAR2: &str = include_str!("../fixtures/planar2.urdf");
pub const PLANAR3: &str = include_str!("../fixtures/planar3.urdf");
pub const GENERIC7: &str = include_str!("../fixtures/generic7.urdf");
pub const PENDULUM: &str = include_str!("../fixtures/pendulum.urdf");

pub const ALL: [&str; 4] = [PLANAR2, PLANAR3, GENERIC7, PENDULUM];

pub const PLANAR2_MASS: f64 = 3.5;
pub const PLANAR3_MASS: f64 = 4.5;
pub const GENERIC7_MASS: f64 = 18.978;
pub const PENDULUM_MASS: f64 = 1.0;

/// Geometry of `planar2.urdf`, for analytic oracles.
pub mod planar2 {
    pub const L1: f64 = 1.0;
    pub const L2: f64 = 0.8;
    pub const LC1: f64 = 0.5;
    pub const LC2: f64 = 0.4;
    pub const M1: f64 = 2.0;
    pub const M2: f64 = 1.5;
    /// Inertia about the center of mass, about z.
    pub const I1: f64 = 0.17;
    pub const I2: f64 = 0.08;
}

/// A comfortable, non-singular configuration for `generic7.urdf`.
pub const GENERIC7_HOME: [f64; 7] = [0.0, -0.785, 0.0, -2.356, 0.0, 1.571, 0.785];
