#![allow(dead_code)]

use compliant_core::urdf::RobotModel;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A configuration drawn uniformly inside the joint limits, shrunk by `margin`.
pub fn random_q(model: &RobotModel, rng: &mut impl Rng, margin: f64) -> DVector<f64> {
    DVector::from_iterator(
        model.dof,
        model
            .joint_limits()
            .iter()
            .map(|l| rng.random_range(l.lower + margin..l.upper - margin)),
    )
}

pub fn random_vec(n: usize, rng: &mut impl Rng, scale: f64) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.random_range(-scale..scale)))
}
