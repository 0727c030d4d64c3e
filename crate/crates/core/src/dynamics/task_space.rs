use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{mass_matrix, DynamicsError, Jacobian};
use crate::urdf::RobotModel;

/// Damping used by the regularized inverses unless configured otherwise.
pub const DEFAULT_DAMPING: f64 = 1e-6;

/// Eigenvalue ratio below which an inverted matrix is reported as singular.
const SINGULAR_RCOND: f64 = 1e-10;

/// Result of a regularized inversion. `singular` is set when the matrix being
/// inverted was numerically rank deficient and the damping dominated the result.
#[derive(Debug, Clone, PartialEq)]
pub struct Damped<T> {
    pub value: T,
    pub singular: bool,
}

/// How the task-space inertia is assembled from `M` and `J`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskInertiaVariant {
    /// `(J M⁻¹ Jᵀ)⁻¹`.
    #[default]
    Standard,
    /// `(J†ᵀ M⁻¹ J†)⁻¹` with the damped pseudoinverse `J†`.
    PseudoInverse,
}

/// `Aᵀ (A Aᵀ + λ² I)⁻¹` for wide or square `A`, `(Aᵀ A + λ² I)⁻¹ Aᵀ` for tall `A`.
///
/// With `lambda = 0` on a rank-deficient input this falls back to the SVD pseudoinverse.
pub fn damped_pseudoinverse(a: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let (m, n) = a.shape();
    let l2 = lambda * lambda;
    if m <= n {
        let gram = a * a.transpose() + DMatrix::identity(m, m) * l2;
        match gram.cholesky() {
            Some(chol) => chol.solve(a).transpose(),
            None => svd_pseudoinverse(a, 1e-12),
        }
    } else {
        let gram = a.transpose() * a + DMatrix::identity(n, n) * l2;
        match gram.cholesky() {
            Some(chol) => chol.solve(&a.transpose()),
            None => svd_pseudoinverse(a, 1e-12),
        }
    }
}

/// Iteration cap for the SVD; unbounded iteration can spin forever on degenerate input.
const SVD_MAX_ITERATIONS: usize = 1000;

/// Moore-Penrose pseudoinverse via SVD, for validating the damped variant.
///
/// Returns zeros if the input is not finite or the SVD does not converge.
pub fn svd_pseudoinverse(a: &DMatrix<f64>, tolerance: f64) -> DMatrix<f64> {
    let (m, n) = a.shape();
    if a.iter().any(|v| !v.is_finite()) {
        return DMatrix::zeros(n, m);
    }
    nalgebra::SVD::try_new(a.clone(), true, true, f64::EPSILON, SVD_MAX_ITERATIONS)
        .and_then(|svd| svd.pseudo_inverse(tolerance).ok())
        .unwrap_or_else(|| DMatrix::zeros(n, m))
}

/// `(S + λ² I)⁻¹` for symmetric positive semi-definite `S`.
fn damped_spd_inverse(s: &DMatrix<f64>, lambda: f64) -> Damped<DMatrix<f64>> {
    let n = s.nrows();
    let sym = (s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    let max = eig.eigenvalues.amax();
    let min = eig.eigenvalues.min();
    let singular = !(min > SINGULAR_RCOND * max);
    let shifted = sym + DMatrix::identity(n, n) * (lambda * lambda);
    let value = match shifted.clone().cholesky() {
        Some(chol) => chol.inverse(),
        None => svd_pseudoinverse(&shifted, 1e-12),
    };
    Damped {
        value: (&value + value.transpose()) * 0.5,
        singular,
    }
}

fn mass_inverse_times(mass: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>, DynamicsError> {
    let chol = mass.clone().cholesky().ok_or(DynamicsError::NotPositiveDefinite)?;
    Ok(chol.solve(rhs))
}

/// Task-space inertia from an explicit mass matrix and Jacobian matrix.
pub fn task_inertia_with(
    mass: &DMatrix<f64>,
    jacobian: &DMatrix<f64>,
    variant: TaskInertiaVariant,
    lambda: f64,
) -> Result<Damped<DMatrix<f64>>, DynamicsError> {
    let inner = match variant {
        TaskInertiaVariant::Standard => jacobian * mass_inverse_times(mass, &jacobian.transpose())?,
        TaskInertiaVariant::PseudoInverse => {
            let jp = damped_pseudoinverse(jacobian, lambda);
            jp.transpose() * mass_inverse_times(mass, &jp)?
        }
    };
    Ok(damped_spd_inverse(&inner, lambda))
}

/// Task-space inertia `Λ(q)` for the Jacobian `j` evaluated at `q`.
pub fn task_inertia(
    model: &RobotModel,
    q: &DVector<f64>,
    j: &Jacobian,
    variant: TaskInertiaVariant,
) -> Result<Damped<DMatrix<f64>>, DynamicsError> {
    task_inertia_with(&mass_matrix(model, q)?, &j.matrix, variant, DEFAULT_DAMPING)
}

/// Dynamically consistent generalized inverse `M⁻¹ Jᵀ (J M⁻¹ Jᵀ)⁻¹`.
pub fn generalized_inverse_with(
    mass: &DMatrix<f64>,
    jacobian: &DMatrix<f64>,
    lambda: f64,
) -> Result<Damped<DMatrix<f64>>, DynamicsError> {
    let minv_jt = mass_inverse_times(mass, &jacobian.transpose())?;
    let lambda_inv = damped_spd_inverse(&(jacobian * &minv_jt), lambda);
    Ok(Damped {
        value: minv_jt * lambda_inv.value,
        singular: lambda_inv.singular,
    })
}

pub fn generalized_inverse(
    model: &RobotModel,
    q: &DVector<f64>,
    j: &Jacobian,
) -> Result<Damped<DMatrix<f64>>, DynamicsError> {
    generalized_inverse_with(&mass_matrix(model, q)?, &j.matrix, DEFAULT_DAMPING)
}
