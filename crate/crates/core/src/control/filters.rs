//! Safety filters applied around the control law: target smoothing, error
//! clipping, and torque magnitude/rate limiting.

use nalgebra::{DVector, Vector6};

use crate::geometry::{Pose, PoseError, Rotation};

/// One step of an exponential moving average toward `raw`.
///
/// Position is blended linearly. Rotation moves along the geodesic:
/// `R_prev Exp(α Log(R_prevᵀ R_raw))`.
pub fn ema_filter(previous: &Pose, raw: &Pose, alpha: f64) -> Pose {
    if alpha >= 1.0 {
        return *raw;
    }
    let delta = (previous.rotation.transpose() * raw.rotation).log();
    Pose {
        position: raw.position * alpha + previous.position * (1.0 - alpha),
        rotation: (previous.rotation * Rotation::exp(&(delta * alpha))).renormalized(),
    }
}

/// Componentwise clamp of `(e_pos, e_rot)` to `[-limit, limit]`. Infinite limits disable clipping.
pub fn clip_error(e: &PoseError, limits: &Vector6<f64>) -> PoseError {
    let v = e.to_vector().zip_map(limits, |x, l| x.clamp(-l, l));
    PoseError::from_vector(&v, e.frame)
}

/// Clamps `|τ_i| ≤ tau_limit_i`, then `|τ_i - previous_i| ≤ rate_limit_i`.
///
/// The rate bound holds exactly in floating point and takes precedence over the
/// magnitude bound if `previous` itself lies outside it.
pub fn limit_torque(
    tau: &DVector<f64>,
    previous: &DVector<f64>,
    tau_limit: &DVector<f64>,
    rate_limit: &DVector<f64>,
) -> DVector<f64> {
    DVector::from_iterator(
        tau.len(),
        (0..tau.len()).map(|i| {
            let prev = previous[i];
            let rate = rate_limit[i];
            let mut t = tau[i].clamp(-tau_limit[i], tau_limit[i]);
            if rate.is_finite() {
                t = t.clamp(prev - rate, prev + rate);
                // prev ± rate can round outward; walk back one ulp at a time
                while (t - prev).abs() > rate {
                    t = if t > prev { t.next_down() } else { t.next_up() };
                }
            }
            t
        }),
    )
}
