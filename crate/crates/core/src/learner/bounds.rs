//! Closed-form convergence bounds driven by measured error constants.

use super::StepSchedule;
use crate::error::{invalid, Error, Result};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

/// Error constants in gradient units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub dim: usize,
    pub smoothness: f64,
    pub strong_convexity: Option<f64>,
    /// Stochastic-gradient variance bound.
    pub sigma_g2: f64,
    /// Per-coordinate uplink noise variance.
    pub sigma_ul2: f64,
    /// Per-coordinate downlink-induced variance.
    pub sigma_dl2: f64,
    /// `B̄`: squared norm of the reconstruction bias.
    pub bias_sq: f64,
}

impl BoundConstants {
    /// `Ξ̄ = σ_g² + d(σ_ul² + σ_dl²)`.
    pub fn xi(&self) -> f64 {
        self.sigma_g2 + self.dim as f64 * (self.sigma_ul2 + self.sigma_dl2)
    }

    /// `C_err = 2LΞ̄ + 4B̄`.
    pub fn c_err(&self) -> f64 {
        2.0 * self.smoothness * self.xi() + 4.0 * self.bias_sq
    }
}

/// Where the trajectory starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartPoint {
    /// `‖θ¹ − θ*‖²`, when the optimum is known.
    pub dist_sq: Option<f64>,
    /// `F(θ¹) − F*`.
    pub loss_gap: f64,
}

/// Bound values for `T = 1..=horizon`; `None` where the regime does not apply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCurves {
    /// `E‖θ^{T+1} − θ*‖² ≤ ν/(T + γ)`.
    pub strongly_convex: Option<Vec<f64>>,
    /// `E[F(θ̄_T) − F*]` for the averaged iterate.
    pub convex: Option<Vec<f64>>,
    /// `(1/T) Σ E‖∇F(θ_t)‖²`.
    pub nonconvex: Option<Vec<f64>>,
    pub nu: Option<f64>,
}

/// `ν = max((γ+1)‖θ¹ − θ*‖², β²C_err/(μ²(β − 1)))`.
pub fn nu(beta: f64, mu: f64, gamma: f64, c_err: f64, init_dist_sq: f64) -> f64 {
    ((gamma + 1.0) * init_dist_sq).max(beta * beta * c_err / (mu * mu * (beta - 1.0)))
}

pub fn evaluate_bounds(
    schedule: &StepSchedule,
    constants: &BoundConstants,
    start: &StartPoint,
    horizon: usize,
) -> Result<BoundCurves> {
    let l = constants.smoothness;
    if !(l > 0.0) {
        return Err(invalid("smoothness", "must be positive"));
    }
    for v in [constants.sigma_g2, constants.sigma_ul2, constants.sigma_dl2, constants.bias_sq] {
        if !(v >= 0.0) {
            return Err(Error::NegativeVariance(v));
        }
    }
    schedule.validate()?;
    let limit = 1.0 / (4.0 * l);
    let eta1 = schedule.eta(1);
    if eta1 > limit * (1.0 + 1e-12) {
        return Err(Error::StepSizeTooLarge { eta: eta1, limit });
    }
    let xi = constants.xi();
    let b = constants.bias_sq;
    let ts = 1..=horizon;
    let mut curves = BoundCurves { strongly_convex: None, convex: None, nonconvex: None, nu: None };
    match *schedule {
        StepSchedule::Diminishing { beta, mu, gamma } => {
            if beta <= 1.0 {
                return Err(invalid("beta", "the strongly convex bound needs beta > 1"));
            }
            let (Some(d0), Some(mu_f)) = (start.dist_sq, constants.strong_convexity) else {
                return Ok(curves);
            };
            if mu > mu_f * (1.0 + 1e-12) {
                return Err(invalid("mu", "schedule exceeds the objective's strong convexity"));
            }
            let nu = nu(beta, mu, gamma, constants.c_err(), d0);
            curves.nu = Some(nu);
            curves.strongly_convex = Some(ts.map(|t| nu / (t as f64 + gamma)).collect());
        }
        StepSchedule::Constant { eta } => {
            if let Some(d0) = start.dist_sq {
                curves.convex =
                    Some(ts.clone().map(|t| d0 / (2.0 * eta * t as f64) + eta * (l * xi + 2.0 * b)).collect());
            }
            curves.nonconvex = Some(
                ts.map(|t| 4.0 * start.loss_gap / (eta * t as f64) + 4.0 * b + 2.0 * l * eta * xi)
                    .collect(),
            );
        }
    }
    Ok(curves)
}
