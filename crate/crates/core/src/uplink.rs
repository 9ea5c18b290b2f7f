//! Over-the-air uplink: sub-blocking, pilot MMSE at the PS, clipped channel
//! inversion, superposition, and the per-coordinate update estimate.

use crate::channel::awgn;
use crate::error::{invalid, Error, Result};
use crate::math;
use crate::C64;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;
use serde::{Deserialize, Serialize};

/// Contiguous blocks of `ceil(d / p_ul)` coordinates; the last may be shorter.
pub fn partition_coordinates(d: usize, p_ul: usize) -> Result<Vec<Range<usize>>> {
    if d == 0 || p_ul == 0 || p_ul > d {
        return Err(invalid("p_ul", "need 1 <= P_ul <= d"));
    }
    let size = d.div_ceil(p_ul);
    Ok((0..d).step_by(size).map(|s| s..(s + size).min(d)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct UplinkEstimate {
    pub h_hat: Vec<C64>,
    /// Per-entry error variance `σ²/(ρ_τ + σ²)`.
    pub error_variance: f64,
}

/// MMSE estimate of `h̃ ~ CN(0, I)` from `y = √ρ_τ h̃ + w`.
pub fn uplink_channel_estimate(observation: &[C64], rho_tau: f64, noise_var: f64) -> Result<UplinkEstimate> {
    if noise_var < 0.0 {
        return Err(Error::NegativeVariance(noise_var));
    }
    if rho_tau <= 0.0 {
        return Err(Error::UndefinedEstimator);
    }
    let shrink = rho_tau / (rho_tau + noise_var);
    let s = shrink / math::sqrt(rho_tau);
    Ok(UplinkEstimate {
        h_hat: observation.iter().map(|y| y * s).collect(),
        error_variance: noise_var / (rho_tau + noise_var),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombinerMode {
    /// `u = e₁`.
    #[default]
    FirstAntenna,
    /// `u` matched to the device with the strongest estimated channel.
    MatchStrongest,
}

/// Unit-norm receive combiner of length `m`.
pub fn combiner(mode: CombinerMode, estimates: &[&[C64]], m: usize) -> Vec<C64> {
    let mut u = vec![C64::new(0.0, 0.0); m];
    if let CombinerMode::MatchStrongest = mode {
        let norm2 = |h: &[C64]| h.iter().map(|z| z.norm_sqr()).sum::<f64>();
        if let Some(best) = estimates.iter().max_by(|a, b| norm2(a).total_cmp(&norm2(b))) {
            let n = math::sqrt(norm2(best));
            if n > 0.0 {
                return best.iter().map(|z| z / n).collect();
            }
        }
    }
    if m > 0 {
        u[0] = C64::new(1.0, 0.0);
    }
    u
}

/// `uᴴ h`.
pub fn combine(u: &[C64], h: &[C64]) -> C64 {
    u.iter().zip(h).map(|(a, b)| a.conj() * b).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Precoder {
    /// Effective scalar channel fed back by the PS.
    pub g: C64,
    pub alpha: C64,
    /// `|g| / max(|g|, μ)`.
    pub chi: f64,
    pub mu: f64,
}

impl Precoder {
    pub fn new(g: C64, beta: f64, mu: f64) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(Error::ZeroScaling);
        }
        if !(mu > 0.0) {
            return Err(invalid("mu", "clipping floor must be positive"));
        }
        let mag = g.norm();
        let denom = mag.max(mu);
        let phase = if mag > 0.0 { g.conj() / mag } else { C64::new(1.0, 0.0) };
        Ok(Self { g, alpha: phase * (beta / denom), chi: mag / denom, mu })
    }
}

/// `x_i = √ρ_u α a_k [D_k Δθ_k]_i`; masked coordinates are exact zeros.
pub fn precode(increment: &[f64], mask: &[bool], weight: f64, pre: &Precoder, rho_u: f64) -> Result<Vec<C64>> {
    if increment.len() != mask.len() {
        return Err(Error::DimensionMismatch { expected: increment.len(), found: mask.len() });
    }
    let s = math::sqrt(rho_u) * weight;
    Ok(increment
        .iter()
        .zip(mask)
        .map(|(&dx, &m)| if m && dx != 0.0 { pre.alpha * (s * dx) } else { C64::new(0.0, 0.0) })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerReport {
    /// Average energy per transmitted symbol in the sub-block.
    pub used: f64,
    pub budget: f64,
    pub holds: bool,
}

pub fn power_usage(symbols: &[C64], budget: f64) -> PowerReport {
    let used = symbols.iter().map(|z| z.norm_sqr()).sum::<f64>() / symbols.len().max(1) as f64;
    PowerReport { used, budget, holds: used <= budget * (1.0 + 1e-9) }
}

/// One device's contribution to a sub-block: its true effective channel and symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct Transmission {
    pub gain: C64,
    pub symbols: Vec<C64>,
}

/// `r_i = Σ_k g_k x_{k,i} + z_i`, `z ~ CN(0, σ²)` after unit-norm combining.
pub fn ota_aggregate(tx: &[Transmission], len: usize, noise_var: f64, seed: u64) -> Result<Vec<C64>> {
    let mut r = awgn(len, noise_var, seed)?;
    for t in tx {
        if t.symbols.len() != len {
            return Err(Error::DimensionMismatch { expected: len, found: t.symbols.len() });
        }
        for (ri, x) in r.iter_mut().zip(&t.symbols) {
            *ri += t.gain * x;
        }
    }
    Ok(r)
}

/// `Δ̂θ_i = r_i / (√ρ_u β)`.
pub fn estimate_update(r: &[C64], rho_u: f64, beta: f64) -> Result<Vec<C64>> {
    if !(beta > 0.0) {
        return Err(Error::ZeroScaling);
    }
    let s = 1.0 / (math::sqrt(rho_u) * beta);
    Ok(r.iter().map(|z| z * s).collect())
}

/// Post-scaling noise variance `σ²/(ρ_u β²)`.
pub fn update_noise_variance(noise_var: f64, rho_u: f64, beta: f64) -> f64 {
    noise_var / (rho_u * beta * beta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaInput {
    pub g_hat: C64,
    pub weight: f64,
    /// Mean of `[D_k Δθ_k]_i²` over the sub-block's coordinates.
    pub mean_energy: f64,
    pub budget: f64,
    pub mu: f64,
}

/// Largest `β` keeping every device's average symbol energy within its budget.
/// Returns 1 when no device has anything to send.
pub fn choose_beta(inputs: &[BetaInput], rho_u: f64) -> f64 {
    let mut beta = f64::INFINITY;
    for d in inputs {
        let need = rho_u * d.weight * d.weight * d.mean_energy;
        if need > 0.0 {
            let clip = d.g_hat.norm().max(d.mu);
            beta = beta.min(math::sqrt(d.budget / need) * clip);
        }
    }
    if beta.is_finite() && beta > 0.0 {
        beta
    } else {
        1.0
    }
}
