//! The federated loop: local SGD, the per-round physical pipeline, bound
//! evaluation and Monte-Carlo measurement of the error constants.

mod bounds;
mod constants;
mod pipeline;

pub use bounds::{evaluate_bounds, nu, BoundConstants, BoundCurves, StartPoint};
pub use constants::{measure_error_constants, ErrorConstants, MeasureOptions};
pub use pipeline::{DeviceRound, RoundOverrides, RoundReport, RoundTrace, Simulator};

use crate::error::{invalid, Error, Result};
use crate::rng::SimRng;
use crate::task::Task;
use crate::uplink::CombinerMode;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

/// Downlink signaling plus local reconstruction rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Product superposition with previous-local-model filling.
    Plmf,
    /// Product superposition with zero filling.
    Zf,
    /// Pilot and data symbols added on pilot slots.
    Additive,
    /// Orthogonal pilots and data.
    Baseline,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Plmf, Scheme::Baseline, Scheme::Zf, Scheme::Additive];

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Plmf => "plmf",
            Scheme::Zf => "zf",
            Scheme::Additive => "additive",
            Scheme::Baseline => "baseline",
        }
    }
}

/// Effective per-round step size `η̄_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSchedule {
    Constant { eta: f64 },
    /// `η̄_t = β / (μ (t + γ))`.
    Diminishing { beta: f64, mu: f64, gamma: f64 },
}

impl StepSchedule {
    /// Diminishing schedule with `γ` set so that `η̄_1 = 1/(4L)`.
    pub fn diminishing_for(beta: f64, mu: f64, smoothness: f64) -> Self {
        StepSchedule::Diminishing { beta, mu, gamma: 4.0 * smoothness * beta / mu - 1.0 }
    }

    pub fn eta(&self, round: u32) -> f64 {
        match *self {
            StepSchedule::Constant { eta } => eta,
            StepSchedule::Diminishing { beta, mu, gamma } => beta / (mu * (round as f64 + gamma)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            StepSchedule::Constant { eta } if !(eta > 0.0) => Err(invalid("eta", "must be positive")),
            StepSchedule::Diminishing { beta, mu, gamma } if !(beta > 0.0 && mu > 0.0 && gamma > -1.0) => {
                Err(invalid("schedule", "need beta > 0, mu > 0, gamma > -1"))
            }
            _ => Ok(()),
        }
    }
}

/// Which physical links are simulated. Disabled links are ideal: full,
/// noiseless delivery and exact aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Impairments {
    pub downlink: bool,
    pub uplink: bool,
}

impl Impairments {
    pub const ALL: Self = Self { downlink: true, uplink: true };
    pub const NONE: Self = Self { downlink: false, uplink: false };
}

impl Default for Impairments {
    fn default() -> Self {
        Self::ALL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhyConfig {
    /// `ρ` in dB relative to unit noise power.
    pub snr_db: f64,
    /// Receiver noise power `σ²` (1 by convention; 0 for noiseless checks).
    pub noise_var: f64,
    /// Super-block height `N_s`.
    pub symbols: usize,
    /// Super-block width `N`.
    pub subcarriers: usize,
    pub antennas: usize,
    /// Pilot subcarrier every this many tones (`None`: frequency-flat lattice).
    pub freq_pilot_period: Option<usize>,
    /// Uplink transmit SNR `ρ_u/σ²` in dB; defaults to the downlink value.
    pub uplink_snr_db: Option<f64>,
    /// Clipping floor `μ_k` of the channel-inversion precoder.
    pub clip_floor: f64,
    /// Rounds between uplink channel re-estimation for static devices.
    pub static_refresh: u32,
    pub combiner: CombinerMode,
    /// Shift the coordinate-to-symbol assignment by one every round.
    pub rotate_placement: bool,
    pub impairments: Impairments,
}

impl Default for PhyConfig {
    fn default() -> Self {
        Self {
            snr_db: 20.0,
            noise_var: 1.0,
            symbols: 8,
            subcarriers: 5,
            antennas: 1,
            freq_pilot_period: None,
            uplink_snr_db: None,
            clip_floor: 0.1,
            static_refresh: 10,
            combiner: CombinerMode::FirstAntenna,
            rotate_placement: true,
            impairments: Impairments::ALL,
        }
    }
}

impl PhyConfig {
    pub fn rho(&self) -> f64 {
        crate::math::db_to_linear(self.snr_db)
    }

    pub fn rho_uplink(&self) -> f64 {
        crate::math::db_to_linear(self.uplink_snr_db.unwrap_or(self.snr_db))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnConfig {
    /// Local SGD steps per round.
    pub local_steps: usize,
    /// Minibatch size; 0 means full-batch steps.
    pub batch_size: usize,
    pub schedule: StepSchedule,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub scheme: Scheme,
    /// Dynamic devices admitted per round.
    pub dynamic_devices: usize,
    pub phy: PhyConfig,
    pub learn: LearnConfig,
}

/// `τ` minibatch SGD steps of size `eta` from `start` on device `k`'s shard.
/// Returns `Δθ_k = θ_{k,τ} − θ_{k,0}`.
pub fn local_sgd(task: &Task, k: usize, start: &[f64], tau: usize, eta: f64, batch: usize, seed: u64) -> Result<Vec<f64>> {
    if tau == 0 {
        return Err(invalid("local_steps", "must be at least 1"));
    }
    if !(eta > 0.0) {
        return Err(invalid("eta", "must be positive"));
    }
    let n = task.shard_len(k);
    if n == 0 {
        return Err(Error::EmptyShard(k));
    }
    let d = task.dim();
    let mut theta = start.to_vec();
    let mut grad = vec![0.0; d];
    let mut rng = SimRng::new(seed);
    let full: Vec<usize> = (0..n).collect();
    let mut idx = vec![0; batch.min(n)];
    for _ in 0..tau {
        if batch == 0 || batch >= n {
            task.batch_gradient(k, &theta, &full, &mut grad);
        } else {
            for j in idx.iter_mut() {
                *j = rng.index(n);
            }
            task.batch_gradient(k, &theta, &idx, &mut grad);
        }
        for (t, g) in theta.iter_mut().zip(&grad) {
            *t -= eta * g;
        }
    }
    Ok(theta.iter().zip(start).map(|(a, b)| a - b).collect())
}
