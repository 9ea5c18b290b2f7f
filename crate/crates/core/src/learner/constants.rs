//! Monte-Carlo estimates of the error constants that enter the bounds.
//!
//! At each probe round the simulator state is cloned and the round is
//! replayed with fresh channel and noise draws but the same SGD seeds, plus
//! once with both links ideal. Differences against the ideal replay isolate
//! the downlink-induced error (mean: bias, spread: variance) and the uplink
//! receiver noise. Update-space quantities are divided by `η̄_t²`.

use super::{Impairments, RoundOverrides, Simulator};
use crate::error::{Error, Result};
use crate::stats::Running;
use crate::C64;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureOptions {
    /// Rounds to advance the reference trajectory.
    pub rounds: u32,
    /// Probe every this many rounds, starting with the first.
    pub probe_every: u32,
    pub n_mc: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorConstants {
    pub sigma_g2: f64,
    pub sigma_ul2: f64,
    pub sigma_dl2: f64,
    pub bias_sq: f64,
    pub probes: usize,
    pub n_mc: usize,
}

/// Advance a clone of `sim` for `options.rounds` rounds, probing as it goes.
/// Returns sup-over-probes estimates.
pub fn measure_error_constants(sim: &Simulator<'_>, options: MeasureOptions) -> Result<ErrorConstants> {
    if options.n_mc < 10 {
        return Err(Error::TooFewTrials { n: options.n_mc, min: 10 });
    }
    let probe_every = options.probe_every.max(1);
    let task = sim.task();
    let d = task.dim();
    let batch = sim.config().learn.batch_size;
    let mut main = sim.clone();
    let mut out =
        ErrorConstants { sigma_g2: 0.0, sigma_ul2: 0.0, sigma_dl2: 0.0, bias_sq: 0.0, probes: 0, n_mc: options.n_mc };
    for step in 0..options.rounds {
        if step % probe_every == 0 {
            let eta = main.config().learn.schedule.eta(main.round());
            let scale = 1.0 / (eta * eta);
            for dev in main.scheduled() {
                let v = task.minibatch_variance(dev.profile.device_id as usize, main.theta(), batch);
                out.sigma_g2 = out.sigma_g2.max(v);
            }
            let mut ideal = main.clone();
            let (_, reference) =
                ideal.step_with(RoundOverrides { salt: 0, impairments: Some(Impairments::NONE) })?;
            let mut dl: Vec<Running> = vec![Running::default(); d];
            let mut ul = vec![0.0; d];
            for r in 0..options.n_mc {
                let mut replay = main.clone();
                let salt = 1 + r as u64;
                let (_, trace) = replay.step_with(RoundOverrides { salt, impairments: None })?;
                for i in 0..d {
                    dl[i].push(trace.update_noiseless[i] - reference.update[i]);
                    ul[i] += C64::norm_sqr(&trace.uplink_noise[i]);
                }
            }
            let bias: f64 = dl.iter().map(|s| s.mean() * s.mean()).sum();
            out.bias_sq = out.bias_sq.max(bias * scale);
            for i in 0..d {
                out.sigma_dl2 = out.sigma_dl2.max(dl[i].variance() * scale);
                out.sigma_ul2 = out.sigma_ul2.max(ul[i] / options.n_mc as f64 * scale);
            }
            out.probes += 1;
        }
        main.step()?;
    }
    Ok(out)
}
