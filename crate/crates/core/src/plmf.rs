//! Previous-local-model filling: each device keeps its last decoded value for
//! coordinates it did not receive this round.

use crate::error::{Error, Result};
use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq)]
pub struct LocalModelState {
    /// `θ̂_k`.
    pub model: Vec<f64>,
    /// `ζ_k`: round at which each coordinate was last refreshed.
    pub recency: Vec<u32>,
    /// Last computed drift `r_k`.
    pub drift: Vec<f64>,
}

impl LocalModelState {
    /// Every device starts from the broadcast initial model at round `round`.
    pub fn initial(theta: &[f64], round: u32) -> Self {
        Self { model: theta.to_vec(), recency: vec![round; theta.len()], drift: vec![0.0; theta.len()] }
    }

    pub fn dim(&self) -> usize {
        self.model.len()
    }

    fn check(&self, mask: &[bool], received: &[f64]) -> Result<()> {
        let d = self.dim();
        for len in [mask.len(), received.len()] {
            if len != d {
                return Err(Error::DimensionMismatch { expected: d, found: len });
            }
        }
        Ok(())
    }
}

/// `θ̂_k ← D_k(θ + ε) + (I − D_k) θ̂_k`.
pub fn apply_plmf(state: &mut LocalModelState, mask: &[bool], received: &[f64], round: u32) -> Result<()> {
    state.check(mask, received)?;
    for i in 0..state.dim() {
        if mask[i] {
            state.model[i] = received[i];
            state.recency[i] = round;
        }
    }
    Ok(())
}

/// `θ̂_k ← D_k(θ + ε)`; missing coordinates become zero.
pub fn zero_fill(state: &mut LocalModelState, mask: &[bool], received: &[f64], round: u32) -> Result<()> {
    state.check(mask, received)?;
    for i in 0..state.dim() {
        if mask[i] {
            state.model[i] = received[i];
            state.recency[i] = round;
        } else {
            state.model[i] = 0.0;
        }
    }
    Ok(())
}

/// Global models by round, trimmed to the staleness window on request.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelHistory {
    first_round: u32,
    models: VecDeque<Vec<f64>>,
}

impl ModelHistory {
    pub fn new(round: u32, theta: &[f64]) -> Self {
        let mut models = VecDeque::new();
        models.push_back(theta.to_vec());
        Self { first_round: round, models }
    }

    pub fn latest_round(&self) -> u32 {
        self.first_round + self.models.len() as u32 - 1
    }

    pub fn push(&mut self, theta: &[f64]) {
        self.models.push_back(theta.to_vec());
    }

    pub fn get(&self, round: u32) -> Option<&[f64]> {
        round
            .checked_sub(self.first_round)
            .and_then(|k| self.models.get(k as usize))
            .map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// Drop rounds older than `oldest`.
    pub fn trim_before(&mut self, oldest: u32) {
        while self.first_round < oldest && self.models.len() > 1 {
            self.models.pop_front();
            self.first_round += 1;
        }
    }
}

/// `r_{k,i} = θ_i(t) − θ̂_{k,i}` for the latest round `t` in `history`.
///
/// On every missing coordinate the direct difference `θ_i(t) − θ_i(ζ)` is
/// checked against the telescoped sum of global increments since `ζ`.
pub fn drift(state: &mut LocalModelState, history: &ModelHistory) -> Result<Vec<f64>> {
    let t = history.latest_round();
    let current = history.get(t).ok_or(Error::HistoryTooShort { needed: 1, available: 0 })?;
    if current.len() != state.dim() {
        return Err(Error::DimensionMismatch { expected: state.dim(), found: current.len() });
    }
    let mut r = vec![0.0; state.dim()];
    for i in 0..state.dim() {
        let zeta = state.recency[i];
        r[i] = current[i] - state.model[i];
        if zeta >= t {
            continue;
        }
        let needed = (t - zeta + 1) as usize;
        let then = history
            .get(zeta)
            .ok_or(Error::HistoryTooShort { needed, available: history.len() })?;
        let mut telescoped = 0.0;
        for s in zeta + 1..=t {
            let (a, b) = (history.get(s), history.get(s - 1));
            match (a, b) {
                (Some(a), Some(b)) => telescoped += a[i] - b[i],
                _ => return Err(Error::HistoryTooShort { needed, available: history.len() }),
            }
        }
        let direct = current[i] - then[i];
        let gap = (direct - telescoped).abs();
        let scale = history.get(t).map_or(1.0, |_| 1.0 + direct.abs() + telescoped.abs());
        if gap > 1e-12 * scale {
            return Err(Error::TelescopingMismatch { coord: i, gap });
        }
    }
    state.drift.clone_from(&r);
    Ok(r)
}
