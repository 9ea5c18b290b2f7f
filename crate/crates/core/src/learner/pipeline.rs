//! One federated round end to end: broadcast, local reconstruction, local
//! SGD, over-the-air aggregation and the global update.

use super::{local_sgd, Impairments, PipelineConfig, Scheme};
use crate::channel::{sample_channel, ChannelRealization, CoherenceProfile, DeviceClass, GridDims};
use crate::downlink::{
    decode_dynamic, decode_static, equalize, estimate_equivalent_channel, estimate_from_pilots, optimal_power_split,
    receive_grid, superposed_grid, transmit_additive, transmit_baseline, PilotMatrix, PowerSplit, SymbolCodec,
};
use crate::error::{invalid, Error, Result};
use crate::grid::{build_superblock, static_superblock, PilotLattice, PlacementMap, SlotCensus, SlotKind, SuperBlockGeometry};
use crate::math;
use crate::plmf::{apply_plmf, drift, zero_fill, LocalModelState, ModelHistory};
use crate::rng::{derive_seed, SimRng, Stream};
use crate::scheduler::{normalized_comm_cost, schedule_round, CoverageRecord, Roster, ScheduledDevice};
use crate::task::Task;
use crate::uplink::{
    choose_beta, combine, combiner, estimate_update, ota_aggregate, partition_coordinates, precode,
    uplink_channel_estimate, update_noise_variance, BetaInput, Precoder, Transmission,
};
use crate::C64;
use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

/// Marks static-device uplink seeds so they never collide with per-round ones.
const STATIC_EPOCH_TAG: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceRound {
    pub device_id: u32,
    pub class: DeviceClass,
    /// `q_k`: fraction of coordinates refreshed this round.
    pub received_fraction: f64,
    /// Mean LMMSE distortion over the symbols a dynamic device equalised
    /// (0 for coherent static decoding).
    pub distortion: f64,
    /// `‖θ(t) − θ̂_k(t)‖²`.
    pub drift_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: u32,
    /// `η̄_t`.
    pub eta: f64,
    /// `F(θ^{t+1})`.
    pub loss: f64,
    /// `‖θ^{t+1} − θ*‖²` when the optimum is known.
    pub dist_sq: Option<f64>,
    pub accuracy: Option<f64>,
    /// `‖∇F(θ^t)‖²` at the model broadcast this round.
    pub grad_norm_sq: f64,
    /// `F(θ̄)` for the running average of `θ^1..θ^t`.
    pub averaged_loss: f64,
    pub census: SlotCensus,
    pub comm_cost: f64,
    pub cumulative_comm_cost: f64,
    /// Mean post-scaling uplink noise variance `σ²/(ρ_u β²)` over sub-blocks.
    pub sigma_ul2: f64,
    pub devices: Vec<DeviceRound>,
}

/// Per-round knobs for Monte-Carlo replays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RoundOverrides {
    /// Mixed into every channel and noise seed; SGD seeds are untouched.
    pub salt: u64,
    pub impairments: Option<Impairments>,
}

/// Raw aggregate of one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundTrace {
    /// Applied update `Re Δ̂θ`.
    pub update: Vec<f64>,
    /// The same aggregate with the uplink receiver noise removed.
    pub update_noiseless: Vec<f64>,
    /// Complex receiver-noise component of `Δ̂θ`.
    pub uplink_noise: Vec<C64>,
}

#[derive(Debug, Clone)]
struct Layout {
    geometry: SuperBlockGeometry,
    map: PlacementMap,
    lattice: PilotLattice,
    /// Pilot and data powers of the active scheme.
    power: PowerSplit,
    census: SlotCensus,
    p_ul: usize,
}

/// Stateful simulator of the federated loop for one scenario and seed.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    task: &'a Task,
    config: PipelineConfig,
    seed: u64,
    scheduled: Vec<ScheduledDevice>,
    layout: Layout,
    x_p: PilotMatrix,
    theta: Vec<f64>,
    round: u32,
    states: Vec<LocalModelState>,
    history: ModelHistory,
    cumulative_cost: f64,
    iterate_sum: Vec<f64>,
}

struct Delivery {
    mask: Vec<bool>,
    values: Vec<f64>,
    distortion: f64,
}

impl<'a> Simulator<'a> {
    pub fn new(task: &'a Task, roster: &Roster, config: PipelineConfig, seed: u64) -> Result<Self> {
        let phy = &config.phy;
        if phy.antennas != 1 {
            return Err(invalid("antennas", "the learning pipeline runs single-antenna broadcasts"));
        }
        if !(phy.noise_var >= 0.0) {
            return Err(Error::NegativeVariance(phy.noise_var));
        }
        if !phy.snr_db.is_finite() || !phy.uplink_snr_db.unwrap_or(0.0).is_finite() {
            return Err(invalid("snr_db", "must be finite"));
        }
        if !(phy.clip_floor > 0.0) {
            return Err(invalid("clip_floor", "must be positive"));
        }
        if phy.static_refresh == 0 {
            return Err(invalid("static_refresh", "must be at least 1"));
        }
        if config.learn.local_steps == 0 {
            return Err(invalid("local_steps", "must be at least 1"));
        }
        config.learn.schedule.validate()?;
        for e in &roster.devices {
            if e.profile.device_id as usize >= task.num_devices() {
                return Err(invalid("device_id", "no matching data shard"));
            }
        }
        let scheduled = schedule_round(roster, config.dynamic_devices)?;
        let layout = Layout::build(&config, &scheduled, task.dim())?;
        let theta = task.initial_model(derive_seed(seed, Stream::Init, &[]));
        let states = scheduled.iter().map(|_| LocalModelState::initial(&theta, 1)).collect();
        let history = ModelHistory::new(1, &theta);
        Ok(Self {
            task,
            config,
            seed,
            scheduled,
            layout,
            x_p: PilotMatrix::dft(1),
            theta,
            round: 1,
            states,
            history,
            cumulative_cost: 0.0,
            iterate_sum: vec![0.0; task.dim()],
        })
    }

    /// Restart from `theta` instead of the seed-derived initial model.
    pub fn with_initial_model(mut self, theta: &[f64]) -> Result<Self> {
        if self.round != 1 {
            return Err(invalid("initial model", "only before the first round"));
        }
        if theta.len() != self.task.dim() {
            return Err(Error::DimensionMismatch { expected: self.task.dim(), found: theta.len() });
        }
        self.theta = theta.to_vec();
        self.states = self.scheduled.iter().map(|_| LocalModelState::initial(theta, 1)).collect();
        self.history = ModelHistory::new(1, theta);
        Ok(self)
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// The round that the next call to [`Simulator::step`] will run.
    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn task(&self) -> &Task {
        self.task
    }

    pub fn scheduled(&self) -> &[ScheduledDevice] {
        &self.scheduled
    }

    pub fn geometry(&self) -> &SuperBlockGeometry {
        &self.layout.geometry
    }

    pub fn placement(&self) -> &PlacementMap {
        &self.layout.map
    }

    /// Pilot and data powers used by the configured scheme.
    pub fn power(&self) -> PowerSplit {
        self.layout.power
    }

    pub fn census(&self) -> SlotCensus {
        self.layout.census
    }

    /// `θ̂_k` of each scheduled device after the latest broadcast.
    pub fn local_models(&self) -> impl Iterator<Item = &[f64]> {
        self.states.iter().map(|s| s.model.as_slice())
    }

    pub fn uplink_subblocks(&self) -> usize {
        self.layout.p_ul
    }

    pub fn step(&mut self) -> Result<RoundReport> {
        self.step_with(RoundOverrides::default()).map(|(r, _)| r)
    }

    pub fn step_with(&mut self, overrides: RoundOverrides) -> Result<(RoundReport, RoundTrace)> {
        let t = self.round;
        let d = self.task.dim();
        let imp = overrides.impairments.unwrap_or(self.config.phy.impairments);
        let eta = self.config.learn.schedule.eta(t);
        let tau = self.config.learn.local_steps;

        let mut grad = vec![0.0; d];
        self.task.global_loss_grad(&self.theta, &mut grad);
        let grad_norm_sq = math::norm_sq(&grad);
        for (a, th) in self.iterate_sum.iter_mut().zip(&self.theta) {
            *a += th;
        }
        let averaged: Vec<f64> = self.iterate_sum.iter().map(|a| a / t as f64).collect();
        let averaged_loss = self.task.global_loss(&averaged);

        // Broadcast and local reconstruction.
        let mut distortions = vec![0.0; self.scheduled.len()];
        let mut fractions = vec![1.0; self.scheduled.len()];
        let mut masks = vec![vec![true; d]; self.scheduled.len()];
        if imp.downlink {
            let deliveries = self.broadcast(t, overrides.salt)?;
            for (k, del) in deliveries.into_iter().enumerate() {
                let prior = self.states[k].recency.clone();
                let id = self.scheduled[k].profile.device_id;
                let received: Vec<usize> = (0..d).filter(|&i| del.mask[i]).collect();
                let cov = CoverageRecord::from_received(id, d, received, t, &prior)?;
                match self.config.scheme {
                    Scheme::Zf => zero_fill(&mut self.states[k], &cov.mask, &del.values, t)?,
                    _ => apply_plmf(&mut self.states[k], &cov.mask, &del.values, t)?,
                }
                fractions[k] = cov.fraction;
                distortions[k] = del.distortion;
                masks[k] = cov.mask;
            }
        } else {
            for s in &mut self.states {
                *s = LocalModelState::initial(&self.theta, t);
            }
        }
        let mut drift_sq = Vec::with_capacity(self.states.len());
        for s in &mut self.states {
            let r = drift(s, &self.history)?;
            drift_sq.push(math::norm_sq(&r));
            s.drift = r;
        }

        // Local training.
        let local_eta = eta / tau as f64;
        let mut increments = Vec::with_capacity(self.scheduled.len());
        for (k, dev) in self.scheduled.iter().enumerate() {
            let id = dev.profile.device_id;
            let sgd_seed = derive_seed(self.seed, Stream::Sgd, &[t as u64, id as u64]);
            increments.push(local_sgd(
                self.task,
                id as usize,
                &self.states[k].model,
                tau,
                local_eta,
                self.config.learn.batch_size,
                sgd_seed,
            )?);
        }

        // Aggregation.
        let (update, update_noiseless, uplink_noise, sigma_ul2) = if imp.uplink {
            self.over_the_air(t, overrides.salt, &increments, &masks)?
        } else {
            let mut acc = vec![0.0; d];
            for ((dev, inc), mask) in self.scheduled.iter().zip(&increments).zip(&masks) {
                for i in 0..d {
                    if mask[i] {
                        acc[i] += dev.weight * inc[i];
                    }
                }
            }
            (acc.clone(), acc, vec![C64::new(0.0, 0.0); d], 0.0)
        };
        for (th, u) in self.theta.iter_mut().zip(&update) {
            *th += u;
        }
        self.history.push(&self.theta);
        let oldest = self.states.iter().flat_map(|s| s.recency.iter().copied()).min().unwrap_or(t);
        self.history.trim_before(oldest.max(1));

        let census = if imp.downlink {
            self.layout.census
        } else {
            // An ideal link needs no pilots: every slot is plain data.
            let slots = self.layout.geometry.dims().slots();
            SlotCensus { pilot: 0, data: slots, superposed: 0, payload: slots.min(d) }
        };
        let comm_cost = normalized_comm_cost(&census)?;
        self.cumulative_cost += comm_cost;
        let loss = self.task.global_loss(&self.theta);
        let dist_sq = self.task.optimum().map(|opt| math::dist_sq(&self.theta, opt));
        let accuracy = self.task.accuracy(&self.theta);
        let devices = self
            .scheduled
            .iter()
            .enumerate()
            .map(|(k, dev)| DeviceRound {
                device_id: dev.profile.device_id,
                class: dev.profile.class,
                received_fraction: fractions[k],
                distortion: distortions[k],
                drift_sq: drift_sq[k],
            })
            .collect();
        self.round += 1;
        let report = RoundReport {
            round: t,
            eta,
            loss,
            dist_sq,
            accuracy,
            grad_norm_sq,
            averaged_loss,
            census,
            comm_cost,
            cumulative_comm_cost: self.cumulative_cost,
            sigma_ul2,
            devices,
        };
        Ok((report, RoundTrace { update, update_noiseless, uplink_noise }))
    }

    /// Coordinate carried by model symbol `j` in round `t`.
    fn coordinate(&self, j: usize, t: u32) -> usize {
        let d = self.task.dim();
        let shift = if self.config.phy.rotate_placement { (t as usize - 1) % d } else { 0 };
        (j + shift) % d
    }

    fn realization(&self, profile: &CoherenceProfile, t: u32, salt: u64) -> Result<(ChannelRealization, u64)> {
        let parts = [t as u64, profile.device_id as u64, salt];
        let real = sample_channel(
            profile,
            self.layout.geometry.dims(),
            self.config.phy.noise_var,
            derive_seed(self.seed, Stream::DownlinkChannel, &parts),
        )?;
        Ok((real, derive_seed(self.seed, Stream::DownlinkNoise, &parts)))
    }

    fn broadcast(&self, t: u32, salt: u64) -> Result<Vec<Delivery>> {
        let codec = SymbolCodec::for_model(&self.theta);
        match self.config.scheme {
            Scheme::Plmf | Scheme::Zf => self.broadcast_superposed(t, salt, &codec),
            Scheme::Baseline => self.broadcast_baseline(t, salt, &codec),
            Scheme::Additive => self.broadcast_additive(t, salt, &codec),
        }
    }

    fn broadcast_superposed(&self, t: u32, salt: u64, codec: &SymbolCodec) -> Result<Vec<Delivery>> {
        let d = self.task.dim();
        let map = &self.layout.map;
        let PowerSplit { rho_p, rho_d } = self.layout.power;
        let noise = self.config.phy.noise_var;
        let coords: Vec<usize> = (0..map.len()).map(|j| self.coordinate(j, t)).collect();
        let embedded: Vec<C64> = coords.iter().map(|&c| codec.embedded(self.theta[c])).collect();
        let data: Vec<C64> = coords.iter().map(|&c| codec.data(self.theta[c])).collect();
        let dims = self.layout.geometry.dims();
        let tx = superposed_grid(&embedded, &data, map, dims, &self.x_p, rho_p, rho_d)?;
        let width = dims.subcarriers;
        let mut out = Vec::with_capacity(self.scheduled.len());
        for dev in &self.scheduled {
            let (real, noise_seed) = self.realization(&dev.profile, t, salt)?;
            let y = receive_grid(&tx, &real, noise_seed)?;
            let mut del = Delivery::empty(d);
            let mut v = Vec::new();
            for strip in &map.strips {
                let idx = strip.symbols.clone();
                let ys: Vec<C64> = (0..strip.len).map(|u| y[(strip.time_start + u) * width + strip.subcarrier]).collect();
                if dev.profile.is_static() {
                    let h = real.channel_at(strip.time_start, strip.subcarrier)?[0];
                    let phase = map.entries[idx.clone()].iter().filter(|e| e.kind == SlotKind::PilotSlotEmbedded).count();
                    if strip.pilot_column {
                        for (u, j) in idx.enumerate() {
                            let power = if u == 0 { rho_p } else { rho_d };
                            let z = coherent(ys[u], h, power)?;
                            del.set(coords[j], codec.decode_embedded(z));
                        }
                    } else if phase == 0 {
                        for (u, j) in idx.enumerate() {
                            del.set(coords[j], codec.decode_data(coherent(ys[u], h, rho_d)?));
                        }
                    } else {
                        let dec = decode_static(&ys, &self.x_p, &[h], rho_p, rho_d)?;
                        for (u, j) in idx.enumerate() {
                            let value = if u == 0 {
                                codec.decode_embedded(dec.embedded[0])
                            } else {
                                codec.decode_data(dec.data[u - 1])
                            };
                            del.set(coords[j], value);
                        }
                    }
                } else {
                    let times = strip.time_start..strip.time_start + strip.len;
                    if strip.pilot_column || !dev.profile.covers(times, strip.subcarrier..strip.subcarrier + 1) {
                        continue;
                    }
                    let est = estimate_equivalent_channel(&ys[..1], &self.x_p, rho_p, noise)?;
                    let n_data = idx.len() - 1;
                    let dec = decode_dynamic(&ys[1..1 + n_data], &est.f_bar, rho_d, est.error_variance, noise);
                    for (u, j) in idx.skip(1).enumerate() {
                        del.set(coords[j], codec.decode_data(dec.symbols[u]));
                    }
                    v.extend(core::iter::repeat_n(dec.distortion, n_data));
                }
            }
            del.distortion = mean_or_zero(&v);
            out.push(del);
        }
        Ok(out)
    }

    fn broadcast_baseline(&self, t: u32, salt: u64, codec: &SymbolCodec) -> Result<Vec<Delivery>> {
        let d = self.task.dim();
        let dims = self.layout.geometry.dims();
        let rho = self.config.phy.rho();
        let noise = self.config.phy.noise_var;
        let lattice = &self.layout.lattice;
        let data_pos = lattice.data_positions(dims);
        let width = data_pos.len().min(d);
        let start = ((t as usize - 1) * data_pos.len()) % d;
        let coords: Vec<usize> = (0..width).map(|j| (start + j) % d).collect();
        let symbols: Vec<C64> = coords.iter().map(|&c| codec.data(self.theta[c])).collect();
        let tx = transmit_baseline(&symbols, lattice, dims, &self.x_p, rho, rho, rho)?;
        let mut out = Vec::with_capacity(self.scheduled.len());
        for dev in &self.scheduled {
            let (real, noise_seed) = self.realization(&dev.profile, t, salt)?;
            let y = receive_grid(&tx, &real, noise_seed)?;
            let at = |n: usize, m: usize| y[n * dims.subcarriers + m];
            let mut del = Delivery::empty(d);
            if dev.profile.is_static() {
                for (j, &(n, m)) in data_pos.iter().take(width).enumerate() {
                    let h = real.channel_at(n, m)?[0];
                    del.set(coords[j], codec.decode_data(coherent(at(n, m), h, rho)?));
                }
            } else {
                let tiles = tile_estimates(&dev.profile, lattice, dims, &at, rho, noise)?;
                let mut v = Vec::new();
                for (j, &(n, m)) in data_pos.iter().take(width).enumerate() {
                    if let Some(&(g, err)) = tiles.get(&dev.profile.tile_of(n, m)) {
                        let (x, dist) = equalize(at(n, m), g, math::sqrt(rho), err, noise);
                        del.set(coords[j], codec.decode_data(x));
                        v.push(dist);
                    }
                }
                del.distortion = mean_or_zero(&v);
            }
            out.push(del);
        }
        Ok(out)
    }

    fn broadcast_additive(&self, t: u32, salt: u64, codec: &SymbolCodec) -> Result<Vec<Delivery>> {
        let d = self.task.dim();
        let dims = self.layout.geometry.dims();
        let rho = self.config.phy.rho();
        let noise = self.config.phy.noise_var;
        let PowerSplit { rho_p, rho_d } = self.layout.power;
        let lattice = &self.layout.lattice;
        let slots: Vec<(usize, usize)> =
            (0..dims.symbols).flat_map(|n| (0..dims.subcarriers).map(move |m| (n, m))).take(d).collect();
        let coords: Vec<usize> = (0..slots.len()).map(|j| self.coordinate(j, t)).collect();
        let symbols: Vec<C64> = coords.iter().map(|&c| codec.data(self.theta[c])).collect();
        let tx = transmit_additive(&symbols, lattice, dims, &self.x_p, rho_p, rho_d, rho)?;
        let (sp, sd) = (math::sqrt(rho_p), math::sqrt(rho_d));
        let mut out = Vec::with_capacity(self.scheduled.len());
        for dev in &self.scheduled {
            let (real, noise_seed) = self.realization(&dev.profile, t, salt)?;
            let y = receive_grid(&tx, &real, noise_seed)?;
            let at = |n: usize, m: usize| y[n * dims.subcarriers + m];
            let mut del = Delivery::empty(d);
            if dev.profile.is_static() {
                for (j, &(n, m)) in slots.iter().enumerate() {
                    let h = real.channel_at(n, m)?[0];
                    let mut obs = at(n, m);
                    if lattice.is_pilot(n, m) {
                        obs -= h.conj() * sp;
                    }
                    del.set(coords[j], codec.decode_data(coherent(obs, h, rho_d)?));
                }
            } else {
                let tiles = tile_estimates(&dev.profile, lattice, dims, &at, rho_p, rho_d + noise)?;
                let mut v = Vec::new();
                for (j, &(n, m)) in slots.iter().enumerate() {
                    let Some(&(g, err)) = tiles.get(&dev.profile.tile_of(n, m)) else { continue };
                    let (x, dist) = if lattice.is_pilot(n, m) {
                        equalize(at(n, m) - g * sp, g, sd, err, noise + rho_p * err)
                    } else {
                        equalize(at(n, m), g, sd, err, noise)
                    };
                    del.set(coords[j], codec.decode_data(x));
                    v.push(dist);
                }
                del.distortion = mean_or_zero(&v);
            }
            out.push(del);
        }
        Ok(out)
    }

    /// Effective uplink channel `(true, estimated)` of one device for sub-block `p`.
    fn uplink_channel(&self, profile: &CoherenceProfile, t: u32, p: usize, salt: u64) -> Result<(C64, C64)> {
        let parts = if profile.is_static() {
            let epoch = (t as u64 - 1) / self.config.phy.static_refresh as u64;
            [epoch, profile.device_id as u64, STATIC_EPOCH_TAG, salt]
        } else {
            [t as u64, profile.device_id as u64, p as u64, salt]
        };
        let h = SimRng::derived(self.seed, Stream::UplinkChannel, &parts).complex_normal(1.0);
        let rho_tau = self.config.phy.rho_uplink();
        let noise = self.config.phy.noise_var;
        let w = SimRng::derived(self.seed, Stream::UplinkPilotNoise, &parts).complex_normal(noise);
        let est = uplink_channel_estimate(&[h * math::sqrt(rho_tau) + w], rho_tau, noise)?;
        Ok((h, est.h_hat[0]))
    }

    #[allow(clippy::type_complexity)]
    fn over_the_air(
        &self,
        t: u32,
        salt: u64,
        increments: &[Vec<f64>],
        masks: &[Vec<bool>],
    ) -> Result<(Vec<f64>, Vec<f64>, Vec<C64>, f64)> {
        let d = self.task.dim();
        let rho_u = self.config.phy.rho_uplink();
        let noise = self.config.phy.noise_var;
        let mu = self.config.phy.clip_floor;
        let mut update = vec![0.0; d];
        let mut clean = vec![0.0; d];
        let mut residual = vec![C64::new(0.0, 0.0); d];
        let blocks = partition_coordinates(d, self.layout.p_ul)?;
        let mut sigma = 0.0;
        for (p, range) in blocks.iter().enumerate() {
            let len = range.len();
            let mut truth = Vec::with_capacity(self.scheduled.len());
            let mut hats = Vec::with_capacity(self.scheduled.len());
            for dev in &self.scheduled {
                let (h, h_hat) = self.uplink_channel(&dev.profile, t, p, salt)?;
                truth.push([h]);
                hats.push([h_hat]);
            }
            let hat_refs: Vec<&[C64]> = hats.iter().map(|h| h.as_slice()).collect();
            let u = combiner(self.config.phy.combiner, &hat_refs, 1);
            let inputs: Vec<BetaInput> = self
                .scheduled
                .iter()
                .enumerate()
                .map(|(k, dev)| {
                    let energy = range
                        .clone()
                        .filter(|&i| masks[k][i])
                        .map(|i| increments[k][i] * increments[k][i])
                        .sum::<f64>()
                        / len as f64;
                    BetaInput { g_hat: combine(&u, &hats[k]), weight: dev.weight, mean_energy: energy, budget: rho_u, mu }
                })
                .collect();
            let beta = choose_beta(&inputs, rho_u);
            let mut tx = Vec::with_capacity(self.scheduled.len());
            for (k, dev) in self.scheduled.iter().enumerate() {
                let pre = Precoder::new(inputs[k].g_hat, beta, mu)?;
                let symbols = precode(&increments[k][range.clone()], &masks[k][range.clone()], dev.weight, &pre, rho_u)?;
                tx.push(Transmission { gain: combine(&u, &truth[k]), symbols });
            }
            let noise_seed = derive_seed(self.seed, Stream::UplinkNoise, &[t as u64, p as u64, salt]);
            let noisy = estimate_update(&ota_aggregate(&tx, len, noise, noise_seed)?, rho_u, beta)?;
            let quiet = estimate_update(&ota_aggregate(&tx, len, 0.0, 0)?, rho_u, beta)?;
            for (j, i) in range.clone().enumerate() {
                update[i] = noisy[j].re;
                clean[i] = quiet[j].re;
                residual[i] = noisy[j] - quiet[j];
            }
            sigma += update_noise_variance(noise, rho_u, beta);
        }
        Ok((update, clean, residual, sigma / blocks.len() as f64))
    }
}

impl Delivery {
    fn empty(d: usize) -> Self {
        Self { mask: vec![false; d], values: vec![0.0; d], distortion: 0.0 }
    }

    fn set(&mut self, coord: usize, value: f64) {
        self.mask[coord] = true;
        self.values[coord] = value;
    }
}

impl Layout {
    fn build(config: &PipelineConfig, scheduled: &[ScheduledDevice], d: usize) -> Result<Self> {
        let phy = &config.phy;
        let dims = GridDims::new(phy.symbols, phy.subcarriers, phy.antennas)?;
        let profiles: Vec<CoherenceProfile> = scheduled.iter().map(|s| s.profile).collect();
        let has_dynamic = profiles.iter().any(|p| !p.is_static());
        let (geometry, map) = if has_dynamic {
            build_superblock(&profiles, d, dims, phy.freq_pilot_period)?
        } else {
            static_superblock(d, dims)?
        };
        let lattice = geometry.lattice();
        let rho = phy.rho();
        let slots = dims.slots();
        let pilots = lattice.positions(dims).len();
        let superposed_power = if geometry.pilot_phase() > 0 {
            optimal_power_split(rho, geometry.antennas, geometry.subblock_len, phy.noise_var)?
        } else {
            PowerSplit { rho_p: rho, rho_d: rho }
        };
        let (power, census) = match config.scheme {
            Scheme::Plmf | Scheme::Zf => {
                let superposed = map.entries.iter().filter(|e| e.kind == SlotKind::PilotSlotEmbedded).count();
                let census = SlotCensus { pilot: 0, data: slots - superposed, superposed, payload: map.len() };
                (superposed_power, census)
            }
            Scheme::Baseline => {
                let data = slots - pilots;
                if data == 0 {
                    return Err(Error::CapacityExceeded { required: d, available: 0 });
                }
                let census = SlotCensus { pilot: pilots, data, superposed: 0, payload: data.min(d) };
                (PowerSplit { rho_p: rho, rho_d: rho }, census)
            }
            Scheme::Additive => {
                if d > slots {
                    return Err(Error::CapacityExceeded { required: d, available: slots });
                }
                let power = if pilots == 0 {
                    PowerSplit { rho_p: 0.0, rho_d: rho }
                } else {
                    let frac = pilots as f64 / slots as f64;
                    let rho_d = superposed_power.rho_d.min(rho * (1.0 - frac));
                    PowerSplit { rho_p: (rho - rho_d) * slots as f64 / pilots as f64, rho_d }
                };
                let carrying = (0..dims.symbols)
                    .flat_map(|n| (0..dims.subcarriers).map(move |m| (n, m)))
                    .take(d)
                    .filter(|&(n, m)| lattice.is_pilot(n, m))
                    .count();
                let census =
                    SlotCensus { pilot: pilots - carrying, data: slots - pilots, superposed: carrying, payload: d };
                (power, census)
            }
        };
        let p_ul = if has_dynamic {
            d.div_ceil(geometry.subblock_len * geometry.subblock_width).clamp(1, d)
        } else {
            1
        };
        Ok(Self { geometry, map, lattice, power, census, p_ul })
    }
}

/// Coherent single-antenna detection `y / (√ρ h*)`.
fn coherent(y: C64, h: C64, power: f64) -> Result<C64> {
    let g = h.conj() * math::sqrt(power);
    if g.norm() < 1e-12 {
        return Err(Error::DecodeSingular);
    }
    Ok(y / g)
}

/// Per-tile LMMSE channel estimates from the lattice pilots a device sees.
fn tile_estimates(
    profile: &CoherenceProfile,
    lattice: &PilotLattice,
    dims: GridDims,
    at: &dyn Fn(usize, usize) -> C64,
    rho_p: f64,
    noise: f64,
) -> Result<BTreeMap<(usize, usize), (C64, f64)>> {
    let mut obs: BTreeMap<(usize, usize), Vec<C64>> = BTreeMap::new();
    for (n, m) in lattice.positions(dims) {
        obs.entry(profile.tile_of(n, m)).or_default().push(at(n, m));
    }
    obs.into_iter()
        .map(|(tile, ys)| estimate_from_pilots(&ys, rho_p, noise).map(|e| (tile, e)))
        .collect()
}

fn mean_or_zero(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}
