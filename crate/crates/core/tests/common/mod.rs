//! Independent oracles shared by the core integration tests and the
//! acceptance target. Nothing here calls the code under test to produce an
//! expected value.

#![allow(dead_code)]

use cofl_core::channel::{CoherenceProfile, DeviceClass};
use cofl_core::downlink::{decode_static, estimate_equivalent_channel, optimal_power_split, transmit_superposed, PilotMatrix};
use cofl_core::learner::{local_sgd, Impairments, LearnConfig, PhyConfig, PipelineConfig, Scheme, Simulator, StepSchedule};
use cofl_core::rng::{derive_seed, SimRng, Stream};
use cofl_core::scheduler::{Roster, RosterEntry};
use cofl_core::task::{QuadraticSpec, Task, TaskSpec};
use cofl_core::uplink::{estimate_update, ota_aggregate, precode, uplink_channel_estimate, Precoder, Transmission};
use cofl_core::{Error, C64};

/// Result of one check: pass flag plus a one-line measurement summary.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub passed: bool,
    pub detail: String,
}

impl Outcome {
    pub fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self { passed, detail: detail.into() }
    }

    pub fn assert(&self) {
        assert!(self.passed, "{}", self.detail);
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn log_uniform(rng: &mut SimRng, lo: f64, hi: f64) -> f64 {
    (rng.uniform_in(lo.ln(), hi.ln())).exp()
}

/// Sign-exact golden-section minimizer of the reciprocal effective SNR
/// `σ²/ρ_d + Mσ²/(σ² + Mρ_p)` with `ρ_p = ρL/M − ρ_d(L − M)`.
///
/// Objective values are never subtracted directly: the difference of two
/// evaluations is factored as `σ²(b − a)·[1/(ab) − M²(L − M)/(D_a D_b)]`,
/// which keeps the comparison exact to rounding right up to the minimizer.
/// That lets the bracket shrink to a few ulps instead of stalling at
/// `√ε` relative width.
pub fn golden_section_split(rho: f64, m: usize, lts: usize, noise: f64) -> (f64, f64) {
    let (mf, lf) = (m as f64, lts as f64);
    let c = rho * lf / mf;
    let span = lf - mf;
    let pilot = |x: f64| c - x * span;
    // f(a) < f(b)?
    let less = |a: f64, b: f64| {
        let (da, db) = (noise + mf * pilot(a), noise + mf * pilot(b));
        let bracket = 1.0 / (a * b) - mf * mf * span / (da * db);
        noise * (b - a) * bracket < 0.0
    };
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0, c / span);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    for _ in 0..400 {
        if less(x1, x2) {
            hi = x2;
            x2 = x1;
            x1 = hi - inv_phi * (hi - lo);
        } else {
            lo = x1;
            x1 = x2;
            x2 = lo + inv_phi * (hi - lo);
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
    }
    let rho_d = 0.5 * (lo + hi);
    (pilot(rho_d), rho_d)
}

/// Closed-form split against the golden-section oracle over 50 random
/// feasible tuples; also checks that the power constraint binds.
pub fn power_split_optimality() -> Outcome {
    let mut rng = SimRng::new(0x5eed_0001);
    let (mut worst_rel, mut worst_bind, mut tested, mut infeasible) = (0.0f64, 0.0f64, 0, 0);
    while tested < 50 {
        let rho = log_uniform(&mut rng, 0.1, 100.0);
        let m = [1, 2, 4, 8][rng.index(4)];
        let lts = m + 1 + rng.index(64 - m);
        let noise = log_uniform(&mut rng, 0.1, 10.0);
        let split = match optimal_power_split(rho, m, lts, noise) {
            Ok(s) => s,
            Err(Error::NegativePilotPower { .. }) => {
                infeasible += 1;
                continue;
            }
            Err(e) => return Outcome::new(false, format!("unexpected error {e}")),
        };
        let (rho_p, rho_d) = golden_section_split(rho, m, lts, noise);
        worst_rel = worst_rel.max(rel_err(split.rho_d, rho_d)).max(rel_err(split.rho_p, rho_p));
        let used = m as f64 * (split.rho_p + split.rho_d * (lts - m) as f64);
        let budget = rho * lts as f64;
        worst_bind = worst_bind.max((used - budget).abs() / budget);
        tested += 1;
    }
    Outcome::new(
        worst_rel <= 1e-9 && worst_bind <= 1e-12,
        format!(
            "{tested} tuples ({infeasible} infeasible draws skipped): max rel err {worst_rel:.2e} (<= 1e-9), constraint gap {worst_bind:.2e} (<= 1e-12)"
        ),
    )
}

/// Draws `f ~ CN(0, M·I)` (the prior under which the equivalent-channel
/// shrinkage is the MMSE), sends pilots through `X_p`, and returns
/// `(mean ‖f − f̄‖², M·σ_e², |corr(f̄, f − f̄)|)`.
pub fn equivalent_channel_mc(m: usize, rho_p: f64, noise: f64, trials: usize, seed: u64) -> (f64, f64, f64) {
    let xp = PilotMatrix::dft(m);
    let mut rng = SimRng::new(seed);
    let (mut err, mut cross, mut est_pow) = (0.0, C64::new(0.0, 0.0), 0.0);
    let mut sigma_e2 = 0.0;
    for _ in 0..trials {
        let f: Vec<C64> = (0..m).map(|_| rng.complex_normal(m as f64)).collect();
        let clean = xp.matrix().left_mul(&f);
        let y: Vec<C64> = clean.iter().map(|z| z * rho_p.sqrt() + rng.complex_normal(noise)).collect();
        let est = estimate_equivalent_channel(&y, &xp, rho_p, noise).expect("valid estimator");
        sigma_e2 = est.error_variance;
        for (fi, bi) in f.iter().zip(&est.f_bar) {
            let e = fi - bi;
            err += e.norm_sqr();
            cross += bi.conj() * e;
            est_pow += bi.norm_sqr();
        }
    }
    let n = trials as f64;
    let corr = cross.norm() / (est_pow * err).sqrt();
    (err / n, m as f64 * sigma_e2, corr)
}

/// Uplink pilot MMSE: `(mean ‖h̃ − ĥ‖², M·σ²/(ρ_τ + σ²))`.
pub fn uplink_estimate_mc(m: usize, rho_tau: f64, noise: f64, trials: usize, seed: u64) -> (f64, f64) {
    let mut rng = SimRng::new(seed);
    let mut err = 0.0;
    for _ in 0..trials {
        let h: Vec<C64> = (0..m).map(|_| rng.complex_normal(1.0)).collect();
        let y: Vec<C64> = h.iter().map(|z| z * rho_tau.sqrt() + rng.complex_normal(noise)).collect();
        let est = uplink_channel_estimate(&y, rho_tau, noise).expect("valid estimator");
        err += h.iter().zip(&est.h_hat).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>();
    }
    (err / trials as f64, m as f64 * noise / (rho_tau + noise))
}

pub fn mmse_variance_laws() -> Outcome {
    let trials = 100_000;
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (k, &(m, rho_p, noise)) in [(1, 1.0, 1.0), (2, 4.0, 2.0), (4, 0.5, 1.0), (8, 2.0, 0.3), (2, 10.0, 5.0)].iter().enumerate() {
        let (emp, law, _) = equivalent_channel_mc(m, rho_p, noise, trials, 100 + k as u64);
        worst = worst.max(rel_err(emp, law));
    }
    parts.push(format!("downlink max rel dev {worst:.4}"));
    let mut worst_ul: f64 = 0.0;
    for (k, &(m, rho_tau, noise)) in [(1, 9.0, 1.0), (2, 1.0, 1.0), (4, 3.0, 0.5), (8, 10.0, 2.0), (1, 0.2, 1.0)].iter().enumerate() {
        let (emp, law) = uplink_estimate_mc(m, rho_tau, noise, trials, 200 + k as u64);
        worst_ul = worst_ul.max(rel_err(emp, law));
    }
    parts.push(format!("uplink max rel dev {worst_ul:.4}"));
    Outcome::new(worst <= 0.02 && worst_ul <= 0.02, format!("{} (<= 0.02, 5 points each, 1e5 trials)", parts.join(", ")))
}

/// Largest decode error over random noiseless product-superposition
/// sub-blocks, and the number of symbols checked. A single-antenna device
/// sees one scalar per data column, so data-phase symbols are only
/// identifiable for `M = 1`; for larger `M` the embedded symbols are checked.
pub fn static_decode_error(seed: u64) -> (f64, usize) {
    let mut rng = SimRng::new(seed);
    let (mut worst, mut count) = (0.0f64, 0);
    for m in [1usize, 2, 4] {
        for lts in m + 1..=m + 6 {
            for _ in 0..20 {
                let xp = PilotMatrix::dft(m);
                let split = optimal_power_split(10.0, m, lts, 1.0).expect("feasible split");
                let embedded: Vec<C64> =
                    (0..m).map(|_| C64::new(rng.normal(), 1.0) * std::f64::consts::FRAC_1_SQRT_2).collect();
                let data: Vec<C64> = (0..m * (lts - m)).map(|_| C64::new(rng.normal(), 0.0)).collect();
                let sig = transmit_superposed(&embedded, &data, &xp, split.rho_p, split.rho_d).expect("valid block");
                let h: Vec<C64> = (0..m).map(|_| rng.complex_normal(1.0)).collect();
                let y: Vec<C64> = (0..lts)
                    .map(|c| (0..m).map(|r| h[r].conj() * sig.matrix[(r, c)]).sum())
                    .collect();
                let dec = decode_static(&y, &xp, &h, split.rho_p, split.rho_d).expect("decodable");
                for (a, b) in dec.embedded.iter().zip(&embedded) {
                    worst = worst.max((a - b).norm());
                }
                count += embedded.len();
                if m == 1 {
                    for (a, b) in dec.data.iter().zip(&data) {
                        worst = worst.max((a - b).norm());
                    }
                    count += data.len();
                }
            }
        }
    }
    (worst, count)
}

/// Statics with ids `0..statics`; shard sizes are taken from `shards` by id.
pub fn static_roster(statics: usize, dims: (usize, usize), shards: &[usize]) -> Roster {
    Roster {
        devices: (0..statics)
            .map(|k| RosterEntry {
                profile: CoherenceProfile::new(k as u32, dims.0, dims.1, DeviceClass::Static).unwrap(),
                shard_size: shards[k],
            })
            .collect(),
    }
}

/// Statics first (ids `0..statics`), then dynamics with the given `(L_t, L_f)`.
pub fn mixed_roster(statics: usize, dynamics: &[(usize, usize)], dims: (usize, usize), shards: &[usize]) -> Roster {
    let mut roster = static_roster(statics, dims, shards);
    for (j, &(lt, lf)) in dynamics.iter().enumerate() {
        let id = (statics + j) as u32;
        roster.devices.push(RosterEntry {
            profile: CoherenceProfile::new(id, lt, lf, DeviceClass::Dynamic).unwrap(),
            shard_size: shards[statics + j],
        });
    }
    roster
}

pub fn quadratic(dim: usize, shards: &[usize], seed: u64) -> Task {
    let spec = TaskSpec::Quadratic(QuadraticSpec {
        dim,
        mu: 0.5,
        smoothness: 2.0,
        heterogeneity: 0.2,
        center_spread: 1.0,
        sample_noise: 1.0,
        center_scale: 2.0,
    });
    Task::generate(&spec, shards, seed).unwrap()
}

pub fn pipeline(scheme: Scheme, dynamics: usize, phy: PhyConfig, eta: f64, tau: usize, batch: usize) -> PipelineConfig {
    PipelineConfig {
        scheme,
        dynamic_devices: dynamics,
        phy,
        learn: LearnConfig { local_steps: tau, batch_size: batch, schedule: StepSchedule::Constant { eta } },
    }
}

/// Reference federated averaging: `θ ← θ + Σ_k a_k Δθ_k` with the weights
/// recomputed from shard sizes and the simulator's SGD seed convention.
pub fn reference_fedavg(task: &Task, ids: &[u32], theta0: &[f64], rounds: u32, seed: u64, cfg: &PipelineConfig) -> Vec<Vec<f64>> {
    let total: usize = ids.iter().map(|&k| task.shard_len(k as usize)).sum();
    let mut theta = theta0.to_vec();
    let mut out = Vec::new();
    let tau = cfg.learn.local_steps;
    for t in 1..=rounds {
        let eta = match cfg.learn.schedule {
            StepSchedule::Constant { eta } => eta,
            StepSchedule::Diminishing { beta, mu, gamma } => beta / (mu * (t as f64 + gamma)),
        };
        let mut acc = vec![0.0; theta.len()];
        for &k in ids {
            let a = task.shard_len(k as usize) as f64 / total as f64;
            let seed = derive_seed(seed, Stream::Sgd, &[t as u64, k as u64]);
            let inc = local_sgd(task, k as usize, &theta, tau, eta / tau as f64, cfg.learn.batch_size, seed).unwrap();
            for (s, x) in acc.iter_mut().zip(&inc) {
                *s += a * x;
            }
        }
        for (th, u) in theta.iter_mut().zip(&acc) {
            *th += u;
        }
        out.push(theta.clone());
    }
    out
}

pub fn noiseless_exactness() -> Outcome {
    // (a) static decode of random sub-blocks.
    let (decode_err, symbols) = static_decode_error(0x5eed_0003);

    // (b) all-static pipeline with σ² = 0 against reference averaging.
    let shards = [30, 31, 32, 33];
    let task = quadratic(12, &shards, 11);
    let phy = PhyConfig { noise_var: 0.0, clip_floor: 1e-300, ..PhyConfig::default() };
    let cfg = pipeline(Scheme::Plmf, 0, phy, 0.1, 2, 0);
    let roster = static_roster(4, (phy.symbols, phy.subcarriers), &shards);
    let mut sim = Simulator::new(&task, &roster, cfg, 5).unwrap();
    let theta0 = sim.theta().to_vec();
    let ids: Vec<u32> = sim.scheduled().iter().map(|s| s.profile.device_id).collect();
    let reference = reference_fedavg(&task, &ids, &theta0, 10, 5, &cfg);
    let mut pipe_err: f64 = 0.0;
    for want in &reference {
        sim.step().unwrap();
        for (a, b) in sim.theta().iter().zip(want) {
            pipe_err = pipe_err.max((a - b).abs() / b.abs().max(1.0));
        }
    }

    // (c) ideal uplink: full masks, |g| >= μ, σ² = 0.
    let mut rng = SimRng::new(0x5eed_0004);
    let mut ul_err: f64 = 0.0;
    for _ in 0..50 {
        let k = 1 + rng.index(6);
        let d = 1 + rng.index(20);
        let (rho_u, beta, mu) = (rng.uniform_in(1.0, 100.0), rng.uniform_in(0.1, 3.0), 0.1);
        let weights: Vec<f64> = {
            let raw: Vec<f64> = (0..k).map(|_| rng.uniform_in(0.1, 1.0)).collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|w| w / s).collect()
        };
        let mut want = vec![0.0; d];
        let mut tx = Vec::new();
        for w in &weights {
            let inc: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
            for (s, x) in want.iter_mut().zip(&inc) {
                *s += w * x;
            }
            let g = C64::from_polar(rng.uniform_in(mu, 3.0), rng.uniform_in(0.0, std::f64::consts::TAU));
            let pre = Precoder::new(g, beta, mu).unwrap();
            tx.push(Transmission { gain: g, symbols: precode(&inc, &vec![true; d], *w, &pre, rho_u).unwrap() });
        }
        let est = estimate_update(&ota_aggregate(&tx, d, 0.0, 1).unwrap(), rho_u, beta).unwrap();
        for (e, w) in est.iter().zip(&want) {
            ul_err = ul_err.max((e.re - w).abs()).max(e.im.abs());
        }
    }
    Outcome::new(
        decode_err <= 1e-10 && pipe_err <= 1e-10 && ul_err <= 1e-10,
        format!(
            "static decode {decode_err:.1e} over {symbols} symbols; all-static pipeline {pipe_err:.1e} over 10 rounds; ideal uplink {ul_err:.1e} (each <= 1e-10)"
        ),
    )
}

/// Post-scaling uplink noise `E|n_i|²` against `σ²/(ρ_u β²)`.
pub fn uplink_noise_covariance() -> Outcome {
    let len = 100_000;
    let mut worst: f64 = 0.0;
    for (k, &(noise, rho_u, beta)) in
        [(1.0, 100.0, 1.0), (1.0, 10.0, 0.5), (2.0, 1.0, 2.0), (0.5, 31.6, 0.1), (1.0, 1000.0, 0.03)].iter().enumerate()
    {
        // A silent device rides along: masked coordinates must add nothing.
        let pre = Precoder::new(C64::new(0.8, 0.3), beta, 0.1).unwrap();
        let silent = precode(&vec![1.0; len], &vec![false; len], 0.5, &pre, rho_u).unwrap();
        let tx = [Transmission { gain: C64::new(0.8, 0.3), symbols: silent }];
        let r = ota_aggregate(&tx, len, noise, 300 + k as u64).unwrap();
        let est = estimate_update(&r, rho_u, beta).unwrap();
        let emp = est.iter().map(|z| z.norm_sqr()).sum::<f64>() / len as f64;
        worst = worst.max(rel_err(emp, noise / (rho_u * beta * beta)));
    }
    Outcome::new(worst <= 0.02, format!("max rel dev {worst:.4} over 5 points x 1e5 coordinates (<= 0.02)"))
}

pub fn ideal_impairments_equivalence(rounds: u32) -> Outcome {
    let shards = [20, 25, 30, 35, 40, 45];
    let task = quadratic(6, &shards, 3);
    let phy = PhyConfig { impairments: Impairments::NONE, ..PhyConfig::default() };
    let roster = mixed_roster(3, &[(4, 2), (6, 1), (3, 5)], (phy.symbols, phy.subcarriers), &shards);
    let cfg = pipeline(Scheme::Plmf, 3, phy, 0.2, 3, 4);
    let mut sim = Simulator::new(&task, &roster, cfg, 9).unwrap();
    let ids: Vec<u32> = sim.scheduled().iter().map(|s| s.profile.device_id).collect();
    let reference = reference_fedavg(&task, &ids, sim.theta(), rounds, 9, &cfg);
    let mut identical = true;
    for want in &reference {
        sim.step().unwrap();
        identical &= sim.theta().iter().zip(want).all(|(a, b)| a.to_bits() == b.to_bits());
    }
    Outcome::new(identical, format!("{rounds} rounds, bit-identical: {identical}"))
}
