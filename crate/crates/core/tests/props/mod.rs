//! Randomized invariant suites, shared by the core tests and the acceptance
//! target. Each suite runs a deterministic proptest runner for at least
//! `CASES` cases and reports how many it executed.

#![allow(dead_code)]

use std::cell::Cell;

use cofl_core::channel::{sample_channel, CoherenceProfile, DeviceClass, GridDims};
use cofl_core::grid::{build_superblock, PilotLattice};
use cofl_core::learner::{Impairments, LearnConfig, PhyConfig, PipelineConfig, Scheme, Simulator, StepSchedule};
use cofl_core::plmf::{apply_plmf, drift, LocalModelState, ModelHistory};
use cofl_core::scheduler::{Roster, RosterEntry};
use cofl_core::task::{LogisticSpec, MlpSpec, QuadraticSpec, Task, TaskSpec};
use cofl_core::uplink::{ota_aggregate, precode, Precoder, Transmission};
use cofl_core::{Error, C64};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestError, TestRng, TestRunner};

pub const CASES: u32 = 256;

fn runner() -> TestRunner {
    let config = Config { cases: CASES, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

/// Runs `test` over `strategy`; `Ok(cases)` or the minimal failing input.
fn check<S: Strategy>(strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<u32, String>
where
    S::Value: std::fmt::Debug,
{
    let count = Cell::new(0u32);
    let outcome = runner().run(&strategy, |v| {
        count.set(count.get() + 1);
        test(v)
    });
    match outcome {
        Ok(()) if count.get() >= 200 => Ok(count.get()),
        Ok(()) => Err(format!("only {} cases ran", count.get())),
        Err(TestError::Fail(reason, input)) => Err(format!("{reason} for {input:?}")),
        Err(TestError::Abort(reason)) => Err(format!("aborted: {reason}")),
    }
}

/// Brute force over the grid: each `(n, m)` gets its tile index from the
/// boundary positions `n ≡ offset (mod L)`, independently of `tile_of`.
pub fn tile_constancy() -> Result<u32, String> {
    let strat = (1usize..=8, 1usize..=8, 0usize..8, 0usize..8, 1usize..=32, 1usize..=32, 1usize..=2, any::<u64>());
    check(strat, |(lt, lf, ot, of, ns, nf, m, seed)| {
        let (ot, of) = (ot % lt, of % lf);
        let p = CoherenceProfile::new(1, lt, lf, DeviceClass::Dynamic).unwrap().with_offsets(ot, of).unwrap();
        let real = sample_channel(&p, GridDims::new(ns, nf, m).unwrap(), 1.0, seed).unwrap();
        let index = |x: usize, len: usize, off: usize| (1..=x).filter(|&k| k % len == off).count();
        let (tiles_t, tiles_f) = (index(ns - 1, lt, ot) + 1, index(nf - 1, lf, of) + 1);
        let shift = |len: usize, off: usize| (len - off) % len;
        prop_assert_eq!(tiles_t, (ns + shift(lt, ot)).div_ceil(lt));
        prop_assert_eq!(tiles_f, (nf + shift(lf, of)).div_ceil(lf));
        prop_assert_eq!(real.num_blocks(), tiles_t * tiles_f);
        let mut seen: Vec<((usize, usize), Vec<C64>)> = Vec::new();
        for n in 0..ns {
            for f in 0..nf {
                let key = (index(n, lt, ot), index(f, lf, of));
                let h = real.channel_at(n, f).unwrap().to_vec();
                match seen.iter().find(|(k, _)| *k == key) {
                    Some((_, first)) => prop_assert_eq!(first, &h),
                    None => {
                        prop_assert!(seen.iter().all(|(_, other)| *other != h), "distinct tiles share a gain");
                        seen.push((key, h));
                    }
                }
            }
        }
        prop_assert_eq!(seen.len(), tiles_t * tiles_f);
        Ok(())
    })
}

/// Placement is injective, deterministic and inside the grid; every
/// sub-block fits one coherence tile of each scheduled dynamic device whose
/// block lengths are multiples of the sub-block size.
pub fn placement_injectivity() -> Result<u32, String> {
    let strat = (
        (2usize..=4, 1usize..=3),
        prop::collection::vec((1usize..=3, 1usize..=3, 0usize..=1), 1..=4),
        0usize..=16,
        1usize..=8,
        prop::option::of(1usize..=4),
        0.0f64..=1.0,
    );
    check(strat, |((bt, bf), mults, extra, width, fpp, fill)| {
        let mut profiles = vec![CoherenceProfile::new(0, bt, bf, DeviceClass::Dynamic).unwrap()];
        for (k, &(mt, mf, jitter)) in mults.iter().enumerate() {
            let p = CoherenceProfile::new(k as u32 + 1, bt * mt + jitter, bf * mf, DeviceClass::Dynamic).unwrap();
            profiles.push(p);
        }
        let dims = GridDims::new(bt + extra, width, 1).unwrap();
        let capacity = match build_superblock(&profiles, usize::MAX, dims, fpp) {
            Err(Error::CapacityExceeded { available, .. }) => available,
            other => return Err(TestCaseError::fail(format!("expected capacity error, got {other:?}"))),
        };
        let s = ((capacity as f64 * fill) as usize).clamp(1, capacity);
        let (geo, map) = build_superblock(&profiles, s, dims, fpp).unwrap();
        let again = build_superblock(&profiles, s, dims, fpp).unwrap();
        prop_assert_eq!(&again.1, &map);
        prop_assert_eq!(map.len(), s);
        let mut slots: Vec<(usize, usize, usize)> = map.entries.iter().map(|e| (e.n, e.m, e.layer)).collect();
        prop_assert!(slots.iter().all(|&(n, m, l)| n < dims.symbols && m < dims.subcarriers && l < dims.antennas));
        slots.sort_unstable();
        slots.dedup();
        prop_assert_eq!(slots.len(), s, "two symbols share a slot");
        let mut next = 0;
        for strip in &map.strips {
            prop_assert_eq!(strip.symbols.start, next);
            next = strip.symbols.end;
            let f0 = (strip.subcarrier / geo.subblock_width) * geo.subblock_width;
            let f1 = (f0 + geo.subblock_width).min(dims.subcarriers);
            for p in &profiles {
                let aligned = p.coherence_time % geo.subblock_len == 0 && p.coherence_bandwidth % geo.subblock_width == 0;
                if aligned {
                    prop_assert!(p.covers(strip.time_start..strip.time_start + strip.len, f0..f1));
                }
            }
        }
        prop_assert_eq!(next, s);
        Ok(())
    })
}

/// PLMF drift equals the telescoped global increments since the last refresh.
pub fn plmf_telescoping() -> Result<u32, String> {
    let strat = (1usize..=6, 1u32..=12, any::<u64>()).prop_flat_map(|(d, rounds, seed)| {
        let steps = prop::collection::vec(prop::collection::vec(-1.0f64..1.0, d), rounds as usize);
        let masks = prop::collection::vec(prop::collection::vec(any::<bool>(), d), rounds as usize);
        (Just(d), steps, masks, Just(seed))
    });
    check(strat, |(d, steps, masks, _)| {
        let mut theta = vec![0.5; d];
        let mut state = LocalModelState::initial(&theta, 1);
        let mut history = ModelHistory::new(1, &theta);
        let mut trajectory = vec![theta.clone()];
        let mut local = theta.clone();
        let mut last = vec![1u32; d];
        for (k, (step, mask)) in steps.iter().zip(&masks).enumerate() {
            let t = k as u32 + 2;
            for (x, s) in theta.iter_mut().zip(step) {
                *x += s;
            }
            history.push(&theta);
            trajectory.push(theta.clone());
            apply_plmf(&mut state, mask, &theta, t).unwrap();
            for i in 0..d {
                if mask[i] {
                    local[i] = theta[i];
                    last[i] = t;
                }
            }
            prop_assert_eq!(&state.model, &local);
            prop_assert_eq!(&state.recency, &last);
            let r = drift(&mut state, &history).map_err(|e| TestCaseError::fail(e.to_string()))?;
            for i in 0..d {
                let from = last[i] as usize - 1;
                let telescoped: f64 = (from + 1..trajectory.len()).map(|s| trajectory[s][i] - trajectory[s - 1][i]).sum();
                prop_assert!((r[i] - telescoped).abs() <= 1e-12 * (1.0 + telescoped.abs()));
                if mask[i] {
                    prop_assert_eq!(r[i], 0.0);
                }
            }
        }
        Ok(())
    })
}

/// `χ ∈ (0, 1]`, `χ = 1` iff `|g| ≥ μ`, and the effective gain `g·α` is `βχ`.
pub fn chi_range() -> Result<u32, String> {
    let strat = (1e-6f64..5.0, 0.0f64..std::f64::consts::TAU, 1e-3f64..3.0, 1e-3f64..10.0);
    check(strat, |(mag, phase, mu, beta)| {
        let g = C64::from_polar(mag, phase);
        let pre = Precoder::new(g, beta, mu).unwrap();
        prop_assert!(pre.chi > 0.0 && pre.chi <= 1.0);
        prop_assert_eq!(pre.chi == 1.0, mag >= mu);
        let eff = g * pre.alpha;
        prop_assert!((eff - C64::new(beta * pre.chi, 0.0)).norm() <= 1e-12 * beta);
        Ok(())
    })
}

/// Masked coordinates are transmitted as exact zeros and receive nothing.
pub fn mask_silence() -> Result<u32, String> {
    let strat = (1usize..=32).prop_flat_map(|d| {
        (
            prop::collection::vec(-5.0f64..5.0, d),
            prop::collection::vec(any::<bool>(), d),
            0.01f64..1.0,
            (0.01f64..3.0, 0.0f64..6.3),
            1.0f64..100.0,
        )
    });
    check(strat, |(inc, mask, weight, (mag, phase), rho_u)| {
        let g = C64::from_polar(mag, phase);
        let pre = Precoder::new(g, 0.7, 0.1).unwrap();
        let x = precode(&inc, &mask, weight, &pre, rho_u).unwrap();
        let r = ota_aggregate(&[Transmission { gain: g, symbols: x.clone() }], inc.len(), 0.0, 0).unwrap();
        for i in 0..inc.len() {
            if !mask[i] {
                prop_assert_eq!(x[i], C64::new(0.0, 0.0));
                prop_assert_eq!(r[i], C64::new(0.0, 0.0));
            } else if inc[i] != 0.0 {
                prop_assert!(x[i].norm() > 0.0);
            }
        }
        Ok(())
    })
}

fn random_task(kind: u8, dim: usize, seed: u64) -> Task {
    let spec = match kind {
        0 => TaskSpec::Quadratic(QuadraticSpec {
            dim,
            mu: 0.5,
            smoothness: 3.0,
            heterogeneity: 0.3,
            center_spread: 1.0,
            sample_noise: 1.0,
            center_scale: 1.0,
        }),
        1 => TaskSpec::Logistic(LogisticSpec { dim, test_samples: 10, reg: 1e-2, signal: 3.0, heterogeneity: 0.5 }),
        _ => TaskSpec::TinyMlp(MlpSpec { hidden: dim, test_samples: 10, noise: 0.1, reg: 1e-3 }),
    };
    Task::generate(&spec, &[6, 9, 7], seed).unwrap()
}

/// Analytic gradients of every task against central differences (step 1e-6).
pub fn gradient_finite_difference() -> Result<u32, String> {
    let strat = (0u8..3, 2usize..=6, any::<u64>(), any::<u64>());
    check(strat, |(kind, dim, task_seed, point_seed)| {
        let task = random_task(kind, dim, task_seed);
        let mut rng = cofl_core::rng::SimRng::new(point_seed);
        let theta: Vec<f64> = (0..task.dim()).map(|_| rng.normal()).collect();
        let mut grad = vec![0.0; task.dim()];
        task.global_loss_grad(&theta, &mut grad);
        let h = 1e-6;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..task.dim() {
            let mut p = theta.clone();
            let mut m = theta.clone();
            p[i] += h;
            m[i] -= h;
            let fd = (task.global_loss(&p) - task.global_loss(&m)) / (2.0 * h);
            num += (fd - grad[i]).powi(2);
            den += grad[i].powi(2);
        }
        let rel = num.sqrt() / den.sqrt().max(1e-3);
        prop_assert!(rel < 1e-5, "relative error {rel:.3e} on task kind {kind}");
        Ok(())
    })
}

/// Per-round slot accounting closes on the grid size for every scheme, with
/// and without downlink impairments; the orthogonal lattice splits the grid.
pub fn slot_census() -> Result<u32, String> {
    let strat = (
        0usize..4,
        0usize..=3,
        prop::collection::vec((2usize..=6, 1usize..=3), 1..=3),
        (6usize..=12, 1usize..=4),
        2usize..=8,
        prop::option::of(2usize..=4),
        any::<bool>(),
        any::<u64>(),
    );
    check(strat, |(scheme, statics, dyns, (ns, nf), d, fpp, ideal, seed)| {
        let scheme = Scheme::ALL[scheme];
        let k = statics + dyns.len();
        let shards = vec![5; k];
        let task = Task::generate(
            &TaskSpec::Quadratic(QuadraticSpec {
                dim: d,
                mu: 0.5,
                smoothness: 2.0,
                heterogeneity: 0.1,
                center_spread: 1.0,
                sample_noise: 0.5,
                center_scale: 1.0,
            }),
            &shards,
            seed,
        )
        .unwrap();
        let mut devices: Vec<RosterEntry> = (0..statics)
            .map(|id| RosterEntry {
                profile: CoherenceProfile::new(id as u32, ns, nf, DeviceClass::Static).unwrap(),
                shard_size: 5,
            })
            .collect();
        for (j, &(lt, lf)) in dyns.iter().enumerate() {
            devices.push(RosterEntry {
                profile: CoherenceProfile::new((statics + j) as u32, lt, lf, DeviceClass::Dynamic).unwrap(),
                shard_size: 5,
            });
        }
        let impairments = if ideal { Impairments::NONE } else { Impairments::ALL };
        let phy = PhyConfig { symbols: ns, subcarriers: nf, freq_pilot_period: fpp, impairments, ..PhyConfig::default() };
        let config = PipelineConfig {
            scheme,
            dynamic_devices: dyns.len(),
            phy,
            learn: LearnConfig { local_steps: 1, batch_size: 0, schedule: StepSchedule::Constant { eta: 0.1 } },
        };
        let mut sim = match Simulator::new(&task, &Roster { devices }, config, seed) {
            Ok(s) => s,
            Err(Error::CapacityExceeded { .. }) | Err(Error::NegativePilotPower { .. }) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let report = sim.step().map_err(|e| TestCaseError::fail(e.to_string()))?;
        let c = report.census;
        prop_assert_eq!(c.pilot + c.data + c.superposed, ns * nf);
        prop_assert!(c.payload >= 1 && c.payload <= ns * nf);
        prop_assert!(report.comm_cost >= 1.0);

        let lattice = sim.geometry().lattice();
        let dims = sim.geometry().dims();
        let (pilots, data) = (lattice.positions(dims), lattice.data_positions(dims));
        prop_assert_eq!(pilots.len() + data.len(), ns * nf);
        let flat = PilotLattice::from_densities(1.0 / 3.0, fpp.map_or(0.0, |p| 1.0 / p as f64)).unwrap();
        for n in 0..ns {
            for m in 0..nf {
                let expect = n % 3 == 0 || fpp.is_some_and(|p| m % p == 0);
                prop_assert_eq!(flat.is_pilot(n, m), expect);
            }
        }
        Ok(())
    })
}

pub type Suite = fn() -> Result<u32, String>;

pub const SUITES: [(&str, Suite); 7] = [
    ("tile constancy", tile_constancy),
    ("placement injectivity", placement_injectivity),
    ("plmf telescoping", plmf_telescoping),
    ("chi range", chi_range),
    ("mask silence", mask_silence),
    ("gradient vs finite difference", gradient_finite_difference),
    ("slot census", slot_census),
];
