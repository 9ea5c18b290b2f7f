//! Quick end-to-end consistency checks behind `cofl selftest`.

use crate::config::{Format, ScenarioConfig};
use crate::harness::{build_task, run_scenario, with_threads};
use crate::output::csv_bytes;
use cofl_core::channel::awgn;
use cofl_core::downlink::{optimal_power_split, split_objective};
use cofl_core::grid::power_split_check;
use cofl_core::learner::{Impairments, RoundOverrides, Simulator, StepSchedule};
use cofl_core::task::{QuadraticSpec, TaskSpec};
use cofl_core::uplink::{estimate_update, update_noise_variance};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

/// Small quadratic scenario with statics and dynamics on an 8×5 grid.
pub fn small_scenario() -> ScenarioConfig {
    let mut cfg = ScenarioConfig {
        name: "selftest".into(),
        rounds: 8,
        seeds: 3,
        task: TaskSpec::Quadratic(QuadraticSpec {
            dim: 12,
            mu: 0.5,
            smoothness: 2.0,
            heterogeneity: 0.3,
            center_spread: 0.5,
            sample_noise: 1.0,
            center_scale: 1.0,
        }),
        ..ScenarioConfig::default()
    };
    cfg.devices.statics = 3;
    cfg.devices.dynamics = 3;
    cfg.devices.scheduled_dynamics = 3;
    cfg.devices.shard_size = 20;
    cfg.learning.schedule = StepSchedule::Constant { eta: 0.1 };
    cfg.output.format = Format::Csv;
    cfg
}

fn power_split() -> Check {
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for &(rho, lts) in &[(1.0, 3), (10.0, 4), (100.0, 8), (3.0, 17)] {
        let Ok(s) = optimal_power_split(rho, 1, lts, 1.0) else {
            ok = false;
            continue;
        };
        let used = s.rho_p + s.rho_d * (lts as f64 - 1.0);
        worst = worst.max((used - rho * lts as f64).abs() / (rho * lts as f64));
        let f0 = split_objective(s.rho_d, rho, 1, lts, 1.0);
        for eps in [1e-4, -1e-4] {
            ok &= split_objective(s.rho_d * (1.0 + eps), rho, 1, lts, 1.0) >= f0;
        }
    }
    check("power split binds and is locally optimal", ok && worst < 1e-12, format!("max constraint gap {worst:.2e}"))
}

fn noiseless_pipeline() -> Check {
    let mut cfg = small_scenario();
    cfg.channel.noise_var = 0.0;
    cfg.channel.clip_floor = 1e-300;
    let run = || -> Result<(f64, f64), crate::HarnessError> {
        let (task, init) = build_task(&cfg)?;
        let roster = cfg.roster()?;
        let sim = Simulator::new(&task, &roster, cfg.pipeline(), 1)?.with_initial_model(&init)?;
        let mut real = sim.clone();
        let theta = real.theta().to_vec();
        real.step_with(RoundOverrides::default())?;
        let statics = real.scheduled().iter().filter(|d| d.profile.is_static()).count();
        let decode_err = real
            .local_models()
            .take(statics)
            .flat_map(|m| m.iter().zip(&theta).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        let mut cfg_static = cfg.clone();
        cfg_static.devices.statics = 6;
        cfg_static.devices.dynamics = 0;
        cfg_static.devices.scheduled_dynamics = 0;
        let roster = cfg_static.roster()?;
        let sim = Simulator::new(&task, &roster, cfg_static.pipeline(), 1)?.with_initial_model(&init)?;
        let (_, a) = sim.clone().step_with(RoundOverrides::default())?;
        let (_, b) = sim.clone().step_with(RoundOverrides { salt: 0, impairments: Some(Impairments::NONE) })?;
        let gap = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        Ok((decode_err, gap(&a.update, &b.update)))
    };
    match run() {
        Ok((dec, upd)) => check(
            "noiseless static decode and all-static round are exact",
            dec < 1e-10 && upd < 1e-10,
            format!("decode {dec:.2e}, update {upd:.2e}"),
        ),
        Err(e) => check("noiseless static decode and all-static round are exact", false, e.to_string()),
    }
}

fn uplink_noise() -> Check {
    let (noise, rho, beta, n) = (1.0, 10.0, 0.3, 100_000);
    let r = awgn(n, noise, 42).and_then(|z| estimate_update(&z, rho, beta));
    match r {
        Ok(est) => {
            let emp = est.iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
            let want = update_noise_variance(noise, rho, beta);
            let rel = (emp / want - 1.0).abs();
            check("uplink post-scaling noise variance", rel < 0.02, format!("relative error {rel:.3}"))
        }
        Err(e) => check("uplink post-scaling noise variance", false, e.to_string()),
    }
}

fn determinism() -> Check {
    let cfg = small_scenario();
    let once = |threads| with_threads(threads, || run_scenario(&cfg).and_then(|r| csv_bytes(&r)));
    match (once(1), once(4)) {
        (Ok(Ok(a)), Ok(Ok(b))) => check("CSV identical across thread counts", a == b, format!("{} bytes", a.len())),
        (a, b) => check("CSV identical across thread counts", false, format!("{:?} / {:?}", a.err(), b.err())),
    }
}

pub fn run_all() -> Vec<Check> {
    vec![power_split(), noiseless_pipeline(), uplink_noise(), determinism(), power_budget()]
}

fn power_budget() -> Check {
    let cfg = small_scenario();
    let result = build_task(&cfg).and_then(|(task, _)| {
        let roster = cfg.roster()?;
        let sim = Simulator::new(&task, &roster, cfg.pipeline(), 0)?;
        let p = sim.power();
        Ok(power_split_check(p.rho_p, p.rho_d, cfg.pipeline().phy.rho(), sim.geometry()))
    });
    match result {
        Ok(c) => check("superposed power within budget", c.holds, format!("slack {:.3e}", c.slack)),
        Err(e) => check("superposed power within budget", false, e.to_string()),
    }
}
