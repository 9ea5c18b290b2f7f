//! Scenario orchestration: seeds in parallel, per-round rows, summaries,
//! bound evaluation and scheme comparison.

use crate::config::ScenarioConfig;
use crate::error::HarnessError;
use cofl_core::grid::SuperBlockGeometry;
use cofl_core::learner::{
    evaluate_bounds, measure_error_constants, BoundConstants, BoundCurves, ErrorConstants, MeasureOptions, RoundReport,
    Simulator, StartPoint,
};
use cofl_core::rng::{derive_seed, Stream};
use cofl_core::stats;
use cofl_core::task::{estimate_smoothness, Task};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// One CSV row: a round of one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub scenario_id: String,
    pub seed: u64,
    pub round: u32,
    pub scheme: String,
    pub lambda: f64,
    pub snr_db: f64,
    pub loss: f64,
    pub dist_sq: Option<f64>,
    pub acc: Option<f64>,
    /// Cumulative normalised communication cost.
    pub comm_cost: f64,
    pub sigma_ul2: f64,
    pub bound_convex: Option<f64>,
    pub bound_sconvex: Option<f64>,
    pub bound_nonconvex: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub rounds: Vec<RoundReport>,
}

/// Mean and sample standard deviation across seeds at one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub round: u32,
    pub loss_mean: f64,
    pub loss_std: f64,
    pub dist_sq_mean: Option<f64>,
    pub dist_sq_std: Option<f64>,
    pub acc_mean: Option<f64>,
    pub acc_std: Option<f64>,
    pub averaged_loss_mean: f64,
    /// Running mean of `‖∇F(θ^t)‖²` over rounds, averaged across seeds.
    pub avg_grad_norm_sq_mean: f64,
    pub comm_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub measured: ErrorConstants,
    pub constants: BoundConstants,
    pub start: StartPoint,
    pub curves: BoundCurves,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario_id: String,
    pub config: ScenarioConfig,
    pub lambda: f64,
    pub geometry: SuperBlockGeometry,
    /// `F*`: exact for the quadratic, otherwise estimated.
    pub optimal_loss: Option<f64>,
    pub optimal_loss_estimated: bool,
    pub runs: Vec<SeedRun>,
    pub summary: Vec<SummaryRow>,
    pub bounds: Option<BoundReport>,
}

/// The dataset and shared initial model of a scenario.
pub fn build_task(cfg: &ScenarioConfig) -> Result<(Task, Vec<f64>), HarnessError> {
    let shards = vec![cfg.devices.shard_size; cfg.num_devices()];
    let task = Task::generate(&cfg.task, &shards, cfg.task_seed)?;
    let init = task.initial_model(derive_seed(cfg.task_seed, Stream::Init, &[]));
    Ok((task, init))
}

/// Run every seed of `cfg` (in parallel on the current rayon pool).
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioReport, HarnessError> {
    cfg.validate()?;
    let (task, init) = build_task(cfg)?;
    let roster = cfg.roster()?;
    let pipeline = cfg.pipeline();
    let probe = Simulator::new(&task, &roster, pipeline, cfg.base_seed)?.with_initial_model(&init)?;
    let geometry = *probe.geometry();
    let lambda = geometry.lambda();

    let seeds: Vec<u64> = (0..cfg.seeds as u64).map(|s| cfg.base_seed + s).collect();
    let runs = seeds
        .par_iter()
        .map(|&seed| -> Result<SeedRun, HarnessError> {
            let mut sim = Simulator::new(&task, &roster, pipeline, seed)?.with_initial_model(&init)?;
            let rounds = (0..cfg.rounds).map(|_| sim.step()).collect::<Result<Vec<_>, _>>()?;
            Ok(SeedRun { seed, rounds })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let (optimal_loss, estimated) = match task.optimal_loss() {
        Some(f) => (Some(f), false),
        None if cfg.bounds.enabled => {
            let observed = runs.iter().flat_map(|r| r.rounds.iter().map(|x| x.loss)).fold(f64::INFINITY, f64::min);
            (Some(centralized_optimum(&task, &init, cfg).min(observed)), true)
        }
        None => (None, true),
    };
    let bounds = if cfg.bounds.enabled {
        Some(bound_report(cfg, &task, &init, &probe, optimal_loss.unwrap_or(0.0))?)
    } else {
        None
    };
    let summary = summarize(&runs);
    Ok(ScenarioReport {
        scenario_id: cfg.name.clone(),
        config: cfg.clone(),
        lambda,
        geometry,
        optimal_loss,
        optimal_loss_estimated: estimated,
        runs,
        summary,
        bounds,
    })
}

/// Long full-batch gradient descent from the shared start: `10 × rounds` steps
/// at the first-round step size.
pub fn centralized_optimum(task: &Task, init: &[f64], cfg: &ScenarioConfig) -> f64 {
    let eta = cfg.learning.schedule.eta(1);
    let mut theta = init.to_vec();
    let mut grad = vec![0.0; task.dim()];
    let mut best = f64::INFINITY;
    for _ in 0..10 * cfg.rounds as usize {
        best = best.min(task.global_loss_grad(&theta, &mut grad));
        for (t, g) in theta.iter_mut().zip(&grad) {
            *t -= eta * g;
        }
    }
    best.min(task.global_loss(&theta))
}

/// `L` for the bounds: configured, known, or estimated along a centralized run.
pub fn bound_smoothness(cfg: &ScenarioConfig, task: &Task, init: &[f64]) -> f64 {
    if cfg.bounds.smoothness > 0.0 {
        return cfg.bounds.smoothness;
    }
    if let Some(l) = task.smoothness() {
        return l;
    }
    let eta = cfg.learning.schedule.eta(1);
    let mut points = vec![init.to_vec()];
    let mut theta = init.to_vec();
    let mut grad = vec![0.0; task.dim()];
    for k in 1..=10 * cfg.rounds as usize {
        task.global_loss_grad(&theta, &mut grad);
        for (t, g) in theta.iter_mut().zip(&grad) {
            *t -= eta * g;
        }
        if k % cfg.rounds.max(1) as usize == 0 {
            points.push(theta.clone());
        }
    }
    let refs: Vec<&[f64]> = points.iter().map(Vec::as_slice).collect();
    estimate_smoothness(task, &refs, 50, cfg.task_seed)
}

fn bound_report(
    cfg: &ScenarioConfig,
    task: &Task,
    init: &[f64],
    sim: &Simulator<'_>,
    f_star: f64,
) -> Result<BoundReport, HarnessError> {
    let measured = measure_error_constants(
        sim,
        MeasureOptions { rounds: cfg.rounds, probe_every: cfg.bounds.probe_every, n_mc: cfg.bounds.n_mc },
    )?;
    let constants = BoundConstants {
        dim: task.dim(),
        smoothness: bound_smoothness(cfg, task, init),
        strong_convexity: task.strong_convexity(),
        sigma_g2: measured.sigma_g2,
        sigma_ul2: measured.sigma_ul2,
        sigma_dl2: measured.sigma_dl2,
        bias_sq: measured.bias_sq,
    };
    let start = StartPoint {
        dist_sq: task.optimum().map(|o| cofl_core::math::dist_sq(init, o)),
        loss_gap: task.global_loss(init) - f_star,
    };
    let curves = evaluate_bounds(&cfg.learning.schedule, &constants, &start, cfg.rounds as usize)?;
    Ok(BoundReport { measured, constants, start, curves })
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let sd = if xs.len() > 1 { stats::std_dev(xs) } else { 0.0 };
    (stats::mean(xs), sd)
}

fn optional_stats(xs: Vec<Option<f64>>) -> (Option<f64>, Option<f64>) {
    match xs.into_iter().collect::<Option<Vec<f64>>>() {
        Some(v) => {
            let (m, s) = mean_std(&v);
            (Some(m), Some(s))
        }
        None => (None, None),
    }
}

pub fn summarize(runs: &[SeedRun]) -> Vec<SummaryRow> {
    let rounds = runs.iter().map(|r| r.rounds.len()).min().unwrap_or(0);
    let mut grad_sums = vec![0.0; runs.len()];
    (0..rounds)
        .map(|t| {
            let at: Vec<&RoundReport> = runs.iter().map(|r| &r.rounds[t]).collect();
            let (loss_mean, loss_std) = mean_std(&at.iter().map(|r| r.loss).collect::<Vec<_>>());
            let (dist_sq_mean, dist_sq_std) = optional_stats(at.iter().map(|r| r.dist_sq).collect());
            let (acc_mean, acc_std) = optional_stats(at.iter().map(|r| r.accuracy).collect());
            for (s, r) in grad_sums.iter_mut().zip(&at) {
                *s += r.grad_norm_sq;
            }
            let avg_grad: Vec<f64> = grad_sums.iter().map(|s| s / (t + 1) as f64).collect();
            SummaryRow {
                round: at[0].round,
                loss_mean,
                loss_std,
                dist_sq_mean,
                dist_sq_std,
                acc_mean,
                acc_std,
                averaged_loss_mean: stats::mean(&at.iter().map(|r| r.averaged_loss).collect::<Vec<_>>()),
                avg_grad_norm_sq_mean: stats::mean(&avg_grad),
                comm_cost: at[0].cumulative_comm_cost,
            }
        })
        .collect()
}

impl ScenarioReport {
    pub fn rows(&self) -> Vec<Row> {
        let curve = |c: &Option<Vec<f64>>, t: usize| c.as_ref().map(|v| v[t]);
        let mut out = Vec::with_capacity(self.runs.len() * self.summary.len());
        for run in &self.runs {
            for (t, r) in run.rounds.iter().enumerate() {
                let b = self.bounds.as_ref().map(|b| &b.curves);
                out.push(Row {
                    scenario_id: self.scenario_id.clone(),
                    seed: run.seed,
                    round: r.round,
                    scheme: self.config.scheme.name().into(),
                    lambda: self.lambda,
                    snr_db: self.config.channel.snr_db,
                    loss: r.loss,
                    dist_sq: r.dist_sq,
                    acc: r.accuracy,
                    comm_cost: r.cumulative_comm_cost,
                    sigma_ul2: r.sigma_ul2,
                    bound_convex: b.and_then(|b| curve(&b.convex, t)),
                    bound_sconvex: b.and_then(|b| curve(&b.strongly_convex, t)),
                    bound_nonconvex: b.and_then(|b| curve(&b.nonconvex, t)),
                });
            }
        }
        out
    }

    pub fn terminal(&self) -> &SummaryRow {
        self.summary.last().expect("scenarios run at least one round")
    }

    /// Terminal loss of every seed.
    pub fn terminal_losses(&self) -> Vec<f64> {
        self.runs.iter().filter_map(|r| r.rounds.last().map(|x| x.loss)).collect()
    }

    /// Communication spent when the seed-mean loss first reaches `target`.
    pub fn cost_to_reach(&self, target: f64) -> Option<f64> {
        self.summary.iter().find(|s| s.loss_mean <= target).map(|s| s.comm_cost)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub scenario_id: String,
    pub scheme: String,
    /// Last round affordable within the budget.
    pub round: u32,
    pub loss_mean: f64,
    pub loss_std: f64,
    /// Competition rank (ties share a rank).
    pub rank: usize,
    /// `±1 std` bands do not overlap with the next-ranked entry.
    pub separated_from_next: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetRanking {
    pub budget: f64,
    pub entries: Vec<RankEntry>,
}

/// Rank scenarios by seed-mean loss at each communication budget.
pub fn compare_schemes(reports: &[ScenarioReport], budgets: &[f64]) -> Result<Vec<BudgetRanking>, HarnessError> {
    let tol = 1e-9;
    let mut out = Vec::with_capacity(budgets.len());
    for &budget in budgets {
        let mut entries = Vec::with_capacity(reports.len());
        for rep in reports {
            let spent = rep.terminal().comm_cost;
            let row = rep.summary.iter().rev().find(|s| s.comm_cost <= budget + tol);
            let row = match row {
                Some(r) if budget <= spent + tol => r,
                _ => {
                    return Err(HarnessError::MismatchedBudget {
                        budget,
                        scheme: rep.config.scheme.name().into(),
                        available: spent,
                    })
                }
            };
            entries.push(RankEntry {
                scenario_id: rep.scenario_id.clone(),
                scheme: rep.config.scheme.name().into(),
                round: row.round,
                loss_mean: row.loss_mean,
                loss_std: row.loss_std,
                rank: 0,
                separated_from_next: false,
            });
        }
        entries.sort_by(|a, b| a.loss_mean.total_cmp(&b.loss_mean));
        for i in 0..entries.len() {
            entries[i].rank = if i > 0 && entries[i].loss_mean == entries[i - 1].loss_mean {
                entries[i - 1].rank
            } else {
                i + 1
            };
            if let Some(next) = entries.get(i + 1) {
                let gap = next.loss_mean - entries[i].loss_mean;
                let sep = gap > entries[i].loss_std + next.loss_std;
                entries[i].separated_from_next = sep;
            }
        }
        out.push(BudgetRanking { budget, entries });
    }
    Ok(out)
}

/// One sweep axis: a dotted config path and the TOML literals to try.
#[derive(Debug, Clone, PartialEq)]
pub struct GridAxis {
    pub path: String,
    pub values: Vec<String>,
}

impl std::str::FromStr for GridAxis {
    type Err = HarnessError;

    /// `path=v1,v2,...`
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (path, values) = s
            .split_once('=')
            .ok_or_else(|| HarnessError::Config(format!("grid axis {s:?}: expected path=v1,v2")))?;
        let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
        if path.trim().is_empty() || values.is_empty() {
            return Err(HarnessError::Config(format!("grid axis {s:?}: expected path=v1,v2")));
        }
        Ok(Self { path: path.trim().into(), values })
    }
}

/// Cartesian product of the axes applied to `template`, first axis outermost.
pub fn expand_grid(template: &ScenarioConfig, axes: &[GridAxis]) -> Result<Vec<ScenarioConfig>, HarnessError> {
    let mut configs = vec![template.clone()];
    for axis in axes {
        let mut next = Vec::with_capacity(configs.len() * axis.values.len());
        for base in &configs {
            for v in &axis.values {
                let mut cfg = base.with_override(&axis.path, v)?;
                let label: String = v
                    .chars()
                    .map(|c| if c.is_ascii_alphanumeric() || "-.".contains(c) { c } else { '_' })
                    .collect();
                cfg.name = format!("{}__{}={}", base.name, axis.path, label);
                next.push(cfg);
            }
        }
        configs = next;
    }
    Ok(configs)
}

/// Run several scenarios concurrently; results keep the input order.
pub fn run_many(configs: &[ScenarioConfig]) -> Vec<Result<ScenarioReport, HarnessError>> {
    configs.par_iter().map(run_scenario).collect()
}

/// Run `f` on a dedicated pool of `threads` workers (0: rayon's default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, HarnessError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;
    Ok(pool.install(f))
}
