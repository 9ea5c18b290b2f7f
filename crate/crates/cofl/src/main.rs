use anyhow::Context;
use clap::{Parser, Subcommand};
use cofl::config::{Format, ScenarioConfig};
use cofl::harness::{run_many, run_scenario, with_threads, GridAxis};
use cofl::output::write_report;
use cofl::HarnessError;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "cofl", version, about = "Coherence-aware over-the-air federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the scenario's base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the scenario's output directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads (0: one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Override the scenario's output format.
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write per-round rows.
    Run { config: PathBuf },
    /// Run a template over the Cartesian product of parameter grids.
    Sweep {
        template: PathBuf,
        /// `path=v1,v2,...`, e.g. `channel.snr_db=10,20`; repeatable.
        #[arg(long = "grid", required = true)]
        grid: Vec<GridAxis>,
    },
    /// Measure error constants and print the bound curves as JSON.
    Bounds { config: PathBuf },
    /// Run the built-in consistency checks.
    Selftest,
}

fn load(cli: &Cli, path: &Path) -> Result<ScenarioConfig, HarnessError> {
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.base_seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.output.dir = dir.display().to_string();
    }
    if let Some(f) = cli.format {
        cfg.output.format = match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        };
    }
    Ok(cfg)
}

fn emit(cfg: &ScenarioConfig, report: &cofl::ScenarioReport) -> anyhow::Result<()> {
    let paths = write_report(report, cfg.output.dir.as_ref(), cfg.output.format)?;
    let t = report.terminal();
    let mut out = std::io::stdout().lock();
    writeln!(
        out,
        "{}: {} rounds x {} seeds, terminal loss {:.6} ± {:.6}, comm cost {:.2}",
        report.scenario_id,
        t.round,
        report.runs.len(),
        t.loss_mean,
        t.loss_std,
        t.comm_cost
    )?;
    for p in paths {
        writeln!(out, "  wrote {}", p.display())?;
    }
    Ok(())
}

fn exit_for(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|e| e.downcast_ref::<HarnessError>())
        .map(|e| e.exit_code() as u8)
        .unwrap_or(1)
}

fn dispatch(cli: &Cli) -> anyhow::Result<u8> {
    match &cli.command {
        Command::Run { config } => {
            let cfg = load(cli, config)?;
            let report = with_threads(cli.threads, || run_scenario(&cfg))??;
            emit(&cfg, &report)?;
        }
        Command::Sweep { template, grid } => {
            let base = load(cli, template)?;
            let configs = cofl::expand_grid(&base, grid)?;
            let results = with_threads(cli.threads, || run_many(&configs))?;
            for (cfg, result) in configs.iter().zip(results) {
                let report = result.with_context(|| format!("scenario {}", cfg.name))?;
                emit(cfg, &report)?;
            }
        }
        Command::Bounds { config } => {
            let mut cfg = load(cli, config)?;
            cfg.bounds.enabled = true;
            cfg.validate()?;
            let report = with_threads(cli.threads, || run_scenario(&cfg))??;
            let bounds = report.bounds.as_ref().expect("bounds were enabled");
            let out = serde_json::json!({
                "scenario_id": report.scenario_id,
                "optimal_loss": report.optimal_loss,
                "optimal_loss_estimated": report.optimal_loss_estimated,
                "bounds": bounds,
                "terminal": report.terminal(),
            });
            writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&out)?)?;
        }
        Command::Selftest => {
            let checks = with_threads(cli.threads, cofl::selftest::run_all)?;
            let mut ok = true;
            for c in &checks {
                writeln!(std::io::stdout(), "{} {} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
                ok &= c.passed;
            }
            if !ok {
                return Ok(4);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_for(&e))
        }
    }
}
