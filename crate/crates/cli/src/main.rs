//! `straddle`: synthetic data generation, Q-network training, policy
//! backtesting and pricing utilities, driven by one TOML config plus a seed.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or config error.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};

use config::RunConfig;
use straddle_core::backtest::{emit_report, run_policy, BacktestRun, MetricsReport, Policy};
use straddle_core::ddqn::train;
use straddle_core::env::{StateBuilder, TradingEnv};
use straddle_core::marketdata::{generate_synthetic, load_csv, write_csv, BarSeries, Period};
use straddle_core::pricing::{bs_delta, bs_price, OptionKind, OptionQuote, PricingError};
use straddle_core::qnet::load_params;
use straddle_core::resistance::{cluster_levels, detect_swings, resistance_flag, ResistanceParams};

#[derive(Parser)]
#[command(name = "straddle", version, about = "Straddle-option trading engine")]
struct Cli {
    /// TOML config file; built-in defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed override. Training, backtesting and data generation require a
    /// seed from here or from the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory override (default `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured synthetic bar series as CSV.
    GenData {
        /// Target file (default `<out>/synthetic.csv`).
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Train the Q-network on the training split; writes the checkpoint,
    /// optimizer sidecar and training log into the output directory.
    Train,
    /// Evaluate policies over the held-out split and write the report.
    Backtest {
        /// Checkpoint path; required when the `q` policy is requested.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Comma-separated subset of q,long,ma,random (default from config).
        #[arg(long, value_delimiter = ',')]
        policies: Vec<String>,
    },
    /// Price a European option and print value and delta.
    Price { kind: String, spot: f64, strike: f64, rate: f64, sigma: f64, tau: f64 },
    /// Print clustered swing levels and per-bar resistance flags for a CSV.
    Resistance {
        #[arg(long)]
        file: PathBuf,
        /// Bar period of the file in minutes (default from config).
        #[arg(long)]
        period: Option<u32>,
    },
}

enum AppError {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for AppError {
    fn from(e: E) -> Self {
        AppError::Runtime(e.into())
    }
}

fn usage(e: anyhow::Error) -> AppError {
    AppError::Usage(e)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(AppError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<(), AppError> {
    let cfg = RunConfig::load(cli.config.as_deref()).map_err(usage)?;
    match cli.command {
        Command::GenData { file } => gen_data(&cfg, cli.seed, cli.out.as_deref(), file),
        Command::Train => cmd_train(&cfg, cli.seed, cli.out.as_deref()),
        Command::Backtest { checkpoint, policies } => {
            cmd_backtest(&cfg, cli.seed, cli.out.as_deref(), checkpoint, policies)
        }
        Command::Price { kind, spot, strike, rate, sigma, tau } => {
            cmd_price(&kind, spot, strike, rate, sigma, tau)
        }
        Command::Resistance { file, period } => cmd_resistance(&cfg, &file, period),
    }
}

fn gen_data(
    cfg: &RunConfig,
    seed: Option<u64>,
    out: Option<&Path>,
    file: Option<PathBuf>,
) -> Result<(), AppError> {
    let seed = cfg.require_seed(seed).map_err(usage)?;
    let spec = cfg.synthetic_spec(seed).map_err(usage)?;
    let series = generate_synthetic(&spec)?;
    let path = file.unwrap_or_else(|| cfg.out_dir(out).join("synthetic.csv"));
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).context("creating output directory")?;
    }
    write_csv(&path, &series)?;
    println!("{}", path.display());
    Ok(())
}

/// Bars for the run: the configured CSV, or the synthetic series for the
/// run's seed when no CSV is configured.
fn load_series(cfg: &RunConfig, seed: u64) -> Result<BarSeries, AppError> {
    match &cfg.data.csv {
        Some(path) => {
            if !path.exists() {
                return Err(usage(anyhow!("data file {} does not exist", path.display())));
            }
            Ok(load_csv(path, Period::minutes(cfg.data.base_period_minutes))?)
        }
        None => {
            let spec = cfg.synthetic_spec(seed).map_err(usage)?;
            Ok(generate_synthetic(&spec)?)
        }
    }
}

fn split_index(len: usize, train_split: f64) -> usize {
    ((len as f64 * train_split) as usize).clamp(1, len.saturating_sub(1))
}

fn prepare(cfg: &RunConfig, seed: u64) -> Result<(Arc<StateBuilder>, usize), AppError> {
    let series = load_series(cfg, seed)?;
    let calendar = cfg.calendar().map_err(usage)?;
    let env_cfg = cfg.env_config().map_err(usage)?;
    let split = split_index(series.len(), cfg.data.train_split);
    let builder = Arc::new(StateBuilder::prepare(series, &calendar, &env_cfg)?);
    Ok((builder, split))
}

fn cmd_train(cfg: &RunConfig, seed: Option<u64>, out: Option<&Path>) -> Result<(), AppError> {
    let seed = cfg.require_seed(seed).map_err(usage)?;
    let out_dir = cfg.out_dir(out);
    let (builder, split) = prepare(cfg, seed)?;
    let env_cfg = cfg.env_config().map_err(usage)?;
    let mut env = TradingEnv::new(builder, env_cfg, (0, split.saturating_sub(1)), seed)?;
    let artifacts = train(&mut env, cfg.hyper_params(), &cfg.train_config(seed), &out_dir)?;
    println!("{}", artifacts.checkpoint.display());
    Ok(())
}

fn cmd_backtest(
    cfg: &RunConfig,
    seed: Option<u64>,
    out: Option<&Path>,
    checkpoint: Option<PathBuf>,
    policies: Vec<String>,
) -> Result<(), AppError> {
    let seed = cfg.require_seed(seed).map_err(usage)?;
    let out_dir = cfg.out_dir(out);
    let names = if policies.is_empty() { cfg.backtest.policies.clone() } else { policies };
    if names.is_empty() {
        return Err(usage(anyhow!("no policies requested")));
    }

    let params = if names.iter().any(|n| n == "q") {
        let path = checkpoint
            .ok_or_else(|| usage(anyhow!("the q policy needs --checkpoint <path>")))?;
        if !path.exists() {
            return Err(usage(anyhow!("checkpoint {} does not exist", path.display())));
        }
        let params = load_params(&path)?;
        let expected = cfg.hyper_params();
        if params.hyper != expected {
            return Err(usage(anyhow!(
                "checkpoint hyperparameters {:?} do not match the config {:?}",
                params.hyper,
                expected
            )));
        }
        Some(params)
    } else {
        None
    };

    let (builder, split) = prepare(cfg, seed)?;
    let env_cfg = cfg.env_config().map_err(usage)?;
    let range = (split, builder.len().saturating_sub(1));

    let mut entries: Vec<(String, BacktestRun, MetricsReport)> = Vec::new();
    for name in &names {
        let policy = match name.as_str() {
            "q" => Policy::GreedyQ(params.as_ref().expect("checked above")),
            "long" => Policy::LongUnderlying,
            "ma" => Policy::DualMovingAverage {
                fast: cfg.backtest.ma_fast,
                slow: cfg.backtest.ma_slow,
            },
            "random" => Policy::RandomStraddle {
                open_prob: cfg.backtest.random_open_prob,
                hold_bars: cfg.backtest.random_hold_bars,
                seed,
            },
            other => return Err(usage(anyhow!("unknown policy {other:?} (q, long, ma, random)"))),
        };
        let run = run_policy(&builder, &env_cfg, range, &policy)?;
        let report = run.report(cfg.bars_per_year());
        println!(
            "{name}: avgr {:+.4} sharpe {:+.4} mdd {:+.4} trades {} fees {:.2}",
            report.avgr, report.sharpe, report.mdd, report.trades, report.fees
        );
        entries.push((name.clone(), run, report));
    }
    let written = emit_report(&out_dir, &entries)?;
    for path in written {
        println!("{}", path.display());
    }
    Ok(())
}

fn cmd_price(
    kind: &str,
    spot: f64,
    strike: f64,
    rate: f64,
    sigma: f64,
    tau: f64,
) -> Result<(), AppError> {
    let kind = match kind {
        "call" => OptionKind::Call,
        "put" => OptionKind::Put,
        other => return Err(usage(anyhow!("kind must be call or put, got {other:?}"))),
    };
    let quote = OptionQuote { kind, spot, strike, rate, sigma, tau };
    let price = bs_price(&quote).map_err(|e| usage(e.into()))?;
    println!("price {price:.6}");
    match bs_delta(&quote) {
        Ok(delta) => println!("delta {delta:.6}"),
        Err(PricingError::DegenerateDelta) => println!("delta n/a"),
        Err(e) => return Err(usage(e.into())),
    }
    Ok(())
}

fn cmd_resistance(cfg: &RunConfig, file: &Path, period: Option<u32>) -> Result<(), AppError> {
    if !file.exists() {
        return Err(usage(anyhow!("data file {} does not exist", file.display())));
    }
    let minutes = period.unwrap_or(cfg.data.base_period_minutes);
    let series = load_csv(file, Period::minutes(minutes))?;
    let params = ResistanceParams {
        window: cfg.resistance.window,
        reversal: cfg.resistance.reversal_pct,
        breakthrough: cfg.resistance.breakthrough_pct,
        area: cfg.resistance.area_pct,
        lookback_days: cfg.resistance.lookback_days,
    };
    let (res, sup) = detect_swings(&series, &params)?;

    let all_points: Vec<_> = res.iter().chain(sup.iter()).copied().collect();
    let levels = cluster_levels(&all_points, cfg.resistance.merge_pct);
    println!("level");
    for level in &levels {
        println!("{level:.6}");
    }
    println!();
    println!("timestamp,close,flag");
    for bar in series.bars() {
        let flag = resistance_flag(bar.close, &levels, params.area);
        println!("{},{},{}", bar.timestamp.to_rfc3339(), bar.close, u8::from(flag));
    }
    Ok(())
}
