//! Policy evaluation over held-out data: greedy-Q and rule-based baselines,
//! equity curves, metrics and report files.

mod metrics;
mod report;

pub use metrics::{avgr, max_drawdown_log, sharpe, EquityCurve, MetricsReport, SHARPE_CAP, YEAR_SECONDS};
pub use report::emit_report;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;
use thiserror::Error;

use crate::env::{EnvConfig, EnvError, StateBuilder, TradeRecord, TradingEnv};
use crate::qnet::{q_values, QNetError, QNetworkParams};

/// ETF-style proportional cost per side for underlying baselines.
pub const UNDERLYING_FEE_RATE: f64 = 0.0005;

#[derive(Debug, Error)]
pub enum BacktestError {
    #[error("dual moving average needs fast < slow, got {fast}/{slow}")]
    BadMaWindows { fast: usize, slow: usize },
    #[error("insufficient history: {have} daily bars, slow window needs {need}")]
    InsufficientDaily { have: usize, need: usize },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    QNet(#[from] QNetError),
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Evaluation policies. Straddle policies drive the trading environment;
/// `LongUnderlying` and `DualMovingAverage` trade the underlying directly
/// at the ETF-style fee.
pub enum Policy<'a> {
    /// Argmax of the Q-network, ties toward action 0 (flat).
    GreedyQ(&'a QNetworkParams),
    /// Buy at the first bar close, hold to the end.
    LongUnderlying,
    /// Long while the fast daily SMA is above the slow one; trades at the
    /// next bar open after a cross.
    DualMovingAverage { fast: usize, slow: usize },
    /// Training-free control: open with a fixed probability per bar, close
    /// after a fixed number of bars.
    RandomStraddle { open_prob: f64, hold_bars: u32, seed: u64 },
}

impl Policy<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::GreedyQ(_) => "q",
            Policy::LongUnderlying => "long",
            Policy::DualMovingAverage { .. } => "ma",
            Policy::RandomStraddle { .. } => "random",
        }
    }
}

/// One policy evaluation: the per-bar equity curve, round trips, total fees
/// and the bar indices of position opens.
pub struct BacktestRun {
    pub curve: EquityCurve,
    pub trades: Vec<TradeRecord>,
    pub trade_count: usize,
    pub fees: f64,
    pub open_bars: Vec<usize>,
}

impl BacktestRun {
    pub fn report(&self, bars_per_year: f64) -> MetricsReport {
        let wins = self.trades.iter().filter(|t| t.log_return > 0.0).count();
        MetricsReport {
            avgr: avgr(&self.curve),
            sharpe: sharpe(&self.curve, bars_per_year),
            mdd: max_drawdown_log(&self.curve),
            trades: self.trade_count,
            win_rate: if self.trades.is_empty() {
                0.0
            } else {
                wins as f64 / self.trades.len() as f64
            },
            fees: self.fees,
        }
    }
}

/// Evaluate a policy over `range` (inclusive bar indices) in a single pass
/// with no look-ahead; the account is marked at every bar.
pub fn run_policy(
    builder: &Arc<StateBuilder>,
    cfg: &EnvConfig,
    range: (usize, usize),
    policy: &Policy<'_>,
) -> Result<BacktestRun, BacktestError> {
    match policy {
        Policy::GreedyQ(params) => run_straddle_policy(builder, cfg, range, |state, _| {
            let q = q_values(params, state)?;
            Ok(u8::from(q[1] > q[0]))
        }),
        Policy::RandomStraddle { open_prob, hold_bars, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let (open_prob, hold_bars) = (*open_prob, *hold_bars);
            run_straddle_policy(builder, cfg, range, move |_, held| {
                Ok(match held {
                    None => u8::from(rng.gen::<f64>() < open_prob),
                    Some(h) => u8::from(h < hold_bars),
                })
            })
        }
        Policy::LongUnderlying => run_long(builder, cfg, range),
        Policy::DualMovingAverage { fast, slow } => run_dual_ma(builder, cfg, range, *fast, *slow),
    }
}

fn run_straddle_policy(
    builder: &Arc<StateBuilder>,
    cfg: &EnvConfig,
    range: (usize, usize),
    mut act: impl FnMut(&crate::env::MarketState, Option<u32>) -> Result<u8, BacktestError>,
) -> Result<BacktestRun, BacktestError> {
    let mut env = TradingEnv::new(builder.clone(), cfg.clone(), range, 0)?;
    let mut state = env.reset_full()?;
    let mut points = vec![(env.timestamp(), env.equity())];
    let mut open_bars = Vec::new();
    loop {
        let held = env.position_snapshot().map(|(_, _, h)| h);
        let was_flat = held.is_none();
        let action = act(&state, held)?;
        let bar = env.cursor();
        let outcome = env.step(action)?;
        if was_flat && outcome.executed_action == 1 {
            open_bars.push(bar);
        }
        points.push((env.timestamp(), env.equity()));
        state = outcome.state;
        if outcome.terminal {
            break;
        }
    }
    let trades = env.trades().to_vec();
    let fees = trades.iter().map(|t| t.fees).sum();
    let trade_count = trades.len();
    Ok(BacktestRun { curve: EquityCurve::new(points)?, trades, trade_count, fees, open_bars })
}

fn run_long(
    builder: &Arc<StateBuilder>,
    cfg: &EnvConfig,
    range: (usize, usize),
) -> Result<BacktestRun, BacktestError> {
    let (start, end) = clamp_range(builder, range)?;
    let entry_fee = cfg.initial_capital * UNDERLYING_FEE_RATE;
    let units = (cfg.initial_capital - entry_fee) / builder.close(start);
    let points = (start..=end)
        .map(|t| (builder.timestamp(t), units * builder.close(t)))
        .collect();
    Ok(BacktestRun {
        curve: EquityCurve::new(points)?,
        trades: Vec::new(),
        trade_count: 1,
        fees: entry_fee,
        open_bars: vec![start],
    })
}

fn run_dual_ma(
    builder: &Arc<StateBuilder>,
    cfg: &EnvConfig,
    range: (usize, usize),
    fast: usize,
    slow: usize,
) -> Result<BacktestRun, BacktestError> {
    if fast == 0 || fast >= slow {
        return Err(BacktestError::BadMaWindows { fast, slow });
    }
    let (start, end) = clamp_range(builder, range)?;
    let daily = builder.base_series().resample_daily();
    let daily_bars = daily.bars();
    if daily_bars.len() < slow {
        return Err(BacktestError::InsufficientDaily { have: daily_bars.len(), need: slow });
    }

    let base = builder.base_series().bars();
    let sma = |closes: &[f64], upto: usize, w: usize| -> Option<f64> {
        (upto + 1 >= w).then(|| closes[upto + 1 - w..=upto].iter().sum::<f64>() / w as f64)
    };
    let daily_closes: Vec<f64> = daily_bars.iter().map(|b| b.close).collect();

    let mut cash = cfg.initial_capital;
    let mut units = 0.0f64;
    let mut pending: Option<bool> = None; // desired stance to apply at next open
    let mut want_long = false;
    let mut day_idx = 0usize;
    let mut fees = 0.0;
    let mut trade_count = 0usize;
    let mut open_bars = Vec::new();
    let mut points = Vec::with_capacity(end - start + 1);

    for t in start..=end {
        // Apply a stance change decided on the previous bar at this open.
        if let Some(go_long) = pending.take() {
            let price = base[t].open;
            if go_long && units == 0.0 {
                let fee = cash * UNDERLYING_FEE_RATE;
                units = (cash - fee) / price;
                cash = 0.0;
                fees += fee;
                trade_count += 1;
                open_bars.push(t);
            } else if !go_long && units > 0.0 {
                let proceeds = units * price;
                let fee = proceeds * UNDERLYING_FEE_RATE;
                cash = proceeds - fee;
                units = 0.0;
                fees += fee;
            }
        }

        // A daily bar completing at this very bar updates the signal.
        while day_idx < daily_bars.len() && daily_bars[day_idx].timestamp <= base[t].timestamp {
            if daily_bars[day_idx].timestamp == base[t].timestamp {
                if let (Some(f), Some(s)) =
                    (sma(&daily_closes, day_idx, fast), sma(&daily_closes, day_idx, slow))
                {
                    let desired = f > s;
                    if desired != want_long {
                        want_long = desired;
                        if t < end {
                            pending = Some(desired);
                        }
                    }
                }
            }
            day_idx += 1;
        }

        points.push((base[t].timestamp, cash + units * base[t].close));
    }

    Ok(BacktestRun {
        curve: EquityCurve::new(points)?,
        trades: Vec::new(),
        trade_count,
        fees,
        open_bars,
    })
}

fn clamp_range(
    builder: &Arc<StateBuilder>,
    range: (usize, usize),
) -> Result<(usize, usize), BacktestError> {
    let start = range.0.max(builder.min_state_index());
    let end = range.1.min(builder.len().saturating_sub(1));
    if start >= end {
        return Err(BacktestError::Env(EnvError::InsufficientHistory {
            have: end,
            need: start + 2,
        }));
    }
    Ok((start, end))
}
