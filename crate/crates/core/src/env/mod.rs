//! The trading environment: straddle lifecycle, fees, observation assembly,
//! binary hold/flat actions and the delayed stop-loss reward.
//!
//! One environment instance is single-threaded; the prepared data behind it
//! is immutable and can back many instances.

mod reward;
pub mod state;
pub mod straddle;

pub use reward::compute_reward;
pub use state::{MarketState, StateBuilder, BASE_FEATURES, OBS_FEATURES};
pub use straddle::{
    close_fee, mark_to_market, open_fee, select_expiry, select_strikes, size_delta_neutral,
    ExpiryRule, FeeModel, MarkValue, OptionLeg, StraddlePosition, StraddleRules,
};

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;
use thiserror::Error;

use crate::marketdata::MarketDataError;
use crate::pricing::{bs_price, year_fraction, OptionKind, OptionQuote, PricingError};
use crate::resistance::ResistanceParams;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("cannot afford minimum position: needs {needed:.2}, budget {budget:.2}")]
    CannotAfford { needed: f64, budget: f64 },
    #[error("insufficient history: have {have}, need {need}")]
    InsufficientHistory { have: usize, need: usize },
    #[error("bad environment config: {0}")]
    BadConfig(String),
    #[error("episode already terminal; reset first")]
    EpisodeDone,
    #[error(transparent)]
    Pricing(#[from] PricingError),
    #[error(transparent)]
    MarketData(#[from] MarketDataError),
}

/// Per-market constants: settlement rate, session density, contract size and
/// the fee/strike conventions.
#[derive(Debug, Clone)]
pub struct MarketProfile {
    pub risk_free_rate: f64,
    pub trading_days_per_year: u32,
    pub contract_multiplier: f64,
    pub fees: FeeModel,
    pub rules: StraddleRules,
}

impl Default for MarketProfile {
    fn default() -> Self {
        MarketProfile {
            risk_free_rate: 0.02,
            trading_days_per_year: 242,
            contract_multiplier: 100.0,
            fees: FeeModel::PerPoint { fee_per_point: 0.15, multiplier: 100.0 },
            rules: StraddleRules::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnvConfig {
    /// Steps d in every observation window.
    pub window_steps: usize,
    /// Trailing days of the settlement-volatility window.
    pub hv_days: u32,
    /// Forced close after this many trading days.
    pub max_hold_days: u32,
    /// Stop-loss threshold on the trade's log return, < 0.
    pub stop: f64,
    /// Reward a > 0 for closing at or under the stop.
    pub stop_close_reward: f64,
    /// Underlying deviation g beyond which a profitable close doubles.
    pub deviation_g: f64,
    /// Opening cost cap as a fraction of capital.
    pub position_limit: f64,
    pub initial_capital: f64,
    /// Observation periods in minutes (the base period is implicit).
    pub periods: Vec<u32>,
    /// Trading days per training episode.
    pub episode_days: u32,
    pub resistance: ResistanceParams,
    /// Level clustering distance.
    pub merge_pct: f64,
    pub profile: MarketProfile,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            window_steps: 64,
            hv_days: 5,
            max_hold_days: 5,
            stop: -0.15,
            stop_close_reward: 0.10,
            deviation_g: 0.05,
            position_limit: 0.20,
            initial_capital: 1_000_000.0,
            periods: vec![30, 60, 1440],
            episode_days: 30,
            resistance: ResistanceParams::default(),
            merge_pct: 0.005,
            profile: MarketProfile::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |msg: &str| Err(EnvError::BadConfig(msg.into()));
        if !(self.stop < 0.0) {
            return bad("stop must be negative");
        }
        if !(self.stop_close_reward > 0.0) {
            return bad("stop_close_reward must be positive");
        }
        if !(self.deviation_g > 0.0) {
            return bad("deviation_g must be positive");
        }
        if !(self.position_limit > 0.0 && self.position_limit <= 1.0) {
            return bad("position_limit must be in (0, 1]");
        }
        if !(self.initial_capital > 0.0) {
            return bad("initial_capital must be positive");
        }
        if self.periods.is_empty() {
            return bad("need at least one observation period");
        }
        if self.window_steps == 0 || self.hv_days == 0 || self.max_hold_days == 0 {
            return bad("window_steps, hv_days and max_hold_days must be positive");
        }
        self.profile.fees.validate()?;
        if !(self.profile.rules.strike_interval > 0.0) {
            return bad("strike_interval must be positive");
        }
        Ok(())
    }
}

/// One finished round trip, as written to the trade log.
#[derive(Debug, Clone, Copy)]
pub struct TradeRecord {
    pub open_time: DateTime<Utc>,
    pub close_time: DateTime<Utc>,
    pub k_call: f64,
    pub k_put: f64,
    pub call_lots: u32,
    pub put_lots: u32,
    pub cost: f64,
    pub fees: f64,
    pub proceeds: f64,
    pub log_return: f64,
    pub forced: bool,
}

#[derive(Debug, Clone)]
struct OpenState {
    position: StraddlePosition,
    open_bar: usize,
    hold_bars: u32,
    open_fee_paid: f64,
}

/// Result of one environment transition.
#[derive(Debug)]
pub struct StepOutcome {
    pub state: MarketState,
    pub reward: f64,
    pub terminal: bool,
    /// Cash movement this step (negative on open, positive on close).
    pub account_delta: f64,
    /// The action after affordability coercion and forced closes.
    pub executed_action: u8,
    pub forced_close: bool,
}

pub struct TradingEnv {
    builder: Arc<StateBuilder>,
    cfg: EnvConfig,
    /// Valid bar range [start, end] (inclusive) for states.
    range: (usize, usize),
    rng: ChaCha8Rng,
    cursor: usize,
    episode_end: usize,
    capital: f64,
    open: Option<OpenState>,
    prev_action: u8,
    trades: Vec<TradeRecord>,
    coerced_opens: u64,
}

impl TradingEnv {
    /// `range` is the inclusive bar index span the environment may touch;
    /// its start is clamped to the first index with full history.
    pub fn new(
        builder: Arc<StateBuilder>,
        cfg: EnvConfig,
        range: (usize, usize),
        seed: u64,
    ) -> Result<TradingEnv, EnvError> {
        cfg.validate()?;
        let start = range.0.max(builder.min_state_index());
        let end = range.1.min(builder.len() - 1);
        if start >= end {
            return Err(EnvError::InsufficientHistory { have: end, need: start + 2 });
        }
        let mut env = TradingEnv {
            builder,
            cfg,
            range: (start, end),
            rng: ChaCha8Rng::seed_from_u64(seed),
            cursor: start,
            episode_end: end,
            capital: 0.0,
            open: None,
            prev_action: 0,
            trades: Vec::new(),
            coerced_opens: 0,
        };
        env.reset_full()?;
        Ok(env)
    }

    /// Start a fresh episode over the whole range (evaluation mode).
    pub fn reset_full(&mut self) -> Result<MarketState, EnvError> {
        self.reset_span(self.range.0, self.range.1)
    }

    /// Start a fresh episode on a uniformly sampled contiguous span of
    /// `episode_days` trading days (training mode).
    pub fn reset_random_episode(&mut self) -> Result<MarketState, EnvError> {
        let span = (self.cfg.episode_days * self.builder.bars_per_day()) as usize;
        let (lo, hi) = self.range;
        let last_start = hi.saturating_sub(span).max(lo);
        let start = if last_start > lo { self.rng.gen_range(lo..=last_start) } else { lo };
        let end = (start + span).min(hi);
        self.reset_span(start, end)
    }

    fn reset_span(&mut self, start: usize, end: usize) -> Result<MarketState, EnvError> {
        self.cursor = start;
        self.episode_end = end;
        self.capital = self.cfg.initial_capital;
        self.open = None;
        self.prev_action = 0;
        self.trades.clear();
        self.coerced_opens = 0;
        self.state()
    }

    /// Observation at the current cursor.
    pub fn state(&self) -> Result<MarketState, EnvError> {
        let pos = self.open.as_ref().map(|o| (&o.position, o.open_bar));
        self.builder.build_state(
            self.cursor,
            pos,
            self.open.as_ref().map_or(0, |o| o.hold_bars),
        )
    }

    pub fn capital(&self) -> f64 {
        self.capital
    }

    /// Cash plus the mark of any open position at the current cursor.
    pub fn equity(&self) -> f64 {
        let mark = self
            .open
            .as_ref()
            .map_or(0.0, |o| self.builder.mark_position(self.cursor, &o.position).total);
        self.capital + mark
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn timestamp(&self) -> DateTime<Utc> {
        self.builder.timestamp(self.cursor)
    }

    pub fn holding(&self) -> bool {
        self.open.is_some()
    }

    pub fn trades(&self) -> &[TradeRecord] {
        &self.trades
    }

    /// Open-position bookkeeping (position, open bar, bars held), if any.
    /// Enough to rebuild the current observation from the data cache.
    pub fn position_snapshot(&self) -> Option<(StraddlePosition, usize, u32)> {
        self.open.as_ref().map(|o| (o.position, o.open_bar, o.hold_bars))
    }

    pub fn coerced_opens(&self) -> u64 {
        self.coerced_opens
    }

    pub fn builder(&self) -> &Arc<StateBuilder> {
        &self.builder
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    /// Apply a hold/flat action at the current bar and advance one bar.
    ///
    /// Opens the agent cannot afford degrade to waiting. A position is
    /// force-closed when its holding time reaches the limit, when its expiry
    /// roll boundary arrives, or at the episode's final transition.
    pub fn step(&mut self, action: u8) -> Result<StepOutcome, EnvError> {
        debug_assert!(action <= 1, "binary action space");
        if self.cursor >= self.episode_end {
            return Err(EnvError::EpisodeDone);
        }
        let t = self.cursor;
        let capital_before = self.capital;
        let mut executed = action.min(1);
        let mut forced_close = false;
        let mut reward = 0.0;

        let last_step = t + 1 >= self.episode_end;
        if self.open.is_none() {
            // A position opened on the final transition could never close;
            // the episode must end flat.
            if executed == 1 && last_step {
                executed = 0;
            }
            if executed == 1 {
                match self.try_open(t) {
                    Ok(open) => {
                        self.capital -= open.position.cost;
                        self.open = Some(open);
                    }
                    Err(EnvError::CannotAfford { .. }) => {
                        self.coerced_opens += 1;
                        executed = 0;
                    }
                    Err(e) => return Err(e),
                }
            }
        } else {
            let (hold_bars, expiry) = {
                let open = self.open.as_ref().expect("checked open");
                (open.hold_bars, open.position.expiry)
            };
            let must_close = executed == 0
                || hold_bars >= self.builder.max_hold_bars()
                || self.at_roll_boundary(t, expiry)
                || last_step;
            if must_close {
                forced_close = executed == 1;
                executed = 0;
                let open = self.open.take().expect("checked open");
                let mark = self.builder.mark_position(t, &open.position);
                let fee = close_fee(&open.position, &self.cfg.profile.fees, &mark);
                self.capital += mark.total - fee;
                let log_return = (mark.total / open.position.cost).ln();
                let deviation = self.builder.close(t) / open.position.open_spot - 1.0;
                reward = compute_reward(
                    1,
                    0,
                    log_return,
                    self.cfg.stop,
                    self.cfg.stop_close_reward,
                    self.cfg.deviation_g,
                    deviation,
                );
                self.trades.push(TradeRecord {
                    open_time: open.position.open_time,
                    close_time: self.builder.timestamp(t),
                    k_call: open.position.call.strike,
                    k_put: open.position.put.strike,
                    call_lots: open.position.call.lots,
                    put_lots: open.position.put.lots,
                    cost: open.position.cost,
                    fees: open.open_fee_paid + fee,
                    proceeds: mark.total,
                    log_return,
                    forced: forced_close,
                });
            } else {
                let mark = {
                    let open = self.open.as_ref().expect("checked open");
                    self.builder.mark_position(t, &open.position)
                };
                let open = self.open.as_mut().expect("checked open");
                let log_return = (mark.total / open.position.cost).ln();
                reward = compute_reward(
                    1,
                    1,
                    log_return,
                    self.cfg.stop,
                    self.cfg.stop_close_reward,
                    self.cfg.deviation_g,
                    0.0,
                );
                open.hold_bars += 1;
            }
        }

        self.prev_action = executed;
        self.cursor = t + 1;
        let terminal = self.cursor >= self.episode_end;
        let state = self.state()?;
        Ok(StepOutcome {
            state,
            reward,
            terminal,
            account_delta: self.capital - capital_before,
            executed_action: executed,
            forced_close,
        })
    }

    fn at_roll_boundary(&self, t: usize, expiry: DateTime<Utc>) -> bool {
        let now = self.builder.timestamp(t);
        let days = (expiry.date_naive() - now.date_naive()).num_days();
        days < self.cfg.profile.rules.min_days_to_roll
    }

    fn try_open(&mut self, t: usize) -> Result<OpenState, EnvError> {
        let spot = self.builder.close(t);
        let now = self.builder.timestamp(t);
        let rules = &self.cfg.profile.rules;
        let (k_call, k_put) = select_strikes(spot, rules);
        let expiry = select_expiry(now, rules);
        let sigma = self.builder.settlement_vol(t).value;
        let rate = self.cfg.profile.risk_free_rate;
        let tau = year_fraction(now, expiry)?;
        let multiplier = self.cfg.profile.contract_multiplier;

        let (call_lots, put_lots) = size_delta_neutral(
            spot,
            (k_call, k_put),
            sigma,
            rate,
            tau,
            self.capital,
            self.cfg.position_limit,
            &self.cfg.profile.fees,
            multiplier,
        )?;

        let unit = |kind: OptionKind, strike: f64| {
            bs_price(&OptionQuote { kind, spot, strike, rate, sigma, tau })
        };
        let call_premium = unit(OptionKind::Call, k_call)?;
        let put_premium = unit(OptionKind::Put, k_put)?;
        let entry_premium =
            multiplier * (call_premium * call_lots as f64 + put_premium * put_lots as f64);

        let mut position = StraddlePosition {
            call: OptionLeg {
                kind: OptionKind::Call,
                strike: k_call,
                lots: call_lots,
                entry_premium: call_premium,
            },
            put: OptionLeg {
                kind: OptionKind::Put,
                strike: k_put,
                lots: put_lots,
                entry_premium: put_premium,
            },
            expiry,
            multiplier,
            cost: 0.0,
            entry_premium,
            open_time: now,
            open_spot: spot,
        };
        let fee = open_fee(&position, &self.cfg.profile.fees);
        position.cost = entry_premium + fee;
        Ok(OpenState { position, open_bar: t, hold_bars: 0, open_fee_paid: fee })
    }
}
