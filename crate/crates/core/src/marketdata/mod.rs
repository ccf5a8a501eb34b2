//! Candlestick data: ingestion, resampling, trading calendar and synthesis.
//!
//! All types here are immutable after construction and safe to share across
//! threads; nothing in this module mutates shared state.

mod calendar;
mod csv_io;
mod synthetic;

pub use calendar::{days_to_next_trading_day, TradingCalendar};
pub use csv_io::{load_csv, write_csv, CSV_HEADER};
pub use synthetic::{generate_synthetic, generate_synthetic_with_regimes, Regime, SyntheticSpec};

use chrono::{DateTime, Utc};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MarketDataError {
    #[error("line {line}: {msg}")]
    MalformedRow { line: u64, msg: String },
    #[error("line {line}: timestamp not strictly increasing")]
    NonMonotonic { line: u64 },
    #[error("no bars in input")]
    Empty,
    #[error("invalid candle: {0}")]
    InvalidCandle(&'static str),
    #[error("target period {target} min is not a multiple of base period {base} min")]
    PeriodNotMultiple { base: u32, target: u32 },
    #[error("insufficient history: need {need} bars ending at index {at}")]
    InsufficientHistory { need: usize, at: usize },
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Bar period in minutes (15, 30, 60 and 1440 are the ones used in practice).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Period(u32);

impl Period {
    pub const M15: Period = Period(15);
    pub const M30: Period = Period(30);
    pub const M60: Period = Period(60);
    pub const DAILY: Period = Period(1440);

    pub fn minutes(minutes: u32) -> Period {
        assert!(minutes >= 1, "period must be at least one minute");
        Period(minutes)
    }

    pub fn as_minutes(self) -> u32 {
        self.0
    }

    pub fn is_daily(self) -> bool {
        self.0 == 1440
    }
}

/// One OHLCV bar. `timestamp` is the close time of the bar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candle {
    pub timestamp: DateTime<Utc>,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
    pub value: f64,
}

impl Candle {
    pub fn new(
        timestamp: DateTime<Utc>,
        open: f64,
        high: f64,
        low: f64,
        close: f64,
        volume: f64,
        value: f64,
    ) -> Result<Candle, MarketDataError> {
        let c = Candle { timestamp, open, high, low, close, volume, value };
        c.validate().map_err(MarketDataError::InvalidCandle)?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), &'static str> {
        let prices = [self.open, self.high, self.low, self.close];
        if prices.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
            return Err("prices must be positive and finite");
        }
        if self.low > self.open.min(self.close) {
            return Err("low exceeds min(open, close)");
        }
        if self.high < self.open.max(self.close) {
            return Err("high below max(open, close)");
        }
        if self.low > self.high {
            return Err("low exceeds high");
        }
        if !(self.volume >= 0.0) || !(self.value >= 0.0) {
            return Err("volume and value must be non-negative");
        }
        Ok(())
    }
}

/// A time-ordered sequence of bars at a fixed period.
///
/// Timestamps are strictly increasing; grid alignment is the producer's
/// responsibility (the CSV is taken as authoritative).
#[derive(Debug, Clone)]
pub struct BarSeries {
    period: Period,
    bars: Vec<Candle>,
}

impl BarSeries {
    pub fn new(period: Period, bars: Vec<Candle>) -> Result<BarSeries, MarketDataError> {
        for w in bars.windows(2) {
            if w[1].timestamp <= w[0].timestamp {
                return Err(MarketDataError::NonMonotonic { line: 0 });
            }
        }
        Ok(BarSeries { period, bars })
    }

    pub fn period(&self) -> Period {
        self.period
    }

    pub fn bars(&self) -> &[Candle] {
        &self.bars
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    /// Aggregate to a coarser period. The target must be an integer multiple
    /// of the base period; every output bar merges exactly `target/base`
    /// consecutive input bars and a partial trailing group is dropped.
    pub fn resample(&self, target: Period) -> Result<BarSeries, MarketDataError> {
        let base = self.period.as_minutes();
        if target.as_minutes() % base != 0 {
            return Err(MarketDataError::PeriodNotMultiple { base, target: target.as_minutes() });
        }
        let k = (target.as_minutes() / base) as usize;
        let bars = self.bars.chunks_exact(k).map(aggregate).collect();
        Ok(BarSeries { period: target, bars })
    }

    /// Aggregate to daily bars by calendar date (UTC), so trading sessions
    /// stay intact on markets that are not open around the clock. The output
    /// bar carries the close time of the date's last bar.
    pub fn resample_daily(&self) -> BarSeries {
        let mut bars = Vec::new();
        let mut group: Vec<Candle> = Vec::new();
        for bar in &self.bars {
            if let Some(first) = group.first() {
                if first.timestamp.date_naive() != bar.timestamp.date_naive() {
                    bars.push(aggregate(&group));
                    group.clear();
                }
            }
            group.push(*bar);
        }
        if !group.is_empty() {
            bars.push(aggregate(&group));
        }
        BarSeries { period: Period::DAILY, bars }
    }

    /// The `d` bars ending at index `t` (inclusive).
    pub fn window(&self, t: usize, d: usize) -> Result<&[Candle], MarketDataError> {
        if d == 0 || t + 1 < d || t >= self.bars.len() {
            return Err(MarketDataError::InsufficientHistory { need: d, at: t });
        }
        Ok(&self.bars[t + 1 - d..=t])
    }
}

fn aggregate(group: &[Candle]) -> Candle {
    let first = group.first().expect("non-empty group");
    let last = group.last().expect("non-empty group");
    Candle {
        timestamp: last.timestamp,
        open: first.open,
        high: group.iter().map(|c| c.high).fold(f64::MIN, f64::max),
        low: group.iter().map(|c| c.low).fold(f64::MAX, f64::min),
        close: last.close,
        volume: group.iter().map(|c| c.volume).sum(),
        value: group.iter().map(|c| c.value).sum(),
    }
}
