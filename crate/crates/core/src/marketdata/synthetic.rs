//! Regime-switching geometric-Brownian bar generator.
//!
//! Stands in for proprietary market data: one GBM per volatility regime, a
//! row-stochastic transition matrix sampled once per bar, OHLC built from
//! four intra-bar diffusion samples so candle invariants hold by
//! construction. Output is a pure function of the spec.

use chrono::{DateTime, Duration, NaiveDate, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{BarSeries, Candle, MarketDataError, Period, TradingCalendar};

#[derive(Debug, Clone, Copy)]
pub struct Regime {
    /// Annualized volatility, >= 0.
    pub vol: f64,
    /// Drift per year.
    pub drift: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub regimes: Vec<Regime>,
    /// Row-stochastic regime transition matrix, sampled per bar.
    pub transition: Vec<Vec<f64>>,
    pub seed: u64,
    pub bars: usize,
    pub initial_price: f64,
    pub period: Period,
    /// First (possibly skipped) session date; bars land on trading days only.
    pub start_date: NaiveDate,
    /// Minutes after UTC midnight at which the session opens.
    pub session_open_minutes: u32,
    pub calendar: TradingCalendar,
    pub trading_days_per_year: u32,
}

impl SyntheticSpec {
    /// Single-regime spec with an index-style session (16 bars of 15 min).
    pub fn single_regime(vol: f64, drift: f64, seed: u64, bars: usize, initial_price: f64) -> Self {
        SyntheticSpec {
            regimes: vec![Regime { vol, drift }],
            transition: vec![vec![1.0]],
            seed,
            bars,
            initial_price,
            period: Period::M15,
            start_date: NaiveDate::from_ymd_opt(2020, 1, 6).unwrap(),
            session_open_minutes: 90,
            calendar: TradingCalendar::week_5x(16),
            trading_days_per_year: 242,
        }
    }

    /// Periods in a year at the spec's base period.
    pub fn annualization_factor(&self) -> f64 {
        (self.calendar.bars_per_day() * self.trading_days_per_year) as f64
    }

    pub fn validate(&self) -> Result<(), MarketDataError> {
        let bad = |msg: String| Err(MarketDataError::InvalidSpec(msg));
        if self.regimes.is_empty() {
            return bad("need at least one regime".into());
        }
        if self.regimes.iter().any(|r| !(r.vol >= 0.0) || !r.drift.is_finite()) {
            return bad("regime vol must be >= 0 and drift finite".into());
        }
        if self.transition.len() != self.regimes.len() {
            return bad(format!(
                "transition matrix has {} rows for {} regimes",
                self.transition.len(),
                self.regimes.len()
            ));
        }
        for (i, row) in self.transition.iter().enumerate() {
            if row.len() != self.regimes.len() {
                return bad(format!("transition row {i} has wrong length"));
            }
            if row.iter().any(|p| !(*p >= 0.0)) {
                return bad(format!("transition row {i} has negative entries"));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return bad(format!("transition row {i} sums to {sum}, not 1"));
            }
        }
        if !(self.initial_price > 0.0) {
            return bad("initial price must be positive".into());
        }
        if self.bars == 0 {
            return bad("bar count must be positive".into());
        }
        Ok(())
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<BarSeries, MarketDataError> {
    generate_synthetic_with_regimes(spec).map(|(series, _)| series)
}

/// Like [`generate_synthetic`] but also returns the per-bar regime index,
/// which evaluation harnesses use to label bars.
pub fn generate_synthetic_with_regimes(
    spec: &SyntheticSpec,
) -> Result<(BarSeries, Vec<usize>), MarketDataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dt = 1.0 / spec.annualization_factor();
    let sub_dt = dt / 4.0;

    let mut bars = Vec::with_capacity(spec.bars);
    let mut regimes = Vec::with_capacity(spec.bars);
    let mut regime = 0usize;
    let mut price = spec.initial_price;
    let mut date = spec.start_date;
    let mut slot = 0u32;

    while bars.len() < spec.bars {
        while !spec.calendar.is_trading_day(date) {
            date = date + Duration::days(1);
        }
        if !bars.is_empty() {
            regime = step_regime(&spec.transition[regime], &mut rng);
        }
        let Regime { vol, drift } = spec.regimes[regime];

        let open = price;
        let mut high = open;
        let mut low = open;
        for _ in 0..4 {
            let z: f64 = rng.sample(StandardNormal);
            price *= ((drift - 0.5 * vol * vol) * sub_dt + vol * sub_dt.sqrt() * z).exp();
            high = high.max(price);
            low = low.min(price);
        }
        let close = price;
        let zv: f64 = rng.sample(StandardNormal);
        let volume = 1000.0 * (0.25 * zv).exp();
        let value = volume * 0.5 * (open + close);

        bars.push(Candle {
            timestamp: bar_close_time(date, spec.session_open_minutes, slot, spec.period),
            open,
            high,
            low,
            close,
            volume,
            value,
        });
        regimes.push(regime);

        slot += 1;
        if slot == spec.calendar.bars_per_day() {
            slot = 0;
            date = date + Duration::days(1);
        }
    }

    Ok((BarSeries::new(spec.period, bars)?, regimes))
}

fn step_regime(row: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    row.len() - 1
}

fn bar_close_time(date: NaiveDate, open_minutes: u32, slot: u32, period: Period) -> DateTime<Utc> {
    let minutes = open_minutes as i64 + (slot as i64 + 1) * period.as_minutes() as i64;
    DateTime::<Utc>::from_naive_utc_and_offset(
        date.and_hms_opt(0, 0, 0).unwrap() + Duration::minutes(minutes),
        Utc,
    )
}
