//! Observation assembly: per-period feature windows, resistance flag and
//! holding time.
//!
//! Feature rows per step (base sequence):
//!   0-3  ln(open/high/low/close divided by the window's first close)
//!   4    volume z-score over the window
//!   5    value z-score over the window
//!   6    annualized historical volatility over the trailing hv window
//!   7    days to the next trading day, divided by 3
//!   8    floating log P&L of the open position at that step, 0 when flat
//! Per-period observation sequences carry rows 0-7 only.

use chrono::{DateTime, Utc};

use crate::marketdata::{days_to_next_trading_day, BarSeries, Period, TradingCalendar};
use crate::qnet::tensor::Mat;
use crate::resistance::{detect_swings, live_levels, resistance_flag, SwingPoint};

use super::straddle::{mark_to_market, StraddlePosition};
use super::{EnvConfig, EnvError};

pub const BASE_FEATURES: usize = 9;
pub const OBS_FEATURES: usize = 8;
const PNL_ROW: usize = 8;
const PNL_CLAMP: f64 = 10.0;

/// The full RL observation.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketState {
    /// Base-period window, `BASE_FEATURES` x d.
    pub seq: Mat,
    /// One `OBS_FEATURES` x d matrix per configured period.
    pub obs: Vec<Mat>,
    /// 1.0 when the close sits in a resistance area, else 0.0.
    pub res_flag: f64,
    /// Bars held scaled by the maximum holding period; 0.0 when flat.
    pub hold_time: f64,
}

/// One series with everything per-bar features need, precomputed once.
struct PreparedSeries {
    series: BarSeries,
    ln_prices: [Vec<f64>; 4],
    volume_prefix: Vec<f64>,
    volume_sq_prefix: Vec<f64>,
    value_prefix: Vec<f64>,
    value_sq_prefix: Vec<f64>,
    /// Prefix sums of squared log close returns; entry j covers returns 1..=j.
    r2_prefix: Vec<f64>,
    days_feature: Vec<f64>,
    /// Returns in the hv window.
    hv_returns: usize,
    annualization: f64,
}

impl PreparedSeries {
    fn prepare(
        series: BarSeries,
        calendar: &TradingCalendar,
        bars_per_day: u32,
        hv_days: u32,
        trading_days_per_year: u32,
    ) -> PreparedSeries {
        let bars = series.bars();
        let n = bars.len();
        let mut ln_prices: [Vec<f64>; 4] = Default::default();
        for v in &mut ln_prices {
            v.reserve(n);
        }
        let mut volume_prefix = Vec::with_capacity(n + 1);
        let mut volume_sq_prefix = Vec::with_capacity(n + 1);
        let mut value_prefix = Vec::with_capacity(n + 1);
        let mut value_sq_prefix = Vec::with_capacity(n + 1);
        let mut r2_prefix = Vec::with_capacity(n);
        let mut days_feature = Vec::with_capacity(n);
        volume_prefix.push(0.0);
        volume_sq_prefix.push(0.0);
        value_prefix.push(0.0);
        value_sq_prefix.push(0.0);

        for (i, bar) in bars.iter().enumerate() {
            ln_prices[0].push(bar.open.ln());
            ln_prices[1].push(bar.high.ln());
            ln_prices[2].push(bar.low.ln());
            ln_prices[3].push(bar.close.ln());
            volume_prefix.push(volume_prefix[i] + bar.volume);
            volume_sq_prefix.push(volume_sq_prefix[i] + bar.volume * bar.volume);
            value_prefix.push(value_prefix[i] + bar.value);
            value_sq_prefix.push(value_sq_prefix[i] + bar.value * bar.value);
            let r2 = if i == 0 {
                0.0
            } else {
                let r = (bar.close / bars[i - 1].close).ln();
                r * r
            };
            r2_prefix.push(if i == 0 { 0.0 } else { r2_prefix[i - 1] + r2 });
            days_feature.push(days_to_next_trading_day(bar.timestamp, calendar) as f64 / 3.0);
        }

        PreparedSeries {
            series,
            ln_prices,
            volume_prefix,
            volume_sq_prefix,
            value_prefix,
            value_sq_prefix,
            r2_prefix,
            days_feature,
            hv_returns: (hv_days * bars_per_day) as usize,
            annualization: (bars_per_day * trading_days_per_year) as f64,
        }
    }

    /// First index at which the trailing hv window is complete.
    fn min_index(&self) -> usize {
        self.hv_returns
    }

    /// Annualized zero-mean volatility of the `hv_returns` returns ending at
    /// bar `i`.
    fn hv_at(&self, i: usize) -> f64 {
        let n = self.hv_returns;
        debug_assert!(i >= n && n >= 2);
        let sum_sq = self.r2_prefix[i] - self.r2_prefix[i - n];
        (self.annualization / (n as f64 - 1.0) * sum_sq.max(0.0)).sqrt()
    }

    fn window_stats(&self, prefix: &[f64], sq_prefix: &[f64], w0: usize, d: usize) -> (f64, f64) {
        let sum = prefix[w0 + d] - prefix[w0];
        let sum_sq = sq_prefix[w0 + d] - sq_prefix[w0];
        let mean = sum / d as f64;
        let var = if d > 1 { (sum_sq - sum * mean).max(0.0) / (d as f64 - 1.0) } else { 0.0 };
        (mean, var.sqrt())
    }

    /// Fill the static rows (0..=7) of the feature matrix for the window of
    /// `d` bars ending at `t`.
    fn fill_features(&self, mat: &mut Mat, t: usize, d: usize) {
        let w0 = t + 1 - d;
        let ln_c0 = self.ln_prices[3][w0];
        let (vol_mean, vol_std) = self.window_stats(&self.volume_prefix, &self.volume_sq_prefix, w0, d);
        let (val_mean, val_std) = self.window_stats(&self.value_prefix, &self.value_sq_prefix, w0, d);
        let bars = self.series.bars();
        for c in 0..d {
            let i = w0 + c;
            for row in 0..4 {
                *mat.at_mut(row, c) = self.ln_prices[row][i] - ln_c0;
            }
            *mat.at_mut(4, c) = z_score(bars[i].volume, vol_mean, vol_std);
            *mat.at_mut(5, c) = z_score(bars[i].value, val_mean, val_std);
            *mat.at_mut(6, c) = self.hv_at(i);
            *mat.at_mut(7, c) = self.days_feature[i];
        }
    }
}

fn z_score(x: f64, mean: f64, std: f64) -> f64 {
    if std > 0.0 {
        (x - mean) / std
    } else {
        0.0
    }
}

/// Immutable per-dataset cache every state is assembled from: the base and
/// resampled series, their feature precomputations, the base-to-period index
/// map and the per-bar resistance flags. Safe to share across threads.
pub struct StateBuilder {
    base: PreparedSeries,
    obs: Vec<PreparedSeries>,
    /// For each period: last period-bar index with timestamp <= base bar t's.
    obs_index: Vec<Vec<Option<usize>>>,
    window: usize,
    res_flags: Vec<f64>,
    min_state_index: usize,
    max_hold_bars: u32,
    bars_per_day: u32,
    rate: f64,
    hv_window_days: u32,
}

impl StateBuilder {
    pub fn prepare(
        base: BarSeries,
        calendar: &TradingCalendar,
        cfg: &EnvConfig,
    ) -> Result<StateBuilder, EnvError> {
        cfg.validate()?;
        let d = cfg.window_steps;
        let bpd = calendar.bars_per_day();
        let base_minutes = base.period().as_minutes();
        if base.len() <= d {
            return Err(EnvError::InsufficientHistory {
                have: base.len(),
                need: d + 1,
            });
        }

        // Per-bar resistance flags from swings detected causally over the
        // whole series.
        let (res_pts, sup_pts) = detect_swings(&base, &cfg.resistance)
            .map_err(|e| EnvError::BadConfig(e.to_string()))?;
        let res_flags = flag_per_bar(&base, &res_pts, &sup_pts, cfg);

        let mut obs = Vec::new();
        let mut obs_index = Vec::new();
        for &p in &cfg.periods {
            let period = Period::minutes(p);
            let (series, bars_per_day_p) = if period.is_daily() {
                (base.resample_daily(), 1)
            } else {
                if p % base_minutes != 0 {
                    return Err(EnvError::BadConfig(format!(
                        "period {p} min is not a multiple of the base {base_minutes} min"
                    )));
                }
                let k = p / base_minutes;
                if bpd % k != 0 {
                    return Err(EnvError::BadConfig(format!(
                        "period {p} min does not divide the {bpd}-bar session"
                    )));
                }
                (base.resample(period)?, bpd / k)
            };
            obs_index.push(index_map(&base, &series));
            obs.push(PreparedSeries::prepare(
                series,
                calendar,
                bars_per_day_p,
                cfg.hv_days,
                cfg.profile.trading_days_per_year,
            ));
        }

        let base_prepared =
            PreparedSeries::prepare(base, calendar, bpd, cfg.hv_days, cfg.profile.trading_days_per_year);

        let mut min_state_index = base_prepared.min_index() + d - 1;
        for (series, index) in obs.iter().zip(&obs_index) {
            let need = series.min_index() + d - 1;
            let first_t = index
                .iter()
                .position(|idx| idx.map_or(false, |j| j >= need))
                .ok_or(EnvError::InsufficientHistory {
                    have: index.len(),
                    need: need + 1,
                })?;
            min_state_index = min_state_index.max(first_t);
        }

        Ok(StateBuilder {
            base: base_prepared,
            obs,
            obs_index,
            window: d,
            res_flags,
            min_state_index,
            max_hold_bars: cfg.max_hold_days * bpd,
            bars_per_day: bpd,
            rate: cfg.profile.risk_free_rate,
            hv_window_days: cfg.hv_days,
        })
    }

    pub fn base_series(&self) -> &BarSeries {
        &self.base.series
    }

    pub fn len(&self) -> usize {
        self.base.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.series.is_empty()
    }

    /// Earliest bar index with enough history for every window.
    pub fn min_state_index(&self) -> usize {
        self.min_state_index
    }

    pub fn max_hold_bars(&self) -> u32 {
        self.max_hold_bars
    }

    pub fn bars_per_day(&self) -> u32 {
        self.bars_per_day
    }

    pub fn timestamp(&self, t: usize) -> DateTime<Utc> {
        self.base.series.bars()[t].timestamp
    }

    pub fn close(&self, t: usize) -> f64 {
        self.base.series.bars()[t].close
    }

    pub fn res_flag(&self, t: usize) -> f64 {
        self.res_flags[t]
    }

    /// Settlement volatility at bar `t` (trailing hv window of base closes).
    pub fn settlement_vol(&self, t: usize) -> crate::pricing::VolEstimate {
        crate::pricing::VolEstimate {
            value: self.base.hv_at(t),
            window_days: self.hv_window_days,
            annualization: self.base.annualization,
            samples: self.base.hv_returns,
        }
    }

    /// Mark an open position at bar `t`.
    pub fn mark_position(&self, t: usize, pos: &StraddlePosition) -> super::straddle::MarkValue {
        mark_to_market(pos, self.close(t), &self.settlement_vol(t), self.rate, self.timestamp(t))
    }

    /// Assemble the observation at bar `t`.
    pub fn build_state(
        &self,
        t: usize,
        position: Option<(&StraddlePosition, usize)>,
        hold_bars: u32,
    ) -> Result<MarketState, EnvError> {
        if t < self.min_state_index || t >= self.len() {
            return Err(EnvError::InsufficientHistory {
                have: t,
                need: self.min_state_index,
            });
        }
        let d = self.window;
        let mut seq = Mat::zeros(BASE_FEATURES, d);
        self.base.fill_features(&mut seq, t, d);

        if let Some((pos, open_bar)) = position {
            let w0 = t + 1 - d;
            for c in 0..d {
                let i = w0 + c;
                if i >= open_bar {
                    let mark = self.mark_position(i, pos);
                    let ret = (mark.total / pos.cost).ln();
                    *seq.at_mut(PNL_ROW, c) = ret.clamp(-PNL_CLAMP, PNL_CLAMP);
                }
            }
        }

        let mut obs = Vec::with_capacity(self.obs.len());
        for (series, index) in self.obs.iter().zip(&self.obs_index) {
            let j = index[t].expect("min_state_index guarantees history");
            let mut mat = Mat::zeros(OBS_FEATURES, d);
            series.fill_features(&mut mat, j, d);
            obs.push(mat);
        }

        Ok(MarketState {
            seq,
            obs,
            res_flag: self.res_flags[t],
            hold_time: if position.is_some() {
                hold_bars as f64 / self.max_hold_bars as f64
            } else {
                0.0
            },
        })
    }
}

fn index_map(base: &BarSeries, other: &BarSeries) -> Vec<Option<usize>> {
    let mut out = Vec::with_capacity(base.len());
    let mut j = 0usize;
    let other_bars = other.bars();
    for bar in base.bars() {
        while j < other_bars.len() && other_bars[j].timestamp <= bar.timestamp {
            j += 1;
        }
        out.push(j.checked_sub(1));
    }
    out
}

fn flag_per_bar(
    base: &BarSeries,
    res_pts: &[SwingPoint],
    sup_pts: &[SwingPoint],
    cfg: &EnvConfig,
) -> Vec<f64> {
    let bars = base.bars();
    let mut flags = Vec::with_capacity(bars.len());
    for bar in bars {
        let levels = live_levels(
            res_pts,
            sup_pts,
            bar.timestamp,
            cfg.resistance.lookback_days,
            cfg.merge_pct,
        );
        flags.push(if resistance_flag(bar.close, &levels, cfg.resistance.area) { 1.0 } else { 0.0 });
    }
    flags
}
