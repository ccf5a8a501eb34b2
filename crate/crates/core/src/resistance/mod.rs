//! Swing-point detection, level clustering and the resistance-area flag.
//!
//! Detection walks the close series with a sliding momentum difference
//! `M_t = close_t - close_{t-d}`; a sign change of `M` marks a candidate
//! swing, admitted by comparing the close against the last recorded
//! resistance/support point with the reversal range `f` and breakthrough
//! range `e`. Both point sets are seeded with the first bar. Note the
//! admission comparisons are direction-asymmetric (support uses `<`,
//! resistance uses `>`); this is deliberate and matched by the transcription
//! oracle in the test suite.

use chrono::{DateTime, Duration, Utc};
use thiserror::Error;

use crate::marketdata::BarSeries;

#[derive(Debug, Error)]
pub enum ResistanceError {
    #[error("series of {len} bars is too short for sliding window d = {d}")]
    SeriesTooShort { len: usize, d: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwingKind {
    Resistance,
    Support,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwingPoint {
    pub price: f64,
    pub time: DateTime<Utc>,
    pub kind: SwingKind,
}

#[derive(Debug, Clone, Copy)]
pub struct ResistanceParams {
    /// Sliding-window length d in bars.
    pub window: usize,
    /// Reversal range f, as a fraction (0.01 = 1%).
    pub reversal: f64,
    /// Breakthrough range e, as a fraction.
    pub breakthrough: f64,
    /// Resistance-area half-width, as a fraction of the level.
    pub area: f64,
    /// Only swings this recent feed the live level set.
    pub lookback_days: u32,
}

impl Default for ResistanceParams {
    fn default() -> Self {
        ResistanceParams {
            window: 16,
            reversal: 0.01,
            breakthrough: 0.005,
            area: 0.003,
            lookback_days: 20,
        }
    }
}

/// Resistance and support points of the series, in detection order.
/// Each set starts with the first bar as its seed.
pub fn detect_swings(
    series: &BarSeries,
    params: &ResistanceParams,
) -> Result<(Vec<SwingPoint>, Vec<SwingPoint>), ResistanceError> {
    let bars = series.bars();
    let d = params.window.max(1);
    if bars.len() <= d {
        return Err(ResistanceError::SeriesTooShort { len: bars.len(), d });
    }

    let seed = |kind| SwingPoint { price: bars[0].close, time: bars[0].timestamp, kind };
    let mut res = vec![seed(SwingKind::Resistance)];
    let mut sup = vec![seed(SwingKind::Support)];

    let mut prev_m: Option<f64> = None;
    for t in d..bars.len() {
        let m = bars[t].close - bars[t - d].close;
        if let Some(pm) = prev_m {
            if m * pm < 0.0 {
                let close = bars[t].close;
                if m > 0.0 {
                    let vs_res = close / res.last().unwrap().price - 1.0;
                    let vs_sup = close / sup.last().unwrap().price - 1.0;
                    if vs_res < params.reversal || vs_sup < params.breakthrough {
                        sup.push(SwingPoint {
                            price: close,
                            time: bars[t].timestamp,
                            kind: SwingKind::Support,
                        });
                    }
                } else {
                    let vs_sup = close / sup.last().unwrap().price - 1.0;
                    let vs_res = close / res.last().unwrap().price - 1.0;
                    if vs_sup > params.reversal || vs_res > params.breakthrough {
                        res.push(SwingPoint {
                            price: close,
                            time: bars[t].timestamp,
                            kind: SwingKind::Resistance,
                        });
                    }
                }
            }
        }
        prev_m = Some(m);
    }
    Ok((res, sup))
}

/// Merge closely grouped swing prices into levels. Points within
/// `merge_pct` relative distance of their neighbor collapse into one level
/// at the group's mean price; output is ascending with pairwise gaps above
/// `merge_pct`.
pub fn cluster_levels(points: &[SwingPoint], merge_pct: f64) -> Vec<f64> {
    debug_assert!(merge_pct >= 0.0, "merge distance must be non-negative");
    let mut prices: Vec<f64> = points.iter().map(|p| p.price).collect();
    prices.sort_by(|a, b| a.partial_cmp(b).expect("finite prices"));

    let mut levels = Vec::new();
    let mut group: Vec<f64> = Vec::new();
    for price in prices {
        if let Some(&last) = group.last() {
            if price / last - 1.0 > merge_pct {
                levels.push(mean(&group));
                group.clear();
            }
        }
        group.push(price);
    }
    if !group.is_empty() {
        levels.push(mean(&group));
    }
    levels
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// 1 when the price sits within the resistance area of any level.
pub fn resistance_flag(price: f64, levels: &[f64], area_pct: f64) -> bool {
    levels.iter().any(|level| (price / level - 1.0).abs() <= area_pct)
}

/// The live level set at `now`: swings of both kinds no older than the
/// lookback horizon, clustered.
pub fn live_levels(
    res: &[SwingPoint],
    sup: &[SwingPoint],
    now: DateTime<Utc>,
    lookback_days: u32,
    merge_pct: f64,
) -> Vec<f64> {
    let horizon = now - Duration::days(lookback_days as i64);
    let recent: Vec<SwingPoint> = res
        .iter()
        .chain(sup.iter())
        .filter(|p| p.time > horizon && p.time <= now)
        .copied()
        .collect();
    cluster_levels(&recent, merge_pct)
}
