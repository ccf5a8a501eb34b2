//! Equity-curve metrics: annualized log return, Sharpe ratio and log-form
//! maximum drawdown.

use chrono::{DateTime, Utc};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("equity curve needs positive values and strictly increasing timestamps")]
    BadCurve,
}

/// Account value at every base-period bar of an evaluation.
#[derive(Debug, Clone)]
pub struct EquityCurve {
    points: Vec<(DateTime<Utc>, f64)>,
}

/// Calendar year used to annualize elapsed time.
pub const YEAR_SECONDS: f64 = 365.0 * 86_400.0;

/// Divergent zero-variance Sharpe ratios are capped here.
pub const SHARPE_CAP: f64 = 1e6;

impl EquityCurve {
    pub fn new(points: Vec<(DateTime<Utc>, f64)>) -> Result<EquityCurve, MetricsError> {
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(MetricsError::BadCurve);
            }
        }
        if points.iter().any(|(_, v)| !(*v > 0.0) || !v.is_finite()) {
            return Err(MetricsError::BadCurve);
        }
        Ok(EquityCurve { points })
    }

    pub fn points(&self) -> &[(DateTime<Utc>, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|(_, v)| *v)
    }

    fn log_returns(&self) -> Vec<f64> {
        self.points.windows(2).map(|w| (w[1].1 / w[0].1).ln()).collect()
    }
}

/// Annualized mean log return: `ln(V_end / V_start) * year / elapsed`.
/// Degenerate curves (fewer than two points) report 0.
pub fn avgr(curve: &EquityCurve) -> f64 {
    if curve.len() < 2 {
        return 0.0;
    }
    let (t0, v0) = curve.points[0];
    let (t1, v1) = *curve.points.last().expect("non-empty");
    let elapsed = (t1 - t0).num_milliseconds() as f64 / 1000.0;
    if elapsed <= 0.0 {
        return 0.0;
    }
    (v1 / v0).ln() * YEAR_SECONDS / elapsed
}

/// Sharpe ratio at risk-free 0: annualized mean over annualized standard
/// deviation of per-bar log returns, i.e. `mean/std * sqrt(bars_per_year)`.
/// A constant curve reports 0; zero variance with nonzero mean reports the
/// signed [`SHARPE_CAP`] sentinel.
pub fn sharpe(curve: &EquityCurve, bars_per_year: f64) -> f64 {
    let returns = curve.log_returns();
    if returns.len() < 2 {
        return 0.0;
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1.0);
    let std = var.sqrt();
    if std == 0.0 {
        return if mean == 0.0 {
            0.0
        } else {
            SHARPE_CAP.copysign(mean)
        };
    }
    mean / std * bars_per_year.sqrt()
}

/// Worst peak-to-trough decline in log space:
/// `min_t [ln V_t - max_{s<=t} ln V_s]`, always <= 0.
pub fn max_drawdown_log(curve: &EquityCurve) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut worst = 0.0f64;
    for v in curve.values() {
        let lv = v.ln();
        peak = peak.max(lv);
        worst = worst.min(lv - peak);
    }
    worst
}

/// One policy's backtest summary.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub avgr: f64,
    pub sharpe: f64,
    pub mdd: f64,
    pub trades: usize,
    pub win_rate: f64,
    pub fees: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use chrono::TimeZone;

    fn curve_over(values: &[f64], spacing_secs: i64) -> EquityCurve {
        let t0 = Utc.with_ymd_and_hms(2022, 1, 1, 0, 0, 0).unwrap();
        EquityCurve::new(
            values
                .iter()
                .enumerate()
                .map(|(i, &v)| (t0 + chrono::Duration::seconds(spacing_secs * i as i64), v))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn avgr_doubling_over_a_year() {
        let year = (YEAR_SECONDS / 2.0) as i64;
        let c = curve_over(&[1.0, 1.5, 2.0], year / 1); // two intervals of half a year
        assert_relative_eq!(avgr(&c), std::f64::consts::LN_2, epsilon = 1e-12);
    }

    #[test]
    fn avgr_flat_and_halving() {
        let year = (YEAR_SECONDS / 2.0) as i64;
        assert_eq!(avgr(&curve_over(&[5.0, 5.0, 5.0], year)), 0.0);
        let halved = curve_over(&[2.0, 1.5, 1.0], year);
        assert_relative_eq!(avgr(&halved), -std::f64::consts::LN_2, epsilon = 1e-12);
    }

    #[test]
    fn sharpe_constant_curve_is_zero() {
        assert_eq!(sharpe(&curve_over(&[3.0, 3.0, 3.0, 3.0], 900), 3872.0), 0.0);
    }

    #[test]
    fn sharpe_deterministic_growth_hits_cap() {
        let c = curve_over(&[1.0, 1.01, 1.0201, 1.030301], 900);
        assert_eq!(sharpe(&c, 3872.0), SHARPE_CAP);
        let d = curve_over(&[1.0, 0.99, 0.9801], 900);
        assert_eq!(sharpe(&d, 3872.0), -SHARPE_CAP);
    }

    #[test]
    fn sharpe_alternating_returns_is_zero() {
        // log returns alternate +x, -x: mean exactly 0.
        let x = 0.01f64.exp();
        let c = curve_over(&[1.0, x, 1.0, x, 1.0], 900);
        assert!(sharpe(&c, 3872.0).abs() < 1e-12);
    }

    #[test]
    fn mdd_monotone_curve_is_zero() {
        assert_eq!(max_drawdown_log(&curve_over(&[1.0, 1.1, 1.2, 1.2, 1.3], 900)), 0.0);
    }

    #[test]
    fn mdd_worked_examples() {
        let c = curve_over(&[1.0, 0.8, 1.2], 900);
        assert_relative_eq!(max_drawdown_log(&c), 0.8f64.ln(), epsilon = 1e-15);
        let d = curve_over(&[1.0, 1.2, 0.9], 900);
        assert_relative_eq!(max_drawdown_log(&d), (0.9f64 / 1.2).ln(), epsilon = 1e-15);
    }

    #[test]
    fn mdd_is_scale_invariant() {
        let a = curve_over(&[1.0, 0.7, 1.5, 1.1], 900);
        let b = curve_over(&[10.0, 7.0, 15.0, 11.0], 900);
        assert_relative_eq!(max_drawdown_log(&a), max_drawdown_log(&b), epsilon = 1e-12);
    }

    #[test]
    fn avgr_time_weighted_composition() {
        // avgr over concatenation equals the duration-weighted mean.
        let half = (YEAR_SECONDS / 2.0) as i64;
        let joint = curve_over(&[1.0, 1.3, 1.56], half);
        let a = curve_over(&[1.0, 1.3], half);
        let t0 = Utc.with_ymd_and_hms(2022, 1, 1, 0, 0, 0).unwrap();
        let b = EquityCurve::new(vec![
            (t0 + chrono::Duration::seconds(half), 1.3),
            (t0 + chrono::Duration::seconds(2 * half), 1.56),
        ])
        .unwrap();
        let expected = 0.5 * avgr(&a) + 0.5 * avgr(&b);
        assert_relative_eq!(avgr(&joint), expected, epsilon = 1e-12);
    }
}
