//! Historical-volatility estimation and Black-Scholes settlement.
//!
//! Everything here is a pure function over immutable inputs in 64-bit floats.
//! Settlement volatility is the zero-mean estimator: the mean of short-window
//! returns is too noisy to estimate, so it is pinned at zero and the raw
//! squared log returns are annualized directly.

mod normal;

pub use normal::norm_cdf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PricingError {
    #[error("need at least {need} closes, got {got}")]
    InsufficientData { need: usize, got: usize },
    #[error("non-positive close price")]
    NonPositivePrice,
    #[error("invalid quote: {0}")]
    InvalidQuote(&'static str),
    #[error("delta undefined at tau = 0 or sigma = 0; settle at intrinsic instead")]
    DegenerateDelta,
    #[error("expiry precedes valuation time")]
    ExpiryBeforeNow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptionKind {
    Call,
    Put,
}

/// Inputs of the European pricing formula.
#[derive(Debug, Clone, Copy)]
pub struct OptionQuote {
    pub kind: OptionKind,
    /// Spot price S > 0.
    pub spot: f64,
    /// Strike K > 0.
    pub strike: f64,
    /// Risk-free rate per year.
    pub rate: f64,
    /// Volatility per sqrt-year, >= 0.
    pub sigma: f64,
    /// Time to expiry in years, >= 0.
    pub tau: f64,
}

impl OptionQuote {
    pub fn validate(&self) -> Result<(), PricingError> {
        if !(self.spot > 0.0) || !self.spot.is_finite() {
            return Err(PricingError::InvalidQuote("spot must be positive"));
        }
        if !(self.strike > 0.0) || !self.strike.is_finite() {
            return Err(PricingError::InvalidQuote("strike must be positive"));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(PricingError::InvalidQuote("sigma must be >= 0"));
        }
        if !(self.tau >= 0.0) || !self.tau.is_finite() {
            return Err(PricingError::InvalidQuote("tau must be >= 0"));
        }
        if !self.rate.is_finite() {
            return Err(PricingError::InvalidQuote("rate must be finite"));
        }
        Ok(())
    }
}

/// Annualized volatility estimate.
#[derive(Debug, Clone, Copy)]
pub struct VolEstimate {
    /// Annualized sigma, >= 0.
    pub value: f64,
    /// Days of history the estimate covers (labeling only).
    pub window_days: u32,
    /// Annualization factor F: periods per year of the sampled closes.
    pub annualization: f64,
    /// Number of returns N entering the sum.
    pub samples: usize,
}

/// Log returns of a close series: element i is ln(c_{i+1} / c_i).
pub fn log_returns(closes: &[f64]) -> Result<Vec<f64>, PricingError> {
    if closes.len() < 2 {
        return Err(PricingError::InsufficientData { need: 2, got: closes.len() });
    }
    if closes.iter().any(|c| !(*c > 0.0)) {
        return Err(PricingError::NonPositivePrice);
    }
    Ok(closes.windows(2).map(|w| (w[1] / w[0]).ln()).collect())
}

/// Zero-mean historical volatility:
/// `HV = sqrt( F/(N-1) * sum of squared log returns )`, N returns.
pub fn hv_zero_mean(closes: &[f64], f: f64, window_days: u32) -> Result<VolEstimate, PricingError> {
    let returns = returns_for_hv(closes)?;
    let sum_sq: f64 = returns.iter().map(|r| r * r).sum();
    let n = returns.len();
    Ok(VolEstimate {
        value: (f / (n as f64 - 1.0) * sum_sq).sqrt(),
        window_days,
        annualization: f,
        samples: n,
    })
}

/// Mean-subtracted (textbook) historical volatility, kept for comparison:
/// `sqrt( F/(N-1) * sum (r_i - rbar)^2 )`.
pub fn hv_sample_std(closes: &[f64], f: f64, window_days: u32) -> Result<VolEstimate, PricingError> {
    let returns = returns_for_hv(closes)?;
    let n = returns.len();
    let mean = returns.iter().sum::<f64>() / n as f64;
    let sum_sq: f64 = returns.iter().map(|r| (r - mean) * (r - mean)).sum();
    Ok(VolEstimate {
        value: (f / (n as f64 - 1.0) * sum_sq).sqrt(),
        window_days,
        annualization: f,
        samples: n,
    })
}

fn returns_for_hv(closes: &[f64]) -> Result<Vec<f64>, PricingError> {
    if closes.len() < 3 {
        return Err(PricingError::InsufficientData { need: 3, got: closes.len() });
    }
    log_returns(closes)
}

fn d1_d2(spot: f64, strike: f64, rate: f64, sigma: f64, tau: f64) -> (f64, f64) {
    let vol_sqrt_t = sigma * tau.sqrt();
    let d1 = ((spot / strike).ln() + (rate + 0.5 * sigma * sigma) * tau) / vol_sqrt_t;
    (d1, d1 - vol_sqrt_t)
}

/// European option value. At `tau = 0` or `sigma = 0` the lognormal collapses
/// and the discounted intrinsic value is returned.
pub fn bs_price(q: &OptionQuote) -> Result<f64, PricingError> {
    q.validate()?;
    let disc_strike = q.strike * (-q.rate * q.tau).exp();
    if q.tau == 0.0 || q.sigma == 0.0 {
        return Ok(match q.kind {
            OptionKind::Call => (q.spot - disc_strike).max(0.0),
            OptionKind::Put => (disc_strike - q.spot).max(0.0),
        });
    }
    let (d1, d2) = d1_d2(q.spot, q.strike, q.rate, q.sigma, q.tau);
    Ok(match q.kind {
        OptionKind::Call => q.spot * norm_cdf(d1) - disc_strike * norm_cdf(d2),
        OptionKind::Put => -q.spot * norm_cdf(-d1) + disc_strike * norm_cdf(-d2),
    })
}

/// Spot sensitivity: `N(d1)` for calls, `N(d1) - 1` for puts.
pub fn bs_delta(q: &OptionQuote) -> Result<f64, PricingError> {
    q.validate()?;
    if q.tau == 0.0 || q.sigma == 0.0 {
        return Err(PricingError::DegenerateDelta);
    }
    let (d1, _) = d1_d2(q.spot, q.strike, q.rate, q.sigma, q.tau);
    Ok(match q.kind {
        OptionKind::Call => norm_cdf(d1),
        OptionKind::Put => norm_cdf(d1) - 1.0,
    })
}

/// Time to expiry under the market's 360-day year, fractional days included.
pub fn year_fraction(
    now: chrono::DateTime<chrono::Utc>,
    expiry: chrono::DateTime<chrono::Utc>,
) -> Result<f64, PricingError> {
    let seconds = (expiry - now).num_milliseconds() as f64 / 1000.0;
    if seconds < 0.0 {
        return Err(PricingError::ExpiryBeforeNow);
    }
    Ok(seconds / (360.0 * 86_400.0))
}
