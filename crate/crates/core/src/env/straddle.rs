//! Straddle construction: strike selection on the grid, monthly expiry with
//! the 15-day roll, delta-neutral integer sizing under the position limit,
//! fee models and mark-to-market settlement.

use chrono::{DateTime, Datelike, Duration, NaiveDate, Utc, Weekday};

use crate::pricing::{bs_delta, bs_price, year_fraction, OptionKind, OptionQuote, VolEstimate};

use super::EnvError;

/// Monthly expiry date policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpiryRule {
    ThirdFriday,
    FourthWednesday,
}

impl ExpiryRule {
    pub fn expiry_date(&self, year: i32, month: u32) -> NaiveDate {
        let (weekday, ordinal) = match self {
            ExpiryRule::ThirdFriday => (Weekday::Fri, 3),
            ExpiryRule::FourthWednesday => (Weekday::Wed, 4),
        };
        let first = NaiveDate::from_ymd_opt(year, month, 1).expect("valid month");
        let offset = (7 + weekday.num_days_from_monday() as i64
            - first.weekday().num_days_from_monday() as i64)
            % 7;
        first + Duration::days(offset + 7 * (ordinal - 1))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StraddleRules {
    /// Strike grid interval S.
    pub strike_interval: f64,
    /// Roll to next month when fewer than this many calendar days remain.
    pub min_days_to_roll: i64,
    pub expiry_rule: ExpiryRule,
}

impl Default for StraddleRules {
    fn default() -> Self {
        StraddleRules {
            strike_interval: 50.0,
            min_days_to_roll: 15,
            expiry_rule: ExpiryRule::ThirdFriday,
        }
    }
}

/// Strike pair (call, put) for a spot price.
///
/// The grid cell [X, X+S) splits into thirds: the lower third takes both
/// strikes at X, the middle takes the call at X+S and the put at X, the
/// upper takes both at X+S. Boundaries belong to the upper segment.
pub fn select_strikes(price: f64, rules: &StraddleRules) -> (f64, f64) {
    let s = rules.strike_interval;
    let x = (price / s).floor() * s;
    let frac = (price - x) / s;
    if frac < 1.0 / 3.0 {
        (x, x)
    } else if frac < 2.0 / 3.0 {
        (x + s, x)
    } else {
        (x + s, x + s)
    }
}

/// Expiry instant for a position opened at `now`: the current month's
/// contract while at least `min_days_to_roll` calendar days remain,
/// otherwise next month's. The option expires at the end of the expiry
/// date (UTC midnight after it).
pub fn select_expiry(now: DateTime<Utc>, rules: &StraddleRules) -> DateTime<Utc> {
    let today = now.date_naive();
    let mut date = rules.expiry_rule.expiry_date(today.year(), today.month());
    if (date - today).num_days() < rules.min_days_to_roll {
        let (year, month) = if today.month() == 12 {
            (today.year() + 1, 1)
        } else {
            (today.year(), today.month() + 1)
        };
        date = rules.expiry_rule.expiry_date(year, month);
    }
    DateTime::from_naive_utc_and_offset(
        (date + Duration::days(1)).and_hms_opt(0, 0, 0).unwrap(),
        Utc,
    )
}

/// Brokerage models. Fees apply on both open and close.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeeModel {
    /// Index options: a fee per index point, so `fee_per_point * multiplier`
    /// currency per contract.
    PerPoint { fee_per_point: f64, multiplier: f64 },
    /// Fraction of strike notional, capped at a fraction of the premium
    /// changing hands (crypto-style).
    StrikeProportionalCapped { rate: f64, cap_frac: f64, contract_size: f64 },
    /// Flat currency amount per contract.
    PerContract { fee: f64 },
}

impl FeeModel {
    pub fn validate(&self) -> Result<(), EnvError> {
        let ok = match *self {
            FeeModel::PerPoint { fee_per_point, multiplier } => {
                fee_per_point >= 0.0 && multiplier > 0.0
            }
            FeeModel::StrikeProportionalCapped { rate, cap_frac, contract_size } => {
                rate >= 0.0 && cap_frac > 0.0 && cap_frac <= 1.0 && contract_size > 0.0
            }
            FeeModel::PerContract { fee } => fee >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(EnvError::BadConfig("invalid fee model parameters".into()))
        }
    }

    /// Fee for a transaction over option legs given as
    /// (strike, lots, premium changing hands in currency).
    pub fn fee(&self, legs: &[(f64, u32, f64)]) -> f64 {
        match *self {
            FeeModel::PerPoint { fee_per_point, multiplier } => {
                let lots: u32 = legs.iter().map(|l| l.1).sum();
                fee_per_point * multiplier * lots as f64
            }
            FeeModel::StrikeProportionalCapped { rate, cap_frac, contract_size } => legs
                .iter()
                .map(|&(strike, lots, premium)| {
                    (rate * strike * contract_size * lots as f64).min(cap_frac * premium)
                })
                .sum(),
            FeeModel::PerContract { fee } => {
                let lots: u32 = legs.iter().map(|l| l.1).sum();
                fee * lots as f64
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptionLeg {
    pub kind: OptionKind,
    pub strike: f64,
    pub lots: u32,
    /// Unit premium per underlying unit at entry.
    pub entry_premium: f64,
}

/// An open straddle: both legs share the expiry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StraddlePosition {
    pub call: OptionLeg,
    pub put: OptionLeg,
    pub expiry: DateTime<Utc>,
    pub multiplier: f64,
    /// Entry premium plus entry fees.
    pub cost: f64,
    /// Entry premium only.
    pub entry_premium: f64,
    pub open_time: DateTime<Utc>,
    /// Underlying close at open; the double-reward deviation reference.
    pub open_spot: f64,
}

/// Current value of a position.
#[derive(Debug, Clone, Copy)]
pub struct MarkValue {
    pub total: f64,
    pub call_unit: f64,
    pub put_unit: f64,
}

/// Value both legs at the settlement volatility; past expiry this collapses
/// to intrinsic value.
pub fn mark_to_market(
    pos: &StraddlePosition,
    spot: f64,
    hv: &VolEstimate,
    rate: f64,
    now: DateTime<Utc>,
) -> MarkValue {
    let tau = year_fraction(now, pos.expiry).unwrap_or(0.0);
    let unit = |kind: OptionKind, strike: f64| {
        bs_price(&OptionQuote { kind, spot, strike, rate, sigma: hv.value, tau })
            .expect("position quotes stay valid")
    };
    let call_unit = unit(OptionKind::Call, pos.call.strike);
    let put_unit = unit(OptionKind::Put, pos.put.strike);
    let total = pos.multiplier
        * (call_unit * pos.call.lots as f64 + put_unit * pos.put.lots as f64);
    MarkValue { total, call_unit, put_unit }
}

pub fn open_fee(pos: &StraddlePosition, fees: &FeeModel) -> f64 {
    let m = pos.multiplier;
    fees.fee(&[
        (pos.call.strike, pos.call.lots, pos.call.entry_premium * m * pos.call.lots as f64),
        (pos.put.strike, pos.put.lots, pos.put.entry_premium * m * pos.put.lots as f64),
    ])
}

/// Closing fee at current unit values (the premium changing hands now).
pub fn close_fee(pos: &StraddlePosition, fees: &FeeModel, mark: &MarkValue) -> f64 {
    let m = pos.multiplier;
    fees.fee(&[
        (pos.call.strike, pos.call.lots, mark.call_unit * m * pos.call.lots as f64),
        (pos.put.strike, pos.put.lots, mark.put_unit * m * pos.put.lots as f64),
    ])
}

const MAX_LOTS_PER_LEG: u32 = 10_000;
// Absorbs accumulated rounding in the affordability comparison.
const BUDGET_EPS: f64 = 1e-9;
// Delta mismatches within this of each other count as tied, so the
// premium tie-break fires under floating-point rounding.
const MISMATCH_TIE_EPS: f64 = 1e-9;

/// Smallest-|delta| integer lot pair under the budget
/// `limit * capital >= premium + entry fees`.
///
/// Ties prefer the larger total premium, then fewer call lots, then fewer
/// put lots. Degenerate deltas (sigma or tau zero) fall back to the
/// deterministic-forward step deltas so flat-market opens stay well defined.
#[allow(clippy::too_many_arguments)]
pub fn size_delta_neutral(
    spot: f64,
    strikes: (f64, f64),
    sigma: f64,
    rate: f64,
    tau: f64,
    capital: f64,
    limit: f64,
    fees: &FeeModel,
    multiplier: f64,
) -> Result<(u32, u32), EnvError> {
    let (k_call, k_put) = strikes;
    let quote = |kind, strike| OptionQuote { kind, spot, strike, rate, sigma, tau };
    let call_q = quote(OptionKind::Call, k_call);
    let put_q = quote(OptionKind::Put, k_put);
    let unit_call = bs_price(&call_q)? * multiplier;
    let unit_put = bs_price(&put_q)? * multiplier;
    if unit_call + unit_put <= 0.0 {
        return Err(EnvError::CannotAfford { needed: 0.0, budget: limit * capital });
    }

    let delta_call = bs_delta(&call_q).unwrap_or_else(|_| step_delta(OptionKind::Call, &call_q));
    let delta_put = bs_delta(&put_q).unwrap_or_else(|_| step_delta(OptionKind::Put, &put_q));

    search_lots(
        delta_call,
        delta_put,
        unit_call,
        unit_put,
        (k_call, k_put),
        limit * capital,
        fees,
    )
}

/// Integer search behind [`size_delta_neutral`]: minimize
/// `|nc * delta_call + np * delta_put|` subject to premium + fee <= budget.
/// For each call-lot count the objective is V-shaped in the put lots, so the
/// rounded unconstrained optimum clamped to the affordable range is optimal;
/// scanning every affordable call-lot count makes the result global.
pub(crate) fn search_lots(
    delta_call: f64,
    delta_put: f64,
    unit_call: f64,
    unit_put: f64,
    strikes: (f64, f64),
    budget: f64,
    fees: &FeeModel,
) -> Result<(u32, u32), EnvError> {
    let (k_call, k_put) = strikes;
    let affordable = |nc: u32, np: u32| -> bool {
        let premium = unit_call * nc as f64 + unit_put * np as f64;
        let fee = fees.fee(&[
            (k_call, nc, unit_call * nc as f64),
            (k_put, np, unit_put * np as f64),
        ]);
        premium + fee <= budget + BUDGET_EPS
    };
    if !affordable(1, 1) {
        let premium = unit_call + unit_put;
        let fee = fees.fee(&[(k_call, 1, unit_call), (k_put, 1, unit_put)]);
        return Err(EnvError::CannotAfford { needed: premium + fee, budget });
    }

    // Affordability is monotone in each lot count, so binary search works.
    let max_affordable = |fixed_call: bool, other: u32| -> u32 {
        let (mut lo, mut hi) = (1u32, MAX_LOTS_PER_LEG);
        while lo < hi {
            let mid = (lo + hi + 1) / 2;
            let ok = if fixed_call { affordable(other, mid) } else { affordable(mid, other) };
            if ok {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        lo
    };
    let nc_max = max_affordable(false, 1);

    struct Best {
        mismatch: f64,
        premium: f64,
        nc: u32,
        np: u32,
    }
    let mut best: Option<Best> = None;

    for nc in 1..=nc_max {
        if !affordable(nc, 1) {
            break;
        }
        let np_max = max_affordable(true, nc);
        let mut candidates: [u32; 2] = [1, 0];
        let mut n_cand = 1;
        if delta_put != 0.0 {
            let ideal = -(nc as f64) * delta_call / delta_put;
            let lo = (ideal.floor().max(1.0) as u32).min(np_max);
            let hi = (ideal.ceil().max(1.0) as u32).min(np_max);
            candidates[0] = lo;
            if hi != lo {
                candidates[1] = hi;
                n_cand = 2;
            }
        }
        for &np in &candidates[..n_cand] {
            let mismatch = (nc as f64 * delta_call + np as f64 * delta_put).abs();
            let premium = unit_call * nc as f64 + unit_put * np as f64;
            let better = match &best {
                None => true,
                Some(b) => {
                    if mismatch < b.mismatch - MISMATCH_TIE_EPS {
                        true
                    } else if (mismatch - b.mismatch).abs() <= MISMATCH_TIE_EPS {
                        premium > b.premium
                            || (premium == b.premium && (nc < b.nc || (nc == b.nc && np < b.np)))
                    } else {
                        false
                    }
                }
            };
            if better {
                best = Some(Best { mismatch, premium, nc, np });
            }
        }
    }
    let best = best.expect("(1,1) is affordable");
    Ok((best.nc, best.np))
}

/// Deterministic-forward limit of delta when the lognormal collapses.
fn step_delta(kind: OptionKind, q: &OptionQuote) -> f64 {
    let forward_strike = q.strike * (-q.rate * q.tau).exp();
    let call = if q.spot > forward_strike {
        1.0
    } else if q.spot < forward_strike {
        0.0
    } else {
        0.5
    };
    match kind {
        OptionKind::Call => call,
        OptionKind::Put => call - 1.0,
    }
}
