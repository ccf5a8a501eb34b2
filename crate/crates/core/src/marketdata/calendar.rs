//! Trading calendar: weekend mask, holiday list, bars per trading day.

use std::collections::BTreeSet;
use std::path::Path;

use chrono::{DateTime, Datelike, Duration, NaiveDate, Utc, Weekday};

use super::MarketDataError;

/// Which days trade. Dates are interpreted on the UTC timeline of the bar
/// timestamps. `bars_per_day` is for the base period of the data feed.
#[derive(Debug, Clone)]
pub struct TradingCalendar {
    weekend: Vec<Weekday>,
    holidays: BTreeSet<NaiveDate>,
    bars_per_day: u32,
}

impl TradingCalendar {
    /// Monday-to-Friday market.
    pub fn week_5x(bars_per_day: u32) -> TradingCalendar {
        assert!(bars_per_day >= 1);
        TradingCalendar {
            weekend: vec![Weekday::Sat, Weekday::Sun],
            holidays: BTreeSet::new(),
            bars_per_day,
        }
    }

    /// Market with no closed days (crypto-style).
    pub fn always_open(bars_per_day: u32) -> TradingCalendar {
        assert!(bars_per_day >= 1);
        TradingCalendar { weekend: Vec::new(), holidays: BTreeSet::new(), bars_per_day }
    }

    pub fn with_holidays(mut self, holidays: impl IntoIterator<Item = NaiveDate>) -> Self {
        self.holidays.extend(holidays);
        self
    }

    /// Read a holiday file: one ISO date (`YYYY-MM-DD`) per line, blank lines
    /// ignored.
    pub fn load_holidays(path: &Path) -> Result<BTreeSet<NaiveDate>, MarketDataError> {
        let text = std::fs::read_to_string(path)?;
        let mut out = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let date = line.parse::<NaiveDate>().map_err(|e| MarketDataError::MalformedRow {
                line: i as u64 + 1,
                msg: format!("bad holiday date {line:?}: {e}"),
            })?;
            out.insert(date);
        }
        Ok(out)
    }

    pub fn is_trading_day(&self, date: NaiveDate) -> bool {
        !self.weekend.contains(&date.weekday()) && !self.holidays.contains(&date)
    }

    pub fn bars_per_day(&self) -> u32 {
        self.bars_per_day
    }
}

/// Number of consecutive non-trading calendar days immediately after the day
/// of `t`: 0 when the next day trades, 2 over an ordinary weekend, 3 when a
/// holiday extends it.
pub fn days_to_next_trading_day(t: DateTime<Utc>, cal: &TradingCalendar) -> u32 {
    let mut day = t.date_naive() + Duration::days(1);
    let mut gap = 0;
    while !cal.is_trading_day(day) {
        gap += 1;
        day += Duration::days(1);
        if gap > 366 {
            break; // calendar with no trading days at all
        }
    }
    gap
}
