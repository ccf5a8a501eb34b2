//! CSV ingestion and emission.
//!
//! Wire format, one file per asset per base period:
//! `timestamp,open,high,low,close,volume,value` with RFC 3339 timestamps
//! carrying an offset, plain `.` decimals and no thousands separators.

use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Utc};

use super::{BarSeries, Candle, MarketDataError, Period};

pub const CSV_HEADER: &str = "timestamp,open,high,low,close,volume,value";

/// Load a bar series, validating candle invariants and timestamp order.
/// Errors name the offending line.
pub fn load_csv(path: &Path, period: Period) -> Result<BarSeries, MarketDataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_err(e, 1))?;

    {
        let headers = reader.headers().map_err(|e| csv_err(e, 1))?;
        let got = headers.iter().collect::<Vec<_>>().join(",");
        if got != CSV_HEADER {
            return Err(MarketDataError::MalformedRow {
                line: 1,
                msg: format!("expected header {CSV_HEADER:?}, got {got:?}"),
            });
        }
    }

    let mut bars: Vec<Candle> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            csv_err(e, line)
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let bar = parse_row(&record).map_err(|msg| MarketDataError::MalformedRow { line, msg })?;
        if let Some(prev) = bars.last() {
            if bar.timestamp <= prev.timestamp {
                return Err(MarketDataError::NonMonotonic { line });
            }
        }
        bars.push(bar);
    }
    if bars.is_empty() {
        return Err(MarketDataError::Empty);
    }
    BarSeries::new(period, bars)
}

fn parse_row(record: &csv::StringRecord) -> Result<Candle, String> {
    if record.len() != 7 {
        return Err(format!("expected 7 fields, got {}", record.len()));
    }
    let timestamp = DateTime::parse_from_rfc3339(&record[0])
        .map_err(|e| format!("bad timestamp {:?}: {e}", &record[0]))?
        .with_timezone(&Utc);
    let mut fields = [0.0f64; 6];
    for (i, out) in fields.iter_mut().enumerate() {
        let raw = &record[i + 1];
        *out = raw.parse::<f64>().map_err(|e| format!("bad number {raw:?}: {e}"))?;
    }
    let [open, high, low, close, volume, value] = fields;
    Candle::new(timestamp, open, high, low, close, volume, value).map_err(|e| e.to_string())
}

/// Write a series in the exact wire format. Prices round-trip losslessly
/// (shortest decimal that reparses to the same float).
pub fn write_csv(path: &Path, series: &BarSeries) -> Result<(), MarketDataError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{CSV_HEADER}")?;
    for bar in series.bars() {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            bar.timestamp.to_rfc3339(),
            bar.open,
            bar.high,
            bar.low,
            bar.close,
            bar.volume,
            bar.value
        )?;
    }
    Ok(())
}

fn csv_err(e: csv::Error, line: u64) -> MarketDataError {
    if let csv::ErrorKind::Io(io) = e.into_kind() {
        MarketDataError::Io(io)
    } else {
        MarketDataError::MalformedRow { line, msg: "unreadable csv record".into() }
    }
}
