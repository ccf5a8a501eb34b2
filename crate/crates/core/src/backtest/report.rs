//! Report emission: per-policy equity CSVs, the metrics table, trade logs
//! and a multi-line SVG chart. All output is byte-deterministic for fixed
//! inputs; money is rounded to 1e-6 at emission.

use std::io::Write;
use std::path::{Path, PathBuf};

use super::{BacktestError, BacktestRun, MetricsReport};

const SVG_W: f64 = 960.0;
const SVG_H: f64 = 540.0;
const MARGIN: f64 = 40.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Write `equity_<policy>.csv`, `trades_<policy>.csv` (straddle policies),
/// `metrics.csv` and `equity.svg` into `out_dir`; returns the files written.
pub fn emit_report(
    out_dir: &Path,
    entries: &[(String, BacktestRun, MetricsReport)],
) -> Result<Vec<PathBuf>, BacktestError> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    for (name, run, _) in entries {
        let path = out_dir.join(format!("equity_{name}.csv"));
        let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
        writeln!(f, "timestamp,value")?;
        for (ts, v) in run.curve.points() {
            writeln!(f, "{},{v:.6}", ts.to_rfc3339())?;
        }
        f.flush()?;
        written.push(path);

        if !run.trades.is_empty() {
            let path = out_dir.join(format!("trades_{name}.csv"));
            let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
            writeln!(
                f,
                "open_time,close_time,K_call,K_put,call_lots,put_lots,cost,fees,proceeds,log_return,forced"
            )?;
            for t in &run.trades {
                writeln!(
                    f,
                    "{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{}",
                    t.open_time.to_rfc3339(),
                    t.close_time.to_rfc3339(),
                    t.k_call,
                    t.k_put,
                    t.call_lots,
                    t.put_lots,
                    t.cost,
                    t.fees,
                    t.proceeds,
                    t.log_return,
                    t.forced
                )?;
            }
            f.flush()?;
            written.push(path);
        }
    }

    let path = out_dir.join("metrics.csv");
    let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
    writeln!(f, "policy,avgr,sharpe,mdd,trades,fees")?;
    for (name, _, m) in entries {
        writeln!(
            f,
            "{name},{:.6},{:.6},{:.6},{},{:.6}",
            m.avgr, m.sharpe, m.mdd, m.trades, m.fees
        )?;
    }
    f.flush()?;
    written.push(path);

    let path = out_dir.join("equity.svg");
    std::fs::write(&path, render_svg(entries))?;
    written.push(path);

    Ok(written)
}

/// Normalized equity (value / start) per policy, one polyline each.
fn render_svg(entries: &[(String, BacktestRun, MetricsReport)]) -> String {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut max_len = 1usize;
    for (_, run, _) in entries {
        let points = run.curve.points();
        if points.is_empty() {
            continue;
        }
        let v0 = points[0].1;
        for (_, v) in points {
            lo = lo.min(v / v0);
            hi = hi.max(v / v0);
        }
        max_len = max_len.max(points.len());
    }
    if !lo.is_finite() || !hi.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    if hi - lo < 1e-12 {
        hi = lo + 1.0;
    }

    let x_of = |i: usize| MARGIN + (SVG_W - 2.0 * MARGIN) * i as f64 / (max_len - 1).max(1) as f64;
    let y_of = |v: f64| SVG_H - MARGIN - (SVG_H - 2.0 * MARGIN) * (v - lo) / (hi - lo);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_W}\" height=\"{SVG_H}\" viewBox=\"0 0 {SVG_W} {SVG_H}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"#333\" stroke-width=\"1\"/>\n",
        m = MARGIN,
        b = SVG_H - MARGIN,
        r = SVG_W - MARGIN
    ));
    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{b}\" stroke=\"#333\" stroke-width=\"1\"/>\n",
        m = MARGIN,
        b = SVG_H - MARGIN
    ));

    for (k, (name, run, _)) in entries.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let points = run.curve.points();
        if points.is_empty() {
            continue;
        }
        let v0 = points[0].1;
        let coords: Vec<String> = points
            .iter()
            .enumerate()
            .map(|(i, (_, v))| format!("{:.2},{:.2}", x_of(i), y_of(v / v0)))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            coords.join(" ")
        ));
        svg.push_str(&format!(
            "<text x=\"{x}\" y=\"{y}\" font-family=\"monospace\" font-size=\"13\" fill=\"{color}\">{name}</text>\n",
            x = SVG_W - MARGIN - 120.0,
            y = MARGIN + 16.0 * (k as f64 + 1.0)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
