//! Independent oracles for the integration and acceptance suites.
//!
//! Nothing here may call into the implementation paths it checks: the
//! pricer is valued by adaptive quadrature over the lognormal terminal
//! density, the normal CDF by integrating the density, and swing detection
//! by a second, structurally different transcription of the detection
//! algorithm.

#![allow(dead_code)]

use straddle_core::marketdata::BarSeries;
use straddle_core::pricing::OptionKind;

/// Adaptive Simpson integration to an absolute tolerance.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1)
            + recurse(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1)
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 48)
}

fn normal_pdf(z: f64) -> f64 {
    (-(z * z) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal CDF by quadrature of the density.
pub fn norm_cdf_oracle(d: f64) -> f64 {
    if d < -40.0 {
        return 0.0;
    }
    if d > 40.0 {
        return 1.0;
    }
    let clamped = d.clamp(-12.0, 12.0);
    let tail = adaptive_simpson(&normal_pdf, 0.0, clamped.abs(), 1e-13);
    if d >= 0.0 {
        0.5 + tail
    } else {
        0.5 - tail
    }
}

/// European option value as the discounted lognormal expectation of the
/// payoff, integrated in the standard-normal variable.
pub fn bs_price_quadrature(
    kind: OptionKind,
    spot: f64,
    strike: f64,
    rate: f64,
    sigma: f64,
    tau: f64,
) -> f64 {
    if tau == 0.0 || sigma == 0.0 {
        let disc_strike = strike * (-rate * tau).exp();
        return match kind {
            OptionKind::Call => (spot - disc_strike).max(0.0),
            OptionKind::Put => (disc_strike - spot).max(0.0),
        };
    }
    let vol = sigma * tau.sqrt();
    let drift = (rate - 0.5 * sigma * sigma) * tau;
    let terminal = |z: f64| spot * (drift + vol * z).exp();
    // Terminal price crosses the strike at this z.
    let z_k = ((strike / spot).ln() - drift) / vol;
    let discount = (-rate * tau).exp();
    const Z_MAX: f64 = 13.0;
    let tol = 1e-12 * spot.max(strike);
    // Pre-split into panels so concentrated integrands cannot hide between
    // the first Simpson probes.
    let panels = 8;
    let integrate = |f: &dyn Fn(f64) -> f64, lo: f64, hi: f64| -> f64 {
        let width = (hi - lo) / panels as f64;
        (0..panels)
            .map(|i| {
                let a = lo + width * i as f64;
                adaptive_simpson(&|z| f(z), a, a + width, tol / panels as f64)
            })
            .sum()
    };
    match kind {
        OptionKind::Call => {
            let lo = z_k.clamp(-Z_MAX, Z_MAX);
            let f = |z: f64| (terminal(z) - strike).max(0.0) * normal_pdf(z);
            discount * integrate(&f, lo, Z_MAX)
        }
        OptionKind::Put => {
            let hi = z_k.clamp(-Z_MAX, Z_MAX);
            let f = |z: f64| (strike - terminal(z)).max(0.0) * normal_pdf(z);
            discount * integrate(&f, -Z_MAX, hi)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleKind {
    Res,
    Sup,
}

/// Second transcription of the swing detector, kept deliberately close to
/// the printed procedure: momentum differences are precomputed, the last
/// admitted prices are tracked as plain tuples, and points are appended to
/// flat lists.
pub fn detect_swings_oracle(
    series: &BarSeries,
    d: usize,
    f_pct: f64,
    e_pct: f64,
) -> (Vec<(f64, i64)>, Vec<(f64, i64)>) {
    let closes: Vec<f64> = series.bars().iter().map(|b| b.close).collect();
    let times: Vec<i64> = series.bars().iter().map(|b| b.timestamp.timestamp()).collect();
    let n = closes.len();
    assert!(n > d, "oracle requires more bars than the window");

    // M_t for every t >= d.
    let mut momentum = vec![f64::NAN; n];
    for t in d..n {
        momentum[t] = closes[t] - closes[t - d];
    }

    let mut res: Vec<(f64, i64)> = vec![(closes[0], times[0])];
    let mut sup: Vec<(f64, i64)> = vec![(closes[0], times[0])];
    for t in d..n {
        if t == d {
            continue; // M_{t-1} does not exist on the first iteration
        }
        let m = momentum[t];
        let m_prev = momentum[t - 1];
        if m * m_prev < 0.0 {
            if m > 0.0 {
                let against_res = closes[t] / res[res.len() - 1].0 - 1.0;
                let against_sup = closes[t] / sup[sup.len() - 1].0 - 1.0;
                if against_res < f_pct || against_sup < e_pct {
                    sup.push((closes[t], times[t]));
                }
            }
            if m < 0.0 {
                let against_sup = closes[t] / sup[sup.len() - 1].0 - 1.0;
                let against_res = closes[t] / res[res.len() - 1].0 - 1.0;
                if against_sup > f_pct || against_res > e_pct {
                    res.push((closes[t], times[t]));
                }
            }
        }
    }
    (res, sup)
}
