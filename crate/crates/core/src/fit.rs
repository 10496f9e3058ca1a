//! Least-squares power-law regression on log–log data.

use serde::Serialize;

use crate::error::{Error, Result};

/// Minimum number of samples a decay fit accepts.
pub const MIN_FIT_POINTS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub quantity: String,
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub window: (f64, f64),
    pub n_points: usize,
}

/// Fits `log y = intercept + slope * log t` over samples with `t` in `window`.
pub fn fit_power_law(
    quantity: &str,
    ts: &[f64],
    ys: &[f64],
    window: (f64, f64),
) -> Result<FitResult> {
    if ts.len() != ys.len() {
        return Err(Error::Fit("time and value columns differ in length".into()));
    }
    let (lo, hi) = window;
    let mut xs = Vec::new();
    let mut ls = Vec::new();
    for (&t, &y) in ts.iter().zip(ys) {
        if t < lo || t > hi {
            continue;
        }
        if !(t > 0.0) || !(y > 0.0) {
            return Err(Error::Fit(format!(
                "{quantity}: non-positive sample ({t}, {y}) inside window"
            )));
        }
        xs.push(t.ln());
        ls.push(y.ln());
    }
    let m = xs.len();
    if m < MIN_FIT_POINTS {
        let range = match (ts.first(), ts.last()) {
            (Some(a), Some(b)) => format!("[{a}, {b}]"),
            _ => "empty".to_string(),
        };
        return Err(Error::Fit(format!(
            "{quantity}: {m} samples in window [{lo}, {hi}], need at least {MIN_FIT_POINTS}; available t-range {range}"
        )));
    }
    let mf = m as f64;
    let xbar = xs.iter().sum::<f64>() / mf;
    let ybar = ls.iter().sum::<f64>() / mf;
    let sxx: f64 = xs.iter().map(|x| (x - xbar).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ls).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    if sxx <= 0.0 {
        return Err(Error::Fit(format!("{quantity}: degenerate time samples")));
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let rss: f64 = xs
        .iter()
        .zip(&ls)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let stderr = (rss / (mf - 2.0) / sxx).sqrt();
    Ok(FitResult {
        quantity: quantity.to_string(),
        slope,
        intercept,
        stderr,
        window,
        n_points: m,
    })
}

/// `count` logarithmically spaced points from `a` to `b` inclusive.
pub fn log_space(a: f64, b: f64, count: usize) -> Vec<f64> {
    assert!(a > 0.0 && b > a && count >= 2);
    let (la, lb) = (a.ln(), b.ln());
    let mut out: Vec<f64> = (0..count)
        .map(|i| (la + (lb - la) * i as f64 / (count - 1) as f64).exp())
        .collect();
    out[0] = a;
    out[count - 1] = b;
    out
}
