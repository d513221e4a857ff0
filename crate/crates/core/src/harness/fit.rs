//! Log-log slope of the error `|empirical - predicted|` against X.

use std::collections::BTreeMap;

use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use super::report::ReportRow;
use crate::error::{domain, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub kind: String,
    pub shift: u64,
    pub points: usize,
    pub exponent: f64,
    pub intercept: f64,
    /// Root mean square residual of the log fit.
    pub residual: f64,
}

/// Least squares `log y = a + b log x`; returns `(b, a, rms residual)`.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    if xs.len() != ys.len() {
        return domain("length mismatch");
    }
    let n = xs.len();
    if n < 4 {
        return domain(format!("need at least 4 points, got {n}"));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0) || !v.is_finite()) {
        return domain("log-log fit needs positive values");
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n as f64;
    let my = ly.iter().sum::<f64>() / n as f64;
    let sxx: f64 = lx.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx < 1e-12 {
        return domain("all X equal");
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let rss: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - a - b * x).powi(2)).sum();
    Ok((b, a, (rss / n as f64).sqrt()))
}

/// One fit per `(kind, shift)` group.
pub fn fit_rows(rows: &[ReportRow]) -> Result<Vec<ExponentFit>> {
    let mut groups: BTreeMap<(String, u64), Vec<&ReportRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.kind.clone(), r.shift)).or_default().push(r);
    }
    if groups.is_empty() {
        return domain("no rows");
    }
    groups
        .into_iter()
        .map(|((kind, shift), g)| {
            let xs: Vec<f64> = g.iter().map(|r| r.x as f64).collect();
            let ys: Vec<f64> = g
                .iter()
                .map(|r| (r.empirical.to_f64().unwrap_or(f64::NAN) - r.predicted).abs())
                .collect();
            let (exponent, intercept, residual) = fit_loglog(&xs, &ys)
                .map_err(|e| crate::Error::Domain(format!("{kind} l={shift}: {e}")))?;
            Ok(ExponentFit {
                kind,
                shift,
                points: g.len(),
                exponent,
                intercept,
                residual,
            })
        })
        .collect()
}
