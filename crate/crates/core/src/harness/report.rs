//! Report rows and their CSV encoding.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_COLUMNS: [&str; 9] = [
    "kind",
    "X",
    "shift",
    "empirical",
    "predicted",
    "ratio",
    "sigma_inf",
    "sigma_finite",
    "seconds",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub kind: String,
    pub x: u64,
    pub shift: u64,
    pub empirical: u128,
    pub predicted: f64,
    /// `None` when the prediction is zero.
    pub ratio: Option<f64>,
    pub sigma_inf: f64,
    pub sigma_finite: f64,
    pub seconds: f64,
}

/// 17 significant digits, round-trip exact.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v:.16e}")
    }
}

pub fn write_header(w: &mut impl Write, spec_hash: &str) -> Result<()> {
    writeln!(w, "# spec {spec_hash}")?;
    writeln!(w, "{}", CSV_COLUMNS.join(","))?;
    Ok(())
}

pub fn write_row(w: &mut impl Write, row: &ReportRow) -> Result<()> {
    writeln!(
        w,
        "{},{},{},{},{},{},{},{},{}",
        row.kind,
        row.x,
        row.shift,
        row.empirical,
        fmt_f64(row.predicted),
        fmt_f64(row.ratio.unwrap_or(f64::NAN)),
        fmt_f64(row.sigma_inf),
        fmt_f64(row.sigma_finite),
        fmt_f64(row.seconds),
    )?;
    w.flush()?;
    Ok(())
}

/// Reads rows back, skipping `#` comment lines and checking the header.
pub fn read_rows(r: impl BufRead) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    let mut header_seen = false;
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let bad = |what: &str| Error::Parse(format!("line {}: {what}", i + 1));
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !header_seen {
            if line != CSV_COLUMNS.join(",") {
                return Err(bad("unexpected header"));
            }
            header_seen = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != CSV_COLUMNS.len() {
            return Err(bad("wrong number of fields"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
        let ratio = num(f[5])?;
        rows.push(ReportRow {
            kind: f[0].to_string(),
            x: f[1].parse().map_err(|_| bad("bad X"))?,
            shift: f[2].parse().map_err(|_| bad("bad shift"))?,
            empirical: f[3].parse().map_err(|_| bad("bad count"))?,
            predicted: num(f[4])?,
            ratio: (!ratio.is_nan()).then_some(ratio),
            sigma_inf: num(f[6])?,
            sigma_finite: num(f[7])?,
            seconds: num(f[8])?,
        });
    }
    if !header_seen {
        return Err(Error::Parse("missing header".into()));
    }
    Ok(rows)
}
