//! Experiment driver behind the command line: configuration, the
//! `correlate` grid, `verify` suites and exponent fits.

pub mod fit;
pub mod predict;
pub mod report;
pub mod verify;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::arith::gauss_family_table;
use crate::error::{domain, Error, Result};
use crate::quadcount::{self, fiber_sum};
use crate::repnum::{self, QuadForm};
use predict::{FactorCache, Prediction};
use report::ReportRow;

/// Environment variable supplying the default cache directory.
pub const CACHE_ENV: &str = "QUADCORR_CACHE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Split,
    Nonsplit,
    R2,
    Rq,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::Split => "split",
            Kind::Nonsplit => "nonsplit",
            Kind::R2 => "r2",
            Kind::Rq => "rq",
        })
    }
}

impl FromStr for Kind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "split" => Ok(Kind::Split),
            "nonsplit" => Ok(Kind::Nonsplit),
            "r2" => Ok(Kind::R2),
            "rq" => Ok(Kind::Rq),
            _ => Err(Error::Parse(format!("unknown kind '{s}'"))),
        }
    }
}

/// What to compute. Everything that affects the numbers lives here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub kind: Kind,
    pub xs: Vec<u64>,
    pub shifts: Vec<u64>,
    pub pmax: u64,
    pub q1: Option<String>,
    pub q2: Option<String>,
    /// When false the `seconds` column is written as zero.
    pub timings: bool,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.xs.is_empty() || self.shifts.is_empty() {
            return domain("need at least one X and one shift");
        }
        if self.xs.contains(&0) {
            return domain("X must be positive");
        }
        if self.pmax < 2 {
            return domain("pmax must be at least 2");
        }
        if self.kind == Kind::R2 && self.shifts.contains(&0) {
            return domain("r2 correlations need l >= 1");
        }
        if self.kind == Kind::Rq {
            self.forms()?;
        }
        Ok(())
    }

    pub fn forms(&self) -> Result<(QuadForm, QuadForm)> {
        match (&self.q1, &self.q2) {
            (Some(a), Some(b)) => Ok((QuadForm::parse(a)?, QuadForm::parse(b)?)),
            _ => domain("rq needs q1 and q2"),
        }
    }

    /// FNV-1a over the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        let mut h: u64 = 0xcbf29ce484222325;
        for b in json.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("config line {}: expected key = value", i + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

pub fn parse_list(s: &str) -> Result<Vec<u64>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            let t = t.trim();
            // allow 1e5 style
            if let Some((m, e)) = t.split_once(['e', 'E']) {
                let m: u64 = m.parse().map_err(|_| Error::Parse(format!("bad number '{t}'")))?;
                let e: u32 = e.parse().map_err(|_| Error::Parse(format!("bad number '{t}'")))?;
                m.checked_mul(10u64.pow(e)).ok_or_else(|| Error::Parse(format!("'{t}' overflows")))
            } else {
                t.parse().map_err(|_| Error::Parse(format!("bad number '{t}'")))
            }
        })
        .collect()
}

/// Settings that change where things go but not what is computed.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub out: PathBuf,
    pub cache: Option<PathBuf>,
    pub threads: usize,
}

/// Spec and options from a config map; missing keys get defaults.
pub fn from_config(map: &BTreeMap<String, String>) -> Result<(ExperimentSpec, RunOptions)> {
    let known = ["kind", "X", "l", "pmax", "q1", "q2", "timings", "out", "cache", "threads"];
    if let Some(k) = map.keys().find(|k| !known.contains(&k.as_str())) {
        return Err(Error::Parse(format!("unknown config key '{k}'")));
    }
    let get = |k: &str| map.get(k).map(String::as_str);
    let spec = ExperimentSpec {
        kind: get("kind").unwrap_or("split").parse()?,
        xs: parse_list(get("X").unwrap_or("1000"))?,
        shifts: parse_list(get("l").unwrap_or("1"))?,
        pmax: get("pmax").unwrap_or("100").parse().map_err(|_| Error::Parse("bad pmax".into()))?,
        q1: get("q1").map(String::from),
        q2: get("q2").map(String::from),
        timings: get("timings").map(|v| v != "false").unwrap_or(true),
    };
    let opts = RunOptions {
        out: PathBuf::from(get("out").unwrap_or("correlations.csv")),
        cache: get("cache").map(PathBuf::from).or_else(|| std::env::var_os(CACHE_ENV).map(PathBuf::from)),
        threads: get("threads").unwrap_or("0").parse().map_err(|_| Error::Parse("bad threads".into()))?,
    };
    Ok((spec, opts))
}

/// Running sums `sum_{n <= X}` for every X of the grid, from one pass.
fn prefix_at(xs: &[u64], term: impl Fn(u64) -> u128) -> Vec<u128> {
    let mut sorted: Vec<u64> = xs.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut acc = 0u128;
    let mut n = 0u64;
    let mut at = BTreeMap::new();
    for &x in &sorted {
        while n < x {
            n += 1;
            acc += term(n);
        }
        at.insert(x, acc);
    }
    xs.iter().map(|x| at[x]).collect()
}

/// Empirical values for every (X, shift) of the grid, indexed `[shift][x]`.
fn empirical_grid(spec: &ExperimentSpec, cache: Option<&Path>) -> Result<Vec<Vec<u128>>> {
    let xmax = *spec.xs.iter().max().unwrap();
    let lmax = *spec.shifts.iter().max().unwrap();
    match spec.kind {
        Kind::Split => {
            let h = repnum::class_number_table(xmax + lmax)?;
            let fam = gauss_family_table(xmax + lmax)?;
            Ok(spec
                .shifts
                .iter()
                .map(|&l| {
                    prefix_at(&spec.xs, |n| {
                        let (a, b) = (n as usize, (n + l) as usize);
                        if fam[a] && fam[b] {
                            h[a] as u128 * h[b] as u128
                        } else {
                            0
                        }
                    })
                })
                .collect())
        }
        Kind::Nonsplit => spec
            .shifts
            .iter()
            .map(|&d| {
                let mut keep = quadcount::shifted_square_mask(xmax, d)?;
                keep[0] = false;
                let h = repnum::class_numbers_shifted_squares(xmax, d, &keep)?;
                Ok(prefix_at(&spec.xs, |n| h[n as usize] as u128))
            })
            .collect(),
        Kind::R2 | Kind::Rq => {
            let (q1, q2) = match spec.kind {
                Kind::R2 => (QuadForm::sum_of_squares(2), QuadForm::sum_of_squares(2)),
                _ => spec.forms()?,
            };
            let r1 = repnum::rq_sieve_cached(&q1, xmax + lmax, cache)?;
            let r2 = if q2 == q1 { r1.clone() } else { repnum::rq_sieve_cached(&q2, xmax, cache)? };
            // the two-squares sum starts at n = 1, the general one at n = 0
            let skip_zero = spec.kind == Kind::R2;
            Ok(spec
                .shifts
                .iter()
                .map(|&l| {
                    let zero = r2.counts[0] as u128 * r1.counts[l as usize] as u128;
                    spec.xs
                        .iter()
                        .map(|&x| fiber_sum(&r1.counts, &r2.counts, x, l as i64) - if skip_zero { zero } else { 0 })
                        .collect()
                })
                .collect())
        }
    }
}

fn predict(spec: &ExperimentSpec, cache: &mut FactorCache, x: u64, l: u64) -> Result<Prediction> {
    match spec.kind {
        Kind::Split => predict::predict_split(cache, x, l, spec.pmax),
        Kind::Nonsplit => predict::predict_nonsplit(cache, x, l, spec.pmax),
        Kind::R2 => predict::predict_r2(cache, x, l, spec.pmax),
        Kind::Rq => {
            let (q1, q2) = spec.forms()?;
            predict::predict_rq(cache, &q1, &q2, x, l, spec.pmax)
        }
    }
}

/// Computes the grid, handing each row to `sink` as soon as it is ready.
/// Rows come shift by shift, X ascending within a shift.
pub fn correlate(spec: &ExperimentSpec, cache_dir: Option<&Path>, mut sink: impl FnMut(ReportRow) -> Result<()>) -> Result<()> {
    spec.validate()?;
    let mut factors = match cache_dir {
        Some(d) => FactorCache::open(d)?,
        None => FactorCache::in_memory(),
    };
    let setup = Instant::now();
    let grid = empirical_grid(spec, cache_dir)?;
    let mut shared = setup.elapsed().as_secs_f64();
    let mut xs = spec.xs.clone();
    xs.sort_unstable();
    xs.dedup();
    for (si, &l) in spec.shifts.iter().enumerate() {
        for &x in &xs {
            let t = Instant::now();
            let xi = spec.xs.iter().position(|&v| v == x).unwrap();
            let empirical = grid[si][xi];
            let pred = predict(spec, &mut factors, x, l)?;
            let seconds = t.elapsed().as_secs_f64() + std::mem::take(&mut shared);
            let ratio = (pred.main != 0.0).then(|| empirical as f64 / pred.main);
            sink(ReportRow {
                kind: spec.kind.to_string(),
                x,
                shift: l,
                empirical,
                predicted: pred.main,
                ratio,
                sigma_inf: pred.archimedean,
                sigma_finite: pred.euler.value,
                seconds: if spec.timings { seconds } else { 0.0 },
            })?;
        }
        factors.save()?;
    }
    Ok(())
}

/// `correlate` writing the CSV to `opts.out` and the exact Euler factors to
/// `<out>.factors.csv`.
pub fn cmd_correlate(spec: &ExperimentSpec, opts: &RunOptions) -> Result<Vec<ReportRow>> {
    let run = || -> Result<Vec<ReportRow>> {
        if let Some(parent) = opts.out.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        let mut out = std::io::BufWriter::new(fs::File::create(&opts.out)?);
        report::write_header(&mut out, &spec.hash())?;
        let mut rows = Vec::new();
        correlate(spec, opts.cache.as_deref(), |row| {
            report::write_row(&mut out, &row)?;
            rows.push(row);
            Ok(())
        })?;
        write_factors(spec, opts)?;
        Ok(rows)
    };
    if opts.threads == 0 {
        return run();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads)
        .build()
        .map_err(|e| Error::Domain(e.to_string()))?;
    pool.install(run)
}

fn write_factors(spec: &ExperimentSpec, opts: &RunOptions) -> Result<()> {
    let mut path = opts.out.clone().into_os_string();
    path.push(".factors.csv");
    let mut f = std::io::BufWriter::new(fs::File::create(PathBuf::from(path))?);
    writeln!(f, "kind,shift,p,factor,factor_float")?;
    let mut cache = match &opts.cache {
        Some(d) => FactorCache::open(d)?,
        None => FactorCache::in_memory(),
    };
    let x = *spec.xs.iter().min().unwrap();
    for &l in &spec.shifts {
        let pred = predict(spec, &mut cache, x, l)?;
        for (p, v) in &pred.euler.factors {
            let fl: f64 = v
                .parse::<num_rational::BigRational>()
                .ok()
                .and_then(|r| num_traits::ToPrimitive::to_f64(&r))
                .unwrap_or(f64::NAN);
            writeln!(f, "{},{},{},{},{}", spec.kind, l, p, v, report::fmt_f64(fl))?;
        }
    }
    cache.save()?;
    Ok(())
}
