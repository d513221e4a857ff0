//! Main terms: archimedean factor times a truncated Euler product times the
//! volume scaling.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_rational::BigRational;
use rayon::prelude::*;

use crate::arith;
use crate::constants::archimedean::{c_inf_window, gamma_inf_nonsplit, slab_density_split, Window, WindowSpec};
use crate::constants::local::LocalContext;
use crate::constants::series::{iwaniec_c_p, rq_c_p, sigma_p, sigma_tilde_p, EulerProduct};
use crate::error::{Error, Result};
use crate::repnum::QuadForm;

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub main: f64,
    pub archimedean: f64,
    pub euler: EulerProduct,
}

/// Euler factors cached per (problem key, p) in a tab-separated file.
#[derive(Debug, Default)]
pub struct FactorCache {
    path: Option<PathBuf>,
    entries: BTreeMap<(String, u64), String>,
    dirty: bool,
}

impl FactorCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let path = dir.join("factors.kv");
        let mut entries = BTreeMap::new();
        if path.exists() {
            for (i, line) in fs::read_to_string(&path)?.lines().enumerate() {
                let parts: Vec<&str> = line.split('\t').collect();
                let bad = || Error::Cache {
                    path: path.display().to_string(),
                    reason: format!("malformed line {}", i + 1),
                };
                if parts.len() != 3 {
                    return Err(bad());
                }
                let p = parts[1].parse::<u64>().map_err(|_| bad())?;
                parts[2].parse::<BigRational>().map_err(|_| bad())?;
                entries.insert((parts[0].to_string(), p), parts[2].to_string());
            }
        }
        Ok(FactorCache {
            path: Some(path),
            entries,
            dirty: false,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn save(&mut self) -> Result<()> {
        let Some(path) = &self.path else { return Ok(()) };
        if !self.dirty {
            return Ok(());
        }
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp)?;
        for ((k, p), v) in &self.entries {
            writeln!(f, "{k}\t{p}\t{v}")?;
        }
        drop(f);
        fs::rename(tmp, path)?;
        self.dirty = false;
        Ok(())
    }

    /// Product over `p <= pmax`, computing only the factors not yet cached.
    pub fn product<F>(&mut self, key: &str, pmax: u64, factor: F) -> Result<EulerProduct>
    where
        F: Fn(&mut LocalContext, u64) -> Result<BigRational> + Sync,
    {
        let primes = arith::primes_up_to(pmax);
        let missing: Vec<u64> = primes
            .iter()
            .copied()
            .filter(|&p| !self.entries.contains_key(&(key.to_string(), p)))
            .collect();
        let fresh: Vec<(u64, BigRational)> = missing
            .par_iter()
            .map(|&p| {
                let mut ctx = LocalContext::new();
                factor(&mut ctx, p).map(|f| (p, f))
            })
            .collect::<Result<_>>()?;
        for (p, f) in fresh {
            self.entries.insert((key.to_string(), p), f.to_string());
            self.dirty = true;
        }
        let factors = primes
            .iter()
            .map(|&p| {
                let s = &self.entries[&(key.to_string(), p)];
                (p, s.parse::<BigRational>().expect("validated on insert"))
            })
            .collect();
        Ok(EulerProduct::from_factors(pmax, factors))
    }
}

fn finish(archimedean: f64, euler: EulerProduct, scale: f64) -> Prediction {
    Prediction {
        main: archimedean * euler.value * scale,
        archimedean,
        euler,
    }
}

/// `D(X, l) ~ (1/576) X^{3/2} Y^{1/2} sigma_slab(X, l) prod_p sigma_p(l)`.
pub fn predict_split(cache: &mut FactorCache, x: u64, l: u64, pmax: u64) -> Result<Prediction> {
    let euler = cache.product(&format!("split:l={l}"), pmax, |ctx, p| sigma_p(ctx, l as i128, p))?;
    let (xf, yf) = (x as f64, (x + l) as f64);
    let arch = slab_density_split(xf, l as f64)?;
    Ok(finish(arch, euler, xf.powf(1.5) * yf.sqrt() / 576.0))
}

/// `S(X, d) ~ (1/24) X sqrt(X^2 + d) (gamma_inf(X, d) / 2) prod_p sigma~_p(d)`;
/// the half accounts for `n > 0`.
pub fn predict_nonsplit(cache: &mut FactorCache, x: u64, d: u64, pmax: u64) -> Result<Prediction> {
    let euler = cache.product(&format!("nonsplit:d={d}"), pmax, |ctx, p| sigma_tilde_p(ctx, d as i128, p))?;
    let xf = x as f64;
    let arch = gamma_inf_nonsplit(xf, d as f64)? / 2.0;
    Ok(finish(arch, euler, xf * (xf * xf + d as f64).sqrt() / 24.0))
}

/// `sum_{n <= X} r(n) r(n + l) ~ pi^2 prod_p c_p(l) X`.
pub fn predict_r2(cache: &mut FactorCache, x: u64, l: u64, pmax: u64) -> Result<Prediction> {
    if l == 0 {
        return Err(Error::Domain("the two-squares correlation needs l >= 1".into()));
    }
    let euler = cache.product(&format!("r2:l={l}"), pmax, |ctx, p| iwaniec_c_p(ctx, l as i128, p))?;
    Ok(finish(std::f64::consts::PI.powi(2), euler, x as f64))
}

/// `sum_{n <= X} r_{Q2}(n) r_{Q1}(n + l) ~ c_inf prod_p c_p X^{k2/2} Y^{k1/2 - 1}`.
pub fn predict_rq(cache: &mut FactorCache, q1: &QuadForm, q2: &QuadForm, x: u64, l: u64, pmax: u64) -> Result<Prediction> {
    let key = format!("rq:{:016x}:{:016x}:l={l}", q1.fingerprint(), q2.fingerprint());
    let euler = cache.product(&key, pmax, |ctx, p| rq_c_p(ctx, q1, q2, l as i128, p))?;
    let (k1, k2) = (q1.dim() as u32, q2.dim() as u32);
    let spec = WindowSpec {
        k1,
        k2,
        w1: Window::Sharp,
        w2: Window::Sharp,
    };
    let (xf, yf) = (x as f64, (x + l) as f64);
    // det of the Gram matrix A = G / 2
    let det = |q: &QuadForm| q.det2() as f64 / 2f64.powi(q.dim() as i32);
    let arch = c_inf_window(&spec, xf, l as f64)?.value / (det(q1) * det(q2)).sqrt();
    Ok(finish(arch, euler, xf.powf(k2 as f64 / 2.0) * yf.powf(k1 as f64 / 2.0 - 1.0)))
}
