//! Self-checks run by `verify`. Each suite compares a fast path against a
//! slower independent computation and reports a JSON-friendly result.

use std::f64::consts::PI;

use num_traits::ToPrimitive;
use quadrature::double_exponential;
use serde::{Deserialize, Serialize};

use crate::arith::{self, factorize, gauss_family_table, kronecker, moebius_sieve, pow_mod};
use crate::constants::archimedean::{radial_moment, sigma_inf};
use crate::constants::local::{density_cp, local_count, LocalContext, LocalProblem};
use crate::constants::series::iwaniec_c;
use crate::error::{Error, Result};
use crate::expsum::{check_multiplicativity, exp_sum_sq, Quadric};
use crate::quadcount;
use crate::repnum::{self, QuadForm};

pub const SUITES: [&str; 8] = [
    "gauss",
    "kronecker",
    "sieve",
    "stabilization",
    "multiplicativity",
    "orthogonality",
    "sigma_inf",
    "iwaniec",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub pass: bool,
    pub checked: u64,
    pub failures: Vec<String>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifySummary {
    pub pass: bool,
    pub suites: Vec<SuiteResult>,
}

/// Sizes of the checks; the defaults finish in seconds.
#[derive(Debug, Clone, Copy)]
pub struct VerifyConfig {
    pub gauss_nmax: u64,
    pub sieve_nmax: u64,
    pub iwaniec_x: u64,
    /// Closed form under test in the `sigma_inf` suite.
    pub sigma_inf: fn(f64, f64) -> Result<f64>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            gauss_nmax: 20_000,
            sieve_nmax: 3_000,
            iwaniec_x: 100_000,
            sigma_inf,
        }
    }
}

struct Tally {
    checked: u64,
    failures: Vec<String>,
}

impl Tally {
    fn new() -> Self {
        Tally {
            checked: 0,
            failures: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checked += 1;
        // keep the report readable
        if !ok && self.failures.len() < 20 {
            self.failures.push(what());
        }
    }
}

pub fn run(filter: Option<&str>, cfg: &VerifyConfig) -> Result<VerifySummary> {
    let names: Vec<&str> = match filter {
        None => SUITES.to_vec(),
        Some(f) => {
            let hits: Vec<&str> = SUITES.iter().copied().filter(|s| s.contains(f)).collect();
            if hits.is_empty() {
                return Err(Error::Domain(format!("no suite matches '{f}'; known: {}", SUITES.join(", "))));
            }
            hits
        }
    };
    let mut suites = Vec::new();
    for name in names {
        let t = std::time::Instant::now();
        let mut tally = Tally::new();
        match name {
            "gauss" => gauss(cfg, &mut tally)?,
            "kronecker" => kronecker_suite(&mut tally),
            "sieve" => sieve(cfg, &mut tally)?,
            "stabilization" => stabilization(&mut tally)?,
            "multiplicativity" => multiplicativity(&mut tally)?,
            "orthogonality" => orthogonality(&mut tally)?,
            "sigma_inf" => sigma_inf_suite(cfg, &mut tally)?,
            "iwaniec" => iwaniec(cfg, &mut tally)?,
            _ => unreachable!(),
        }
        suites.push(SuiteResult {
            name: name.to_string(),
            pass: tally.failures.is_empty() && tally.checked > 0,
            checked: tally.checked,
            failures: tally.failures,
            seconds: t.elapsed().as_secs_f64(),
        });
    }
    Ok(VerifySummary {
        pass: suites.iter().all(|s| s.pass),
        suites,
    })
}

/// Class numbers from reduced forms against `r_3(n) / 12` or `/ 24`.
fn gauss(cfg: &VerifyConfig, t: &mut Tally) -> Result<()> {
    let n = cfg.gauss_nmax;
    let r3 = repnum::rq_sieve(&QuadForm::sum_of_squares(3), n)?;
    let h = repnum::class_number_table(n)?;
    let fam = gauss_family_table(n)?;
    for m in 5..=n {
        if !fam[m as usize] {
            continue;
        }
        let via_r3 = repnum::h_from_r3(m, &r3);
        t.check(via_r3.as_ref().ok() == Some(&(h[m as usize] as u64)), || {
            format!("n={m}: forms give {}, r3 gives {via_r3:?}", h[m as usize])
        });
    }
    Ok(())
}

/// Kronecker symbol against Euler's criterion at odd primes and the table at 2,
/// plus complete multiplicativity in the bottom argument.
fn kronecker_suite(t: &mut Tally) {
    let primes = arith::primes_up_to(200);
    for d in -300i64..=300 {
        if d % 4 == 2 || d % 4 == -2 || d % 4 == 3 || d % 4 == -1 {
            continue;
        }
        for &p in &primes {
            let expect = if p == 2 {
                match d.rem_euclid(8) {
                    1 | 7 => 1,
                    3 | 5 => -1,
                    _ => 0,
                }
            } else {
                match pow_mod(d.rem_euclid(p as i64) as u64, (p - 1) / 2, p) {
                    0 => 0,
                    1 => 1,
                    _ => -1,
                }
            };
            t.check(kronecker(d, p as i64) == expect, || format!("({d}/{p})"));
        }
        for m in 1i64..40 {
            for n in 1i64..40 {
                t.check(kronecker(d, m * n) == kronecker(d, m) * kronecker(d, n), || {
                    format!("({d}/{m}*{n}) not multiplicative")
                });
            }
        }
    }
}

/// Sieved tables against single evaluations.
fn sieve(cfg: &VerifyConfig, t: &mut Tally) -> Result<()> {
    let n = cfg.sieve_nmax;
    let mu = moebius_sieve(n)?;
    for m in 1..=n {
        let f = factorize(m);
        let expect = if f.iter().any(|&(_, e)| e > 1) {
            0
        } else if f.len() % 2 == 0 {
            1
        } else {
            -1
        };
        t.check(mu[m as usize] == expect, || format!("mu({m})"));
    }
    let h = repnum::class_number_table(n)?;
    for m in 3..=n {
        let d = -(m as i64);
        if arith::is_fundamental(d) {
            let one = repnum::class_number(d)?;
            t.check(one == h[m as usize] as u64, || format!("h({d})"));
        }
    }
    let r2 = repnum::rq_sieve(&QuadForm::sum_of_squares(2), n)?;
    for m in 1..=n {
        t.check(r2.get(m) == repnum::r2_divisor(m), || format!("r2({m})"));
    }
    Ok(())
}

/// Odd primes with a unit shift stabilize at level 1; the mod 3 count of
/// `x1^2+x2^2+x3^2 - y1^2-y2^2-y3^2 = 1` is 234.
fn stabilization(t: &mut Tally) -> Result<()> {
    let f3 = QuadForm::sum_of_squares(3);
    let mut ctx = LocalContext::new();
    let c = local_count(&mut ctx, &LocalProblem::new(3, f3.clone(), f3.clone(), 1), 1)?;
    t.check(c == 234, || format!("count mod 3 is {c}"));
    for p in arith::primes_up_to(50).into_iter().skip(1) {
        let d = density_cp(&mut ctx, &LocalProblem::new(p, f3.clone(), f3.clone(), 1), 4)?;
        t.check(d.level == 1, || format!("p={p} stabilized at {}", d.level));
    }
    // p | l: still early, at most level 2
    for (p, l) in [(3u64, 3i128), (5, 5), (7, 14)] {
        let d = density_cp(&mut ctx, &LocalProblem::new(p, f3.clone(), f3.clone(), l), 5)?;
        t.check(d.level <= 2, || format!("p={p}, l={l} stabilized at {}", d.level));
    }
    Ok(())
}

fn test_quadrics() -> Result<Vec<Quadric>> {
    Ok(vec![
        Quadric::new(QuadForm::sum_of_squares(3), QuadForm::sum_of_squares(3), 1),
        Quadric::new(QuadForm::sum_of_squares(2), QuadForm::sum_of_squares(2), 3),
        Quadric::new(QuadForm::from_upper(2, &[1, 1, 2])?, QuadForm::diagonal(&[1, 3])?, 5),
    ])
}

/// `S_{q1 q2} = S_{q1} S_{q2}` with twisted arguments.
fn multiplicativity(t: &mut Tally) -> Result<()> {
    for quad in test_quadrics()? {
        let n = quad.n();
        for (q1, q2) in [(3u64, 4u64), (5, 3), (8, 9), (7, 4), (5, 11)] {
            for seed in 0..3i64 {
                let c: Vec<i64> = (0..n as i64).map(|i| (seed * 7 + i * i * 3 + i) % 13).collect();
                let m = check_multiplicativity(q1, q2, &c, &quad)?;
                t.check(m.pass, || format!("q={q1}*{q2}, c={c:?}: residual {:.3e}", m.residual));
            }
        }
    }
    Ok(())
}

/// `sum_c S_q(c) = q^n c_q(-l)` with the Ramanujan sum, by summing the
/// exponential over all `c`, which leaves only `x = 0`.
fn orthogonality(t: &mut Tally) -> Result<()> {
    for quad in test_quadrics()? {
        let n = quad.n() as u32;
        for q in [2u64, 3, 4, 5, 6] {
            let total = (q as usize).pow(n);
            let mut sum = num_complex::Complex64::new(0.0, 0.0);
            let mut err = 0.0;
            let mut c = vec![0i64; n as usize];
            for idx in 0..total {
                let mut r = idx;
                for v in c.iter_mut() {
                    *v = (r % q as usize) as i64;
                    r /= q as usize;
                }
                let s = exp_sum_sq(q, &c, &quad)?;
                sum += s.value;
                err += s.abs_error;
            }
            let ramanujan: f64 = (1..=q)
                .filter(|&d| arith::gcd(d, q) == 1)
                .map(|d| (2.0 * PI * (d as f64) * (quad.shift as f64) / q as f64).cos())
                .sum();
            let expect = (q as f64).powi(n as i32) * ramanujan;
            t.check((sum.re - expect).abs() <= err + 1e-6 && sum.im.abs() <= err + 1e-6, || {
                format!("q={q}: {sum} vs {expect}")
            });
        }
        // prime q: S_p(0) = p N_p - p^n
        for p in [3u64, 5, 7, 11] {
            let s = exp_sum_sq(p, &vec![0; n as usize], &quad)?;
            let expect = p as f64 * count_mod_p(&quad, p) as f64 - (p as f64).powi(n as i32);
            t.check((s.value.re - expect).abs() <= 1e-6 * expect.abs().max(1.0) && s.value.im.abs() <= 1e-6 * expect.abs().max(1.0), || {
                format!("p={p}: S_p(0) = {} vs {expect}", s.value)
            });
        }
    }
    Ok(())
}

/// `#{x mod p : Q1(x1) - Q2(x2) ≡ l}` by enumeration.
pub fn count_mod_p(quad: &Quadric, p: u64) -> u64 {
    let n = quad.n();
    let k1 = quad.q1.dim();
    let mut x = vec![0i64; n];
    let mut count = 0;
    loop {
        let v = quad.q1.eval(&x[..k1]) - quad.q2.eval(&x[k1..]) - quad.shift as i128;
        if v.rem_euclid(p as i128) == 0 {
            count += 1;
        }
        let mut i = 0;
        loop {
            if i == n {
                return count;
            }
            x[i] += 1;
            if (x[i] as u64) < p {
                break;
            }
            x[i] = 0;
            i += 1;
        }
    }
}

/// The closed form under test against direct quadrature of its integral and
/// its two limits.
fn sigma_inf_suite(cfg: &VerifyConfig, t: &mut Tally) -> Result<()> {
    let f = cfg.sigma_inf;
    let quad = |x: f64, l: f64| {
        let i = double_exponential::integrate(|r| r * r * (r * r * x + l).sqrt(), 0.0, 1.0, 1e-14).integral;
        16.0 * PI * PI / 3.0 * i / (x + l).sqrt()
    };
    for (x, l) in [(1.0, 0.0), (1.0, 1.0), (1.0, 1000.0), (1000.0, 1.0), (10.0, 3.0), (1e5, 12.0)] {
        let a = f(x, l)?;
        let b = quad(x, l);
        t.check(((a - b) / b).abs() < 1e-8, || format!("X={x}, l={l}: {a} vs quadrature {b}"));
    }
    let at0 = f(1000.0, 0.0)?;
    t.check((at0 - 4.0 * PI * PI / 3.0).abs() < 1e-12, || format!("l=0 gives {at0}"));
    let far = f(1.0, 1e6)?;
    t.check((far - 16.0 * PI * PI / 9.0).abs() < 1e-2, || format!("l/X=1e6 gives {far}"));
    // the moment itself against the series branch boundary
    let (x, l) = (1.0, 20.0);
    let m = radial_moment(x, l);
    let i = double_exponential::integrate(|r| r * r * (r * r * x + l).sqrt(), 0.0, 1.0, 1e-14).integral;
    t.check((m - i).abs() < 1e-12 * i, || format!("moment {m} vs {i}"));
    Ok(())
}

/// `pi^2 prod c_p(l)` against the empirical two-squares correlation.
fn iwaniec(cfg: &VerifyConfig, t: &mut Tally) -> Result<()> {
    let x = cfg.iwaniec_x;
    let q = QuadForm::sum_of_squares(2);
    for l in [1u64, 2, 3, 5] {
        let c = iwaniec_c(l, 200)?;
        let emp = quadcount::empirical_rr(&q, &q, x, l as i64)? - repnum::r2_divisor(l) as u128;
        let r = emp.to_f64().unwrap() / (c.value * x as f64);
        t.check((r - 1.0).abs() < 0.03, || format!("l={l}: ratio {r}"));
    }
    Ok(())
}
