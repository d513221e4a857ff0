//! One line per acceptance criterion, then a single assertion over all of them.
//! Every expected value here comes from code in this file, not from the library.

use std::f64::consts::PI;
use std::io::Write;
use std::time::Instant;

use num_complex::Complex64;
use num_traits::ToPrimitive;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use quadcorr::arith::{classify_discriminant, gcd, kronecker, primes_up_to, FundClass};
use quadcorr::constants::archimedean::sigma_inf;
use quadcorr::constants::local::{density_cp, density_limit, local_count, LocalContext, LocalProblem};
use quadcorr::constants::series::{iwaniec_c, sigma_hat};
use quadcorr::expsum::{check_multiplicativity, exp_sum_sq, partial_singular_sum, Quadric};
use quadcorr::harness::{correlate, fit, report::ReportRow, ExperimentSpec, Kind};
use quadcorr::quadcount::fiber_sum;
use quadcorr::repnum::{class_number, rq_sieve, QuadForm};

type Outcome = Result<String, String>;

fn f3() -> QuadForm {
    QuadForm::sum_of_squares(3)
}

fn sigma_divisors(l: u64) -> u64 {
    (1..=l).filter(|d| l % d == 0).sum()
}

fn rows(spec: ExperimentSpec) -> Vec<ReportRow> {
    let mut out = Vec::new();
    correlate(&spec, None, |r| {
        out.push(r);
        Ok(())
    })
    .expect("correlate");
    out
}

fn criterion_1() -> Outcome {
    let nmax = 20_000u64;
    let r3 = rq_sieve(&f3(), nmax).map_err(|e| e.to_string())?;
    let mut checked = 0;
    let mut failures = Vec::new();
    for n in 5..=nmax {
        let d = -(n as i64);
        if classify_discriminant(d) != FundClass::Fundamental || d.rem_euclid(8) == 1 {
            continue;
        }
        let h = class_number(d).map_err(|e| e.to_string())?;
        let expect = 12 * (1 - kronecker(d, 2) as i64) as u64 * h;
        checked += 1;
        if r3.get(n) != expect {
            failures.push(n);
        }
    }
    if failures.is_empty() {
        Ok(format!("{checked} discriminants, zero failures"))
    } else {
        Err(format!("{} failures, first {:?}", failures.len(), &failures[..failures.len().min(5)]))
    }
}

fn criterion_2() -> Outcome {
    let x = 1_000_000u64;
    let q = QuadForm::sum_of_squares(2);
    let r = rq_sieve(&q, x + 5).map_err(|e| e.to_string())?;
    let mut notes = Vec::new();
    let mut ok = true;
    for l in [1u64, 3, 5] {
        let c = 8.0 * sigma_divisors(l) as f64 / l as f64;
        // n = 0 excluded
        let emp = fiber_sum(&r.counts, &r.counts, x, l as i64) - r.counts[0] as u128 * r.counts[l as usize] as u128;
        let ratio = emp as f64 / (c * x as f64);
        let euler = iwaniec_c(l, 1000).map_err(|e| e.to_string())?.value;
        let rel = (euler / c - 1.0).abs();
        ok &= (ratio - 1.0).abs() < 0.02 && rel < 1e-3;
        notes.push(format!("l={l}: ratio {ratio:.5}, c(l) rel err {rel:.2e}"));
    }
    let msg = notes.join("; ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_3() -> Outcome {
    let xs = vec![1000, 2154, 4642, 10_000, 21_544, 46_416, 100_000];
    let spec = ExperimentSpec {
        kind: Kind::Split,
        xs,
        shifts: vec![0, 1, 12],
        pmax: 1000,
        q1: None,
        q2: None,
        timings: false,
    };
    let rows = rows(spec);
    let mut ok = true;
    let mut notes = Vec::new();
    for r in rows.iter().filter(|r| r.x == 100_000) {
        let ratio = r.ratio.ok_or("zero prediction")?;
        ok &= (ratio - 1.0).abs() < 0.10;
        notes.push(format!("l={}: ratio {ratio:.4}", r.shift));
    }
    let fits = fit::fit_rows(&rows).map_err(|e| e.to_string())?;
    for f in &fits {
        ok &= f.exponent < 2.0;
        notes.push(format!("l={}: error exponent {:.3}", f.shift, f.exponent));
    }
    let msg = notes.join("; ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_4() -> Outcome {
    let spec = ExperimentSpec {
        kind: Kind::Nonsplit,
        xs: vec![1000, 10_000],
        shifts: vec![1, 2, 4],
        pmax: 200,
        q1: None,
        q2: None,
        timings: false,
    };
    let mut ok = true;
    let mut notes = Vec::new();
    for r in rows(spec).iter().filter(|r| r.x == 10_000) {
        if r.shift == 1 {
            // no n^2 + 1 is 3 mod 8 or 4, 8 mod 16
            ok &= r.empirical == 0 && r.predicted == 0.0;
            notes.push(format!("d=1: empirical {}, predicted {}", r.empirical, r.predicted));
        } else {
            let ratio = r.ratio.ok_or("zero prediction")?;
            ok &= (ratio - 1.0).abs() < 0.15;
            notes.push(format!("d={}: ratio {ratio:.4}", r.shift));
        }
    }
    let msg = notes.join("; ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_5() -> Outcome {
    // the defining integral, integrated here
    let quad = |x: f64, l: f64| {
        let i = quadrature::double_exponential::integrate(|r| r * r * (r * r * x + l).sqrt(), 0.0, 1.0, 1e-15).integral;
        2.0 * PI * PI / 3.0 * 8.0 * i / (x + l).sqrt()
    };
    let mut worst: f64 = 0.0;
    for (x, l) in [(1.0, 0.0), (1.0, 1.0), (1.0, 1000.0), (1000.0, 1.0)] {
        let a = sigma_inf(x, l).map_err(|e| e.to_string())?;
        worst = worst.max(((a - quad(x, l)) / quad(x, l)).abs());
    }
    let mut at0_err: f64 = 0.0;
    for x in [1.0, 7.0, 1e3, 1e6] {
        let v = sigma_inf(x, 0.0).map_err(|e| e.to_string())?;
        at0_err = at0_err.max((v - 4.0 * PI * PI / 3.0).abs() / (4.0 * PI * PI / 3.0));
    }
    let far = sigma_inf(1.0, 1e6).map_err(|e| e.to_string())?;
    let far_err = (far - 16.0 * PI * PI / 9.0).abs();
    let msg = format!("quadrature rel err {worst:.2e}; l=0 rel err {at0_err:.1e}; l/X=1e6 abs err {far_err:.2e}");
    if worst < 1e-8 && at0_err <= 4.0 * f64::EPSILON && far_err < 1e-2 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn toy() -> Quadric {
    Quadric::new(f3(), f3(), 1)
}

fn criterion_6() -> Outcome {
    let quad = toy();
    let pairs: Vec<(u64, u64)> = (2..=30u64)
        .flat_map(|a| (2..=30u64).map(move |b| (a, b)))
        .filter(|&(a, b)| a * b <= 60 && gcd(a, b) == 1)
        .collect();
    let strategy = (proptest::sample::select(pairs), proptest::collection::vec(0i64..60, 6));
    let mut runner = TestRunner::new_with_rng(Config::with_cases(200), TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    let worst = std::cell::Cell::new(0.0f64);
    let cases = std::cell::Cell::new(0u32);
    let mult = runner.run(&strategy, |((q1, q2), c)| {
        let m = check_multiplicativity(q1, q2, &c, &quad).unwrap();
        let rel = m.residual / m.lhs.norm().max(1.0);
        worst.set(worst.get().max(rel));
        cases.set(cases.get() + 1);
        prop_assert!(rel < 1e-6, "q={}*{} c={:?} rel {}", q1, q2, c, rel);
        Ok(())
    });
    // S_p(0) = p N_p - p^6 with N_p counted directly
    let mut orth: f64 = 0.0;
    for p in [3u64, 5, 7, 11] {
        let mut sq = vec![0u64; p as usize];
        for x in 0..p {
            sq[(x * x % p) as usize] += 1;
        }
        let mut f = vec![0u64; p as usize];
        for a in 0..p as usize {
            for b in 0..p as usize {
                for c in 0..p as usize {
                    f[(a + b + c) % p as usize] += sq[a] * sq[b] * sq[c];
                }
            }
        }
        let np: u64 = (0..p as usize).map(|u| f[u] * f[(u + p as usize - 1) % p as usize]).sum();
        let expect = p as f64 * np as f64 - (p as f64).powi(6);
        let s = exp_sum_sq(p, &[0; 6], &quad).map_err(|e| e.to_string())?;
        orth = orth.max((s.value - Complex64::new(expect, 0.0)).norm() / expect.abs().max(1.0));
    }
    let partial = partial_singular_sum(200, &quad).map_err(|e| e.to_string())?;
    let mut ctx = LocalContext::new();
    let mut product = 1.0;
    for p in primes_up_to(50) {
        product *= density_limit(&mut ctx, &LocalProblem::new(p, f3(), f3(), 1))
            .map_err(|e| e.to_string())?
            .value
            .to_f64()
            .unwrap();
    }
    let gap = (partial - product).abs();
    let (worst, cases) = (worst.get(), cases.get());
    let msg = format!(
        "{cases} pairs, worst residual {worst:.1e}; orthogonality rel err {orth:.1e}; singular sum {partial:.6} vs product {product:.6}"
    );
    if mult.is_ok() && cases >= 200 && orth < 1e-6 && gap < 1e-2 {
        Ok(msg)
    } else {
        Err(format!("{msg}; {mult:?}"))
    }
}

/// Normalized count of `Q1(x) - Q2(y) ≡ l (mod p^t)` from value histograms.
fn brute_density(q1: &QuadForm, q2: &QuadForm, l: i64, p: u64, t: u32) -> num_rational::BigRational {
    let m = p.pow(t);
    let hist = |q: &QuadForm| {
        let k = q.dim();
        let mut h = vec![0u64; m as usize];
        let mut x = vec![0i64; k];
        'outer: loop {
            h[q.eval(&x).rem_euclid(m as i128) as usize] += 1;
            for v in x.iter_mut() {
                *v += 1;
                if (*v as u64) < m {
                    continue 'outer;
                }
                *v = 0;
            }
            break;
        }
        h
    };
    let (h1, h2) = (hist(q1), hist(q2));
    let count: u128 = (0..m)
        .map(|v| h2[v as usize] as u128 * h1[((v as i64 + l).rem_euclid(m as i64)) as usize] as u128)
        .sum();
    let n = (q1.dim() + q2.dim()) as u32;
    num_rational::BigRational::new(count.into(), num_bigint::BigInt::from(p).pow((n - 1) * t))
}

fn criterion_7() -> Outcome {
    let mut ctx = LocalContext::new();
    let worked = local_count(&mut ctx, &LocalProblem::new(3, f3(), f3(), 1), 1).map_err(|e| e.to_string())?;
    let mut bad = Vec::new();
    let mut checked = 0;
    let one = QuadForm::sum_of_squares(1);
    let problems: Vec<(&str, QuadForm, i64)> = [1i64, 2, 3, 5, 7, 12, 30, 105]
        .iter()
        .map(|&l| ("split", f3(), l))
        .chain([1i64, 2, 3, 4, 5, 6, 7].iter().map(|&d| ("nonsplit", one.clone(), d)))
        .collect();
    for (name, q2, l) in &problems {
        for p in primes_up_to(50).into_iter().skip(1) {
            if *l as u64 % p == 0 {
                continue;
            }
            let prob = LocalProblem::new(p, f3(), q2.clone(), *l as i128);
            let d = density_cp(&mut ctx, &prob, 4).map_err(|e| e.to_string())?;
            checked += 1;
            if !(1..=2).contains(&d.level) {
                bad.push(format!("{name} l={l} p={p} level {}", d.level));
            }
            // independent enumeration: levels 1 and 2 agree with the reported value
            let top = if p <= 7 || q2.dim() == 1 && p <= 13 { 2 } else { 1 };
            for t in d.level..=top {
                if brute_density(&f3(), q2, *l, p, t) != d.value {
                    bad.push(format!("{name} l={l} p={p}: enumeration at t={t} disagrees"));
                }
            }
        }
    }
    let msg = format!("{checked} (problem, p) pairs stabilized by t=2; worked count {worked}");
    if bad.is_empty() && worked == 234 {
        Ok(msg)
    } else {
        Err(format!("{msg}; {:?}", &bad[..bad.len().min(5)]))
    }
}

fn criterion_8() -> Outcome {
    // the archimedean factor is largest as l / X grows; take its supremum
    let sup_slab = 1.5 * 16.0 * PI * PI / 9.0;
    let at_zero = 1.5 * 4.0 * PI * PI / 3.0;
    let mut worst = (0.0, 0);
    for l in 0..=1000u64 {
        let e = sigma_hat(l, 50).map_err(|e| e.to_string())?;
        let v = e.value * if l == 0 { at_zero } else { sup_slab };
        if v > worst.0 {
            worst = (v, l);
        }
    }
    let msg = format!("max over l <= 1000 is {:.4} at l={}", worst.0, worst.1);
    if worst.0 <= 10.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("Gauss identity", criterion_1),
        ("two-squares constant", criterion_2),
        ("split correlation", criterion_3),
        ("non-split correlation", criterion_4),
        ("singular integral", criterion_5),
        ("exponential sums", criterion_6),
        ("local densities", criterion_7),
        ("uniformity", criterion_8),
    ];
    let mut out = std::io::stdout();
    let mut failed = Vec::new();
    writeln!(out).unwrap();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let r = f();
        let secs = t.elapsed().as_secs_f64();
        let (tag, detail) = match &r {
            Ok(m) => ("PASS", m.clone()),
            Err(m) => ("FAIL", m.clone()),
        };
        writeln!(out, "criterion {} ({name}): {tag} [{secs:.1}s] {detail}", i + 1).unwrap();
        if r.is_err() {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
