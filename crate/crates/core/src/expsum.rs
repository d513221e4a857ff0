//! Complete exponential sums attached to `s1 Q1(x) - s2 Q2(y) = l`:
//!
//! `S_q(c) = sum*_{d mod q} sum_{x, y} e_q(d (s1 Q1(x) - s2 Q2(y) - l) + c . (x, y))`
//!
//! with `x` over `x ≡ a1 (mod A1)` modulo `q A1` and likewise for `y`.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::arith::{gcd, inv_mod, modp};
use crate::constants::series::{split_condition, split_tau};
use crate::error::{domain, Error, Result};
use crate::repnum::{CongruenceClass, QuadForm};

/// Largest number of vectors enumerated for a non-diagonal block.
pub const BLOCK_BUDGET: u64 = 1 << 24;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quadric {
    pub q1: QuadForm,
    pub q2: QuadForm,
    pub scale1: i64,
    pub scale2: i64,
    pub shift: i64,
    pub cc1: CongruenceClass,
    pub cc2: CongruenceClass,
}

impl Quadric {
    pub fn new(q1: QuadForm, q2: QuadForm, shift: i64) -> Self {
        let cc1 = CongruenceClass::trivial(q1.dim());
        let cc2 = CongruenceClass::trivial(q2.dim());
        Quadric {
            q1,
            q2,
            scale1: 1,
            scale2: 1,
            shift,
            cc1,
            cc2,
        }
    }

    pub fn n(&self) -> usize {
        self.q1.dim() + self.q2.dim()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpSumValue {
    pub q: u64,
    pub value: Complex64,
    /// Rough bound on accumulated rounding error.
    pub abs_error: f64,
}

/// `e_q(k)` for `k mod q`, tabulated once per modulus.
struct Roots {
    q: u64,
    table: Vec<Complex64>,
}

impl Roots {
    fn new(q: u64) -> Self {
        let table = (0..q)
            .map(|k| Complex64::from_polar(1.0, TAU * k as f64 / q as f64))
            .collect();
        Roots { q, table }
    }

    fn e(&self, k: i128) -> Complex64 {
        self.table[modp(k, self.q) as usize]
    }
}

/// Neumaier-compensated complex sum.
#[derive(Default)]
struct Acc {
    re: f64,
    im: f64,
    cre: f64,
    cim: f64,
}

impl Acc {
    fn add(&mut self, z: Complex64) {
        fn step(s: &mut f64, c: &mut f64, x: f64) {
            let t = *s + x;
            if s.abs() >= x.abs() {
                *c += (*s - t) + x;
            } else {
                *c += (x - t) + *s;
            }
            *s = t;
        }
        step(&mut self.re, &mut self.cre, z.re);
        step(&mut self.im, &mut self.cim, z.im);
    }

    fn value(&self) -> Complex64 {
        Complex64::new(self.re + self.cre, self.im + self.cim)
    }
}

/// One block: `W(d) = sum_{x ≡ a (A), x mod qA} e_q(d s Q(x) + c . x)`.
enum Block {
    /// Per-coordinate data for a diagonal form.
    Diagonal { coeffs: Vec<i64> },
    /// Histogram of `(s Q(x) mod q, c . x mod q)`.
    Table(Vec<(u64, u64, u64)>),
}

fn block(form: &QuadForm, scale: i64, cc: &CongruenceClass, c: &[i64], q: u64) -> Result<Block> {
    if form.is_diagonal() {
        return Ok(Block::Diagonal {
            coeffs: (0..form.dim()).map(|i| form.diag_coeff(i)).collect(),
        });
    }
    let k = form.dim();
    let total = (q as u128).checked_pow(k as u32).unwrap_or(u128::MAX);
    if total > BLOCK_BUDGET as u128 {
        return Err(Error::Capacity {
            what: "exponential sum block",
            needed: total,
            limit: BLOCK_BUDGET as u128,
        });
    }
    let a = cc.modulus as i64;
    let mut hist = std::collections::BTreeMap::new();
    let mut z = vec![0i64; k];
    let mut x = vec![0i64; k];
    'outer: loop {
        let mut lin = 0i128;
        for i in 0..k {
            x[i] = cc.residues[i] + a * z[i];
            lin += c[i] as i128 * x[i] as i128;
        }
        let u = modp(scale as i128 * form.eval(&x), q);
        *hist.entry((u, modp(lin, q))).or_insert(0u64) += 1;
        for i in 0..k {
            z[i] += 1;
            if (z[i] as u64) < q {
                continue 'outer;
            }
            z[i] = 0;
        }
        break;
    }
    Ok(Block::Table(hist.into_iter().map(|((u, w), n)| (u, w, n)).collect()))
}

fn block_sum(b: &Block, roots: &Roots, d: i128, scale: i64, cc: &CongruenceClass, c: &[i64]) -> Complex64 {
    let q = roots.q as i128;
    match b {
        Block::Diagonal { coeffs } => {
            let a = cc.modulus as i128;
            let mut prod = Complex64::new(1.0, 0.0);
            for (i, &ai) in coeffs.iter().enumerate() {
                let mut acc = Acc::default();
                let r = cc.residues[i] as i128;
                let dsa = (d * scale as i128 % q) * ai as i128 % q;
                for z in 0..q {
                    let x = (r + a * z) % q;
                    acc.add(roots.e(dsa * x % q * x + c[i] as i128 * x));
                }
                prod *= acc.value();
            }
            prod
        }
        Block::Table(h) => {
            let mut acc = Acc::default();
            for &(u, w, n) in h {
                acc.add(roots.e(d * u as i128 + w as i128) * n as f64);
            }
            acc.value()
        }
    }
}

/// `S_q(c)` for the quadric. `c` has one entry per variable (x first, then y).
pub fn exp_sum_sq(q: u64, c: &[i64], quad: &Quadric) -> Result<ExpSumValue> {
    if q == 0 {
        return domain("q must be positive");
    }
    if c.len() != quad.n() {
        return domain(format!("c needs {} entries", quad.n()));
    }
    let (c1, c2) = c.split_at(quad.q1.dim());
    let roots = Roots::new(q);
    let b1 = block(&quad.q1, quad.scale1, &quad.cc1, c1, q)?;
    let b2 = block(&quad.q2, -quad.scale2, &quad.cc2, c2, q)?;
    let mut acc = Acc::default();
    let mut units = 0u64;
    for d in 0..q {
        if gcd(d, q) != 1 {
            continue;
        }
        units += 1;
        let d = d as i128;
        let w1 = block_sum(&b1, &roots, d, quad.scale1, &quad.cc1, c1);
        let w2 = block_sum(&b2, &roots, d, -quad.scale2, &quad.cc2, c2);
        acc.add(roots.e(-d * quad.shift as i128) * w1 * w2);
    }
    let terms = (q as f64).powi(quad.n() as i32);
    let abs_error = 8.0 * f64::EPSILON * units as f64 * terms * (q as f64 + quad.n() as f64);
    Ok(ExpSumValue {
        q,
        value: acc.value(),
        abs_error,
    })
}

/// `sum_{q <= z} q^{-n} S_q(0)`, real part.
pub fn partial_singular_sum(z: u64, quad: &Quadric) -> Result<f64> {
    let zero = vec![0; quad.n()];
    let mut acc = Acc::default();
    for q in 1..=z {
        let s = exp_sum_sq(q, &zero, quad)?;
        acc.add(Complex64::new(s.value.re / (q as f64).powi(quad.n() as i32), 0.0));
    }
    Ok(acc.value().re)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultCheck {
    pub lhs: Complex64,
    pub rhs: Complex64,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Compares `S_{q1 q2}(c)` with `S_{q1}(q2^-1 c) S_{q2}(q1^-1 c)` for coprime
/// `q1`, `q2`, inverses taken modulo the other factor.
pub fn check_multiplicativity(q1: u64, q2: u64, c: &[i64], quad: &Quadric) -> Result<MultCheck> {
    if gcd(q1, q2) != 1 {
        return Err(Error::InvalidFactorization { m: q1, n: q2 });
    }
    let i2 = inv_mod(q2 as i128, q1).expect("coprime") as i64;
    let i1 = inv_mod(q1 as i128, q2).expect("coprime") as i64;
    let c_a: Vec<i64> = c.iter().map(|&v| (v as i128 * i2 as i128).rem_euclid(q1 as i128) as i64).collect();
    let c_b: Vec<i64> = c.iter().map(|&v| (v as i128 * i1 as i128).rem_euclid(q2 as i128) as i64).collect();
    let lhs = exp_sum_sq(q1 * q2, c, quad)?;
    let a = exp_sum_sq(q1, &c_a, quad)?;
    let b = exp_sum_sq(q2, &c_b, quad)?;
    let rhs = a.value * b.value;
    let residual = (lhs.value - rhs).norm();
    let tolerance = lhs.abs_error + a.abs_error * b.value.norm() + b.abs_error * a.value.norm() + 1e-9;
    Ok(MultCheck {
        lhs: lhs.value,
        rhs,
        residual,
        tolerance,
        pass: residual <= tolerance,
    })
}

/// `|S_q(c)| / ((A1 A2)^n q^{1 + n/2})`.
pub fn bound_ratio(q: u64, c: &[i64], quad: &Quadric) -> Result<f64> {
    let s = exp_sum_sq(q, c, quad)?;
    let n = quad.n() as i32;
    let a = (quad.cc1.modulus * quad.cc2.modulus) as f64;
    Ok(s.value.norm() / (a.powi(n) * (q as f64).powf(1.0 + n as f64 / 2.0)))
}

/// Histogram of `s F(x) mod q` over `x mod M q j^2` with `j^2 | F(x)` and the
/// split residue condition for `s`; returned with the count of admissible
/// `x mod M j^2`.
fn admissible_values(q: u64, j: u64, s: i64) -> Result<(Vec<u128>, u128)> {
    let cond = split_condition(s)?;
    let big = cond.modulus() * j * j;
    let lcm = q / gcd(q, big) * big;
    // distribution of F(x) mod lcm over x mod lcm
    let mut sq = vec![0u128; lcm as usize];
    for x in 0..lcm {
        sq[((x as u128 * x as u128) % lcm as u128) as usize] += 1;
    }
    let mut dist = vec![0u128; lcm as usize];
    dist[0] = 1;
    for _ in 0..3 {
        let mut next = vec![0u128; lcm as usize];
        for (u, &a) in dist.iter().enumerate() {
            if a == 0 {
                continue;
            }
            for (v, &b) in sq.iter().enumerate() {
                if b != 0 {
                    next[(u + v) % lcm as usize] += a * b;
                }
            }
        }
        dist = next;
    }
    // x mod M q j^2 covers x mod lcm this many times per coordinate
    let cover = (cond.modulus() * q * j * j / lcm) as u128;
    let cover3 = cover * cover * cover;
    let mut by_q = vec![0u128; q as usize];
    let mut admissible = 0u128;
    for (u, &n) in dist.iter().enumerate() {
        let u = u as u64;
        if n == 0 || u % (j * j) != 0 || !cond.accepts(u % cond.modulus()) {
            continue;
        }
        by_q[modp(s as i128 * u as i128, q) as usize] += n * cover3;
        admissible += n;
    }
    // admissible residues mod M j^2
    let down = lcm / big;
    Ok((by_q, admissible / (down * down * down) as u128))
}

/// `T_q` for the split problem with blocks `x mod M(s) q j^2`, restricted to
/// `j^2 | F(x)` and the 2-adic class of `s`, phase `e_q(d (sF(x) - tF(y) - l))`.
/// Returns the sum and `T_1 = |A_j(s)| |A_k(t)|`.
pub fn exp_sum_tq(q: u64, j: u64, k: u64, st: (i64, i64), l: i64) -> Result<(ExpSumValue, u128)> {
    if q == 0 || j == 0 || k == 0 {
        return domain("q, j, k must be positive");
    }
    if j % 2 == 0 || k % 2 == 0 {
        return domain("j and k must be odd");
    }
    let (s, t) = st;
    split_tau(s)?;
    split_tau(t)?;
    let (h1, a1) = admissible_values(q, j, s)?;
    let (h2, a2) = admissible_values(q, k, t)?;
    let roots = Roots::new(q);
    let mut acc = Acc::default();
    let mut units = 0u64;
    for d in 0..q {
        if gcd(d, q) != 1 {
            continue;
        }
        units += 1;
        let d = d as i128;
        let mut w1 = Acc::default();
        for (u, &n) in h1.iter().enumerate() {
            if n != 0 {
                w1.add(roots.e(d * u as i128) * n as f64);
            }
        }
        let mut w2 = Acc::default();
        for (v, &n) in h2.iter().enumerate() {
            if n != 0 {
                w2.add(roots.e(-d * v as i128) * n as f64);
            }
        }
        acc.add(roots.e(-d * l as i128) * w1.value() * w2.value());
    }
    let mass = h1.iter().sum::<u128>() as f64 * h2.iter().sum::<u128>() as f64;
    let value = ExpSumValue {
        q,
        value: acc.value(),
        abs_error: 8.0 * f64::EPSILON * units as f64 * mass * q as f64,
    };
    Ok((value, a1 * a2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::local::{density_limit, LocalContext, LocalProblem};
    use num_traits::ToPrimitive;

    fn toy() -> Quadric {
        let f = QuadForm::sum_of_squares(3);
        Quadric::new(f.clone(), f, 1)
    }

    // Direct definition, no factorization and no tables.
    fn naive(q: u64, c: &[i64], quad: &Quadric) -> Complex64 {
        let n = quad.n();
        let k1 = quad.q1.dim();
        let mut total = Complex64::new(0.0, 0.0);
        for d in 0..q {
            if gcd(d, q) != 1 {
                continue;
            }
            let mut z = vec![0i64; n];
            loop {
                let x: Vec<i64> = (0..k1).map(|i| quad.cc1.residues[i] + quad.cc1.modulus as i64 * z[i]).collect();
                let y: Vec<i64> = (k1..n)
                    .map(|i| quad.cc2.residues[i - k1] + quad.cc2.modulus as i64 * z[i])
                    .collect();
                let val = quad.scale1 as i128 * quad.q1.eval(&x) - quad.scale2 as i128 * quad.q2.eval(&y) - quad.shift as i128;
                let lin: i128 = x.iter().chain(&y).zip(c).map(|(&a, &b)| a as i128 * b as i128).sum();
                let ph = (d as i128 * val + lin).rem_euclid(q as i128) as f64 / q as f64;
                total += Complex64::from_polar(1.0, TAU * ph);
                let mut i = 0;
                loop {
                    if i == n {
                        break;
                    }
                    z[i] += 1;
                    if (z[i] as u64) < q {
                        break;
                    }
                    z[i] = 0;
                    i += 1;
                }
                if i == n {
                    break;
                }
            }
        }
        total
    }

    #[test]
    fn matches_naive_definition() {
        let f = QuadForm::sum_of_squares(2);
        let g = QuadForm::from_upper(2, &[1, 1, 2]).unwrap();
        let mut quad = Quadric::new(f, g, 3);
        quad.cc1 = CongruenceClass::new(2, vec![1, 0]).unwrap();
        for q in [1u64, 2, 3, 4, 5, 6, 9] {
            for c in [[0i64, 0, 0, 0], [1, 2, 0, 5], [3, 0, 1, 1]] {
                let got = exp_sum_sq(q, &c, &quad).unwrap().value;
                let want = naive(q, &c, &quad);
                assert!((got - want).norm() < 1e-8, "q={q} c={c:?} {got} {want}");
            }
        }
    }

    #[test]
    fn multiplicativity_holds() {
        let quad = toy();
        for (a, b) in [(3u64, 4u64), (5, 7), (8, 9), (4, 15)] {
            let r = check_multiplicativity(a, b, &[1, 0, 2, 0, 0, 3], &quad).unwrap();
            assert!(r.pass, "{a} {b} {r:?}");
        }
        let mut quad = toy();
        quad.cc2 = CongruenceClass::new(2, vec![1, 1, 0]).unwrap();
        let r = check_multiplicativity(3, 5, &[1, 1, 0, 2, 0, 0], &quad).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(matches!(
            check_multiplicativity(6, 4, &[0; 6], &toy()),
            Err(Error::InvalidFactorization { .. })
        ));
    }

    #[test]
    fn orthogonality_at_one() {
        let s = exp_sum_sq(1, &[0; 6], &toy()).unwrap();
        assert!((s.value - Complex64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn pointwise_bound() {
        let quad = toy();
        for q in 1..=30u64 {
            for c in [[0i64; 6], [1, 2, 3, 4, 5, 6], [7, 0, 0, 1, 0, 0]] {
                assert!(bound_ratio(q, &c, &quad).unwrap() <= 4.0, "q={q}");
            }
        }
    }

    #[test]
    fn singular_sum_local_factor() {
        // sum over powers of p of p^{-kn} S_{p^k}(0) is the p-adic density
        let quad = toy();
        let mut ctx = LocalContext::new();
        let f = QuadForm::sum_of_squares(3);
        for p in [2u64, 3, 5] {
            let mut s = 1.0;
            let mut q = p;
            while q <= 400 {
                s += exp_sum_sq(q, &[0; 6], &quad).unwrap().value.re / (q as f64).powi(6);
                q *= p;
            }
            let d = density_limit(&mut ctx, &LocalProblem::new(p, f.clone(), f.clone(), 1))
                .unwrap()
                .value
                .to_f64()
                .unwrap();
            assert!((s - d).abs() < 1e-6, "p={p} {s} {d}");
        }
    }

    #[test]
    fn tq_normalized_claim() {
        for (q1, q2) in [(3u64, 5u64), (5, 7), (3, 7)] {
            for st in [(1, 1), (1, 4), (4, 4)] {
                let (a, t1) = exp_sum_tq(q1, 1, 1, st, 1).unwrap();
                let (b, _) = exp_sum_tq(q2, 1, 1, st, 1).unwrap();
                let (ab, _) = exp_sum_tq(q1 * q2, 1, 1, st, 1).unwrap();
                let lhs = ab.value * t1 as f64;
                let rhs = a.value * b.value;
                assert!((lhs - rhs).norm() <= 1e-9 * rhs.norm().max(1.0), "{q1} {q2} {st:?}");
            }
        }
    }

    #[test]
    fn tq_counts_admissible_classes() {
        // q = 1: F ≡ 3 (mod 8) has 64 of 512 vectors mod 8
        let (v, t1) = exp_sum_tq(1, 1, 1, (1, 1), 0).unwrap();
        assert_eq!(t1, 64 * 64);
        assert!((v.value.re - (64.0 * 64.0)).abs() < 1e-6);
        assert!(exp_sum_tq(3, 2, 1, (1, 1), 0).is_err());
    }
}
