//! Local factors and truncated Euler products for the three correlation
//! problems: split class numbers, non-split class numbers, and sums of two
//! squares.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::local::{density_limit, LocalContext, LocalDensity, LocalProblem, ValueCondition};
use crate::arith;
use crate::error::{domain, Result};
use crate::repnum::QuadForm;

/// Scales for the split problem: `-n = -s F(x)` with `F(x) ≡ 3 (mod 8)` for
/// `s = 1` and `F(x) ≡ 1, 2 (mod 4)` for `s = 4`.
pub const SPLIT_SCALES: [i64; 2] = [1, 4];
/// Residue classes `n ≡ s (mod M(s))` of the non-split problem.
pub const NONSPLIT_CLASSES: [i64; 3] = [3, 4, 8];

/// Condition on `F(x)` for the split scale `s`: `-F(x) mod M(s)` lies in
/// `R(1) = {5} (mod 8)` or `R(4) = {2, 3} (mod 4)`.
pub fn split_condition(s: i64) -> Result<ValueCondition> {
    match s {
        1 => Ok(ValueCondition::residues(8, &[-5])),
        4 => Ok(ValueCondition::residues(4, &[-2, -3])),
        _ => domain(format!("split scale must be 1 or 4, got {s}")),
    }
}

/// `h(-sF) = r3(F) * tau(s) / 24` on the split family.
pub fn split_tau(s: i64) -> Result<u64> {
    match s {
        1 => Ok(1),
        4 => Ok(2),
        _ => domain(format!("split scale must be 1 or 4, got {s}")),
    }
}

/// Condition `F(x) ≡ s (mod M(s))` of the non-split problem.
pub fn nonsplit_condition(s: i64) -> Result<ValueCondition> {
    match s {
        3 => Ok(ValueCondition::residues(8, &[3])),
        4 | 8 => Ok(ValueCondition::residues(16, &[s])),
        _ => domain(format!("non-split class must be 3, 4 or 8, got {s}")),
    }
}

pub fn nonsplit_tau(s: i64) -> Result<u64> {
    match s {
        3 => Ok(1),
        4 | 8 => Ok(2),
        _ => domain(format!("non-split class must be 3, 4 or 8, got {s}")),
    }
}

fn f3() -> QuadForm {
    QuadForm::sum_of_squares(3)
}

fn odd_square_condition(p: u64, j: u64) -> Result<ValueCondition> {
    if j == 0 {
        return domain("j must be positive");
    }
    let v = if j == 1 { 0 } else { arith::valuation(p, j as i128)? };
    Ok(if v == 0 {
        ValueCondition::any()
    } else {
        ValueCondition::divisible_by(p.pow(2 * v))
    })
}

/// Density at p of `s F(x) - t F(y) = l` with `j^2 | F(x)`, `k^2 | F(y)` and,
/// at `p = 2`, the split residue conditions attached to `(s, t)`.
pub fn gamma_jk(ctx: &mut LocalContext, p: u64, j: u64, k: u64, st: (i64, i64), l: i128) -> Result<LocalDensity> {
    let (s, t) = st;
    split_tau(s)?;
    split_tau(t)?;
    let prob = LocalProblem::new(p, f3(), f3(), l).with_scales(s, t);
    let prob = if p == 2 {
        if j % 2 == 0 || k % 2 == 0 {
            return domain("j and k must be odd");
        }
        prob.with_conditions(split_condition(s)?, split_condition(t)?)
    } else {
        prob.with_conditions(odd_square_condition(p, j)?, odd_square_condition(p, k)?)
    };
    density_limit(ctx, &prob)
}

/// Local factor of the split singular series.
pub fn sigma_p(ctx: &mut LocalContext, l: i128, p: u64) -> Result<BigRational> {
    if p == 2 {
        let mut acc = BigRational::zero();
        for s in SPLIT_SCALES {
            for t in SPLIT_SCALES {
                let tau = split_tau(s)? * split_tau(t)?;
                let g = gamma_jk(ctx, 2, 1, 1, (s, t), l)?.value;
                acc += g / BigRational::from_integer(BigInt::from(tau * tau));
            }
        }
        return Ok(acc);
    }
    let g = |ctx: &mut LocalContext, j, k| gamma_jk(ctx, p, j, k, (1, 1), l).map(|d| d.value);
    Ok(g(ctx, 1, 1)? - g(ctx, p, 1)? - g(ctx, 1, p)? + g(ctx, p, p)?)
}

/// Density at p of `F(x) - n^2 = d` with `j^2 | F(x)` (odd p) or
/// `F(x) ≡ s (mod M(s))` (p = 2).
pub fn gamma_nonsplit(ctx: &mut LocalContext, p: u64, j: u64, s: i64, d: i128) -> Result<LocalDensity> {
    let prob = LocalProblem::new(p, f3(), QuadForm::sum_of_squares(1), d);
    let prob = if p == 2 {
        prob.with_conditions(nonsplit_condition(s)?, ValueCondition::any())
    } else {
        prob.with_conditions(odd_square_condition(p, j)?, ValueCondition::any())
    };
    density_limit(ctx, &prob)
}

/// Local factor of the non-split singular series.
pub fn sigma_tilde_p(ctx: &mut LocalContext, d: i128, p: u64) -> Result<BigRational> {
    if p == 2 {
        let mut acc = BigRational::zero();
        for s in NONSPLIT_CLASSES {
            let g = gamma_nonsplit(ctx, 2, 1, s, d)?.value;
            acc += g * BigRational::from_integer(BigInt::from(nonsplit_tau(s)?));
        }
        return Ok(acc);
    }
    Ok(gamma_nonsplit(ctx, p, 1, 0, d)?.value - gamma_nonsplit(ctx, p, p, 0, d)?.value)
}

/// Density at p of `x1^2 + x2^2 - x3^2 - x4^2 = l`.
pub fn iwaniec_c_p(ctx: &mut LocalContext, l: i128, p: u64) -> Result<BigRational> {
    let q = QuadForm::sum_of_squares(2);
    Ok(density_limit(ctx, &LocalProblem::new(p, q.clone(), q, l))?.value)
}

/// Density at p for general forms `Q1(x) - Q2(y) = l`.
pub fn rq_c_p(ctx: &mut LocalContext, q1: &QuadForm, q2: &QuadForm, l: i128, p: u64) -> Result<BigRational> {
    Ok(density_limit(ctx, &LocalProblem::new(p, q1.clone(), q2.clone(), l))?.value)
}

/// Constant for the heuristic tail bound `exp(C sum_{p > P} p^-2) - 1`.
pub const TAIL_CONSTANT: f64 = 10.0;

/// A product of local factors over `p <= cutoff`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EulerProduct {
    /// `(p, factor)` with the factor as an exact rational string.
    pub factors: Vec<(u64, String)>,
    pub cutoff: u64,
    /// Heuristic relative error from the omitted primes; reported, never applied.
    pub tail_bound: f64,
    pub value: f64,
}

impl EulerProduct {
    pub fn from_factors(cutoff: u64, factors: Vec<(u64, BigRational)>) -> Self {
        let value = factors.iter().map(|(_, f)| f.to_f64().unwrap_or(f64::NAN)).product();
        EulerProduct {
            factors: factors.into_iter().map(|(p, f)| (p, f.to_string())).collect(),
            cutoff,
            tail_bound: tail_bound(cutoff),
            value,
        }
    }

    pub fn factor(&self, p: u64) -> Option<&str> {
        self.factors.iter().find(|(q, _)| *q == p).map(|(_, f)| f.as_str())
    }
}

/// `exp(C sum_{p > P} p^-2) - 1`, with the prime sum bounded by sieving to
/// `max(10^6, 10 P)` plus `1/limit` for the rest.
pub fn tail_bound(cutoff: u64) -> f64 {
    let limit = (10 * cutoff).max(1_000_000);
    let s: f64 = arith::primes_up_to(limit)
        .into_iter()
        .filter(|&p| p > cutoff)
        .map(|p| 1.0 / (p as f64 * p as f64))
        .sum::<f64>()
        + 1.0 / limit as f64;
    (TAIL_CONSTANT * s).exp() - 1.0
}

/// Evaluates `factor(ctx, p)` for each prime up to `pmax`, one context per prime.
pub fn euler_product<F>(pmax: u64, factor: F) -> Result<EulerProduct>
where
    F: Fn(&mut LocalContext, u64) -> Result<BigRational> + Sync,
{
    let primes = arith::primes_up_to(pmax);
    let factors: Vec<(u64, BigRational)> = primes
        .par_iter()
        .map(|&p| {
            let mut ctx = LocalContext::new();
            factor(&mut ctx, p).map(|f| (p, f))
        })
        .collect::<Result<_>>()?;
    Ok(EulerProduct::from_factors(pmax, factors))
}

/// Finite part of the split singular series, `prod_{p <= pmax} sigma_p(l)`.
pub fn sigma_hat(l: u64, pmax: u64) -> Result<EulerProduct> {
    euler_product(pmax, |ctx, p| sigma_p(ctx, l as i128, p))
}

/// Finite part of the non-split singular series.
pub fn sigma_tilde(d: u64, pmax: u64) -> Result<EulerProduct> {
    euler_product(pmax, |ctx, p| sigma_tilde_p(ctx, d as i128, p))
}

/// The constant `c(l)` with `sum_{n <= X} r(n) r(n + l) ~ c(l) X`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IwaniecConstant {
    pub euler: EulerProduct,
    pub archimedean: f64,
    pub value: f64,
}

pub fn iwaniec_c(l: u64, pmax: u64) -> Result<IwaniecConstant> {
    if l == 0 {
        return domain("the shift must be nonzero");
    }
    let euler = euler_product(pmax, |ctx, p| iwaniec_c_p(ctx, l as i128, p))?;
    let archimedean = std::f64::consts::PI * std::f64::consts::PI;
    Ok(IwaniecConstant {
        value: archimedean * euler.value,
        archimedean,
        euler,
    })
}

/// `1` as a rational, for callers building products by hand.
pub fn one() -> BigRational {
    BigRational::one()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn sigma(l: i128, p: u64) -> BigRational {
        sigma_p(&mut LocalContext::new(), l, p).unwrap()
    }

    #[test]
    fn split_two_adic_values() {
        assert_eq!(sigma(1, 2), q(3, 32));
        assert_eq!(sigma(0, 2), q(13, 32));
        assert_eq!(sigma(12, 2), q(9, 64));
        assert_eq!(sigma(2, 2), q(0, 1));
        assert_eq!(sigma(6, 2), q(0, 1));
    }

    #[test]
    fn split_odd_values() {
        assert_eq!(sigma(1, 3), q(56, 81));
        assert_eq!(sigma(1, 5), q(2752, 3125));
    }

    #[test]
    fn incompatible_two_adic_classes_vanish() {
        // F ≡ 3 (mod 8) on both sides forces l ≡ 0 (mod 8)
        let mut ctx = LocalContext::new();
        for l in [1i128, 2, 3, 4, 5, 6, 7, 9] {
            assert!(gamma_jk(&mut ctx, 2, 1, 1, (1, 1), l).unwrap().value.is_zero(), "l={l}");
        }
        assert!(!gamma_jk(&mut ctx, 2, 1, 1, (1, 1), 8).unwrap().value.is_zero());
    }

    #[test]
    fn nonsplit_two_adic_values() {
        let mut ctx = LocalContext::new();
        assert_eq!(sigma_tilde_p(&mut ctx, 2, 2).unwrap(), q(1, 2));
        assert_eq!(sigma_tilde_p(&mut ctx, 4, 2).unwrap(), q(3, 4));
        assert_eq!(sigma_tilde_p(&mut ctx, 3, 2).unwrap(), q(5, 8));
        assert!(sigma_tilde_p(&mut ctx, 1, 2).unwrap().is_zero());
        assert!(sigma_tilde_p(&mut ctx, 6, 2).unwrap().is_zero());
    }

    #[test]
    fn bad_scales_rejected() {
        let mut ctx = LocalContext::new();
        assert!(gamma_jk(&mut ctx, 3, 1, 1, (2, 1), 1).is_err());
        assert!(gamma_jk(&mut ctx, 2, 2, 1, (1, 1), 1).is_err());
    }

    #[test]
    fn tail_bound_decreases() {
        let a = tail_bound(50);
        let b = tail_bound(1000);
        assert!(a > b && b > 0.0);
    }

    #[test]
    fn euler_product_collects_all_primes() {
        let e = sigma_hat(1, 30).unwrap();
        assert_eq!(e.factors.len(), 10);
        assert_eq!(e.factor(3), Some("56/81"));
    }
}
