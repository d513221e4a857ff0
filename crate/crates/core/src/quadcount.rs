//! Exact empirical counts: lattice points on `Q1(x) - Q2(y) = l` and the
//! class number correlation sums they model.

use serde::{Deserialize, Serialize};

use crate::arith::{self, check_table_len, gauss_family_table, inv_mod, mul_mod, sqrt_mod_prime};
use crate::error::{domain, Result};
use crate::repnum::{self, CongruenceClass, QuadForm};

/// `Q1(x) - Q2(y) = l` with `Q2(y) <= X` and congruence conditions on x and y.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftedProblem {
    pub q1: QuadForm,
    pub q2: QuadForm,
    pub shift: i64,
    pub cc1: CongruenceClass,
    pub cc2: CongruenceClass,
    pub x: u64,
}

impl ShiftedProblem {
    pub fn new(q1: QuadForm, q2: QuadForm, shift: i64, x: u64) -> Self {
        let cc1 = CongruenceClass::trivial(q1.dim());
        let cc2 = CongruenceClass::trivial(q2.dim());
        ShiftedProblem { q1, q2, shift, cc1, cc2, x }
    }

    /// `Y = X + l`.
    pub fn y(&self) -> i64 {
        self.x as i64 + self.shift
    }
}

/// `sum_{0 <= n <= x} r2[n] * r1[n + l]`, skipping `n + l < 0`.
pub fn fiber_sum(r1: &[u64], r2: &[u64], x: u64, l: i64) -> u128 {
    let mut s = 0u128;
    for n in 0..=x as i64 {
        let m = n + l;
        if m < 0 {
            continue;
        }
        s += r2[n as usize] as u128 * r1[m as usize] as u128;
    }
    s
}

/// Exact number of solutions of the constrained shifted problem.
pub fn count_constrained(p: &ShiftedProblem) -> Result<u128> {
    if p.y() < 0 {
        return Ok(0);
    }
    let r1 = repnum::rq_sieve_class(&p.q1, &p.cc1, p.y() as u64)?;
    let r2 = repnum::rq_sieve_class(&p.q2, &p.cc2, p.x)?;
    Ok(fiber_sum(&r1, &r2, p.x, p.shift))
}

/// `sum_{n <= X} r_{Q2}(n) r_{Q1}(n + l)`; the larger argument goes to `Q1`.
pub fn empirical_rr(q1: &QuadForm, q2: &QuadForm, x: u64, l: i64) -> Result<u128> {
    count_constrained(&ShiftedProblem::new(q1.clone(), q2.clone(), l, x))
}

/// Split correlation `D(X, l) = sum_{1 <= n <= X} h(-n) h(-n-l)` over `n` with
/// both `-n` and `-n-l` fundamental and `≢ 1 (mod 8)`.
pub fn empirical_d(x: u64, l: u64) -> Result<u128> {
    let top = x.checked_add(l).ok_or_else(|| crate::Error::Domain("X + l overflows".into()))?;
    check_table_len("class number table", top)?;
    let h = repnum::class_number_table(top)?;
    let fam = gauss_family_table(top)?;
    Ok(split_sum(&h, &fam, x, l))
}

pub(crate) fn split_sum(h: &[u32], fam: &[bool], x: u64, l: u64) -> u128 {
    let mut s = 0u128;
    for n in 1..=x as usize {
        let m = n + l as usize;
        if fam[n] && fam[m] {
            s += h[n] as u128 * h[m] as u128;
        }
    }
    s
}

/// Flags `n <= x` for which `-(n^2 + d)` is fundamental and `≢ 1 (mod 8)`.
pub fn shifted_square_mask(x: u64, d: u64) -> Result<Vec<bool>> {
    check_table_len("shifted square mask", x)?;
    let len = x as usize + 1;
    let mut keep: Vec<bool> = (0..=x)
        .map(|n| {
            let v = (n as u128 * n as u128 + d as u128) as u64;
            v % 8 == 3 || matches!(v % 16, 4 | 8)
        })
        .collect();
    // Remove values divisible by an odd square.
    let top = x as u128 * x as u128 + d as u128;
    let pmax = (top as f64).sqrt() as u64 + 1;
    for p in arith::primes_up_to(pmax).into_iter().skip(1) {
        let p2 = p * p;
        let Some(r) = sqrt_mod_prime(-(d as i128), p) else {
            continue;
        };
        if r == 0 {
            // p | n and p | d: p^2 | n^2 + d iff p^2 | d.
            if d % p2 == 0 {
                for n in (0..len).step_by(p as usize) {
                    keep[n] = false;
                }
            }
            continue;
        }
        for root in [r, p - r] {
            // Hensel: root' = root - (root^2 + d) / (2 root) mod p^2.
            let f = ((root as u128 * root as u128 + d as u128) % p2 as u128) as u64;
            let inv = inv_mod(2 * root as i128, p2).expect("2r is a unit");
            let lifted = (root as i128 - mul_mod(f, inv, p2) as i128).rem_euclid(p2 as i128) as usize;
            for n in (lifted..len).step_by(p2 as usize) {
                keep[n] = false;
            }
        }
    }
    Ok(keep)
}

/// Non-split correlation `S(X, d) = sum_{1 <= n <= X} h(-(n^2 + d))` over `n`
/// with `-(n^2 + d)` fundamental and `≢ 1 (mod 8)`.
pub fn empirical_nonsplit(x: u64, d: u64) -> Result<u128> {
    let mut keep = shifted_square_mask(x, d)?;
    keep[0] = false;
    let h = repnum::class_numbers_shifted_squares(x, d, &keep)?;
    Ok(h.iter().map(|&v| v as u128).sum())
}

/// Split correlation for several shifts at once, sharing one class number table.
pub fn empirical_d_many(x: u64, shifts: &[u64]) -> Result<Vec<u128>> {
    let Some(&lmax) = shifts.iter().max() else {
        return domain("no shifts given");
    };
    let top = x + lmax;
    let h = repnum::class_number_table(top)?;
    let fam = gauss_family_table(top)?;
    Ok(shifts.iter().map(|&l| split_sum(&h, &fam, x, l)).collect())
}
