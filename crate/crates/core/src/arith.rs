//! Elementary arithmetic: symbols, sieves, valuations and discriminant classes.

use crate::error::{domain, Error, Result};

/// Largest table any sieve in this crate will allocate.
pub const MAX_TABLE_LEN: u64 = 1 << 31;

pub(crate) fn check_table_len(what: &'static str, n: u64) -> Result<()> {
    if n >= MAX_TABLE_LEN {
        return Err(Error::Capacity {
            what,
            needed: n as u128 + 1,
            limit: MAX_TABLE_LEN as u128,
        });
    }
    Ok(())
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

pub fn gcd_i64(a: i64, b: i64) -> u64 {
    gcd(a.unsigned_abs(), b.unsigned_abs())
}

/// `a mod m` in `0..m`.
pub fn modp(a: i128, m: u64) -> u64 {
    a.rem_euclid(m as i128) as u64
}

pub fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

pub fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut r = 1 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            r = mul_mod(r, b, m);
        }
        b = mul_mod(b, b, m);
        e >>= 1;
    }
    r
}

/// Inverse of `a` modulo `m`, if it exists.
pub fn inv_mod(a: i128, m: u64) -> Option<u64> {
    if m == 1 {
        return Some(0);
    }
    let (mut r0, mut r1) = (m as i128, a.rem_euclid(m as i128));
    let (mut s0, mut s1) = (0i128, 1i128);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (s0, s1) = (s1, s0 - q * s1);
    }
    (r0 == 1).then(|| s0.rem_euclid(m as i128) as u64)
}

/// Jacobi symbol (a/m) for odd positive m.
pub fn jacobi(a: i64, m: u64) -> i32 {
    assert!(m % 2 == 1, "jacobi symbol needs an odd modulus");
    let mut a = modp(a as i128, m);
    let mut m = m;
    let mut s = 1;
    while a != 0 {
        while a % 2 == 0 {
            a /= 2;
            if m % 8 == 3 || m % 8 == 5 {
                s = -s;
            }
        }
        std::mem::swap(&mut a, &mut m);
        if a % 4 == 3 && m % 4 == 3 {
            s = -s;
        }
        a %= m;
    }
    if m == 1 {
        s
    } else {
        0
    }
}

/// Kronecker symbol (a/n), extending the Jacobi symbol to every integer n.
pub fn kronecker(a: i64, n: i64) -> i32 {
    if n == 0 {
        return if a.unsigned_abs() == 1 { 1 } else { 0 };
    }
    let mut s = 1;
    if n < 0 && a < 0 {
        s = -1;
    }
    let mut m = n.unsigned_abs();
    let e = m.trailing_zeros();
    m >>= e;
    if e > 0 {
        if a % 2 == 0 {
            return 0;
        }
        let r = a.rem_euclid(8);
        if e % 2 == 1 && (r == 3 || r == 5) {
            s = -s;
        }
    }
    s * jacobi(a, m)
}

/// Exponent of the prime `p` in `n`. Errors on `n = 0`.
pub fn valuation(p: u64, n: i128) -> Result<u32> {
    if p < 2 {
        return domain(format!("valuation base {p} is not a prime"));
    }
    if n == 0 {
        return domain("valuation of zero");
    }
    let mut n = n.unsigned_abs();
    let p = p as u128;
    let mut v = 0;
    while n % p == 0 {
        n /= p;
        v += 1;
    }
    Ok(v)
}

/// Möbius function on `0..=n` (index 0 holds 0), by a linear sieve.
pub fn moebius_sieve(n: u64) -> Result<Vec<i8>> {
    check_table_len("moebius sieve", n)?;
    let n = n as usize;
    let mut mu = vec![0i8; n + 1];
    if n == 0 {
        return Ok(mu);
    }
    mu[1] = 1;
    let mut composite = vec![false; n + 1];
    let mut primes = Vec::new();
    for i in 2..=n {
        if !composite[i] {
            primes.push(i);
            mu[i] = -1;
        }
        for &p in &primes {
            let ip = i * p;
            if ip > n {
                break;
            }
            composite[ip] = true;
            if i % p == 0 {
                mu[ip] = 0;
                break;
            }
            mu[ip] = -mu[i];
        }
    }
    Ok(mu)
}

pub fn primes_up_to(n: u64) -> Vec<u64> {
    if n < 2 {
        return Vec::new();
    }
    let n = n as usize;
    let mut sieve = vec![true; n + 1];
    sieve[0] = false;
    sieve[1] = false;
    let mut i = 2;
    while i * i <= n {
        if sieve[i] {
            for j in (i * i..=n).step_by(i) {
                sieve[j] = false;
            }
        }
        i += 1;
    }
    (0..=n).filter(|&i| sieve[i]).map(|i| i as u64).collect()
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let s = d.trailing_zeros();
    d >>= s;
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// A square root of `a` modulo the odd prime `p` (Tonelli-Shanks), if any.
pub fn sqrt_mod_prime(a: i128, p: u64) -> Option<u64> {
    let a = modp(a, p);
    if a == 0 {
        return Some(0);
    }
    if pow_mod(a, (p - 1) / 2, p) != 1 {
        return None;
    }
    let mut q = p - 1;
    let s = q.trailing_zeros();
    q >>= s;
    let mut z = 2;
    while pow_mod(z, (p - 1) / 2, p) != p - 1 {
        z += 1;
    }
    let mut m = s;
    let mut c = pow_mod(z, q, p);
    let mut t = pow_mod(a, q, p);
    let mut r = pow_mod(a, (q + 1) / 2, p);
    while t != 1 {
        let mut i = 0;
        let mut tt = t;
        while tt != 1 {
            tt = mul_mod(tt, tt, p);
            i += 1;
        }
        let b = pow_mod(c, 1 << (m - i - 1), p);
        m = i;
        c = mul_mod(b, b, p);
        t = mul_mod(t, c, p);
        r = mul_mod(r, b, p);
    }
    Some(r)
}

/// Prime factorization by trial division, primes ascending.
pub fn factorize(mut n: u64) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    if n < 2 {
        return out;
    }
    let mut p = 2;
    while p * p <= n {
        if n % p == 0 {
            let mut e = 0;
            while n % p == 0 {
                n /= p;
                e += 1;
            }
            out.push((p, e));
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

pub fn is_squarefree(n: u64) -> bool {
    n != 0 && factorize(n).iter().all(|&(_, e)| e == 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FundClass {
    Fundamental,
    NonFundamental,
    NotDiscriminant,
}

/// Classifies `d` as a fundamental discriminant, a non-fundamental
/// discriminant, or not a discriminant at all. Zero is not a discriminant.
pub fn classify_discriminant(d: i64) -> FundClass {
    if d == 0 {
        return FundClass::NotDiscriminant;
    }
    match d.rem_euclid(4) {
        1 => {
            if is_squarefree(d.unsigned_abs()) {
                FundClass::Fundamental
            } else {
                FundClass::NonFundamental
            }
        }
        0 => {
            let m = d / 4;
            if matches!(m.rem_euclid(4), 2 | 3) && is_squarefree(m.unsigned_abs()) {
                FundClass::Fundamental
            } else {
                FundClass::NonFundamental
            }
        }
        _ => FundClass::NotDiscriminant,
    }
}

pub fn is_fundamental(d: i64) -> bool {
    classify_discriminant(d) == FundClass::Fundamental
}

/// True when `-n` is a fundamental discriminant with `-n ≢ 1 (mod 8)`,
/// the family on which the class number is a multiple of r3.
pub fn is_gauss_family(n: u64) -> bool {
    match n % 8 {
        3 => is_squarefree(n),
        4 | 0 => matches!(n % 16, 4 | 8) && is_squarefree(n / 4),
        _ => false,
    }
}

/// Flags for [`is_gauss_family`] on `0..=n`, computed with a square sieve.
pub fn gauss_family_table(n: u64) -> Result<Vec<bool>> {
    check_table_len("discriminant table", n)?;
    let n = n as usize;
    let mut sf = vec![true; n + 1];
    let mut d = 2usize;
    while d * d <= n {
        for j in (d * d..=n).step_by(d * d) {
            sf[j] = false;
        }
        d += 1;
    }
    Ok((0..=n)
        .map(|k| match k % 8 {
            3 => sf[k],
            4 | 0 => matches!(k % 16, 4 | 8) && sf[k / 4],
            _ => false,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Euler's criterion, independent of the reciprocity-based code above.
    fn legendre_euler(a: i64, p: u64) -> i32 {
        let r = pow_mod(modp(a as i128, p), (p - 1) / 2, p);
        match r {
            0 => 0,
            1 => 1,
            _ => -1,
        }
    }

    fn mu_naive(n: u64) -> i8 {
        let f = factorize(n);
        if f.iter().any(|&(_, e)| e > 1) {
            0
        } else if f.len() % 2 == 0 {
            1
        } else {
            -1
        }
    }

    #[test]
    fn kronecker_small_values() {
        assert_eq!(kronecker(-4, 3), -1);
        assert_eq!(kronecker(-3, 2), -1);
        assert_eq!(kronecker(5, 2), -1);
        assert_eq!(kronecker(-7, 2), 1);
        assert_eq!(kronecker(2, 0), 0);
        assert_eq!(kronecker(-1, 0), 1);
        assert_eq!(kronecker(-1, -1), -1);
        assert_eq!(kronecker(3, -1), 1);
        assert_eq!(kronecker(6, 4), 0);
    }

    #[test]
    fn kronecker_matches_euler_on_primes() {
        for p in primes_up_to(200).into_iter().filter(|&p| p > 2) {
            for a in -60..60 {
                assert_eq!(kronecker(a, p as i64), legendre_euler(a, p), "a={a} p={p}");
            }
        }
    }

    #[test]
    fn moebius_matches_factorization() {
        let mu = moebius_sieve(5000).unwrap();
        assert_eq!(mu[0], 0);
        for n in 1..=5000u64 {
            assert_eq!(mu[n as usize], mu_naive(n), "n={n}");
        }
    }

    #[test]
    fn moebius_capacity() {
        assert!(matches!(moebius_sieve(MAX_TABLE_LEN), Err(Error::Capacity { .. })));
    }

    #[test]
    fn valuation_cases() {
        assert_eq!(valuation(2, 48).unwrap(), 4);
        assert_eq!(valuation(3, -54).unwrap(), 3);
        assert_eq!(valuation(5, 7).unwrap(), 0);
        assert!(valuation(3, 0).is_err());
    }

    #[test]
    fn discriminant_classes() {
        assert_eq!(classify_discriminant(-3), FundClass::Fundamental);
        assert_eq!(classify_discriminant(-4), FundClass::Fundamental);
        assert_eq!(classify_discriminant(-8), FundClass::Fundamental);
        assert_eq!(classify_discriminant(-12), FundClass::NonFundamental);
        assert_eq!(classify_discriminant(-16), FundClass::NonFundamental);
        assert_eq!(classify_discriminant(-27), FundClass::NonFundamental);
        assert_eq!(classify_discriminant(-5), FundClass::NotDiscriminant);
        assert_eq!(classify_discriminant(-20), FundClass::Fundamental);
        assert_eq!(classify_discriminant(0), FundClass::NotDiscriminant);
        assert_eq!(classify_discriminant(5), FundClass::Fundamental);
    }

    #[test]
    fn gauss_family_table_agrees() {
        let t = gauss_family_table(3000).unwrap();
        for n in 1..=3000u64 {
            let direct = is_fundamental(-(n as i64)) && (-(n as i64)).rem_euclid(8) != 1;
            assert_eq!(t[n as usize], direct, "n={n}");
            assert_eq!(is_gauss_family(n), direct, "n={n}");
        }
    }

    #[test]
    fn miller_rabin_matches_sieve() {
        let ps = primes_up_to(10_000);
        for n in 0..=10_000u64 {
            assert_eq!(is_prime(n), ps.binary_search(&n).is_ok());
        }
        assert!(is_prime(1_000_000_007));
        assert!(!is_prime(1_000_000_007 * 3));
    }

    #[test]
    fn square_roots_mod_p() {
        for p in primes_up_to(300).into_iter().filter(|&p| p > 2) {
            for a in 0..p {
                match sqrt_mod_prime(a as i128, p) {
                    Some(r) => assert_eq!(mul_mod(r, r, p), a),
                    None => assert_eq!(jacobi(a as i64, p), -1),
                }
            }
        }
    }

    proptest! {
        #[test]
        fn kronecker_multiplicative_in_top(a in -500i64..500, b in -500i64..500, n in 1i64..400) {
            prop_assert_eq!(kronecker(a * b, n), kronecker(a, n) * kronecker(b, n));
        }

        #[test]
        fn jacobi_periodic(a in -1000i64..1000, m in 0u64..300) {
            let m = 2 * m + 1;
            prop_assert_eq!(jacobi(a, m), jacobi(a + m as i64, m));
        }

        #[test]
        fn valuation_reconstructs(n in 1i64..1_000_000, p in prop::sample::select(vec![2u64, 3, 5, 7, 11])) {
            let v = valuation(p, n as i128).unwrap();
            prop_assert_eq!(n % (p.pow(v) as i64), 0);
            prop_assert!(n % (p.pow(v + 1) as i64) != 0);
        }

        #[test]
        fn inverse_is_inverse(a in -10_000i64..10_000, m in 2u64..5000) {
            match inv_mod(a as i128, m) {
                Some(b) => prop_assert_eq!(mul_mod(modp(a as i128, m), b, m), 1 % m),
                None => prop_assert!(gcd(a.unsigned_abs(), m) > 1),
            }
        }
    }
}
