//! Representation numbers of positive definite forms and class numbers of
//! imaginary quadratic fields.
//!
//! `rq_sieve` enumerates lattice points in the ellipsoid `Q(x) <= N`.
//! Class numbers come from reduced binary forms, either one discriminant at a
//! time or in batch over whole families.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arith::{self, check_table_len, gcd};
use crate::error::{domain, Error, Result};

/// An integral quadratic form `Q(x) = x^T G x / 2` stored through its doubled
/// Gram matrix `G` (even diagonal).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuadForm {
    dim: usize,
    gram2: Vec<i64>,
}

impl QuadForm {
    /// Builds `sum_{i <= j} c_ij x_i x_j` from the upper triangle, row by row.
    pub fn from_upper(dim: usize, upper: &[i64]) -> Result<Self> {
        if dim == 0 {
            return domain("form of dimension zero");
        }
        if upper.len() != dim * (dim + 1) / 2 {
            return domain(format!(
                "{dim}-ary form needs {} coefficients, got {}",
                dim * (dim + 1) / 2,
                upper.len()
            ));
        }
        let mut gram2 = vec![0; dim * dim];
        let mut it = upper.iter();
        for i in 0..dim {
            for j in i..dim {
                let c = *it.next().unwrap();
                if i == j {
                    gram2[i * dim + i] = 2 * c;
                } else {
                    gram2[i * dim + j] = c;
                    gram2[j * dim + i] = c;
                }
            }
        }
        let q = QuadForm { dim, gram2 };
        if !q.is_positive_definite() {
            return domain("form is not positive definite");
        }
        Ok(q)
    }

    pub fn diagonal(coeffs: &[i64]) -> Result<Self> {
        let dim = coeffs.len();
        let mut upper = Vec::with_capacity(dim * (dim + 1) / 2);
        for i in 0..dim {
            upper.push(coeffs[i]);
            upper.extend(std::iter::repeat(0).take(dim - i - 1));
        }
        Self::from_upper(dim, &upper)
    }

    pub fn sum_of_squares(k: usize) -> Self {
        Self::diagonal(&vec![1; k]).expect("sum of squares is positive definite")
    }

    /// Parses `squares:K`, `diag:a,b,c` or `upper:K:c11,c12,...`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("bad form '{s}'"));
        let ints = |t: &str| -> Result<Vec<i64>> {
            t.split(',')
                .map(|x| x.trim().parse::<i64>().map_err(|_| bad()))
                .collect()
        };
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "squares" => Ok(Self::sum_of_squares(rest.parse().map_err(|_| bad())?)),
            "diag" => Self::diagonal(&ints(rest)?),
            "upper" => {
                let (k, cs) = rest.split_once(':').ok_or_else(bad)?;
                Self::from_upper(k.parse().map_err(|_| bad())?, &ints(cs)?)
            }
            _ => Err(bad()),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Entry of the doubled Gram matrix.
    pub fn g(&self, i: usize, j: usize) -> i64 {
        self.gram2[i * self.dim + j]
    }

    /// Coefficient of `x_i^2`.
    pub fn diag_coeff(&self, i: usize) -> i64 {
        self.g(i, i) / 2
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.dim).all(|i| (0..self.dim).all(|j| i == j || self.g(i, j) == 0))
    }

    pub fn eval(&self, x: &[i64]) -> i128 {
        let mut s = 0i128;
        for i in 0..self.dim {
            s += self.diag_coeff(i) as i128 * x[i] as i128 * x[i] as i128;
            for j in i + 1..self.dim {
                s += self.g(i, j) as i128 * x[i] as i128 * x[j] as i128;
            }
        }
        s
    }

    /// Leading principal minors of the doubled Gram matrix, by fraction-free
    /// elimination. The last one is `det(G)`.
    fn leading_minors(&self) -> Vec<i128> {
        let n = self.dim;
        let mut a: Vec<i128> = self.gram2.iter().map(|&v| v as i128).collect();
        let mut minors = Vec::with_capacity(n);
        let mut prev = 1i128;
        for k in 0..n {
            let pivot = a[k * n + k];
            minors.push(pivot);
            if pivot == 0 {
                minors.resize(n, 0);
                return minors;
            }
            for i in k + 1..n {
                for j in k + 1..n {
                    a[i * n + j] = (a[i * n + j] * pivot - a[i * n + k] * a[k * n + j]) / prev;
                }
            }
            prev = pivot;
        }
        minors
    }

    pub fn is_positive_definite(&self) -> bool {
        self.leading_minors().iter().all(|&m| m > 0)
    }

    /// `det(G)` for the doubled Gram matrix.
    pub fn det2(&self) -> i128 {
        *self.leading_minors().last().unwrap()
    }

    /// Stable 64-bit fingerprint (FNV-1a over dimension and matrix).
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        eat(&(self.dim as u64).to_le_bytes());
        for v in &self.gram2 {
            eat(&v.to_le_bytes());
        }
        h
    }

    /// Real Cholesky-type data: `Q(x) = sum_i q[i][i] (x_i + sum_{j>i} q[i][j] x_j)^2`.
    fn pohst_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.dim;
        let mut q = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                q[i][j] = self.g(i, j) as f64 / 2.0;
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                q[j][i] = q[i][j];
                q[i][j] /= q[i][i];
            }
            for k in i + 1..n {
                for l in k..n {
                    q[k][l] -= q[k][i] * q[i][l];
                }
            }
        }
        q
    }
}

/// A congruence class `x ≡ a (mod A)` on a vector of integers.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CongruenceClass {
    pub modulus: u64,
    pub residues: Vec<i64>,
}

impl CongruenceClass {
    pub fn trivial(dim: usize) -> Self {
        CongruenceClass {
            modulus: 1,
            residues: vec![0; dim],
        }
    }

    pub fn new(modulus: u64, residues: Vec<i64>) -> Result<Self> {
        if modulus == 0 {
            return domain("congruence modulus must be positive");
        }
        let residues = residues
            .into_iter()
            .map(|a| a.rem_euclid(modulus as i64))
            .collect();
        Ok(CongruenceClass { modulus, residues })
    }

    pub fn is_trivial(&self) -> bool {
        self.modulus == 1
    }

    pub fn contains(&self, x: &[i64]) -> bool {
        self.modulus == 1
            || x.iter()
                .zip(&self.residues)
                .all(|(&xi, &ai)| xi.rem_euclid(self.modulus as i64) == ai)
    }
}

/// `counts[m] = #{x in Z^k : Q(x) = m}` for `0 <= m <= bound`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepTable {
    pub form: QuadForm,
    pub bound: u64,
    pub counts: Vec<u64>,
}

impl RepTable {
    pub fn get(&self, m: u64) -> u64 {
        self.counts[m as usize]
    }

    pub fn truncate(mut self, bound: u64) -> Self {
        if bound < self.bound {
            self.counts.truncate(bound as usize + 1);
            self.bound = bound;
        }
        self
    }
}

/// Sieves `r_Q(m)` for all `m <= n`.
pub fn rq_sieve(form: &QuadForm, n: u64) -> Result<RepTable> {
    check_table_len("representation table", n)?;
    let counts = if form.is_diagonal() && (0..form.dim()).all(|i| form.diag_coeff(i) == 1) {
        sos_counts(form.dim(), n)
    } else {
        ellipsoid_counts(form, n, &CongruenceClass::trivial(form.dim()))
    };
    Ok(RepTable {
        form: form.clone(),
        bound: n,
        counts,
    })
}

/// `#{x ≡ a (mod A) : Q(x) = m}` for all `m <= n`.
pub fn rq_sieve_class(form: &QuadForm, cc: &CongruenceClass, n: u64) -> Result<Vec<u64>> {
    check_table_len("representation table", n)?;
    if cc.residues.len() != form.dim() {
        return domain("congruence class has the wrong dimension");
    }
    if cc.is_trivial() {
        return Ok(rq_sieve(form, n)?.counts);
    }
    Ok(ellipsoid_counts(form, n, cc))
}

fn isqrt(n: u64) -> u64 {
    let mut r = (n as f64).sqrt() as u64;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

// Sums of squares: walk the nonnegative orthant, weight by sign choices.
fn sos_counts(k: usize, n: u64) -> Vec<u64> {
    let top = isqrt(n);
    let add = |a: Vec<u64>, b: Vec<u64>| -> Vec<u64> {
        let mut a = a;
        for (x, y) in a.iter_mut().zip(b) {
            *x += y;
        }
        a
    };
    if k == 1 {
        let mut c = vec![0u64; n as usize + 1];
        c[0] = 1;
        for x in 1..=top {
            c[(x * x) as usize] += 2;
        }
        return c;
    }
    (0..=top)
        .into_par_iter()
        .fold(
            || vec![0u64; n as usize + 1],
            |mut acc, x| {
                let w = if x == 0 { 1 } else { 2 };
                sos_rec(k - 1, n - x * x, x * x, w, &mut acc);
                acc
            },
        )
        .reduce(|| vec![0u64; n as usize + 1], add)
}

fn sos_rec(k: usize, rem: u64, base: u64, weight: u64, acc: &mut [u64]) {
    let top = isqrt(rem);
    if k == 1 {
        acc[base as usize] += weight;
        for x in 1..=top {
            acc[(base + x * x) as usize] += 2 * weight;
        }
        return;
    }
    for x in 0..=top {
        let w = if x == 0 { weight } else { 2 * weight };
        sos_rec(k - 1, rem - x * x, base + x * x, w, acc);
    }
}

// General ellipsoid enumeration (Fincke-Pohst) with exact evaluation on the
// innermost coordinate.
fn ellipsoid_counts(form: &QuadForm, n: u64, cc: &CongruenceClass) -> Vec<u64> {
    let k = form.dim();
    let q = form.pohst_matrix();
    let len = n as usize + 1;
    let last = k - 1;
    let r = ((n as f64) / q[last][last]).sqrt() + 1e-9;
    let top = r.floor() as i64 + 1;
    (-top..=top)
        .into_par_iter()
        .fold(
            || vec![0u64; len],
            |mut acc, xl| {
                let mut x = vec![0i64; k];
                x[last] = xl;
                let used = q[last][last] * (xl as f64) * (xl as f64);
                if used <= n as f64 + 1e-6 * (n as f64 + 1.0) {
                    if k == 1 {
                        let v = form.eval(&x);
                        if v >= 0 && v as u64 <= n && cc.contains(&x) {
                            acc[v as usize] += 1;
                        }
                    } else {
                        pohst_rec(form, &q, n, last - 1, used, &mut x, cc, &mut acc);
                    }
                }
                acc
            },
        )
        .reduce(
            || vec![0u64; len],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        )
}

#[allow(clippy::too_many_arguments)]
fn pohst_rec(
    form: &QuadForm,
    q: &[Vec<f64>],
    n: u64,
    i: usize,
    used: f64,
    x: &mut Vec<i64>,
    cc: &CongruenceClass,
    acc: &mut [u64],
) {
    let k = form.dim();
    if i == 0 {
        // Q as an exact quadratic in x_0: a x0^2 + b x0 + c.
        let a = form.diag_coeff(0) as i128;
        let mut b = 0i128;
        for j in 1..k {
            b += form.g(0, j) as i128 * x[j] as i128;
        }
        x[0] = 0;
        let c = form.eval(x);
        let nn = n as i128;
        let disc = b * b - 4 * a * (c - nn);
        if disc < 0 {
            return;
        }
        let s = (disc as f64).sqrt();
        let lo = ((-(b as f64) - s) / (2.0 * a as f64)).floor() as i64 - 1;
        let hi = ((-(b as f64) + s) / (2.0 * a as f64)).ceil() as i64 + 1;
        let modulus = cc.modulus as i64;
        for x0 in lo..=hi {
            if modulus > 1 && x0.rem_euclid(modulus) != cc.residues[0] {
                continue;
            }
            let v = a * (x0 as i128) * (x0 as i128) + b * x0 as i128 + c;
            if (0..=nn).contains(&v) {
                x[0] = x0;
                if modulus == 1 || cc.contains(x) {
                    acc[v as usize] += 1;
                }
            }
        }
        x[0] = 0;
        return;
    }
    let center: f64 = -(i + 1..k).map(|j| q[i][j] * x[j] as f64).sum::<f64>();
    let room = n as f64 - used;
    if room < -1e-6 * (n as f64 + 1.0) {
        return;
    }
    let rad = (room.max(0.0) / q[i][i]).sqrt();
    let lo = (center - rad).floor() as i64 - 1;
    let hi = (center + rad).ceil() as i64 + 1;
    for xi in lo..=hi {
        let d = xi as f64 - center;
        let u = used + q[i][i] * d * d;
        if u > n as f64 + 1e-6 * (n as f64 + 1.0) + 1.0 {
            continue;
        }
        x[i] = xi;
        pohst_rec(form, q, n, i - 1, u, x, cc, acc);
    }
    x[i] = 0;
}

const CACHE_MAGIC: &[u8; 4] = b"QCRT";
const CACHE_VERSION: u32 = 1;

/// Path of the cached table for `form` inside `dir`.
pub fn cache_path(dir: &Path, form: &QuadForm) -> PathBuf {
    dir.join(format!("rq-{:016x}.bin", form.fingerprint()))
}

/// Writes a table: magic, version, form fingerprint, bound, then `bound + 1`
/// little-endian u64 counts.
pub fn write_cache(path: &Path, table: &RepTable) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&CACHE_VERSION.to_le_bytes())?;
        w.write_all(&table.form.fingerprint().to_le_bytes())?;
        w.write_all(&table.bound.to_le_bytes())?;
        for c in &table.counts {
            w.write_all(&c.to_le_bytes())?;
        }
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_cache(path: &Path, form: &QuadForm) -> Result<RepTable> {
    let err = |reason: &str| Error::Cache {
        path: path.display().to_string(),
        reason: reason.to_string(),
    };
    let mut r = BufReader::new(fs::File::open(path)?);
    let mut head = [0u8; 24];
    r.read_exact(&mut head).map_err(|_| err("truncated header"))?;
    if &head[0..4] != CACHE_MAGIC {
        return Err(err("bad magic"));
    }
    if u32::from_le_bytes(head[4..8].try_into().unwrap()) != CACHE_VERSION {
        return Err(err("unsupported version"));
    }
    if u64::from_le_bytes(head[8..16].try_into().unwrap()) != form.fingerprint() {
        return Err(err("form fingerprint mismatch"));
    }
    let bound = u64::from_le_bytes(head[16..24].try_into().unwrap());
    check_table_len("cached table", bound)?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() as u64 != (bound + 1) * 8 {
        return Err(err("length does not match bound"));
    }
    let counts = bytes
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(RepTable {
        form: form.clone(),
        bound,
        counts,
    })
}

/// Returns a table of bound `n`, reusing a cached table of bound `>= n` when
/// one exists and replacing it otherwise.
pub fn rq_sieve_cached(form: &QuadForm, n: u64, dir: Option<&Path>) -> Result<RepTable> {
    let Some(dir) = dir else {
        return rq_sieve(form, n);
    };
    let path = cache_path(dir, form);
    if path.exists() {
        if let Ok(t) = read_cache(&path, form) {
            if t.bound >= n {
                return Ok(t.truncate(n));
            }
        }
    }
    let t = rq_sieve(form, n)?;
    write_cache(&path, &t)?;
    Ok(t)
}

/// `r_2(n) = 4 sum_{d | n} chi_{-4}(d)`, with `r_2(0) = 1`.
pub fn r2_divisor(n: u64) -> u64 {
    if n == 0 {
        return 1;
    }
    let mut r = 4;
    for (p, e) in arith::factorize(n) {
        match p % 4 {
            1 => r *= e as u64 + 1,
            3 if e % 2 == 1 => return 0,
            _ => {}
        }
    }
    r
}

/// Number of reduced primitive positive definite forms of discriminant `d < 0`.
pub fn form_class_number(d: i64) -> Result<u64> {
    if d >= 0 || !matches!(d.rem_euclid(4), 0 | 1) {
        return domain(format!("{d} is not a negative discriminant"));
    }
    let n = d.unsigned_abs();
    let mut h = 0;
    let mut a = 1u64;
    while 3 * a * a <= n {
        let aa = a as i64;
        for b in (1 - aa)..=aa {
            let num = b as i128 * b as i128 + n as i128;
            if num % (4 * a as i128) != 0 {
                continue;
            }
            let c = (num / (4 * a as i128)) as u64;
            if c < a || (c == a && b < 0) {
                continue;
            }
            if gcd(gcd(a, b.unsigned_abs()), c) == 1 {
                h += 1;
            }
        }
        a += 1;
    }
    Ok(h)
}

/// Class number of the imaginary quadratic field of fundamental discriminant `d`.
pub fn class_number(d: i64) -> Result<u64> {
    if d > 0 {
        return domain("real quadratic fields are not supported");
    }
    if !arith::is_fundamental(d) {
        return Err(Error::NotFundamental(d));
    }
    form_class_number(d)
}

/// `h(-n)` (primitive reduced forms) for every `0 <= n <= nmax`; zero where
/// `-n` is not a discriminant.
pub fn class_number_table(nmax: u64) -> Result<Vec<u32>> {
    check_table_len("class number table", nmax)?;
    let len = nmax as usize + 1;
    let amax = isqrt(nmax / 3);
    Ok((1..=amax)
        .into_par_iter()
        .fold(
            || vec![0u32; len],
            |mut acc, a| {
                let aa = a as i64;
                for b in (1 - aa)..=aa {
                    let bsq = (b * b) as u64;
                    let mut c = a;
                    loop {
                        let n = 4 * a * c - bsq;
                        if n > nmax {
                            break;
                        }
                        if !(c == a && b < 0) && gcd(gcd(a, b.unsigned_abs()), c) == 1 {
                            acc[n as usize] += 1;
                        }
                        c += 1;
                    }
                }
                acc
            },
        )
        .reduce(
            || vec![0u32; len],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        ))
}

/// `h(-(n^2 + d))` for `0 <= n <= x`, only where `keep[n]` holds (zero elsewhere).
pub fn class_numbers_shifted_squares(x: u64, d: u64, keep: &[bool]) -> Result<Vec<u32>> {
    check_table_len("class number family", x)?;
    if keep.len() != x as usize + 1 {
        return domain("mask length must be x + 1");
    }
    let top = x as u128 * x as u128 + d as u128;
    if top >= 1u128 << 62 {
        return Err(Error::Capacity {
            what: "discriminant size",
            needed: top,
            limit: 1 << 62,
        });
    }
    let top = top as u64;
    let amax = isqrt(top / 3);
    let len = x as usize + 1;
    Ok((1..=amax)
        .into_par_iter()
        .fold(
            || vec![0u32; len],
            |mut acc, a| {
                let m = 4 * a;
                // roots[start[r]..start[r+1]] lists n0 in [0, m) with n0^2 ≡ r (mod m)
                let mut start = vec![0u32; m as usize + 1];
                for n0 in 0..m {
                    start[((n0 * n0) % m) as usize + 1] += 1;
                }
                for r in 0..m as usize {
                    start[r + 1] += start[r];
                }
                let mut fill = start.clone();
                let mut roots = vec![0u64; m as usize];
                for n0 in 0..m {
                    let r = ((n0 * n0) % m) as usize;
                    roots[fill[r] as usize] = n0;
                    fill[r] += 1;
                }
                let aa = a as i64;
                for b in (1 - aa)..=aa {
                    let bsq = (b * b) as u64;
                    let target = (m - (bsq + d) % m) % m;
                    // c >= a  <=>  n^2 >= 4a^2 - b^2 - d
                    let need = (4 * a * a).saturating_sub(bsq + d);
                    let nmin = if need == 0 { 0 } else { isqrt(need - 1) + 1 };
                    for &n0 in &roots[start[target as usize] as usize..start[target as usize + 1] as usize] {
                        let mut n = if n0 >= nmin { n0 } else { n0 + (nmin - n0).div_ceil(m) * m };
                        while n <= x {
                            if keep[n as usize] {
                                let c = (n * n + bsq + d) / m;
                                if !(c == a && b < 0) && gcd(gcd(a, b.unsigned_abs()), c) == 1 {
                                    acc[n as usize] += 1;
                                }
                            }
                            n += m;
                        }
                    }
                }
                acc
            },
        )
        .reduce(
            || vec![0u32; len],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        ))
}

/// Class number of `Q(sqrt(-n))` from the number of representations of `n`
/// as a sum of three squares. Needs `n > 4` with `-n` fundamental and
/// `-n ≢ 1 (mod 8)`; `table` must be the three-squares table.
pub fn h_from_r3(n: u64, table: &RepTable) -> Result<u64> {
    if table.form != QuadForm::sum_of_squares(3) {
        return domain("h_from_r3 needs the sum of three squares table");
    }
    if n <= 4 {
        return domain("the identity needs n > 4");
    }
    if !arith::is_fundamental(-(n as i64)) {
        return Err(Error::NotFundamental(-(n as i64)));
    }
    let divisor = match n % 8 {
        3 => 24,
        0 | 4 => 12,
        _ => return domain(format!("-{n} ≡ 1 (mod 8)")),
    };
    if n > table.bound {
        return domain(format!("table bound {} is below {n}", table.bound));
    }
    let r3 = table.get(n);
    if r3 % divisor != 0 {
        return Err(Error::InexactDivision { n, r3, divisor });
    }
    Ok(r3 / divisor)
}
