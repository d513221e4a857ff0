//! p-adic densities of `s1 Q1(x) - s2 Q2(y) = l` with conditions on the
//! values `Q1(x)`, `Q2(y)` modulo powers of p.
//!
//! Solutions mod p^T split into primitive ones (not all coordinates divisible
//! by p), whose normalized count is eventually constant in T, and singular
//! ones `(p x', p y')`, which satisfy a rescaled problem with shift `l / p^2`.
//! `density_limit` walks that chain and sums it exactly.

use std::collections::HashMap;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::arith::{self, modp};
use crate::error::{domain, Error, Result};
use crate::repnum::{CongruenceClass, QuadForm};

/// Largest residue ring `Z/p^T` the solver will tabulate.
pub const LEVEL_BUDGET: u64 = 1 << 22;
/// Largest number of vectors enumerated for a non-diagonal value distribution.
pub const ENUM_BUDGET: u64 = 1 << 26;
const VERIFY_BUDGET: u64 = 1 << 18;

/// `Q(x) mod M ∈ allowed`, with `M` a power of p. `M = 1` means no condition
/// (or an impossible one when `allowed = [false]`).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ValueCondition {
    modulus: u64,
    allowed: Vec<bool>,
}

impl ValueCondition {
    pub fn any() -> Self {
        ValueCondition {
            modulus: 1,
            allowed: vec![true],
        }
    }

    pub fn residues(modulus: u64, residues: &[i64]) -> Self {
        let mut allowed = vec![false; modulus as usize];
        for &r in residues {
            allowed[r.rem_euclid(modulus as i64) as usize] = true;
        }
        ValueCondition { modulus, allowed }
    }

    /// `m | Q(x)`.
    pub fn divisible_by(m: u64) -> Self {
        Self::residues(m, &[0])
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn is_empty(&self) -> bool {
        !self.allowed.iter().any(|&a| a)
    }

    pub fn accepts(&self, u: u64) -> bool {
        self.allowed[(u % self.modulus) as usize]
    }

    /// Exponent of the modulus as a power of p.
    fn level(&self, p: u64) -> u32 {
        let mut m = self.modulus;
        let mut e = 0;
        while m > 1 {
            m /= p;
            e += 1;
        }
        e
    }

    /// Shrinks the modulus while the condition is periodic with period M/p.
    fn normalized(mut self, p: u64) -> Self {
        while self.modulus > 1 {
            let m = self.modulus / p;
            if (0..self.modulus as usize).any(|r| self.allowed[r] != self.allowed[r % m as usize]) {
                break;
            }
            self.allowed.truncate(m as usize);
            self.modulus = m;
        }
        self
    }

    /// The condition on `Q(x')` when `Q(x) = p^2 Q(x')`.
    fn descend(&self, p: u64) -> Self {
        let p2 = p * p;
        let g = arith::gcd(self.modulus, p2);
        let m = self.modulus / g;
        let allowed = (0..m)
            .map(|r| self.allowed[((p2 % self.modulus) * r % self.modulus) as usize])
            .collect();
        ValueCondition { modulus: m, allowed }.normalized(p)
    }
}

/// `s1 Q1(x) - s2 Q2(y) ≡ l` over `Z_p`, with `x ≡ a1 (mod A1)`, `y ≡ a2 (mod A2)`
/// (only the p-parts of A1, A2 matter) and value conditions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalProblem {
    pub p: u64,
    pub q1: QuadForm,
    pub q2: QuadForm,
    pub scale1: i64,
    pub scale2: i64,
    pub shift: i128,
    pub cc1: CongruenceClass,
    pub cc2: CongruenceClass,
    pub cond1: ValueCondition,
    pub cond2: ValueCondition,
}

impl LocalProblem {
    pub fn new(p: u64, q1: QuadForm, q2: QuadForm, shift: i128) -> Self {
        let cc1 = CongruenceClass::trivial(q1.dim());
        let cc2 = CongruenceClass::trivial(q2.dim());
        LocalProblem {
            p,
            q1,
            q2,
            scale1: 1,
            scale2: 1,
            shift,
            cc1,
            cc2,
            cond1: ValueCondition::any(),
            cond2: ValueCondition::any(),
        }
    }

    pub fn with_scales(mut self, s1: i64, s2: i64) -> Self {
        self.scale1 = s1;
        self.scale2 = s2;
        self
    }

    pub fn with_conditions(mut self, c1: ValueCondition, c2: ValueCondition) -> Self {
        self.cond1 = c1.normalized(self.p);
        self.cond2 = c2.normalized(self.p);
        self
    }

    pub fn with_classes(mut self, cc1: CongruenceClass, cc2: CongruenceClass) -> Self {
        self.cc1 = cc1;
        self.cc2 = cc2;
        self
    }

    /// Total number of variables.
    pub fn n(&self) -> usize {
        self.q1.dim() + self.q2.dim()
    }

    fn validate(&self) -> Result<()> {
        if !arith::is_prime(self.p) {
            return domain(format!("{} is not prime", self.p));
        }
        if self.scale1 == 0 || self.scale2 == 0 {
            return domain("scales must be nonzero");
        }
        for c in [&self.cond1, &self.cond2] {
            let mut m = c.modulus;
            while m % self.p == 0 {
                m /= self.p;
            }
            if m != 1 {
                return domain("value condition modulus must be a power of p");
            }
        }
        if self.cc1.residues.len() != self.q1.dim() || self.cc2.residues.len() != self.q2.dim() {
            return domain("congruence class has the wrong dimension");
        }
        Ok(())
    }
}

/// p-part of a congruence class: `(v, a mod p^v)`.
fn local_class(cc: &CongruenceClass, p: u64) -> (u32, Vec<i64>) {
    let v = if cc.modulus == 1 { 0 } else { arith::valuation(p, cc.modulus as i128).unwrap() };
    let pv = p.pow(v) as i64;
    (v, cc.residues.iter().map(|a| a.rem_euclid(pv)).collect())
}

/// Residue classes of `Z/p^T` under multiplication by unit squares:
/// zero, then (valuation, square class of the unit part).
struct ClassData {
    p: u64,
    t: u32,
    m: u64,
    is_qr: Vec<bool>,
    count: usize,
    reps: Vec<Option<u64>>,
    size: Vec<u128>,
    // trans[(c * count + c1) * count + c2] = #{u in c1 : rep_c - u in c2}
    trans: Vec<u64>,
}

impl ClassData {
    fn new(p: u64, t: u32) -> Self {
        let m = p.pow(t);
        let is_qr = if p == 2 {
            Vec::new()
        } else {
            let mut q = vec![false; p as usize];
            for x in 1..p {
                q[(x * x % p) as usize] = true;
            }
            q
        };
        let count = if p == 2 { 1 + 4 * t as usize } else { 1 + 2 * t as usize };
        let mut cd = ClassData {
            p,
            t,
            m,
            is_qr,
            count,
            reps: vec![None; count],
            size: vec![0; count],
            trans: vec![0; count * count * count],
        };
        for u in 0..m {
            let c = cd.class_of(u);
            cd.size[c] += 1;
            if cd.reps[c].is_none() {
                cd.reps[c] = Some(u);
            }
        }
        for c in 0..count {
            let Some(r) = cd.reps[c] else { continue };
            for u in 0..m {
                let c1 = cd.class_of(u);
                let c2 = cd.class_of((r + m - u) % m);
                cd.trans[(c * count + c1) * count + c2] += 1;
            }
        }
        cd
    }

    fn class_of(&self, u: u64) -> usize {
        if u == 0 {
            return 0;
        }
        let mut v = 0;
        let mut w = u;
        while w % self.p == 0 {
            w /= self.p;
            v += 1;
        }
        if self.p == 2 {
            let bits = 3.min(self.t - v);
            1 + 4 * v as usize + ((w & ((1 << bits) - 1)) >> 1) as usize
        } else {
            1 + 2 * v as usize + usize::from(!self.is_qr[(w % self.p) as usize])
        }
    }

    /// Per-element counts of `sum a_i x_i^2` over `x mod p^T`.
    fn diagonal_dist(&self, coeffs: &[i64]) -> Vec<u128> {
        let mut cur = vec![0u128; self.count];
        cur[0] = 1;
        for &a in coeffs {
            let am = modp(a as i128, self.m);
            let mut hist = vec![0u128; self.count];
            for y in 0..self.m {
                let v = ((am as u128 * y as u128 % self.m as u128) * y as u128 % self.m as u128) as u64;
                hist[self.class_of(v)] += 1;
            }
            let one: Vec<u128> = (0..self.count)
                .map(|c| if self.size[c] == 0 { 0 } else { hist[c] / self.size[c] })
                .collect();
            let mut next = vec![0u128; self.count];
            for c in 0..self.count {
                if self.reps[c].is_none() {
                    continue;
                }
                let mut s = 0u128;
                for c1 in 0..self.count {
                    if one[c1] == 0 {
                        continue;
                    }
                    for c2 in 0..self.count {
                        let k = self.trans[(c * self.count + c1) * self.count + c2];
                        if k != 0 {
                            s += k as u128 * one[c1] * cur[c2];
                        }
                    }
                }
                next[c] = s;
            }
            cur = next;
        }
        cur
    }
}

enum Dist {
    Classes { data: Arc<ClassData>, per: Vec<u128> },
    Full(Vec<u128>),
}

impl Dist {
    fn get(&self, u: u64) -> u128 {
        match self {
            Dist::Classes { data, per } => per[data.class_of(u)],
            Dist::Full(v) => v[u as usize],
        }
    }
}

type DistKey = (u64, u32, u32, Vec<i64>);

/// Caches class data and value distributions for one prime at a time.
#[derive(Default)]
pub struct LocalContext {
    p: u64,
    classes: HashMap<u32, Arc<ClassData>>,
    dists: HashMap<DistKey, Arc<Dist>>,
}

impl LocalContext {
    pub fn new() -> Self {
        Self::default()
    }

    fn switch(&mut self, p: u64) {
        if self.p != p {
            self.p = p;
            self.classes.clear();
            self.dists.clear();
        }
    }

    fn class_data(&mut self, p: u64, t: u32) -> Arc<ClassData> {
        self.switch(p);
        self.classes
            .entry(t)
            .or_insert_with(|| Arc::new(ClassData::new(p, t)))
            .clone()
    }

    /// Distribution of `Q(x) mod p^t` over `x mod p^t` with `x ≡ a (mod p^v)`.
    fn dist(&mut self, form: &QuadForm, p: u64, t: u32, v: u32, a: &[i64]) -> Result<Arc<Dist>> {
        self.switch(p);
        let key = (form.fingerprint(), t, v, a.to_vec());
        if let Some(d) = self.dists.get(&key) {
            return Ok(d.clone());
        }
        let m = p.pow(t);
        // over Z_p, p odd, every form is equivalent to a diagonal one
        let (coeffs, a) = if form.is_diagonal() {
            (Some((0..form.dim()).map(|i| form.diag_coeff(i)).collect::<Vec<i64>>()), a.to_vec())
        } else if p != 2 {
            let (d, pm) = diagonalize_odd(form, p, m);
            let a = (0..a.len())
                .map(|i| {
                    let s: i128 = (0..a.len()).map(|j| pm[i][j] as i128 * a[j] as i128).sum();
                    modp(s, m) as i64
                })
                .collect();
            (Some(d), a)
        } else {
            (None, a.to_vec())
        };
        let d = match coeffs {
            Some(coeffs) if v == 0 => {
                let data = self.class_data(p, t);
                let per = data.diagonal_dist(&coeffs);
                Dist::Classes { data, per }
            }
            Some(coeffs) => Dist::Full(diagonal_dist_offset(&coeffs, p, t, v, &a, m)?),
            None => Dist::Full(enumerate_dist(form, p, t, v, &a, m)?),
        };
        let d = Arc::new(d);
        self.dists.insert(key, d.clone());
        Ok(d)
    }
}

fn val_p(r: &BigRational, p: u64) -> u32 {
    let pb = BigInt::from(p);
    let mut n = r.numer().clone();
    let mut e = 0;
    while (&n % &pb).is_zero() {
        n /= &pb;
        e += 1;
    }
    e
}

/// `r mod m` for a rational with denominator prime to p.
fn rational_mod(r: &BigRational, m: u64) -> u64 {
    let mb = BigInt::from(m);
    let n = modp(i128::try_from(r.numer() % &mb).expect("reduced"), m);
    let d = modp(i128::try_from(r.denom() % &mb).expect("reduced"), m);
    let inv = arith::inv_mod(d as i128, m).expect("denominator is a p-unit");
    arith::mul_mod(n, inv, m)
}

/// Diagonal coefficients `d` and `P` in `GL_n(Z_p)` with
/// `Q(x) = sum d_i (P x)_i^2` over `Z_p`, both reduced for use mod `m`.
/// Coefficients keep their full power of p so zero stays distinguishable.
fn diagonalize_odd(form: &QuadForm, p: u64, m: u64) -> (Vec<i64>, Vec<Vec<i64>>) {
    let k = form.dim();
    let two = BigRational::from_integer(BigInt::from(2));
    let mut a: Vec<Vec<BigRational>> = (0..k)
        .map(|i| (0..k).map(|j| BigRational::from_integer(BigInt::from(form.g(i, j))) / &two).collect())
        .collect();
    // x = C w
    let mut c: Vec<Vec<BigRational>> = (0..k)
        .map(|i| (0..k).map(|j| if i == j { BigRational::one() } else { BigRational::zero() }).collect())
        .collect();
    let col_add = |a: &mut Vec<Vec<BigRational>>, c: &mut Vec<Vec<BigRational>>, dst: usize, src: usize, f: &BigRational| {
        // w_src picks up: column dst += f * column src, then the same on rows
        for row in c.iter_mut() {
            let v = &row[src] * f;
            row[dst] += v;
        }
        for row in a.iter_mut() {
            let v = &row[src] * f;
            row[dst] += v;
        }
        for j in 0..a.len() {
            let v = &a[src][j] * f;
            a[dst][j] += v;
        }
    };
    for step in 0..k {
        let mut best: Option<(u32, usize, usize)> = None;
        for i in step..k {
            for j in i..k {
                if a[i][j].is_zero() {
                    continue;
                }
                let e = val_p(&a[i][j], p);
                // prefer diagonal pivots at equal valuation
                let better = match best {
                    None => true,
                    Some((be, bi, bj)) => e < be || (e == be && bi != bj && i == j),
                };
                if better {
                    best = Some((e, i, j));
                }
            }
        }
        let Some((_, i, j)) = best else { break };
        let piv = if i == j {
            i
        } else {
            col_add(&mut a, &mut c, i, j, &BigRational::one());
            i
        };
        if piv != step {
            for row in c.iter_mut() {
                row.swap(piv, step);
            }
            for row in a.iter_mut() {
                row.swap(piv, step);
            }
            a.swap(piv, step);
        }
        for j in step + 1..k {
            if a[step][j].is_zero() {
                continue;
            }
            let f = -(&a[step][j] / &a[step][step]);
            col_add(&mut a, &mut c, j, step, &f);
        }
    }
    let d = (0..k)
        .map(|i| {
            let e = val_p(&a[i][i], p);
            let unit = &a[i][i] / BigRational::from_integer(big_pow(p, e as u64));
            (rational_mod(&unit, m) as i64) * (p as i64).pow(e)
        })
        .collect();
    let inv = invert(&c);
    let pm = inv
        .iter()
        .map(|row| row.iter().map(|r| rational_mod(r, m) as i64).collect())
        .collect();
    (d, pm)
}

fn invert(c: &[Vec<BigRational>]) -> Vec<Vec<BigRational>> {
    let k = c.len();
    let mut a: Vec<Vec<BigRational>> = c.to_vec();
    let mut b: Vec<Vec<BigRational>> = (0..k)
        .map(|i| (0..k).map(|j| if i == j { BigRational::one() } else { BigRational::zero() }).collect())
        .collect();
    for col in 0..k {
        let piv = (col..k).find(|&r| !a[r][col].is_zero()).expect("invertible");
        a.swap(col, piv);
        b.swap(col, piv);
        let f = a[col][col].clone();
        for j in 0..k {
            a[col][j] = &a[col][j] / &f;
            b[col][j] = &b[col][j] / &f;
        }
        for r in 0..k {
            if r != col && !a[r][col].is_zero() {
                let g = a[r][col].clone();
                for j in 0..k {
                    let (va, vb) = (&a[col][j] * &g, &b[col][j] * &g);
                    a[r][j] -= va;
                    b[r][j] -= vb;
                }
            }
        }
    }
    b
}

/// Distribution of `sum d_i x_i^2 mod m` over `x ≡ a (mod p^v)` by
/// convolving the coordinates.
fn diagonal_dist_offset(coeffs: &[i64], p: u64, t: u32, v: u32, a: &[i64], m: u64) -> Result<Vec<u128>> {
    let free = p.pow(t - v);
    let pv = p.pow(v) as i128;
    let mut acc = vec![0u128; m as usize];
    acc[0] = 1;
    for (i, &d) in coeffs.iter().enumerate() {
        let mut one: HashMap<u64, u128> = HashMap::new();
        for z in 0..free {
            let x = a[i] as i128 + pv * z as i128;
            *one.entry(modp(d as i128 * x * x, m)).or_insert(0) += 1;
        }
        let cost = (m as u128) * one.len() as u128;
        if cost > ENUM_BUDGET as u128 * 4 {
            return Err(Error::Capacity {
                what: "value distribution convolution",
                needed: cost,
                limit: ENUM_BUDGET as u128 * 4,
            });
        }
        let mut next = vec![0u128; m as usize];
        for (u, &n) in acc.iter().enumerate() {
            if n == 0 {
                continue;
            }
            for (&w, &c) in &one {
                next[((u as u64 + w) % m) as usize] += n * c;
            }
        }
        acc = next;
    }
    Ok(acc)
}

fn enumerate_dist(form: &QuadForm, p: u64, t: u32, v: u32, a: &[i64], m: u64) -> Result<Vec<u128>> {
    let k = form.dim();
    let free = p.pow(t - v);
    let total = (free as u128).checked_pow(k as u32).unwrap_or(u128::MAX);
    if total > ENUM_BUDGET as u128 {
        return Err(Error::Capacity {
            what: "value distribution enumeration",
            needed: total,
            limit: ENUM_BUDGET as u128,
        });
    }
    let pv = p.pow(v) as i64;
    let mut counts = vec![0u128; m as usize];
    let mut z = vec![0i64; k];
    let mut x = vec![0i64; k];
    loop {
        for i in 0..k {
            x[i] = a[i] + pv * z[i];
        }
        counts[modp(form.eval(&x), m) as usize] += 1;
        let mut i = 0;
        loop {
            if i == k {
                return Ok(counts);
            }
            z[i] += 1;
            if (z[i] as u64) < free {
                break;
            }
            z[i] = 0;
            i += 1;
        }
    }
}

fn big_pow(p: u64, e: u64) -> BigInt {
    num_traits::pow(BigInt::from(p), e as usize)
}

/// Exact number of solutions mod p^t.
pub fn local_count(ctx: &mut LocalContext, prob: &LocalProblem, t: u32) -> Result<u128> {
    prob.validate()?;
    count_at(ctx, prob, t)
}

fn count_at(ctx: &mut LocalContext, prob: &LocalProblem, t: u32) -> Result<u128> {
    let p = prob.p;
    let (v1, a1) = local_class(&prob.cc1, p);
    let (v2, a2) = local_class(&prob.cc2, p);
    if t < v1.max(v2).max(prob.cond1.level(p)).max(prob.cond2.level(p)) {
        return domain(format!("level {t} is below the congruence and value levels"));
    }
    if t == 0 {
        return Ok(u128::from(prob.cond1.accepts(0) && prob.cond2.accepts(0)));
    }
    let m = p.pow(t);
    if m > LEVEL_BUDGET {
        return Err(Error::Capacity {
            what: "p-adic level",
            needed: m as u128,
            limit: LEVEL_BUDGET as u128,
        });
    }
    let d1 = ctx.dist(&prob.q1, p, t, v1, &a1)?;
    let d2 = ctx.dist(&prob.q2, p, t, v2, &a2)?;
    let s1 = modp(prob.scale1 as i128, m);
    let s2 = modp(prob.scale2 as i128, m);
    let l = modp(prob.shift, m);
    // acc[w] = #{y : s2 Q2(y) ≡ w, cond2(Q2(y))}
    let mut acc = vec![0u128; m as usize];
    for u in 0..m {
        if prob.cond2.accepts(u) {
            let c = d2.get(u);
            if c != 0 {
                acc[((s2 as u128 * u as u128) % m as u128) as usize] += c;
            }
        }
    }
    let mut total = 0u128;
    for u in 0..m {
        if prob.cond1.accepts(u) {
            let c = d1.get(u);
            if c != 0 {
                let w = ((s1 as u128 * u as u128 + (m - l) as u128) % m as u128) as usize;
                total += c * acc[w];
            }
        }
    }
    Ok(total)
}

fn normalized(count: u128, p: u64, n: usize, t: u32) -> BigRational {
    BigRational::new(BigInt::from(count), big_pow(p, (n as u64 - 1) * t as u64))
}

/// A stabilized p-adic density.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalDensity {
    pub p: u64,
    pub value: BigRational,
    /// Level at which the (primitive) count stabilized.
    pub level: u32,
}

/// `lim_t p^{-t(n-1)} #{solutions mod p^t}`, detected as the first `t` with
/// equal normalized counts at `t` and `t + 1`.
pub fn density_cp(ctx: &mut LocalContext, prob: &LocalProblem, t_max: u32) -> Result<LocalDensity> {
    prob.validate()?;
    let p = prob.p;
    let (v1, _) = local_class(&prob.cc1, p);
    let (v2, _) = local_class(&prob.cc2, p);
    let t0 = 1.max(v1).max(v2).max(prob.cond1.level(p)).max(prob.cond2.level(p));
    let n = prob.n();
    let mut prev = normalized(count_at(ctx, prob, t0)?, p, n, t0);
    for t in t0 + 1..=t_max {
        let cur = normalized(count_at(ctx, prob, t)?, p, n, t);
        if cur == prev {
            return Ok(LocalDensity { p, value: prev, level: t - 1 });
        }
        prev = cur;
    }
    Err(Error::NonStabilized {
        p,
        t_max,
        last: prev.to_string(),
    })
}

/// Whether solutions with every coordinate divisible by p are possible.
fn singular_possible(prob: &LocalProblem) -> bool {
    let p = prob.p;
    let zero_ok = |cc: &CongruenceClass| {
        let (v, a) = local_class(cc, p);
        v == 0 || a.iter().all(|&x| x % p as i64 == 0)
    };
    zero_ok(&prob.cc1) && zero_ok(&prob.cc2)
}

fn descend(prob: &LocalProblem) -> LocalProblem {
    let p2 = (prob.p * prob.p) as i128;
    let mut next = prob.clone();
    next.shift = prob.shift / p2;
    next.cond1 = prob.cond1.descend(prob.p);
    next.cond2 = prob.cond2.descend(prob.p);
    next
}

fn singular_count(ctx: &mut LocalContext, prob: &LocalProblem, t: u32) -> Result<u128> {
    if !singular_possible(prob) {
        return Ok(0);
    }
    let p = prob.p;
    if t == 1 {
        let hit = prob.shift % p as i128 == 0 && prob.cond1.accepts(0) && prob.cond2.accepts(0);
        return Ok(u128::from(hit));
    }
    if prob.shift % (p * p) as i128 != 0 {
        return Ok(0);
    }
    let inner = count_at(ctx, &descend(prob), t - 2)?;
    Ok(inner * (p as u128).pow(prob.n() as u32))
}

fn primitive_at(ctx: &mut LocalContext, prob: &LocalProblem, t: u32) -> Result<BigRational> {
    let all = count_at(ctx, prob, t)?;
    let sing = singular_count(ctx, prob, t)?;
    Ok(normalized(all - sing, prob.p, prob.n(), t))
}

fn hensel_safe(prob: &LocalProblem) -> bool {
    let p = prob.p as i128;
    p != 2
        && local_class(&prob.cc1, prob.p).0 == 0
        && local_class(&prob.cc2, prob.p).0 == 0
        && prob.scale1 as i128 % p != 0
        && prob.scale2 as i128 % p != 0
        && prob.q1.det2() % p != 0
        && prob.q2.det2() % p != 0
}

/// Limit of the primitive density and the level where it became constant.
fn primitive_limit(ctx: &mut LocalContext, prob: &LocalProblem) -> Result<(BigRational, u32)> {
    let p = prob.p;
    let (v1, _) = local_class(&prob.cc1, p);
    let (v2, _) = local_class(&prob.cc2, p);
    let t0 = 1.max(v1).max(v2).max(prob.cond1.level(p)).max(prob.cond2.level(p));
    let first = primitive_at(ctx, prob, t0)?;
    if hensel_safe(prob) {
        if p.checked_pow(t0 + 1).is_some_and(|m| m <= VERIFY_BUDGET) {
            let next = primitive_at(ctx, prob, t0 + 1)?;
            if next != first {
                return Err(Error::NonStabilized {
                    p,
                    t_max: t0 + 1,
                    last: next.to_string(),
                });
            }
        }
        return Ok((first, t0));
    }
    let mut window = vec![first];
    let mut t = t0;
    loop {
        t += 1;
        if p.checked_pow(t).is_none_or(|m| m > LEVEL_BUDGET) {
            return Err(Error::NonStabilized {
                p,
                t_max: t - 1,
                last: window.last().unwrap().to_string(),
            });
        }
        window.push(primitive_at(ctx, prob, t)?);
        let k = window.len();
        if k >= 3 && window[k - 1] == window[k - 2] && window[k - 2] == window[k - 3] {
            return Ok((window[k - 3].clone(), t - 2));
        }
    }
}

/// Exact p-adic density, summing primitive densities along the chain of
/// rescaled problems; for `l = 0` the chain is periodic and the geometric
/// series is summed in closed form.
pub fn density_limit(ctx: &mut LocalContext, prob: &LocalProblem) -> Result<LocalDensity> {
    prob.validate()?;
    let p = prob.p;
    let n = prob.n();
    if n < 2 {
        return domain("need at least two variables");
    }
    let rho = BigRational::new(BigInt::one(), big_pow(p, n as u64 - 2));
    let mut states = vec![prob.clone()];
    let mut prims: Vec<BigRational> = Vec::new();
    let mut level = 0;
    let mut cycle_to = None;
    loop {
        let cur = states.last().unwrap().clone();
        if cur.cond1.is_empty() || cur.cond2.is_empty() {
            prims.push(BigRational::zero());
            break;
        }
        let (v, t) = primitive_limit(ctx, &cur)?;
        level = level.max(t);
        prims.push(v);
        if !singular_possible(&cur) || cur.shift % (p * p) as i128 != 0 {
            break;
        }
        let next = descend(&cur);
        if let Some(j) = states.iter().position(|s| *s == next) {
            cycle_to = Some(j);
            break;
        }
        states.push(next);
    }
    let k = prims.len();
    let mut delta = vec![BigRational::zero(); k];
    match cycle_to {
        None => {
            delta[k - 1] = prims[k - 1].clone();
        }
        Some(j) => {
            if rho.is_one() {
                return domain("density diverges for a binary problem with periodic singular chain");
            }
            let mut s = BigRational::zero();
            let mut r = BigRational::one();
            for prim in &prims[j..k] {
                s += &r * prim;
                r *= &rho;
            }
            let dj = s / (BigRational::one() - r);
            // walk forward from j to fill the cycle
            delta[j] = dj.clone();
            let mut tail = dj;
            for i in (j..k).rev() {
                tail = &prims[i] + &rho * tail;
                if i > j {
                    delta[i] = tail.clone();
                }
            }
        }
    }
    let start = match cycle_to {
        None => k - 1,
        Some(j) => j,
    };
    for i in (0..start).rev() {
        delta[i] = &prims[i] + &rho * &delta[i + 1];
    }
    Ok(LocalDensity {
        p,
        value: delta[0].clone(),
        level,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::ToPrimitive;

    fn f3() -> QuadForm {
        QuadForm::sum_of_squares(3)
    }

    // Brute force count over all vectors, independent of the class machinery.
    fn brute(prob: &LocalProblem, t: u32) -> u128 {
        let m = prob.p.pow(t) as i64;
        let k1 = prob.q1.dim();
        let n = prob.n();
        let mut z = vec![0i64; n];
        let mut c = 0u128;
        loop {
            let (x, y) = z.split_at(k1);
            if prob.cc1.contains(x) && prob.cc2.contains(y) {
                let u = prob.q1.eval(x);
                let v = prob.q2.eval(y);
                if prob.cond1.accepts(modp(u, prob.cond1.modulus) as u64 % prob.cond1.modulus)
                    && prob.cond2.accepts(modp(v, prob.cond2.modulus))
                    && (prob.scale1 as i128 * u - prob.scale2 as i128 * v - prob.shift).rem_euclid(m as i128) == 0
                {
                    c += 1;
                }
            }
            let mut i = 0;
            loop {
                if i == n {
                    return c;
                }
                z[i] += 1;
                if z[i] < m {
                    break;
                }
                z[i] = 0;
                i += 1;
            }
        }
    }

    #[test]
    fn odd_diagonalization_preserves_values() {
        let forms = [
            QuadForm::from_upper(3, &[1, 1, 0, 2, 0, 3]).unwrap(),
            QuadForm::from_upper(2, &[3, 3, 3]).unwrap(),
            QuadForm::from_upper(3, &[5, 5, 5, 5, 5, 5]).unwrap(),
        ];
        for form in &forms {
            for p in [3u64, 5, 7] {
                let m = p.pow(3);
                let (d, pm) = diagonalize_odd(form, p, m);
                for seed in 0..200i64 {
                    let x: Vec<i64> = (0..form.dim() as i64).map(|i| (seed * 31 + i * 17 + seed * seed * i) % m as i64).collect();
                    let w: Vec<i128> = pm.iter().map(|row| row.iter().zip(&x).map(|(a, b)| *a as i128 * *b as i128).sum()).collect();
                    let rhs: i128 = d.iter().zip(&w).map(|(a, b)| *a as i128 * (b % m as i128) * (b % m as i128)).sum();
                    assert_eq!(modp(form.eval(&x), m), modp(rhs, m), "{form:?} p={p}");
                }
            }
        }
    }

    #[test]
    fn worked_count_mod_three() {
        let mut ctx = LocalContext::new();
        let prob = LocalProblem::new(3, f3(), f3(), 1);
        assert_eq!(local_count(&mut ctx, &prob, 1).unwrap(), 234);
    }

    #[test]
    fn counts_match_brute_force() {
        let mut ctx = LocalContext::new();
        let cases = [
            LocalProblem::new(3, f3(), f3(), 1),
            LocalProblem::new(2, f3(), QuadForm::sum_of_squares(1), 2)
                .with_conditions(ValueCondition::residues(8, &[3]), ValueCondition::any()),
            LocalProblem::new(2, f3(), f3(), 1)
                .with_scales(1, 4)
                .with_conditions(ValueCondition::residues(8, &[3]), ValueCondition::residues(4, &[1, 2])),
            LocalProblem::new(5, QuadForm::from_upper(2, &[1, 1, 3]).unwrap(), QuadForm::sum_of_squares(2), 3),
            LocalProblem::new(3, QuadForm::sum_of_squares(2), QuadForm::sum_of_squares(2), 0)
                .with_conditions(ValueCondition::divisible_by(9), ValueCondition::any()),
        ];
        for prob in &cases {
            for t in 1..=3u32 {
                let lvl = prob.cond1.level(prob.p).max(prob.cond2.level(prob.p));
                if t < lvl || prob.p.pow(t * prob.n() as u32) > 3_000_000 {
                    continue;
                }
                assert_eq!(count_at(&mut ctx, prob, t).unwrap(), brute(prob, t), "{prob:?} t={t}");
            }
        }
    }

    #[test]
    fn congruence_classes_match_brute_force() {
        let mut ctx = LocalContext::new();
        let cc1 = CongruenceClass::new(2, vec![1, 0]).unwrap();
        let prob = LocalProblem::new(2, QuadForm::sum_of_squares(2), QuadForm::sum_of_squares(2), 1)
            .with_classes(cc1, CongruenceClass::trivial(2));
        for t in 1..=3 {
            assert_eq!(count_at(&mut ctx, &prob, t).unwrap(), brute(&prob, t));
        }
        let skew = QuadForm::from_upper(2, &[1, 1, 2]).unwrap();
        let prob = LocalProblem::new(3, skew, QuadForm::sum_of_squares(2), 2)
            .with_classes(CongruenceClass::new(3, vec![1, 2]).unwrap(), CongruenceClass::trivial(2));
        for t in 1..=3 {
            assert_eq!(count_at(&mut ctx, &prob, t).unwrap(), brute(&prob, t), "t={t}");
        }
    }

    #[test]
    fn condition_descend() {
        let c = ValueCondition::residues(8, &[4]);
        let d = c.descend(2);
        assert_eq!(d, ValueCondition::residues(2, &[1]));
        let c = ValueCondition::divisible_by(9);
        assert_eq!(c.descend(3), ValueCondition::any());
        let c = ValueCondition::residues(3, &[1]);
        assert!(c.descend(3).is_empty());
    }

    #[test]
    fn stabilizes_early_for_good_primes() {
        let mut ctx = LocalContext::new();
        for p in [3u64, 5, 7, 11] {
            let prob = LocalProblem::new(p, f3(), f3(), 1);
            let d = density_cp(&mut ctx, &prob, 4).unwrap();
            assert_eq!(d.level, 1, "p={p}");
            let lim = density_limit(&mut ctx, &prob).unwrap();
            assert_eq!(lim.value, d.value);
        }
    }

    #[test]
    fn non_stabilized_reported() {
        let mut ctx = LocalContext::new();
        let prob = LocalProblem::new(3, f3(), f3(), 0);
        assert!(matches!(density_cp(&mut ctx, &prob, 3), Err(Error::NonStabilized { .. })));
    }

    #[test]
    fn zero_shift_series_matches_truncated_counts() {
        // Plain normalized counts converge to the summed chain.
        let mut ctx = LocalContext::new();
        let prob = LocalProblem::new(3, f3(), f3(), 0);
        let lim = density_limit(&mut ctx, &prob).unwrap().value.to_f64().unwrap();
        let t = 6;
        let c = count_at(&mut ctx, &prob, t).unwrap() as f64 / 3f64.powi(5 * t as i32);
        assert!((c - lim).abs() < 3f64.powi(-(4 * 3)) * 10.0, "{c} {lim}");
    }

    #[test]
    fn divisible_shift_matches_deep_counts() {
        let mut ctx = LocalContext::new();
        for (p, l) in [(3u64, 9i128), (3, 81), (5, 25), (2, 16), (2, 1)] {
            let prob = LocalProblem::new(p, f3(), f3(), l);
            let lim = density_limit(&mut ctx, &prob).unwrap();
            // after the chain ends the plain count stabilizes exactly
            let d = density_cp(&mut ctx, &prob, 12).unwrap();
            assert_eq!(lim.value, d.value, "p={p} l={l}");
        }
    }
}
