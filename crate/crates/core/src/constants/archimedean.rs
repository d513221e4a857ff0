//! Archimedean factors: closed forms and slab limits.
//!
//! For `F(x1) - F(x2) = l` with `F(x2) <= X` and `F(x1) <= Y = X + l`, the
//! number of real solutions per unit shift, in the variables `x1 / sqrt(Y)`
//! and `x2 / sqrt(X)`, is the slab limit
//! `lim (2 kappa)^-1 vol{|F(u) - (X F(v) + l) / Y| <= kappa}`.
//! Lattice counts are this times `X^{k2/2} Y^{k1/2 - 1}`.

use std::f64::consts::PI;

use quadrature::double_exponential;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// `int_0^1 r^2 sqrt(r^2 X + l) dr`, stable for every ratio `l / X`.
pub fn radial_moment(x: f64, l: f64) -> f64 {
    if l == 0.0 {
        return x.sqrt() / 4.0;
    }
    let eps = x / l;
    if eps < 0.05 {
        // sqrt(l) * sum_k binom(1/2, k) eps^k / (2k + 3)
        let mut term = 1.0;
        let mut sum = 1.0 / 3.0;
        for k in 1..40 {
            term *= (0.5 - (k - 1) as f64) / k as f64 * eps;
            sum += term / (2 * k + 3) as f64;
        }
        return l.sqrt() * sum;
    }
    ((2.0 * x + l) * (x * (x + l)).sqrt() - l * l * (x / l).sqrt().asinh()) / (8.0 * x.powf(1.5))
}

/// Closed form `(16 pi^2 / 3) Y^{-1/2} int_0^1 r^2 sqrt(r^2 X + l) dr`; equals
/// `4 pi^2 / 3` at `l = 0` and tends to `16 pi^2 / 9` as `l / X` grows.
pub fn sigma_inf(x: f64, l: f64) -> Result<f64> {
    if !(x > 0.0) || !(l >= 0.0) || !x.is_finite() || !l.is_finite() {
        return domain("sigma_inf needs X > 0 and l >= 0");
    }
    Ok(16.0 * PI * PI / 3.0 * radial_moment(x, l) / (x + l).sqrt())
}

/// Slab limit of the split problem with sharp windows,
/// `8 pi^2 Y^{-1/2} int_0^1 r^2 sqrt(r^2 X + l) dr = (3/2) sigma_inf`.
pub fn slab_density_split(x: f64, l: f64) -> Result<f64> {
    Ok(1.5 * sigma_inf(x, l)?)
}

/// Two-sided slab limit of `F(x) - n^2 = d`, `|n| <= X`, `F(x) <= X^2 + d`:
/// `2 pi [1 + d / (X sqrt(X^2 + d)) asinh(X / sqrt d)]`, so `2 pi` at `d = 0`.
/// Restricting to `n > 0` halves it.
pub fn gamma_inf_nonsplit(x: f64, d: f64) -> Result<f64> {
    if !(x > 0.0) || !(d >= 0.0) {
        return domain("gamma_inf needs X > 0 and d >= 0");
    }
    if d == 0.0 {
        return Ok(2.0 * PI);
    }
    let y = x * x + d;
    Ok(2.0 * PI * (1.0 + d / (x * y.sqrt()) * (x / d.sqrt()).asinh()))
}

/// Weight on the normalized value `rho = F(.) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Window {
    /// `1` on `[0, 1]`.
    Sharp,
    /// `1` on `[0, 1 - fall]`, smooth decay to zero at 1.
    Smooth { fall: f64 },
}

impl Window {
    pub fn eval(&self, rho: f64) -> f64 {
        match *self {
            Window::Sharp => f64::from(u8::from((0.0..=1.0).contains(&rho))),
            Window::Smooth { fall } => {
                if rho < 0.0 || rho >= 1.0 {
                    0.0
                } else if rho <= 1.0 - fall {
                    1.0
                } else {
                    let t = (rho - (1.0 - fall)) / fall;
                    let a = (-1.0 / (1.0 - t)).exp();
                    let b = (-1.0 / t).exp();
                    a / (a + b)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    /// Variables on the `Y` side.
    pub k1: u32,
    /// Variables on the `X` side.
    pub k2: u32,
    pub w1: Window,
    pub w2: Window,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlabLimit {
    pub value: f64,
    /// Difference between the last two diagonal Richardson estimates.
    pub spread: f64,
}

/// `Gamma(k / 2)` for positive integers k.
fn half_gamma(k: u32) -> f64 {
    if k % 2 == 0 {
        (1..k / 2).map(|i| i as f64).product()
    } else {
        // Gamma(1/2) * prod (j - 1/2)
        let mut g = PI.sqrt();
        let mut a = 0.5;
        while a + 1e-9 < k as f64 / 2.0 {
            g *= a;
            a += 1.0;
        }
        g
    }
}

/// Density of `F(u) = rho` on `R^k` is `C_k rho^{k/2 - 1}`, `C_k = pi^{k/2} / Gamma(k/2)`.
pub fn sphere_constant(k: u32) -> f64 {
    PI.powf(k as f64 / 2.0) / half_gamma(k)
}

fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    double_exponential::integrate(f, a, b, 1e-13).integral
}

/// `int_lo^hi C rho^{k/2 - 1} w(rho) d rho` on `rho >= 0`.
fn shell_mass(k: u32, w: Window, lo: f64, hi: f64) -> f64 {
    let lo = lo.max(0.0);
    let c = sphere_constant(k);
    match w {
        Window::Sharp => {
            let hi = hi.min(1.0);
            if hi <= lo {
                return 0.0;
            }
            let e = k as f64 / 2.0;
            c * (hi.powf(e) - lo.powf(e)) / e
        }
        Window::Smooth { .. } => {
            // rho = s^2 removes the k = 1 endpoint singularity
            let (a, b) = (lo.sqrt(), hi.min(1.0).max(lo).sqrt());
            integrate(|s| 2.0 * c * s.powi(k as i32 - 1) * w.eval(s * s), a, b)
        }
    }
}

/// `(2 kappa)^-1` times the weighted volume of the slab of half-width kappa.
pub fn slab_volume(spec: &WindowSpec, x: f64, l: f64, kappa: f64) -> f64 {
    let y = x + l;
    let c2 = sphere_constant(spec.k2);
    let outer = |r: f64| {
        let rho2 = r * r;
        let w = spec.w2.eval(rho2);
        if w == 0.0 {
            return 0.0;
        }
        let g = (x * rho2 + l) / y;
        2.0 * c2 * r.powi(spec.k2 as i32 - 1) * w * shell_mass(spec.k1, spec.w1, g - kappa, g + kappa)
    };
    // split where the slab edges cross 0 or 1
    let mut cuts = vec![0.0, 1.0];
    for rho in [1.0 - kappa * y / x, (kappa * y - l) / x] {
        if rho > 0.0 && rho < 1.0 {
            cuts.push(rho.sqrt());
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let total: f64 = cuts.windows(2).map(|w| integrate(outer, w[0], w[1])).sum();
    total / (2.0 * kappa)
}

/// Slab limit via Richardson extrapolation over `kappa_i = kappa0 / 2^i`.
pub fn c_inf_window(spec: &WindowSpec, x: f64, l: f64) -> Result<SlabLimit> {
    if spec.k1 == 0 || spec.k2 == 0 {
        return domain("window dimensions must be positive");
    }
    if !(x > 0.0) || !(l >= 0.0) {
        return domain("need X > 0 and l >= 0");
    }
    const LEVELS: usize = 7;
    // keep every level in one regime: the lower slab edge must stay above 0
    let kappa0 = if l > 0.0 { 1e-2f64.min(0.5 * l / (x + l)) } else { 1e-2 };
    let mut table: Vec<Vec<f64>> = Vec::with_capacity(LEVELS);
    for i in 0..LEVELS {
        let kappa = kappa0 / f64::powi(2.0, i as i32);
        let mut row = vec![slab_volume(spec, x, l, kappa)];
        for j in 1..=i {
            let f = f64::powi(2.0, j as i32);
            let v = row[j - 1] + (row[j - 1] - table[i - 1][j - 1]) / (f - 1.0);
            row.push(v);
        }
        table.push(row);
    }
    let best = table[LEVELS - 1][LEVELS - 1];
    let prev = table[LEVELS - 2][LEVELS - 2];
    let spread = (best - prev).abs();
    if !best.is_finite() || spread > 1e-6 * best.abs().max(1e-300) {
        return Err(Error::NonConvergent { spread });
    }
    Ok(SlabLimit { value: best, spread })
}

/// The limiting integrand at `kappa = 0`:
/// `int dv w2(F(v)) w1(g) C_{k1} g^{k1/2 - 1}`, `g = (X F(v) + l) / Y`.
pub fn slab_limit_direct(spec: &WindowSpec, x: f64, l: f64) -> f64 {
    let y = x + l;
    let c1 = sphere_constant(spec.k1);
    let c2 = sphere_constant(spec.k2);
    integrate(
        |r| {
            let rho2 = r * r;
            let g = (x * rho2 + l) / y;
            if g <= 0.0 {
                return 0.0;
            }
            2.0 * c2 * r.powi(spec.k2 as i32 - 1) * spec.w2.eval(rho2) * spec.w1.eval(g) * c1 * g.powf(spec.k1 as f64 / 2.0 - 1.0)
        },
        0.0,
        1.0,
    )
}
