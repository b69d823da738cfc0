//! Symmetric β-stable law with characteristic function `exp(−|u|^β/2)`.
//!
//! Internally everything is computed for the standard law `S` with
//! characteristic function `exp(−|t|^α)` and rescaled by
//! `γ = 2^{−1/β}`. The density uses Zolotarev's integral representation
//! with the θ-range split at fixed levels of the exponent, a convergent or
//! asymptotic series far in the tail, and closed forms for β ∈ {1, 2}.

use std::f64::consts::{FRAC_1_PI, FRAC_PI_2, PI, SQRT_2};

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use libm::{erfc, lgamma as ln_gamma, tgamma as gamma};

use crate::density_table::density_check;
use crate::error::{domain, Error, Result};
use crate::quad::{integrate_pieces, integrate_power_tail, Tolerance};
use crate::roots::bisect;

/// Smallest supported stability index.
pub const MIN_BETA: f64 = 0.3;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_677_939_946_059_934;

/// Law of `W_1`, symmetric stable with index `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLaw", into = "RawLaw")]
pub struct StableLaw {
    beta: f64,
}

#[derive(Serialize, Deserialize)]
struct RawLaw {
    beta: f64,
}

impl TryFrom<RawLaw> for StableLaw {
    type Error = Error;
    fn try_from(raw: RawLaw) -> Result<Self> {
        StableLaw::new(raw.beta)
    }
}

impl From<StableLaw> for RawLaw {
    fn from(law: StableLaw) -> Self {
        RawLaw { beta: law.beta }
    }
}

/// The three score-type functions derived from the density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    /// `h + w h'`
    pub check: f64,
    /// `check² / h`
    pub tilde: f64,
    /// `w h' / h`
    pub bar: f64,
}

impl StableLaw {
    pub fn new(beta: f64) -> Result<Self> {
        if !(MIN_BETA..=2.0).contains(&beta) {
            return domain(format!("stability index {beta} outside [{MIN_BETA}, 2]"));
        }
        Ok(Self { beta })
    }

    pub const fn gaussian() -> Self {
        Self { beta: 2.0 }
    }

    pub const fn cauchy() -> Self {
        Self { beta: 1.0 }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn is_gaussian(&self) -> bool {
        self.beta == 2.0
    }

    /// Scale of `W_1` relative to the law with characteristic function
    /// `exp(−|t|^β)`.
    pub fn scale(&self) -> f64 {
        0.5f64.powf(1.0 / self.beta)
    }

    /// `h_β(w)`.
    pub fn density(&self, w: f64) -> f64 {
        if self.is_gaussian() {
            return INV_SQRT_2PI * (-0.5 * w * w).exp();
        }
        let g = self.scale();
        density_check(self.beta, (w / g).abs()).0 / g
    }

    /// `h_β'(w)`.
    pub fn density_derivative(&self, w: f64) -> f64 {
        if self.is_gaussian() {
            return -w * self.density(w);
        }
        if w == 0.0 {
            return 0.0;
        }
        let g = self.scale();
        let (f, check) = density_check(self.beta, (w / g).abs());
        // w h'(w) = (check − f)/g in user units
        (check - f) / g / w
    }

    pub fn scores(&self, w: f64) -> Scores {
        if self.is_gaussian() {
            let h = self.density(w);
            let check = (1.0 - w * w) * h;
            let tilde = (1.0 - w * w).powi(2) * h;
            return Scores { check, tilde, bar: -w * w };
        }
        let g = self.scale();
        let (f, c) = density_check(self.beta, (w / g).abs());
        let h = f / g;
        let check = c / g;
        Scores { check, tilde: check * check / h, bar: (c - f) / f }
    }

    /// `I(β) = ∫ h̃_β`.
    pub fn fisher_info(&self) -> f64 {
        if self.is_gaussian() {
            return 2.0;
        }
        let alpha = self.beta;
        // Scale invariant, so integrate in standard units.
        let integrand = |x: f64| {
            let (f, c) = density_check(alpha, x);
            if f > 0.0 {
                c * c / f
            } else {
                0.0
            }
        };
        let tol = Tolerance::new(1e-14, 1e-12);
        let knots = [0.0, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0, 32.0];
        let body = integrate_pieces(integrand, &knots, tol);
        let tail = integrate_power_tail(integrand, 32.0, 1.0 + alpha, tol);
        2.0 * (body.value + tail.value)
    }

    /// `P(W_1 ≤ w)`.
    pub fn cdf(&self, w: f64) -> f64 {
        let upper = self.upper_tail(w.abs());
        if w >= 0.0 {
            1.0 - upper
        } else {
            upper
        }
    }

    /// `P(W_1 > x)` for `x ≥ 0`.
    fn upper_tail(&self, x: f64) -> f64 {
        if self.is_gaussian() {
            return 0.5 * erfc(x / SQRT_2);
        }
        std_upper_tail(self.beta, x / self.scale())
    }

    /// `ψ(u) = P(|W_1| > 1/u)`.
    pub fn tail_psi(&self, u: f64) -> Result<f64> {
        if !(u > 0.0) || u.is_nan() {
            return domain(format!("tail function needs u > 0, got {u}"));
        }
        if u.is_infinite() {
            return Ok(1.0);
        }
        Ok(2.0 * self.upper_tail(1.0 / u))
    }

    /// Inverse of [`tail_psi`](Self::tail_psi).
    pub fn tail_psi_inverse(&self, v: f64) -> Result<f64> {
        if !(v > 0.0 && v < 1.0) {
            return domain(format!("tail inverse needs v in (0, 1), got {v}"));
        }
        if self.beta == 1.0 {
            // ψ(u) = 1 − (2/π) atan(2/u)
            return Ok(2.0 / (FRAC_PI_2 * (1.0 - v)).tan());
        }
        let psi_log = |t: f64| 2.0 * self.upper_tail((-t).exp()) - v;
        let mut lo = 1e-6f64.ln();
        let mut hi = 1e6f64.ln();
        while psi_log(lo) > 0.0 && lo > -700.0 {
            lo -= 10.0;
        }
        while psi_log(hi) < 0.0 && hi < 700.0 {
            hi += 10.0;
        }
        let f_lo = psi_log(lo);
        if f_lo > 0.0 || psi_log(hi) < 0.0 {
            return Err(Error::NotInvertibleHere { center: 1.0 });
        }
        let t = bisect(psi_log, lo, hi, f_lo, 0.0, 1e-12);
        Ok(t.exp())
    }

    /// One draw of `W_1`.
    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.is_gaussian() {
            return rng.sample(StandardNormal);
        }
        self.scale() * sample_standard(self.beta, rng)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<f64> {
        (0..count).map(|_| self.sample_one(rng)).collect()
    }
}

fn check_finite(w: f64) -> Result<()> {
    if w.is_finite() {
        Ok(())
    } else {
        domain(format!("argument must be finite, got {w}"))
    }
}

pub fn stable_density(law: &StableLaw, w: f64) -> Result<f64> {
    check_finite(w)?;
    Ok(law.density(w))
}

pub fn stable_density_derivative(law: &StableLaw, w: f64) -> Result<f64> {
    check_finite(w)?;
    Ok(law.density_derivative(w))
}

pub fn score_functions(law: &StableLaw, w: f64) -> Scores {
    law.scores(w)
}

pub fn fisher_info(law: &StableLaw) -> f64 {
    law.fisher_info()
}

pub fn tail_psi(law: &StableLaw, u: f64) -> Result<f64> {
    law.tail_psi(u)
}

pub fn tail_psi_inverse(law: &StableLaw, v: f64) -> Result<f64> {
    law.tail_psi_inverse(v)
}

pub fn stable_cdf(law: &StableLaw, w: f64) -> f64 {
    law.cdf(w)
}

pub fn sample_stable<R: Rng + ?Sized>(law: &StableLaw, rng: &mut R, count: usize) -> Vec<f64> {
    law.sample(rng, count)
}

/// `h_β(w)` by direct cosine-transform quadrature of
/// `(1/π)∫_0^∞ cos(wu) e^{−u^β/2} du`. Slower than [`StableLaw::density`];
/// kept as an independent cross-check.
pub fn fourier_density(law: &StableLaw, w: f64) -> f64 {
    let g = law.scale();
    fourier_std(law.beta, (w / g).abs()).0 / g
}

/// Chambers–Mallows–Stuck draw with characteristic function `exp(−|t|^α)`.
pub(crate) fn sample_standard<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let v = PI * (rng.random::<f64>() - 0.5);
    if alpha == 1.0 {
        return v.tan();
    }
    if alpha == 2.0 {
        let z: f64 = rng.sample(StandardNormal);
        return SQRT_2 * z;
    }
    let e: f64 = Exp1.sample(rng);
    let a = (alpha * v).sin() / v.cos().powf(1.0 / alpha);
    a * (((1.0 - alpha) * v).cos() / e).powf((1.0 - alpha) / alpha)
}

// ---------------------------------------------------------------------------
// standard-unit numerics, ch.f. exp(−|t|^α), argument x ≥ 0

const NEAR_CAUCHY: f64 = 0.02;
const SERIES_TERMS: usize = 80;

/// `(f(x), f(x) + x f'(x))` of the standard law for `x ≥ 0`.
pub(crate) fn std_density_check(alpha: f64, x: f64) -> (f64, f64) {
    if alpha == 1.0 {
        let d = 1.0 + x * x;
        return (FRAC_1_PI / d, FRAC_1_PI * (1.0 - x * x) / (d * d));
    }
    if alpha == 2.0 {
        // N(0, 2)
        let f = 0.5 * INV_SQRT_2PI * (-0.25 * x * x).exp();
        return (f, f * (1.0 - 0.5 * x * x));
    }
    if x == 0.0 {
        let f0 = gamma(1.0 + 1.0 / alpha) * FRAC_1_PI;
        return (f0, f0);
    }
    if let Some(v) = tail_series_density(alpha, x) {
        return v;
    }
    if (alpha - 1.0).abs() < NEAR_CAUCHY {
        return fourier_std(alpha, x);
    }
    zolotarev_density_check(alpha, x)
}

pub(crate) fn std_upper_tail(alpha: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.5;
    }
    if alpha == 1.0 {
        return FRAC_1_PI * (1.0 / x).atan();
    }
    if alpha == 2.0 {
        return 0.5 * erfc(0.5 * x);
    }
    if let Some(v) = tail_series_upper(alpha, x) {
        return v;
    }
    if (alpha - 1.0).abs() < NEAR_CAUCHY {
        return fourier_upper_tail(alpha, x);
    }
    zolotarev_upper_tail(alpha, x)
}

/// Sums `Σ_k term(k)` for the large-`x` expansion, returning `None` if the
/// terms have not dropped below `1e−17` relative before they start growing.
fn sum_tail_series(alpha: f64, x: f64, power_shift: f64, coef: impl Fn(f64) -> f64) -> Option<f64> {
    let lx = x.ln();
    let mut total = 0.0;
    let mut prev_mag = f64::INFINITY;
    for k in 1..=SERIES_TERMS {
        let kf = k as f64;
        let s = (kf * PI * alpha / 2.0).sin();
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        let mag = (coef(kf) - ln_gamma(kf + 1.0) - (kf * alpha + power_shift) * lx).exp();
        let term = sign * s * mag;
        total += term;
        if mag < 1e-17 * total.abs() && k > 2 {
            return Some(total);
        }
        if mag > prev_mag && k > 3 {
            return None;
        }
        prev_mag = mag;
    }
    None
}

fn tail_series_density(alpha: f64, x: f64) -> Option<(f64, f64)> {
    if x < 4.0 {
        return None;
    }
    // f ~ (1/π) Σ (−1)^{k+1} Γ(kα+1)/k! sin(kπα/2) x^{−kα−1}
    let f = sum_tail_series(alpha, x, 1.0, |k| ln_gamma(k * alpha + 1.0))? * FRAC_1_PI;
    // f + x f' ~ −(1/π) Σ (−1)^{k+1} kα Γ(kα+1)/k! sin(kπα/2) x^{−kα−1}
    let c = -sum_tail_series(alpha, x, 1.0, |k| ln_gamma(k * alpha + 1.0) + (k * alpha).ln())?
        * FRAC_1_PI;
    Some((f, c))
}

fn tail_series_upper(alpha: f64, x: f64) -> Option<f64> {
    if x < 4.0 {
        return None;
    }
    // P(S > x) ~ (1/π) Σ (−1)^{k+1} Γ(kα)/k! sin(kπα/2) x^{−kα}
    sum_tail_series(alpha, x, 0.0, |k| ln_gamma(k * alpha)).map(|v| v * FRAC_1_PI)
}

/// Exponent `g(θ) = x^{α/(α−1)} V(θ)` in log form.
struct Zolotarev {
    alpha: f64,
    p: f64,
    p_ln_x: f64,
}

impl Zolotarev {
    fn new(alpha: f64, x: f64) -> Self {
        let p = alpha / (alpha - 1.0);
        Self { alpha, p, p_ln_x: p * x.ln() }
    }

    fn ln_g(&self, theta: f64) -> f64 {
        let a = self.alpha;
        let c = theta.cos();
        self.p * (c.ln() - (a * theta).sin().ln()) + ((a - 1.0) * theta).cos().ln() - c.ln()
            + self.p_ln_x
    }

    /// θ-breakpoints at which `g` crosses fixed levels, sorted ascending.
    fn breakpoints(&self) -> Vec<f64> {
        const LEVELS: [f64; 6] = [0.05, 0.381_966, 1.0, 2.618_034, 10.0, 40.0];
        let increasing = self.alpha < 1.0;
        let mut pts = vec![0.0, FRAC_PI_2];
        for level in LEVELS {
            let target = level.ln();
            let (mut lo, mut hi) = (0.0, FRAC_PI_2);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let v = self.ln_g(mid);
                let above = if v.is_nan() { !increasing } else { v > target };
                if above == increasing {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let t = 0.5 * (lo + hi);
            if t > 1e-300 && t < FRAC_PI_2 {
                pts.push(t);
            }
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        if !increasing {
            // g decays like a power of θ beyond the last crossing; geometric
            // knots keep the rule from sampling only the flat far end
            let mut t = pts[pts.len() - 2] * 2.0;
            while t < FRAC_PI_2 * 0.75 {
                pts.push(t);
                t *= 2.0;
            }
            pts.sort_by(f64::total_cmp);
        }
        pts
    }
}

fn zolotarev_density_check(alpha: f64, x: f64) -> (f64, f64) {
    let z = Zolotarev::new(alpha, x);
    let pts = z.breakpoints();
    let tol = Tolerance::new(1e-300, 1e-13);
    let dens = integrate_pieces(
        |t| {
            let g = z.ln_g(t).exp();
            if g < 800.0 {
                g * (-g).exp()
            } else {
                0.0
            }
        },
        &pts,
        tol,
    );
    let chk = integrate_pieces(
        |t| {
            let g = z.ln_g(t).exp();
            if g < 800.0 {
                g * (1.0 - g) * (-g).exp()
            } else {
                0.0
            }
        },
        &pts,
        Tolerance::new(1e-17 * dens.value.abs(), 1e-13),
    );
    let c = alpha / (PI * (alpha - 1.0).abs());
    (c / x * dens.value, c * z.p / x * chk.value)
}

fn zolotarev_upper_tail(alpha: f64, x: f64) -> f64 {
    let z = Zolotarev::new(alpha, x);
    let pts = z.breakpoints();
    let tol = Tolerance::new(1e-300, 1e-13);
    if alpha > 1.0 {
        let v = integrate_pieces(|t| (-z.ln_g(t).exp()).exp(), &pts, tol);
        FRAC_1_PI * v.value
    } else {
        let v = integrate_pieces(|t| -(-z.ln_g(t).exp()).exp_m1(), &pts, tol);
        FRAC_1_PI * v.value
    }
}

/// Cosine-transform evaluation of `(f, f + x f')` for the standard law.
pub(crate) fn fourier_std(alpha: f64, x: f64) -> (f64, f64) {
    // e^{−t^α} < 1e−20 beyond this point; t^α e^{−t^α} as well
    let t_max = 50f64.powf(1.0 / alpha);
    let mut pts = vec![0.0];
    if x > 0.0 {
        let half = PI / x;
        let count = ((t_max / half).ceil() as usize).min(200_000);
        let step = t_max / count.max(1) as f64;
        for k in 1..count {
            pts.push(k as f64 * step);
        }
    } else {
        pts.extend([0.5, 1.0, 2.0, 4.0].iter().filter(|&&t| t < t_max));
    }
    pts.push(t_max);
    let tol = Tolerance::new(1e-15, 1e-13);
    let f = integrate_pieces(|t: f64| (x * t).cos() * (-t.powf(alpha)).exp(), &pts, tol);
    // f + x f' = (α/π) ∫ t^α cos(xt) e^{−t^α} dt
    let c = integrate_pieces(
        |t: f64| {
            let ta = t.powf(alpha);
            ta * (x * t).cos() * (-ta).exp()
        },
        &pts,
        tol,
    );
    (FRAC_1_PI * f.value, alpha * FRAC_1_PI * c.value)
}

fn fourier_upper_tail(alpha: f64, x: f64) -> f64 {
    let tol = Tolerance::new(1e-15, 1e-12);
    let body = integrate_pieces(
        |s| fourier_std(alpha, s).0,
        &[0.0, 0.25 * x, 0.5 * x, 0.75 * x, x],
        tol,
    );
    0.5 - body.value
}
