//! Asymptotic variances and biases: `I(k)`, `J(k)`, `Σ²(k)`, the rate
//! exponents of the semiparametric estimators, the regime table of the
//! Brownian-plus-compound-Poisson model, and the stable-perturbation bias.

use std::f64::consts::PI;
use std::fmt;

use libm::tgamma;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::kernels::{make_cos_kernel, Kernel, KernelKind};
use crate::moment_maps::{incomplete_gamma_lower, integrate_weighted, Shape, Weight};
use crate::params::number_or_inf;
use crate::quad::{integrate_pieces, Tolerance};
use crate::stable_core::StableLaw;

/// Below this `|I(k)|` the kernel does not identify `σ`.
const MIN_ABS_I: f64 = 1e-12;

fn kernel_shape(k: &Kernel, power: f64) -> Shape {
    let mut breaks = Vec::new();
    for j in k.jumps() {
        breaks.push(j);
        breaks.push(-j);
    }
    Shape { breaks, growth: power * k.gamma(), oscillation: k.oscillation().map(|w| power * w), even: true }
}

fn check_growth(k: &Kernel, law: &StableLaw, power: f64) -> Result<()> {
    if !law.is_gaussian() && power * k.gamma() >= law.beta() {
        return domain(format!(
            "{} grows too fast: E|k(W)|^{power} is infinite for beta = {}",
            k.label(),
            law.beta()
        ));
    }
    Ok(())
}

/// `E k(W_1)` by quadrature.
pub fn kernel_mean(k: &Kernel, law: &StableLaw) -> Result<f64> {
    check_growth(k, law, 1.0)?;
    Ok(integrate_weighted(law, Weight::Density, |x| k.eval(x), &kernel_shape(k, 1.0)).value)
}

/// `E k(W_1)²` by quadrature. Cosines go through `cos² = (1 + cos 2·)/2` so
/// that the tail integral stays purely oscillatory.
fn kernel_second_moment(k: &Kernel, law: &StableLaw) -> Result<f64> {
    check_growth(k, law, 2.0)?;
    match k.kind() {
        KernelKind::Cos { w } => Ok(0.5 * (1.0 + kernel_mean(&make_cos_kernel(2.0 * w)?, law)?)),
        KernelKind::Scaled { factor, inner } if matches!(**inner, KernelKind::Cos { .. }) => {
            let KernelKind::Cos { w } = **inner else { unreachable!() };
            Ok(factor * factor * 0.5 * (1.0 + kernel_mean(&make_cos_kernel(2.0 * w)?, law)?))
        }
        _ => {
            let shape = Shape { oscillation: None, ..kernel_shape(k, 2.0) };
            Ok(integrate_weighted(law, Weight::Density, |x| k.eval(x).powi(2), &shape).value)
        }
    }
}

/// `I(k) = ∫ ȟ_β(x) k(x) dx`.
pub fn kernel_i(k: &Kernel, law: &StableLaw) -> Result<f64> {
    check_growth(k, law, 1.0)?;
    Ok(integrate_weighted(law, Weight::Check, |x| k.eval(x), &kernel_shape(k, 1.0)).value)
}

/// `J(k) = Var k(W_1)`.
pub fn kernel_j(k: &Kernel, law: &StableLaw) -> Result<f64> {
    let m1 = kernel_mean(k, law)?;
    let m2 = kernel_second_moment(k, law)?;
    Ok((m2 - m1 * m1).max(0.0))
}

/// `Σ²(k) = J(k) / I(k)²`.
pub fn sigma2(k: &Kernel, law: &StableLaw) -> Result<f64> {
    let i = kernel_i(k, law)?;
    if i.abs() < MIN_ABS_I {
        return Err(Error::NotIdentified(format!("I(k) = {i:.3e} for {}", k.label())));
    }
    Ok(kernel_j(k, law)? / (i * i))
}

/// Closed form of `Σ²` for `cos(w x)`.
pub fn sigma2_cos_closed_form(w: f64, beta: f64) -> Result<f64> {
    if !(w > 0.0 && w.is_finite()) || !(beta > 0.0 && beta <= 2.0) {
        return domain(format!("need w > 0 and beta in (0, 2], got w={w}, beta={beta}"));
    }
    let a = w.powf(beta);
    let num = (-(2.0 * w).powf(beta) / 2.0).exp_m1() - 2.0 * (-a).exp_m1();
    Ok(2.0 * num / (beta * beta * a * a * (-a).exp()))
}

/// `m_s = E|W_1|^s` by quadrature; finite for `s < β` unless `β = 2`.
pub fn abs_moment(s: f64, law: &StableLaw) -> Result<f64> {
    if !(s > 0.0) || (!law.is_gaussian() && s >= law.beta()) {
        return domain(format!("E|W|^{s} is not finite for beta = {}", law.beta()));
    }
    let shape = Shape { growth: s, even: true, ..Shape::default() };
    Ok(integrate_weighted(law, Weight::Density, |x| x.abs().powf(s), &shape).value)
}

/// `M_{γ,s} = E(|W_1|^s 1{|W_1| ≤ γ})` by quadrature.
pub fn truncated_abs_moment(s: f64, gamma_cut: f64, law: &StableLaw) -> Result<f64> {
    if !(s > 0.0) || !(gamma_cut > 0.0 && gamma_cut.is_finite()) {
        return domain(format!("need s > 0 and a finite cut > 0, got s={s}, cut={gamma_cut}"));
    }
    let mut knots = vec![0.0];
    let mut t = 0.25;
    while t < gamma_cut {
        knots.push(t);
        t *= 2.0;
    }
    knots.push(gamma_cut);
    let est = integrate_pieces(|x| x.powf(s) * law.density(x), &knots, Tolerance::new(1e-15, 1e-13));
    Ok(2.0 * est.value)
}

/// `Σ²` of `|x|^r` from the moments `m_r`, `m_{2r}`.
pub fn sigma2_power(r: f64, law: &StableLaw) -> Result<f64> {
    let m1 = abs_moment(r, law)?;
    let m2 = abs_moment(2.0 * r, law)?;
    Ok((m2 - m1 * m1) / (r * r * m1 * m1))
}

/// `Σ²` of `|x|^r 1{|x| ≤ γ}` from the truncated moments.
pub fn sigma2_truncated_power(r: f64, gamma_cut: f64, law: &StableLaw) -> Result<f64> {
    let m1 = truncated_abs_moment(r, gamma_cut, law)?;
    let m2 = truncated_abs_moment(2.0 * r, gamma_cut, law)?;
    let den = r * m1 - 2.0 * law.density(gamma_cut) * gamma_cut.powf(r + 1.0);
    if den.abs() < MIN_ABS_I {
        return Err(Error::NotIdentified(format!("I(k) vanishes for r={r}, cut={gamma_cut}")));
    }
    Ok((m2 - m1 * m1) / (den * den))
}

/// `(ρ, ρ')` for a perturbation of index `alpha` under a stable part of
/// index `beta`.
pub fn rate_exponents(alpha: f64, beta: f64) -> Result<(f64, f64)> {
    if !(alpha >= 0.0 && alpha <= beta && beta <= 2.0 && beta > 0.0) {
        return domain(format!("need 0 ≤ alpha ≤ beta ≤ 2, got alpha={alpha}, beta={beta}"));
    }
    Ok((2.0 * (beta - alpha) / (beta * (2.0 + alpha)), (beta - alpha) / beta))
}

/// Truncation regimes of the power variation estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section8Regime {
    /// `c = ∞`
    NoTruncation,
    /// `τ = cΔ^{1/2}`
    RootDelta,
    /// `τ = cΔ^{1/2+κ}`, `−1/2 < κ < 0`
    Slow,
    /// `τ = cΔ^{1/2+κ}`, `κ > 0`
    Fast,
}

impl fmt::Display for Section8Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Section8Regime::NoTruncation => "no_truncation",
            Section8Regime::RootDelta => "root_delta",
            Section8Regime::Slow => "slow",
            Section8Regime::Fast => "fast",
        })
    }
}

/// `√(nΔ^{v1}) (σ̂ − σ − b0 Δ^{b1}) → N(0, v0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticProfile {
    pub regime: Section8Regime,
    pub b0: f64,
    pub b1: f64,
    pub v0: f64,
    pub v1: f64,
}

impl AsymptoticProfile {
    /// Normalizing rate of the centered error, e.g. `sqrt(n)` or
    /// `sqrt(n*delta^0.4)`.
    pub fn rate(&self) -> String {
        if self.v1 == 0.0 {
            "sqrt(n)".into()
        } else {
            format!("sqrt(n*delta^{})", fmt_num(self.v1))
        }
    }

    /// Tightness rate once the bias is taken into account.
    pub fn rate_with_bias(&self) -> String {
        format!("min({}, delta^-{})", self.rate(), fmt_num(self.b1))
    }

    /// Predicted standard deviation of `σ̂` for `n` increments at spacing
    /// `delta`.
    pub fn predicted_sd(&self, n: f64, delta: f64) -> f64 {
        (self.v0 / (n * delta.powf(self.v1))).sqrt()
    }

    /// Predicted `E σ̂ − σ` at spacing `delta`.
    pub fn predicted_bias(&self, delta: f64) -> f64 {
        self.b0 * delta.powf(self.b1)
    }
}

fn fmt_num(x: f64) -> String {
    let s = format!("{x:.6}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Tolerance used to decide that `κ` sits on a regime boundary.
const KAPPA_EPS: f64 = 1e-12;

/// `Γ(a) − Γ(a, x)`.
fn lower_gamma(a: f64, x: f64) -> f64 {
    incomplete_gamma_lower(a, x).unwrap_or(f64::NAN)
}

/// Asymptotic bias and variance of the power variation estimator with
/// truncation `τ(Δ) = cΔ^{1/2+κ}` (`c` in absolute units, `c = ∞` for none)
/// in the model Brownian motion plus compound Poisson with `N(0, η)` jumps at
/// rate `λ`.
pub fn section8_profile(
    r: f64,
    kappa: Option<f64>,
    c: f64,
    sigma: f64,
    lambda: f64,
    eta: f64,
) -> Result<AsymptoticProfile> {
    if !(r > 0.0 && r <= 2.0) {
        return domain(format!("power must be in (0, 2], got {r}"));
    }
    if !(c > 0.0) || !(sigma > 0.0 && sigma.is_finite()) || !(lambda >= 0.0) || !(eta > 0.0) {
        return domain(format!("bad model parameters c={c}, sigma={sigma}, lambda={lambda}, eta={eta}"));
    }
    let g_half = tgamma((1.0 + r) / 2.0);
    // E|W|^{2r} / (E|W|^r)² for Brownian W
    let moment_ratio = PI.sqrt() * tgamma(0.5 + r) / (g_half * g_half);
    let no_jump_v0 = sigma * sigma / (r * r) * (moment_ratio - 1.0);

    if c.is_infinite() {
        if r == 2.0 {
            return Err(Error::NotIdentified(
                "untruncated squares identify sigma^2 + lambda*eta, not sigma".into(),
            ));
        }
        let (v0, v1) = if r < 1.0 {
            (no_jump_v0, 0.0)
        } else if r == 1.0 {
            (0.5 * ((PI - 2.0) * sigma * sigma + PI * lambda * eta), 0.0)
        } else {
            (PI.sqrt() * sigma.powf(2.0 - 2.0 * r) * lambda * eta.powf(r) / (r * r) * tgamma(0.5 + r) / (g_half * g_half), r - 1.0)
        };
        let b0 = sigma.powf(1.0 - r) * lambda * eta.powf(r / 2.0) / r;
        return Ok(AsymptoticProfile { regime: Section8Regime::NoTruncation, b0, b1: 1.0 - r / 2.0, v0, v1 });
    }

    let kappa = kappa.ok_or_else(|| Error::Domain("finite truncation needs kappa".into()))?;
    if !(kappa > -0.5) || !kappa.is_finite() {
        return domain(format!("kappa must exceed -1/2, got {kappa}"));
    }

    if kappa.abs() <= KAPPA_EPS {
        let x = c * c / (2.0 * sigma * sigma);
        let g1 = lower_gamma(0.5 + r, x);
        let g2 = lower_gamma((1.0 + r) / 2.0, x);
        let g3 = lower_gamma((3.0 + r) / 2.0, x);
        let num = 2f64.powf(r) * sigma.powf(4.0 + 2.0 * r) * (PI.sqrt() * g1 - g2 * g2);
        let den = 2f64.sqrt() * c.powf(1.0 + r) * (-x).exp() - 2f64.powf(r / 2.0) * r * sigma.powf(1.0 + r) * g2;
        if den.abs() < MIN_ABS_I {
            return Err(Error::NotIdentified(format!("variance denominator vanishes at r={r}, c={c}")));
        }
        let b0 = sigma * lambda * g2 / (g2 - 2.0 * g3);
        return Ok(AsymptoticProfile { regime: Section8Regime::RootDelta, b0, b1: 1.0, v0: num / (den * den), v1: 0.0 });
    }

    if kappa > 0.0 {
        let v0 = (2.0 * PI).sqrt() * (1.0 + r).powi(2) * sigma.powi(3) / (2.0 * c * (1.0 + 2.0 * r));
        return Ok(AsymptoticProfile { regime: Section8Regime::Fast, b0: sigma * lambda, b1: 1.0, v0, v1: kappa });
    }

    // −1/2 < κ < 0
    let jump_v0 = 2f64.powf(0.5 - r) * c.powf(1.0 + 2.0 * r) * PI.sqrt() * lambda * sigma.powf(2.0 - 2.0 * r)
        / (r * r * (1.0 + 2.0 * r) * eta.sqrt() * g_half * g_half);
    let kappa_v = -3.0 / (2.0 + 4.0 * r);
    let (v0, v1) = if (kappa - kappa_v).abs() <= KAPPA_EPS {
        (jump_v0 + no_jump_v0, 0.0)
    } else if kappa > kappa_v {
        (no_jump_v0, 0.0)
    } else {
        (jump_v0, -kappa - 2.0 * r * kappa - 1.5)
    };
    let kappa_b = -1.0 / (2.0 + 2.0 * r);
    let jump_b = 2f64.powf(0.5 - r / 2.0) * c.powf(1.0 + r) / (r * eta.sqrt() * g_half);
    let (b0, b1) = if (kappa - kappa_b).abs() <= KAPPA_EPS {
        (lambda * sigma / (1.0 + r) * (jump_b / sigma.powf(r) - 1.0 - 1.0 / r), 1.0)
    } else if kappa > kappa_b {
        (-lambda * sigma / r, 1.0)
    } else {
        (jump_b * lambda * sigma.powf(1.0 - r) / (1.0 + r), 1.5 + kappa + r * kappa)
    };
    Ok(AsymptoticProfile { regime: Section8Regime::Slow, b0, b1, v0, v1 })
}

/// One row of the regime table; `profile` is `None` when `σ` is not
/// identified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table8Row {
    pub r: f64,
    pub kappa: Option<f64>,
    #[serde(with = "number_or_inf")]
    pub c: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub eta: f64,
    pub regime: Option<Section8Regime>,
    pub b0: Option<f64>,
    pub b1: Option<f64>,
    pub v0: Option<f64>,
    pub v1: Option<f64>,
    pub rate: String,
}

/// Profiles over a grid of `(r, κ, c)`; `c = ∞` rows ignore `κ`.
pub fn section8_table(sigma: f64, lambda: f64, eta: f64, rs: &[f64], kappas: &[f64], cs: &[f64]) -> Result<Vec<Table8Row>> {
    let mut rows = Vec::new();
    for &r in rs {
        for &c in cs {
            let ks: Vec<Option<f64>> =
                if c.is_infinite() { vec![None] } else { kappas.iter().map(|&k| Some(k)).collect() };
            for kappa in ks {
                let row = match section8_profile(r, kappa, c, sigma, lambda, eta) {
                    Ok(p) => Table8Row {
                        r,
                        kappa,
                        c,
                        sigma,
                        lambda,
                        eta,
                        regime: Some(p.regime),
                        b0: Some(p.b0),
                        b1: Some(p.b1),
                        v0: Some(p.v0),
                        v1: Some(p.v1),
                        rate: p.rate_with_bias(),
                    },
                    Err(Error::NotIdentified(_)) => Table8Row {
                        r,
                        kappa,
                        c,
                        sigma,
                        lambda,
                        eta,
                        regime: None,
                        b0: None,
                        b1: None,
                        v0: None,
                        v1: None,
                        rate: "not identified".into(),
                    },
                    Err(e) => return Err(e),
                };
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

/// Limit of `Δ^{−(β−α)/β}(σ̂ − σ)` for the semiparametric cosine estimator
/// under a symmetric `α`-stable perturbation, in the closed form
/// `−w^α / (2βσ^α)`.
pub fn section9_bias_constant(alpha: f64, beta: f64, w: f64, sigma: f64) -> Result<f64> {
    check_section9(alpha, beta, w, sigma)?;
    Ok(-w.powf(alpha) / (2.0 * beta * sigma.powf(alpha)))
}

/// The same limit from a first-order expansion of the two cosine centerings:
/// matching `exp(−(wu/σ)^β/2)` against `exp(−w^β/2 − w^α ε/(2σ^α))` with
/// `ε = Δ^{(β−α)/β}` gives `u − σ ≈ w^{α−β} σ^{1−α} ε / β`.
pub fn stable_perturbation_bias_first_order(alpha: f64, beta: f64, w: f64, sigma: f64) -> Result<f64> {
    check_section9(alpha, beta, w, sigma)?;
    Ok(w.powf(alpha - beta) * sigma.powf(1.0 - alpha) / beta)
}

fn check_section9(alpha: f64, beta: f64, w: f64, sigma: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < beta && beta <= 2.0) || !(w > 0.0) || !(sigma > 0.0) {
        return domain(format!("need 0 < alpha < beta ≤ 2, w > 0, sigma > 0; got {alpha}, {beta}, {w}, {sigma}"));
    }
    Ok(())
}
