//! Centering functions `Ψ_k`, `Ψ_{G,Δ,α,k}`, the truncated moments of the
//! Brownian-plus-compound-Poisson model, and local inversion.

use std::f64::consts::PI;

use libm::tgamma;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::kernels::Kernel;
use crate::levy_models::PerturbationLaw;
use crate::quad::{integrate_oscillatory_tail, integrate_pieces, integrate_power_tail, Estimate, Tolerance};
use crate::roots::{bisect, brackets};
use crate::stable_core::StableLaw;

pub use crate::incgamma::{gamma_p, gamma_q, incomplete_gamma_lower, incomplete_gamma_upper};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiMethod {
    ClosedForm,
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiEvaluation {
    pub value: f64,
    pub method: PsiMethod,
    /// Quadrature error bound or Monte Carlo standard error.
    pub error_estimate: f64,
}

impl PsiEvaluation {
    fn closed(value: f64) -> Self {
        Self { value, method: PsiMethod::ClosedForm, error_estimate: 0.0 }
    }

    fn quadrature(est: Estimate) -> Self {
        Self { value: est.value, method: PsiMethod::Quadrature, error_estimate: est.error }
    }
}

/// Which function of the law multiplies the integrand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Weight {
    /// `h_β`
    Density,
    /// `ȟ_β = h_β + x h_β'`
    Check,
}

fn weight_at(law: &StableLaw, weight: Weight, x: f64) -> f64 {
    match weight {
        Weight::Density => law.density(x),
        Weight::Check => law.scores(x).check,
    }
}

/// Shape information about an integrand `f` to be integrated against a
/// weight derived from `h_β`.
#[derive(Debug, Clone, Default)]
pub(crate) struct Shape {
    /// Points where `f` jumps.
    pub breaks: Vec<f64>,
    /// `|f(x)| = O(|x|^growth)`.
    pub growth: f64,
    /// Angular frequency of a persistent oscillation of `f`.
    pub oscillation: Option<f64>,
    /// `f` is even, so only the half line is integrated.
    pub even: bool,
}

const QUAD_TOL: Tolerance = Tolerance::new(1e-14, 1e-12);

/// `∫ weight(x) f(x) dx` over the real line.
pub(crate) fn integrate_weighted(law: &StableLaw, weight: Weight, f: impl Fn(f64) -> f64, shape: &Shape) -> Estimate {
    let g = |x: f64| {
        let fx = f(x);
        if fx == 0.0 {
            0.0
        } else {
            weight_at(law, weight, x) * fx
        }
    };
    let scale = if law.is_gaussian() { 1.0 } else { law.scale() };
    let max_break = shape.breaks.iter().fold(0.0f64, |m, b| m.max(b.abs()));
    let reach = if law.is_gaussian() {
        // h vanishes below 1e−300 past |x| = 37
        40.0f64
    } else {
        (64.0 * scale).max(2.0 * max_break)
    };
    let mut knots = vec![0.0, reach, -reach];
    let mut t = scale / 4.0;
    while t < reach {
        knots.push(t);
        knots.push(-t);
        t *= 2.0;
    }
    if let Some(w) = shape.oscillation {
        // keep at least a few knots per period in the body
        let step = PI / w;
        if step < reach / 8.0 {
            let count = ((reach / step) as usize).min(20_000);
            for i in 1..count {
                knots.push(i as f64 * step);
                knots.push(-(i as f64) * step);
            }
        }
    }
    knots.extend(shape.breaks.iter().copied().filter(|b| b.abs() < reach));
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    if shape.even {
        knots.retain(|&x| x >= 0.0);
    }
    let mut total = integrate_pieces(g, &knots, QUAD_TOL);
    if !law.is_gaussian() {
        let decay = 1.0 + law.beta() - shape.growth;
        let sides: &[f64] = if shape.even { &[1.0] } else { &[1.0, -1.0] };
        for &side in sides {
            let tail_f = |x: f64| g(side * x);
            let part = match shape.oscillation {
                Some(w) => integrate_oscillatory_tail(tail_f, reach, w, QUAD_TOL),
                None => integrate_power_tail(tail_f, reach, decay.max(1.05), QUAD_TOL),
            };
            total = total + part;
        }
    }
    if shape.even {
        total * 2.0
    } else {
        total
    }
}

/// Shape of `x ↦ k(u x + z)`.
fn kernel_shape(k: &Kernel, u: f64, z: f64) -> Shape {
    let mut breaks = Vec::new();
    for j in k.jumps() {
        breaks.push((j - z) / u);
        breaks.push((-j - z) / u);
    }
    Shape { breaks, growth: k.gamma(), oscillation: k.oscillation().map(|w| w * u), even: z == 0.0 }
}

fn check_u(u: f64) -> Result<()> {
    if !(u > 0.0 && u.is_finite()) {
        return domain(format!("u must be positive, got {u}"));
    }
    Ok(())
}

/// `Ψ_k(u, z) = ∫ h_β(x) k(ux + z) dx`.
pub fn psi_k(k: &Kernel, law: &StableLaw, u: f64, z: f64) -> Result<PsiEvaluation> {
    check_u(u)?;
    if let Some(w) = k.cos_frequency() {
        return Ok(PsiEvaluation::closed((-0.5 * (w * u).powf(law.beta())).exp() * (w * z).cos()));
    }
    if let Some(c) = k.constant_value() {
        return Ok(PsiEvaluation::closed(c));
    }
    let shape = kernel_shape(k, u, z);
    let est = integrate_weighted(law, Weight::Density, |x| k.eval(u * x + z), &shape);
    Ok(PsiEvaluation::quadrature(est))
}

/// `∂Ψ_k/∂u (u, z) = −(1/u) ∫ ȟ_β(x) k(ux + z) dx`.
pub fn psi_k_derivative_u(k: &Kernel, law: &StableLaw, u: f64, z: f64) -> Result<PsiEvaluation> {
    check_u(u)?;
    let beta = law.beta();
    if let Some(w) = k.cos_frequency() {
        let a = (w * u).powf(beta);
        return Ok(PsiEvaluation::closed(-0.5 * beta * a / u * (-0.5 * a).exp() * (w * z).cos()));
    }
    if k.constant_value().is_some() {
        return Ok(PsiEvaluation::closed(0.0));
    }
    let shape = kernel_shape(k, u, z);
    let est = integrate_weighted(law, Weight::Check, |x| k.eval(u * x + z), &shape);
    Ok(PsiEvaluation::quadrature(est * (-1.0 / u)))
}

/// Pre-drawn values of `Z_Δ(α) = Δ^{−1/β}(Y_Δ − b'(G, α)Δ)`, reused across
/// `(u, v, z)` so that Monte Carlo centerings are smooth in `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationDraws {
    /// Nonzero draws.
    nonzero: Vec<f64>,
    /// Number of draws that were exactly zero.
    zeros: usize,
}

impl PerturbationDraws {
    pub fn sample<R: Rng + ?Sized>(
        g: &PerturbationLaw,
        law: &StableLaw,
        delta: f64,
        paths: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if paths == 0 {
            return domain("need at least one Monte Carlo path");
        }
        g.validate()?;
        let norm = delta.powf(-1.0 / law.beta());
        let mut nonzero = Vec::new();
        let mut zeros = 0;
        for _ in 0..paths {
            let z = g.sample_centered(delta, rng) * norm;
            if z == 0.0 {
                zeros += 1;
            } else {
                nonzero.push(z);
            }
        }
        Ok(Self { nonzero, zeros })
    }

    pub fn paths(&self) -> usize {
        self.nonzero.len() + self.zeros
    }
}

/// `Ψ_{G,Δ,α,k}(u, v, z) = E k(u X + v Z_Δ(α) + z)` with `X ~ h_β` independent
/// of `Z_Δ(α)`.
///
/// Cosine kernels use the closed form built from the characteristic exponent
/// of `G`. Other kernels average `Ψ_k(u, v·Z + z)` over `draws`, which must be
/// supplied in that case.
#[allow(clippy::too_many_arguments)]
pub fn psi_g(
    k: &Kernel,
    law: &StableLaw,
    g: &PerturbationLaw,
    alpha: f64,
    delta: f64,
    u: f64,
    v: f64,
    z: f64,
    draws: Option<&PerturbationDraws>,
) -> Result<PsiEvaluation> {
    check_u(u)?;
    if !(v >= 0.0) {
        return domain(format!("v must be nonnegative, got {v}"));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return domain(format!("delta must be in (0, 1], got {delta}"));
    }
    if v == 0.0 || matches!(g, PerturbationLaw::PureDrift { .. }) {
        // Z_Δ(α) ≡ 0 for a pure drift
        return psi_k(k, law, u, z);
    }
    let beta = law.beta();
    if let Some(w) = k.cos_frequency() {
        let s = w * v * delta.powf(-1.0 / beta);
        let (re, im) = g.char_exponent(s);
        let a = -0.5 * (w * u).powf(beta) + delta * re;
        let b = delta * im - w * v * delta.powf(1.0 - 1.0 / beta) * g.drift_correction(alpha);
        return Ok(PsiEvaluation::closed(a.exp() * (b + w * z).cos()));
    }
    let draws = draws.ok_or_else(|| {
        Error::Domain("Monte Carlo centering needs pre-drawn perturbation values".into())
    })?;
    psi_g_monte_carlo(k, law, u, v, z, draws)
}

/// Monte Carlo branch of [`psi_g`], usable for any kernel.
pub fn psi_g_monte_carlo(
    k: &Kernel,
    law: &StableLaw,
    u: f64,
    v: f64,
    z: f64,
    draws: &PerturbationDraws,
) -> Result<PsiEvaluation> {
    let n = draws.paths() as f64;
    let at_zero = psi_k(k, law, u, z)?.value;
    let mut sum = draws.zeros as f64 * at_zero;
    let mut sum_sq = draws.zeros as f64 * at_zero * at_zero;
    for &d in &draws.nonzero {
        let val = psi_k(k, law, u, v * d + z)?.value;
        sum += val;
        sum_sq += val * val;
    }
    let mean = sum / n;
    let var = if n > 1.0 { ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
    Ok(PsiEvaluation { value: mean, method: PsiMethod::MonteCarlo, error_estimate: (var / n).sqrt() })
}

fn check_moment_args(r: f64, sigma: f64, delta: f64) -> Result<()> {
    if !(r > 0.0 && sigma > 0.0 && delta > 0.0) {
        return domain(format!("need r, sigma, delta > 0, got r={r}, sigma={sigma}, delta={delta}"));
    }
    Ok(())
}

/// `E|σW_Δ|^r` for Brownian `W`.
pub fn moment_gaussian(r: f64, sigma: f64, delta: f64) -> Result<f64> {
    check_moment_args(r, sigma, delta)?;
    Ok(2f64.powf(r / 2.0) / PI.sqrt() * tgamma((1.0 + r) / 2.0) * sigma.powf(r) * delta.powf(r / 2.0))
}

/// `E(|σW_Δ|^r 1{|σW_Δ| ≤ τ})` for Brownian `W`.
pub fn truncated_moment_gaussian(r: f64, sigma: f64, delta: f64, tau: f64) -> Result<f64> {
    check_moment_args(r, sigma, delta)?;
    if !(tau >= 0.0) {
        return domain(format!("tau must be nonnegative, got {tau}"));
    }
    let x = tau * tau / (2.0 * sigma * sigma * delta);
    let partial = incomplete_gamma_lower((1.0 + r) / 2.0, x)?;
    Ok(2f64.powf(r / 2.0) / PI.sqrt() * partial * sigma.powf(r) * delta.powf(r / 2.0))
}

/// Smallest `j` with `P(Poisson(μ) > j) < 1e−14`.
fn poisson_cutoff(mu: f64) -> usize {
    if mu <= 0.0 {
        return 0;
    }
    let mut p = (-mu).exp();
    let mut cdf = p;
    let mut j = 0usize;
    while 1.0 - cdf >= 1e-14 && j < 100_000 {
        j += 1;
        p *= mu / j as f64;
        cdf += p;
        if p < 1e-17 && j as f64 > mu {
            break;
        }
    }
    j
}

/// Sum over the jump count `j`; `term(j, var_j)` gets the conditional
/// variance `σ²Δ + jη`.
fn mixture_sum(
    lambda: f64,
    eta: f64,
    sigma: f64,
    delta: f64,
    j_max: Option<usize>,
    term: impl Fn(f64) -> Result<f64>,
) -> Result<f64> {
    let mu = lambda * delta;
    let j_max = j_max.unwrap_or_else(|| poisson_cutoff(mu));
    let mut weight = (-mu).exp();
    let mut total = 0.0;
    for j in 0..=j_max {
        if j > 0 {
            weight *= mu / j as f64;
        }
        if weight == 0.0 {
            break;
        }
        total += weight * term(sigma * sigma * delta + j as f64 * eta)?;
    }
    Ok(total)
}

/// `E|X_Δ|^r` for `X = σW + Y`, Brownian `W` and Gaussian compound Poisson
/// `Y` without drift; the jump-count series is cut at `j_max` (automatic when
/// `None`).
pub fn moment_model(r: f64, sigma: f64, lambda: f64, eta: f64, delta: f64, j_max: Option<usize>) -> Result<f64> {
    check_moment_args(r, sigma, delta)?;
    let c = 2f64.powf(r / 2.0) / PI.sqrt() * tgamma((1.0 + r) / 2.0);
    mixture_sum(lambda, eta, sigma, delta, j_max, |var| Ok(c * var.powf(r / 2.0)))
}

/// `E(|X_Δ|^r 1{|X_Δ| ≤ τ})` in the same model as [`moment_model`].
#[allow(clippy::too_many_arguments)]
pub fn truncated_moment_model(
    r: f64,
    sigma: f64,
    lambda: f64,
    eta: f64,
    delta: f64,
    tau: f64,
    j_max: Option<usize>,
) -> Result<f64> {
    check_moment_args(r, sigma, delta)?;
    let a = (1.0 + r) / 2.0;
    let c = 2f64.powf(r / 2.0) / PI.sqrt();
    mixture_sum(lambda, eta, sigma, delta, j_max, |var| {
        let x = if tau.is_infinite() { f64::INFINITY } else { tau * tau / (2.0 * var) };
        Ok(c * incomplete_gamma_lower(a, x)? * var.powf(r / 2.0))
    })
}

/// Solves `center(u) = target` for `u` in `[c/8, 8c]`, `c = bracket_center`,
/// choosing the sign change nearest to `c`.
pub fn invert_centering(center: impl Fn(f64) -> f64, target: f64, bracket_center: f64) -> Result<f64> {
    if !(bracket_center > 0.0 && bracket_center.is_finite()) || !target.is_finite() {
        return Err(Error::NotInvertibleHere { center: bracket_center });
    }
    let f = |u: f64| center(u) - target;
    let f_mid = f(bracket_center);
    if f_mid == 0.0 {
        return Ok(bracket_center);
    }
    let node = |j: i32| bracket_center * 2f64.powf(j as f64 / 16.0);
    // walk outwards so the first bracket found is the nearest in log scale
    let mut best: Option<(f64, f64, f64)> = None;
    let (mut up_u, mut up_f) = (bracket_center, f_mid);
    let (mut dn_u, mut dn_f) = (bracket_center, f_mid);
    for step in 1..=48 {
        let (u1, u0) = (node(step), node(-step));
        let (f1, f0) = (f(u1), f(u0));
        if best.is_none() && brackets(f0, dn_f) {
            best = Some((u0, dn_u, f0));
        }
        if best.is_none() && brackets(up_f, f1) {
            best = Some((up_u, u1, up_f));
        }
        if best.is_some() {
            break;
        }
        up_u = u1;
        up_f = f1;
        dn_u = u0;
        dn_f = f0;
    }
    let (lo, hi, f_lo) = best.ok_or(Error::NotInvertibleHere { center: bracket_center })?;
    Ok(bisect(f, lo, hi, f_lo, 1e-12, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{make_constant_kernel, make_cos_kernel, make_power_kernel, make_truncated_power_kernel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn cos_closed_form_and_quadrature_agree() {
        for &beta in &[1.0, 1.5, 2.0] {
            let law = StableLaw::new(beta).unwrap();
            let k = make_cos_kernel(0.7).unwrap();
            let cf = psi_k(&k, &law, 1.3, 0.4).unwrap().value;
            let shape = Shape { oscillation: Some(0.7 * 1.3), ..Shape::default() };
            let q = integrate_weighted(&law, Weight::Density, |x| (0.7 * (1.3 * x + 0.4)).cos(), &shape);
            assert!((cf - q.value).abs() < 1e-10, "beta={beta}: {cf} vs {}", q.value);
            let at0 = psi_k(&k, &law, 1.3, 0.0).unwrap().value;
            assert!((at0 - (-0.5 * (0.7f64 * 1.3).powf(beta)).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_kernel_centering() {
        let k = make_constant_kernel(1.0);
        let law = StableLaw::new(1.5).unwrap();
        assert_eq!(psi_k(&k, &law, 2.0, 0.3).unwrap().value, 1.0);
        assert_eq!(psi_k_derivative_u(&k, &law, 2.0, 0.3).unwrap().value, 0.0);
        // quadrature path of a kernel equal to 1 as a sanity check on the weight
        let shape = Shape { even: true, ..Shape::default() };
        let total = integrate_weighted(&law, Weight::Density, |_| 1.0, &shape);
        assert!((total.value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn power_kernel_gaussian_moment() {
        let law = StableLaw::gaussian();
        for &r in &[0.5, 1.0, 2.0, 3.0] {
            let k = make_power_kernel(r).unwrap();
            let u = 1.7;
            let v = psi_k(&k, &law, u, 0.0).unwrap().value;
            let exact = u.powf(r) * 2f64.powf(r / 2.0) * tgamma((1.0 + r) / 2.0) / PI.sqrt();
            assert!((v - exact).abs() < 1e-10 * exact, "r={r}: {v} vs {exact}");
        }
    }

    #[test]
    fn derivative_closed_form_at_unit() {
        for &beta in &[1.0, 1.5, 2.0] {
            let law = StableLaw::new(beta).unwrap();
            let w = 1.0;
            let k = make_cos_kernel(w).unwrap();
            let d = psi_k_derivative_u(&k, &law, 1.0, 0.0).unwrap().value;
            let expected = -beta * w.powf(beta) * (-w.powf(beta) / 2.0).exp() / 2.0;
            assert!((d - expected).abs() < 1e-15);
            // and by quadrature of the check score
            let shape = Shape { oscillation: Some(w), even: true, ..Shape::default() };
            let q = integrate_weighted(&law, Weight::Check, |x| (w * x).cos(), &shape);
            assert!((-q.value - expected).abs() < 1e-9, "beta={beta}: {} vs {expected}", -q.value);
        }
        let expected = 0.5 * (-0.5f64).exp();
        assert!((expected - 0.303_265_329_856_316_7).abs() < 1e-12);
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let h = 1e-4;
        let kernels = [
            make_truncated_power_kernel(2.0, 3.0).unwrap(),
            make_truncated_power_kernel(1.0, 2.0).unwrap(),
        ];
        for &beta in &[1.5, 2.0] {
            let law = StableLaw::new(beta).unwrap();
            for k in &kernels {
                for &u in &[0.5, 1.0, 2.0] {
                    let d = psi_k_derivative_u(k, &law, u, 0.0).unwrap().value;
                    let fd = (psi_k(k, &law, u + h, 0.0).unwrap().value - psi_k(k, &law, u - h, 0.0).unwrap().value)
                        / (2.0 * h);
                    assert!(((d - fd) / d).abs() < 1e-6, "beta={beta} {} u={u}: {d} vs {fd}", k.label());
                }
            }
        }
    }

    #[test]
    fn psi_g_reduces_to_psi_k() {
        let law = StableLaw::gaussian();
        let k = make_cos_kernel(0.5).unwrap();
        let g = PerturbationLaw::GaussianCompoundPoisson { lambda: 1.0, eta: 0.5, b: 0.0 };
        let a = psi_g(&k, &law, &g, 2.0, 1e-3, 1.2, 0.0, 0.3, None).unwrap();
        let b = psi_k(&k, &law, 1.2, 0.3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn psi_g_compound_poisson_closed_form() {
        let law = StableLaw::gaussian();
        let (w, lambda, eta, delta) = (0.8, 1.5, 0.5, 1e-2);
        let k = make_cos_kernel(w).unwrap();
        let g = PerturbationLaw::GaussianCompoundPoisson { lambda, eta, b: 0.0 };
        let (u, v) = (1.1, 0.9);
        let val = psi_g(&k, &law, &g, 2.0, delta, u, v, 0.0, None).unwrap().value;
        let s = w * v / delta.sqrt();
        let a = -(w * u).powi(2) / 2.0 + lambda * delta * ((-s * s * eta / 2.0).exp() - 1.0);
        assert!((val - a.exp()).abs() < 1e-15);
    }

    #[test]
    fn psi_g_monte_carlo_agrees_with_closed_form() {
        let law = StableLaw::gaussian();
        let k = make_cos_kernel(0.5).unwrap();
        for g in [
            PerturbationLaw::GaussianCompoundPoisson { lambda: 5.0, eta: 0.5, b: 0.0 },
            PerturbationLaw::SymmetricStable { alpha: 1.0, scale: 1.0 },
        ] {
            let mut rng = ChaCha20Rng::seed_from_u64(21);
            let draws = PerturbationDraws::sample(&g, &law, 0.1, 20_000, &mut rng).unwrap();
            let cf = psi_g(&k, &law, &g, 2.0, 0.1, 1.0, 1.0, 0.0, None).unwrap().value;
            let mc = psi_g_monte_carlo(&k, &law, 1.0, 1.0, 0.0, &draws).unwrap();
            assert!((mc.value - cf).abs() < 4.0 * mc.error_estimate, "{g}: {} vs {cf}", mc.value);
        }
    }

    #[test]
    fn psi_g_requires_draws_for_other_kernels() {
        let law = StableLaw::gaussian();
        let k = make_truncated_power_kernel(2.0, 3.0).unwrap();
        let g = PerturbationLaw::GaussianCompoundPoisson { lambda: 1.0, eta: 0.5, b: 0.0 };
        assert!(psi_g(&k, &law, &g, 2.0, 1e-2, 1.0, 1.0, 0.0, None).is_err());
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let draws = PerturbationDraws::sample(&g, &law, 1e-2, 2_000, &mut rng).unwrap();
        let v = psi_g(&k, &law, &g, 2.0, 1e-2, 1.0, 1.0, 0.0, Some(&draws)).unwrap();
        assert_eq!(v.method, PsiMethod::MonteCarlo);
        assert!(v.error_estimate > 0.0);
    }

    #[test]
    fn truncated_gaussian_moment() {
        // τ → ∞ gives the untruncated moment
        let full = moment_gaussian(2.0, 1.3, 0.01).unwrap();
        let trunc = truncated_moment_gaussian(2.0, 1.3, 0.01, f64::INFINITY).unwrap();
        assert!((full - trunc).abs() < 1e-15 * full);
        assert!((full - 1.69 * 0.01).abs() < 1e-15);
        // direct quadrature of the Gaussian expectation
        let (sigma, delta, tau) = (1.0f64, 0.01f64, 0.3f64);
        let sd = sigma * delta.sqrt();
        let direct = crate::quad::integrate(
            |x: f64| 2.0 * x * x * (-(x * x) / (2.0 * sd * sd)).exp() / (sd * (2.0 * PI).sqrt()),
            0.0,
            tau,
            Tolerance::new(1e-16, 1e-13),
        );
        let v = truncated_moment_gaussian(2.0, sigma, delta, tau).unwrap();
        assert!((v - direct.value).abs() < 1e-10, "{v} vs {}", direct.value);
        let mut prev = 0.0;
        for i in 0..50 {
            let v = truncated_moment_gaussian(1.5, 1.0, 0.01, i as f64 * 0.01).unwrap();
            assert!(v >= prev && v <= moment_gaussian(1.5, 1.0, 0.01).unwrap());
            prev = v;
        }
    }

    #[test]
    fn model_moments() {
        let (sigma, delta) = (1.0, 1e-3);
        let g = truncated_moment_model(2.0, sigma, 0.0, 0.5, delta, 0.1, None).unwrap();
        assert_eq!(g, truncated_moment_gaussian(2.0, sigma, delta, 0.1).unwrap());
        let m2 = moment_model(2.0, sigma, 1.0, 0.5, delta, None).unwrap();
        assert!((m2 - 1.5 * delta).abs() < 1e-15, "{m2}");
        let t = truncated_moment_model(2.0, sigma, 1.0, 0.5, delta, f64::INFINITY, None).unwrap();
        assert!((t - m2).abs() < 1e-15);
    }

    #[test]
    fn model_truncated_moment_matches_simulation() {
        use crate::levy_models::sample_increments;
        let (sigma, lambda, eta, delta, tau) = (1.0, 20.0, 0.5, 0.05, 0.5);
        let g = PerturbationLaw::GaussianCompoundPoisson { lambda, eta, b: 0.0 };
        let mut rng = ChaCha20Rng::seed_from_u64(31);
        let s = sample_increments(sigma, &g, &StableLaw::gaussian(), delta, 1_000_000, &mut rng).unwrap();
        let vals: Vec<f64> = s.chi.iter().map(|x| if x.abs() <= tau { x.abs().powf(1.5) } else { 0.0 }).collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let exact = truncated_moment_model(1.5, sigma, lambda, eta, delta, tau, None).unwrap();
        assert!((mean - exact).abs() < 4.0 * (var / n).sqrt(), "{mean} vs {exact}");
    }

    #[test]
    fn fourth_moment_matches_simulation() {
        use crate::levy_models::sample_increments;
        let (sigma, lambda, eta, delta) = (1.0, 10.0, 0.5, 0.1);
        let g = PerturbationLaw::GaussianCompoundPoisson { lambda, eta, b: 0.0 };
        let mut rng = ChaCha20Rng::seed_from_u64(32);
        let s = sample_increments(sigma, &g, &StableLaw::gaussian(), delta, 400_000, &mut rng).unwrap();
        let vals: Vec<f64> = s.chi.iter().map(|x| x.powi(4)).collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let exact = moment_model(4.0, sigma, lambda, eta, delta, Some(10)).unwrap();
        assert!((mean - exact).abs() < 5.0 * (var / n).sqrt(), "{mean} vs {exact}");
    }

    #[test]
    fn inversion() {
        let law = StableLaw::new(1.5).unwrap();
        let k = make_cos_kernel(0.8).unwrap();
        let sigma0 = 1.37f64;
        let target = (-0.8f64.powf(1.5) * sigma0.powf(1.5) / 2.0).exp();
        let u = invert_centering(|u| psi_k(&k, &law, u, 0.0).unwrap().value, target, 1.0).unwrap();
        assert!((u - sigma0).abs() < 1e-10);
        let u = invert_centering(|u| 2.0 * u - 1.0, 1.6, 1.0).unwrap();
        assert!((u - 1.3).abs() < 1e-11);
        assert!(matches!(invert_centering(|_| 3.0, 1.0, 1.0), Err(Error::NotInvertibleHere { .. })));
    }

    #[test]
    fn inversion_picks_nearest_root() {
        // roots at 0.5 and 1.5
        let f = |u: f64| (u - 0.5) * (u - 1.5);
        let u = invert_centering(f, 0.0, 1.4).unwrap();
        assert!((u - 1.5).abs() < 1e-10);
        let u = invert_centering(f, 0.0, 0.6).unwrap();
        assert!((u - 0.5).abs() < 1e-10);
    }
}
