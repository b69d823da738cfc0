//! Volatility estimators: sample splitting, the preliminary scale `S_n` and
//! drift `B_n`, the estimating-equation solver, and the concrete estimators.

use std::f64::consts::FRAC_2_PI;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::kernels::{make_cos_kernel, make_truncated_power_kernel, nu_schedule, truncate_kernel, Kernel, PhiFunction};
use crate::levy_models::{IncrementSample, PerturbationLaw};
use crate::moment_maps::{
    invert_centering, moment_gaussian, psi_g, psi_k, truncated_moment_gaussian, PerturbationDraws, PsiMethod,
};
use crate::params::{number_or_inf, SpecString};
use crate::roots::{bisect, brackets};
use crate::stable_core::StableLaw;

/// Largest Monte Carlo standard error accepted from a simulated centering.
pub const CENTERING_NOISE_THRESHOLD: f64 = 1e-4;

/// Half-width of the root search window, in octaves around the center.
const SEARCH_OCTAVES: i32 = 4;
const CELLS_PER_OCTAVE: i32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum PlanCase {
    /// Known perturbation law.
    Parametric,
    /// Possibly asymmetric perturbation: a block of `⌊δn⌋` increments is
    /// spent on the drift estimate.
    SemiCase1 { delta_frac: f64 },
    /// Symmetric perturbation, no drift estimate.
    SemiCase2,
}

impl fmt::Display for PlanCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanCase::Parametric => write!(f, "param"),
            PlanCase::SemiCase1 { delta_frac } => write!(f, "case1:delta={delta_frac}"),
            PlanCase::SemiCase2 => write!(f, "case2"),
        }
    }
}

impl FromStr for PlanCase {
    type Err = Error;

    /// `param`, `case1:delta=0.1` (or `1`), `case2` (or `2`).
    fn from_str(s: &str) -> Result<Self> {
        let spec = SpecString::parse(s)?;
        match spec.name {
            "param" | "parametric" => {
                spec.only(&[])?;
                Ok(PlanCase::Parametric)
            }
            "case1" | "1" => {
                spec.only(&["delta"])?;
                Ok(PlanCase::SemiCase1 { delta_frac: spec.or("delta", 0.1)? })
            }
            "case2" | "2" => {
                spec.only(&[])?;
                Ok(PlanCase::SemiCase2)
            }
            other => Err(Error::Parse(format!("unknown plan case '{other}'"))),
        }
    }
}

/// Split of `n` increments into a drift block (`q`), a preliminary block
/// (`m`) and the main block (`p`), in that order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub case: PlanCase,
    pub n: usize,
    pub m: usize,
    pub q: usize,
    pub p: usize,
}

impl SamplePlan {
    pub fn drift_block(&self) -> Range<usize> {
        0..self.q
    }

    pub fn prelim_block(&self) -> Range<usize> {
        self.q..self.q + self.m
    }

    pub fn main_block(&self) -> Range<usize> {
        self.q + self.m..self.n
    }
}

/// Builds the sample split. Case 1 uses `m = ⌊δn⌋`, the other cases
/// `m = ⌈n^{2/3}⌉`.
pub fn make_plan(n: usize, case: PlanCase) -> Result<SamplePlan> {
    if n < 20 {
        return domain(format!("need at least 20 increments, got {n}"));
    }
    let plan = match case {
        PlanCase::SemiCase1 { delta_frac } => {
            if !(delta_frac > 0.0 && delta_frac < 0.5) {
                return domain(format!("block fraction must be in (0, 1/2), got {delta_frac}"));
            }
            let m = (delta_frac * n as f64).floor() as usize;
            if m == 0 {
                return domain(format!("block fraction {delta_frac} leaves an empty block for n = {n}"));
            }
            SamplePlan { case, n, m, q: m, p: n - 2 * m }
        }
        PlanCase::Parametric | PlanCase::SemiCase2 => {
            // the tiny offset keeps exact cubes such as 1000 from rounding up
            let m = ((n as f64).powf(2.0 / 3.0) - 1e-9).ceil() as usize;
            SamplePlan { case, n, m, q: 0, p: n - m }
        }
    };
    Ok(plan)
}

fn check_plan(sample: &IncrementSample, plan: &SamplePlan) -> Result<()> {
    if plan.n != sample.n() || plan.q + plan.m + plan.p != plan.n || plan.m == 0 || plan.p == 0 {
        return domain(format!("plan {plan:?} does not fit a sample of {} increments", sample.n()));
    }
    Ok(())
}

/// `V_n`: fraction of the preliminary block with `|Δ^{−1/β}(χ − b)| > 1`.
pub fn tail_frequency(sample: &IncrementSample, plan: &SamplePlan, law: &StableLaw, b_drift: f64) -> Result<f64> {
    check_plan(sample, plan)?;
    let cut = sample.delta.powf(1.0 / law.beta());
    let block = &sample.chi[plan.prelim_block()];
    let hits = block.iter().filter(|&&x| (x - b_drift).abs() > cut).count();
    Ok(hits as f64 / block.len() as f64)
}

/// `S_n = ψ^{−1}(V_n)` when `0 < V_n < 1`, and 1 otherwise.
pub fn preliminary_scale(sample: &IncrementSample, plan: &SamplePlan, law: &StableLaw, b_drift: f64) -> Result<f64> {
    let v = tail_frequency(sample, plan, law, b_drift)?;
    if v > 0.0 && v < 1.0 {
        Ok(law.tail_psi_inverse(v).unwrap_or(1.0))
    } else {
        Ok(1.0)
    }
}

/// `B_n`: the root of `u ↦ (1/m) Σ θ(Δ^{−1/β}(χ_i − u))` over the drift
/// block, with `θ(x) = (2/π) atan(x / theta_scale)`. Zero outside Case 1.
pub fn drift_estimator(sample: &IncrementSample, plan: &SamplePlan, law: &StableLaw, theta_scale: f64) -> Result<f64> {
    check_plan(sample, plan)?;
    if !(theta_scale > 0.0 && theta_scale.is_finite()) {
        return domain(format!("theta scale must be positive, got {theta_scale}"));
    }
    if !matches!(plan.case, PlanCase::SemiCase1 { .. }) {
        return Ok(0.0);
    }
    let block = &sample.chi[plan.drift_block()];
    let norm = sample.delta.powf(-1.0 / law.beta()) / theta_scale;
    let r = |u: f64| {
        let mut s = 0.0;
        for &x in block {
            s += ((x - u) * norm).atan();
        }
        FRAC_2_PI * s / block.len() as f64
    };
    let lo = block.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = block.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Ok(lo);
    }
    let tol = sample.delta.powf(1.0 / law.beta()) * 1e-8;
    Ok(bisect(r, lo, hi, r(lo), 0.0, tol))
}

/// Where the root of an estimating equation came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootDiagnostics {
    /// Grid cell containing the chosen root.
    pub bracket: Option<[f64; 2]>,
    /// Estimating function at the returned value.
    pub residual: Option<f64>,
    pub roots_found: usize,
    pub search_window: Option<[f64; 2]>,
    /// The chosen root lies in an outermost grid cell.
    pub on_boundary: bool,
}

impl RootDiagnostics {
    fn closed_form(residual: f64) -> Self {
        Self { bracket: None, residual: Some(residual), roots_found: 1, search_window: None, on_boundary: false }
    }

    fn none() -> Self {
        Self { bracket: None, residual: None, roots_found: 0, search_window: None, on_boundary: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootSolution {
    pub root: f64,
    pub fallback: bool,
    pub diagnostics: RootDiagnostics,
}

/// Solves `U(u) = 0` on the grid `s·2^{j/16}`, `|j| ≤ 64`: every sign change
/// is refined by bisection and the root closest to `s` wins, the smaller one
/// on ties. Returns `(1, fallback)` when there is no sign change.
pub fn solve_estimating_equation(mut u_fn: impl FnMut(f64) -> f64, s_center: f64) -> RootSolution {
    let fallback = |diagnostics| RootSolution { root: 1.0, fallback: true, diagnostics };
    if !(s_center > 0.0 && s_center.is_finite()) {
        return fallback(RootDiagnostics::none());
    }
    let half = SEARCH_OCTAVES * CELLS_PER_OCTAVE;
    let grid: Vec<f64> = (-half..=half).map(|j| s_center * 2f64.powf(j as f64 / CELLS_PER_OCTAVE as f64)).collect();
    let values: Vec<f64> = grid.iter().map(|&u| u_fn(u)).collect();
    let window = Some([grid[0], grid[grid.len() - 1]]);
    let last_cell = grid.len() - 2;

    let mut roots: Vec<(f64, usize)> = Vec::new();
    for (i, (&u, &f)) in grid.iter().zip(&values).enumerate() {
        if f == 0.0 {
            roots.push((u, i.min(last_cell)));
        }
    }
    for i in 0..=last_cell {
        let (fa, fb) = (values[i], values[i + 1]);
        if fa != 0.0 && fb != 0.0 && brackets(fa, fb) {
            roots.push((bisect(&mut u_fn, grid[i], grid[i + 1], fa, 1e-10, 0.0), i));
        }
    }
    if roots.is_empty() {
        return fallback(RootDiagnostics { search_window: window, ..RootDiagnostics::none() });
    }
    let tie = 1e-9 * s_center;
    let mut best = roots[0];
    for &cand in &roots[1..] {
        let (d_best, d_cand) = ((best.0 - s_center).abs(), (cand.0 - s_center).abs());
        if d_cand < d_best - tie || ((d_cand - d_best).abs() <= tie && cand.0 < best.0) {
            best = cand;
        }
    }
    let (root, cell) = best;
    RootSolution {
        root,
        fallback: false,
        diagnostics: RootDiagnostics {
            bracket: Some([grid[cell], grid[cell + 1]]),
            residual: Some(u_fn(root)).filter(|r| r.is_finite()),
            roots_found: roots.len(),
            search_window: window,
            on_boundary: cell == 0 || cell == last_cell,
        },
    }
}

/// Output of every estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimator: String,
    pub sigma_hat: f64,
    pub s_prelim: f64,
    pub b_drift: f64,
    pub fallback_used: bool,
    pub root_diagnostics: RootDiagnostics,
    /// Size of the main block.
    pub p: usize,
}

impl EstimateReport {
    fn from_root(estimator: String, sol: RootSolution, s_prelim: f64, b_drift: f64, p: usize) -> Self {
        Self {
            estimator,
            sigma_hat: sol.root,
            s_prelim,
            b_drift,
            fallback_used: sol.fallback,
            root_diagnostics: sol.diagnostics,
            p,
        }
    }
}

fn mean_over(values: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let mut s = 0.0;
    for &x in values {
        s += f(x);
    }
    s / values.len() as f64
}

/// `(B_n, S_n)` for the semiparametric estimators.
fn semiparametric_preliminaries(
    sample: &IncrementSample,
    plan: &SamplePlan,
    law: &StableLaw,
    theta_scale: f64,
) -> Result<(f64, f64)> {
    let b = drift_estimator(sample, plan, law, theta_scale)?;
    let s = preliminary_scale(sample, plan, law, b)?;
    Ok((b, s))
}

/// Root of `empirical − Ψ_G(u/s, 1/s, 0)` closest to `s`.
#[allow(clippy::too_many_arguments)]
pub fn parametric_from_statistic(
    k_n: &Kernel,
    law: &StableLaw,
    g: &PerturbationLaw,
    delta: f64,
    empirical: f64,
    s: f64,
    draws: Option<&PerturbationDraws>,
) -> Result<RootSolution> {
    let beta = law.beta();
    let probe = psi_g(k_n, law, g, beta, delta, 1.0, 1.0 / s, 0.0, draws)?;
    if probe.method == PsiMethod::MonteCarlo && !(probe.error_estimate < CENTERING_NOISE_THRESHOLD) {
        return Err(Error::CenteringTooNoisy { error: probe.error_estimate, threshold: CENTERING_NOISE_THRESHOLD });
    }
    let u_fn = |u: f64| match psi_g(k_n, law, g, beta, delta, u / s, 1.0 / s, 0.0, draws) {
        Ok(p) => empirical - p.value,
        Err(_) => f64::NAN,
    };
    Ok(solve_estimating_equation(u_fn, s))
}

/// Parametric estimator for a known perturbation law `g`.
///
/// Unbounded kernels are truncated at the level given by [`nu_schedule`].
/// Non-cosine kernels need `draws` of the rescaled perturbation to build the
/// centering.
#[allow(clippy::too_many_arguments)]
pub fn parametric_estimate(
    sample: &IncrementSample,
    plan: &SamplePlan,
    law: &StableLaw,
    g: &PerturbationLaw,
    phi: &PhiFunction,
    k: &Kernel,
    draws: Option<&PerturbationDraws>,
) -> Result<EstimateReport> {
    check_plan(sample, plan)?;
    g.validate()?;
    let beta = law.beta();
    if g.class_membership().alpha > beta {
        return domain(format!("perturbation {g} is rougher than the stable part (beta = {beta})"));
    }
    let delta = sample.delta;
    let shift = g.drift_correction(beta) * delta;
    let s = preliminary_scale(sample, plan, law, shift)?;
    let k_n = if k.is_bounded() {
        k.clone()
    } else {
        truncate_kernel(k, nu_schedule(phi, beta, delta, sample.n())?.nu)?
    };
    let norm = delta.powf(-1.0 / beta);
    let empirical = mean_over(&sample.chi[plan.main_block()], |x| k_n.eval((x - shift) * norm / s));
    let sol = parametric_from_statistic(&k_n, law, g, delta, empirical, s, draws)?;
    Ok(EstimateReport::from_root(format!("param[{}]", k.label()), sol, s, shift, plan.p))
}

/// Root of `empirical − Ψ_k(u/s, 0)` closest to `s`.
pub fn semiparametric_from_statistic(k: &Kernel, law: &StableLaw, empirical: f64, s: f64) -> RootSolution {
    let u_fn = |u: f64| match psi_k(k, law, u / s, 0.0) {
        Ok(p) => empirical - p.value,
        Err(_) => f64::NAN,
    };
    solve_estimating_equation(u_fn, s)
}

/// Semiparametric estimator with a bounded kernel and `Ψ_k` centering.
pub fn semiparametric_estimate(
    sample: &IncrementSample,
    plan: &SamplePlan,
    law: &StableLaw,
    k: &Kernel,
    theta_scale: f64,
) -> Result<EstimateReport> {
    if !k.is_bounded() {
        return domain(format!("semiparametric estimation needs a bounded kernel, got {}", k.label()));
    }
    let (b, s) = semiparametric_preliminaries(sample, plan, law, theta_scale)?;
    let norm = sample.delta.powf(-1.0 / law.beta());
    let empirical = mean_over(&sample.chi[plan.main_block()], |x| k.eval((x - b) * norm / s));
    let sol = semiparametric_from_statistic(k, law, empirical, s);
    Ok(EstimateReport::from_root(format!("semi[{}]", k.label()), sol, s, b, plan.p))
}

/// Explicit inverse of `m = exp(−(wσ/s)^β/2)`; `None` when `m ∉ (0, 1)`.
pub fn charfn_from_statistic(mean_cos: f64, w: f64, beta: f64, s: f64) -> Option<f64> {
    if mean_cos > 0.0 && mean_cos < 1.0 {
        Some(s * 2f64.powf(1.0 / beta) / w * (-mean_cos.ln()).powf(1.0 / beta))
    } else {
        None
    }
}

/// Closed-form estimator for the kernel `cos(w x)`.
pub fn charfn_estimate(
    sample: &IncrementSample,
    plan: &SamplePlan,
    law: &StableLaw,
    w: f64,
    theta_scale: f64,
) -> Result<EstimateReport> {
    if !(w > 0.0 && w.is_finite()) {
        return domain(format!("frequency must be positive, got {w}"));
    }
    let (b, s) = semiparametric_preliminaries(sample, plan, law, theta_scale)?;
    let norm = sample.delta.powf(-1.0 / law.beta());
    let mean_cos = mean_over(&sample.chi[plan.main_block()], |x| (w * (x - b) * norm / s).cos());
    let label = format!("charfn:w={w}");
    let report = match charfn_from_statistic(mean_cos, w, law.beta(), s) {
        Some(sigma_hat) => EstimateReport {
            estimator: label,
            sigma_hat,
            s_prelim: s,
            b_drift: b,
            fallback_used: false,
            root_diagnostics: RootDiagnostics::closed_form(0.0),
            p: plan.p,
        },
        None => EstimateReport {
            estimator: label,
            sigma_hat: 1.0,
            s_prelim: s,
            b_drift: b,
            fallback_used: true,
            root_diagnostics: RootDiagnostics::none(),
            p: plan.p,
        },
    };
    Ok(report)
}

fn inverted(center: impl Fn(f64) -> f64, target: f64, s: f64) -> (f64, bool, RootDiagnostics) {
    match invert_centering(&center, target, 1.0) {
        Ok(u) => (s * u, false, RootDiagnostics::closed_form(center(u) - target)),
        Err(_) => (1.0, true, RootDiagnostics::none()),
    }
}

/// `s · Ψ_{k_γ}^{−1}(target)` with the local inverse taken around 1.
pub fn truncated_power_from_statistic(
    target: f64,
    r: f64,
    gamma_cut: f64,
    law: &StableLaw,
    s: f64,
) -> Result<(f64, bool)> {
    let k = make_truncated_power_kernel(r, gamma_cut)?;
    let (sigma_hat, fallback, _) = inverted(|u| psi_k(&k, law, u, 0.0).map_or(f64::NAN, |p| p.value), target, s);
    Ok((sigma_hat, fallback))
}

/// Truncated power variation estimator: `S_n Ψ_{k_γ}^{−1}(V_n(γS_n)/S_n^r)`.
pub fn truncated_power_estimate(
    sample: &IncrementSample,
    plan: &SamplePlan,
    law: &StableLaw,
    r: f64,
    gamma_cut: f64,
    theta_scale: f64,
) -> Result<EstimateReport> {
    let k = make_truncated_power_kernel(r, gamma_cut)?;
    let (b, s) = semiparametric_preliminaries(sample, plan, law, theta_scale)?;
    let scale = sample.delta.powf(1.0 / law.beta());
    let cut = gamma_cut * s * scale;
    let v = mean_over(&sample.chi[plan.main_block()], |x| {
        let d = (x - b).abs();
        if d <= cut {
            (d / scale).powf(r)
        } else {
            0.0
        }
    });
    let center = |u: f64| psi_k(&k, law, u, 0.0).map_or(f64::NAN, |p| p.value);
    let (sigma_hat, fallback, diag) = inverted(center, v / s.powf(r), s);
    Ok(EstimateReport {
        estimator: format!("tpow:r={r},g={gamma_cut}"),
        sigma_hat,
        s_prelim: s,
        b_drift: b,
        fallback_used: fallback,
        root_diagnostics: diag,
        p: plan.p,
    })
}

/// `H(u) = Δ^{−r/2} E(|uW_Δ|^r 1{|uW_Δ| ≤ cΔ^{1/2+κ}})` for Brownian `W`.
pub fn section8_centering(u: f64, r: f64, c: f64, kappa: f64, delta: f64) -> Result<f64> {
    let m = if c.is_infinite() {
        moment_gaussian(r, u, delta)?
    } else {
        truncated_moment_gaussian(r, u, delta, c * delta.powf(0.5 + kappa))?
    };
    Ok(m * delta.powf(-r / 2.0))
}

/// `s · H^{−1}(target)` with the local inverse taken around 1.
pub fn section8_from_statistic(target: f64, r: f64, c: f64, kappa: f64, delta: f64, s: f64) -> (f64, bool) {
    let center = |u: f64| section8_centering(u, r, c, kappa, delta).unwrap_or(f64::NAN);
    let (sigma_hat, fallback, _) = inverted(center, target, s);
    (sigma_hat, fallback)
}

fn check_section8_args(r: f64, c: f64, kappa: f64) -> Result<()> {
    if !(r > 0.0 && r.is_finite()) || !(c > 0.0) || !(kappa > -0.5 && kappa.is_finite()) {
        return domain(format!("need r > 0, c > 0, kappa > -1/2; got r={r}, c={c}, kappa={kappa}"));
    }
    Ok(())
}

/// Power variation truncated at `τ(Δ) = c S_n Δ^{1/2+κ}` for the Brownian
/// model with a symmetric perturbation; `c = ∞` disables truncation.
pub fn section8_estimate(
    sample: &IncrementSample,
    plan: &SamplePlan,
    r: f64,
    c: f64,
    kappa: f64,
) -> Result<EstimateReport> {
    check_section8_args(r, c, kappa)?;
    let law = StableLaw::gaussian();
    let s = preliminary_scale(sample, plan, &law, 0.0)?;
    let delta = sample.delta;
    let tau = c * s * delta.powf(0.5 + kappa);
    let v = mean_over(&sample.chi[plan.main_block()], |x| {
        if x.abs() <= tau {
            x.abs().powf(r)
        } else {
            0.0
        }
    }) * delta.powf(-r / 2.0);
    let target = v / s.powf(r);
    let center = |u: f64| section8_centering(u, r, c, kappa, delta).unwrap_or(f64::NAN);
    let (sigma_hat, fallback, diag) = inverted(center, target, s);
    Ok(EstimateReport {
        estimator: format!("sec8:r={r},c={c},kappa={kappa}"),
        sigma_hat,
        s_prelim: s,
        b_drift: 0.0,
        fallback_used: fallback,
        root_diagnostics: diag,
        p: plan.p,
    })
}

/// Choice of estimator, as used by the command line and experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorSpec {
    /// Known perturbation law; `kernel` is a kernel spec such as `cos:w=1`.
    Parametric { kernel: String },
    Semiparametric { kernel: String },
    Charfn { w: f64 },
    TruncatedPower { r: f64, cut: f64 },
    Section8 {
        r: f64,
        #[serde(with = "number_or_inf")]
        c: f64,
        #[serde(default)]
        kappa: f64,
    },
}

impl fmt::Display for EstimatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimatorSpec::Parametric { kernel } => write!(f, "param[{kernel}]"),
            EstimatorSpec::Semiparametric { kernel } => write!(f, "semi[{kernel}]"),
            EstimatorSpec::Charfn { w } => write!(f, "charfn:w={w}"),
            EstimatorSpec::TruncatedPower { r, cut } => write!(f, "tpow:r={r},g={cut}"),
            EstimatorSpec::Section8 { r, c, kappa } => write!(f, "sec8:r={r},c={c},kappa={kappa}"),
        }
    }
}

impl FromStr for EstimatorSpec {
    type Err = Error;

    /// `param[<kernel>]`, `semi[<kernel>]`, `charfn:w=0.5`, `tpow:r=2,g=3`,
    /// `sec8:r=2,c=3,kappa=0` (`c=inf` for no truncation).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(open) = s.find('[') {
            let name = &s[..open];
            let kernel = s[open + 1..]
                .strip_suffix(']')
                .ok_or_else(|| Error::Parse(format!("unbalanced brackets in '{s}'")))?
                .trim()
                .to_string();
            return match name {
                "param" => Ok(EstimatorSpec::Parametric { kernel }),
                "semi" => Ok(EstimatorSpec::Semiparametric { kernel }),
                other => Err(Error::Parse(format!("estimator '{other}' takes no kernel"))),
            };
        }
        let spec = SpecString::parse(s)?;
        match spec.name {
            "charfn" => {
                spec.only(&["w"])?;
                Ok(EstimatorSpec::Charfn { w: spec.req("w")? })
            }
            "tpow" => {
                spec.only(&["r", "g"])?;
                Ok(EstimatorSpec::TruncatedPower { r: spec.req("r")?, cut: spec.req("g")? })
            }
            "sec8" => {
                spec.only(&["r", "c", "kappa"])?;
                Ok(EstimatorSpec::Section8 { r: spec.req("r")?, c: spec.req("c")?, kappa: spec.or("kappa", 0.0)? })
            }
            other => Err(Error::Parse(format!("unknown estimator '{other}'"))),
        }
    }
}

/// Everything besides the data that an estimator run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationContext {
    pub law: StableLaw,
    pub case: PlanCase,
    /// Perturbation law for the parametric estimator; falls back to the
    /// sample's metadata.
    #[serde(default)]
    pub perturbation: Option<PerturbationLaw>,
    #[serde(default = "default_theta_scale")]
    pub theta_scale: f64,
    /// Paths for simulated centerings.
    #[serde(default = "default_mc_paths")]
    pub mc_paths: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_theta_scale() -> f64 {
    1.0
}

fn default_mc_paths() -> usize {
    100_000
}

impl EstimationContext {
    pub fn new(law: StableLaw, case: PlanCase) -> Self {
        Self { law, case, perturbation: None, theta_scale: 1.0, mc_paths: default_mc_paths(), seed: 0 }
    }
}

/// Default small-jump bound `φ(x) = ζ x^{β−α}` for a perturbation in the
/// class `x^α F([−x, x]^c) ≤ ζ`.
pub fn default_phi(g: &PerturbationLaw, beta: f64) -> PhiFunction {
    let tag = g.class_membership();
    PhiFunction::power(tag.zeta, beta - tag.alpha)
}

/// Runs `spec` on `sample`.
pub fn estimate(sample: &IncrementSample, spec: &EstimatorSpec, ctx: &EstimationContext) -> Result<EstimateReport> {
    let plan = make_plan(sample.n(), ctx.case)?;
    let law = &ctx.law;
    match spec {
        EstimatorSpec::Parametric { kernel } => {
            let g = ctx
                .perturbation
                .or_else(|| sample.meta.as_ref().map(|m| m.perturbation))
                .ok_or_else(|| Error::Domain("parametric estimation needs the perturbation law".into()))?;
            let k = Kernel::parse(kernel, law)?;
            let needs_draws = k.cos_frequency().is_none() && !matches!(g, PerturbationLaw::PureDrift { .. });
            let draws = if needs_draws {
                let mut rng = ChaCha20Rng::seed_from_u64(ctx.seed);
                Some(PerturbationDraws::sample(&g, law, sample.delta, ctx.mc_paths, &mut rng)?)
            } else {
                None
            };
            parametric_estimate(sample, &plan, law, &g, &default_phi(&g, law.beta()), &k, draws.as_ref())
        }
        EstimatorSpec::Semiparametric { kernel } => {
            let k = Kernel::parse(kernel, law)?;
            semiparametric_estimate(sample, &plan, law, &k, ctx.theta_scale)
        }
        EstimatorSpec::Charfn { w } => charfn_estimate(sample, &plan, law, *w, ctx.theta_scale),
        EstimatorSpec::TruncatedPower { r, cut } => {
            truncated_power_estimate(sample, &plan, law, *r, *cut, ctx.theta_scale)
        }
        EstimatorSpec::Section8 { r, c, kappa } => {
            if !law.is_gaussian() {
                return domain("the truncated power variation estimator assumes a Brownian stable part");
            }
            section8_estimate(sample, &plan, *r, *c, *kappa)
        }
    }
}

/// Kernel equivalent to `spec` for the variance formulas, if there is one.
pub fn spec_kernel(spec: &EstimatorSpec, law: &StableLaw) -> Result<Option<Kernel>> {
    Ok(match spec {
        EstimatorSpec::Parametric { kernel } | EstimatorSpec::Semiparametric { kernel } => {
            Some(Kernel::parse(kernel, law)?)
        }
        EstimatorSpec::Charfn { w } => Some(make_cos_kernel(*w)?),
        EstimatorSpec::TruncatedPower { r, cut } => Some(make_truncated_power_kernel(*r, *cut)?),
        EstimatorSpec::Section8 { .. } => None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::make_optimal_kernel;
    use crate::levy_models::sample_increments;

    fn gaussian_sample(sigma: f64, g: &PerturbationLaw, delta: f64, n: usize, seed: u64) -> IncrementSample {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        sample_increments(sigma, g, &StableLaw::gaussian(), delta, n, &mut rng).unwrap()
    }

    fn mean_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (v / n).sqrt())
    }

    #[test]
    fn plan_examples() {
        let p = make_plan(1000, PlanCase::SemiCase1 { delta_frac: 0.1 }).unwrap();
        assert_eq!((p.m, p.q, p.p), (100, 100, 800));
        let p = make_plan(1000, PlanCase::SemiCase2).unwrap();
        assert_eq!((p.m, p.q, p.p), (100, 0, 900));
        assert_eq!(p.prelim_block(), 0..100);
        assert_eq!(p.main_block(), 100..1000);
        assert!(make_plan(19, PlanCase::SemiCase2).is_err());
        assert!(make_plan(100, PlanCase::SemiCase1 { delta_frac: 0.5 }).is_err());
    }

    #[test]
    fn plan_blocks_are_disjoint_and_ordered() {
        for n in [20, 57, 1000, 12345] {
            for case in [PlanCase::Parametric, PlanCase::SemiCase2, PlanCase::SemiCase1 { delta_frac: 0.2 }] {
                let p = make_plan(n, case).unwrap();
                assert!(p.drift_block().end <= p.prelim_block().start);
                assert!(p.prelim_block().end <= p.main_block().start);
                assert_eq!(p.main_block().end, n);
                assert_eq!(p.m + p.q + p.p, n);
                assert!(p.m > 0 && p.p > 0);
            }
        }
    }

    #[test]
    fn plan_case_parsing() {
        assert_eq!("case2".parse::<PlanCase>().unwrap(), PlanCase::SemiCase2);
        assert_eq!("case1:delta=0.2".parse::<PlanCase>().unwrap(), PlanCase::SemiCase1 { delta_frac: 0.2 });
        assert_eq!("param".parse::<PlanCase>().unwrap(), PlanCase::Parametric);
        for c in [PlanCase::Parametric, PlanCase::SemiCase2, PlanCase::SemiCase1 { delta_frac: 0.15 }] {
            assert_eq!(c.to_string().parse::<PlanCase>().unwrap(), c);
        }
    }

    #[test]
    fn solver_examples() {
        let sol = solve_estimating_equation(|u| u - 1.3, 1.0);
        assert!(!sol.fallback);
        assert!((sol.root - 1.3).abs() < 1e-9);
        let sol = solve_estimating_equation(|u| (u - 0.8) * (u - 1.2), 1.0);
        assert!((sol.root - 0.8).abs() < 1e-9, "{}", sol.root);
        assert_eq!(sol.diagnostics.roots_found, 2);
        let sol = solve_estimating_equation(|_| 5.0, 1.0);
        assert!(sol.fallback);
        assert_eq!(sol.root, 1.0);
    }

    #[test]
    fn solver_prefers_closest_root_and_flags_boundary() {
        let sol = solve_estimating_equation(|u| (u - 0.7) * (u - 1.2), 1.0);
        assert!((sol.root - 1.2).abs() < 1e-9);
        let sol = solve_estimating_equation(|u| u - 15.5, 1.0);
        assert!((sol.root - 15.5).abs() < 1e-8);
        assert!(sol.diagnostics.on_boundary);
        // non-finite values break the bracket
        let sol = solve_estimating_equation(|u| if u > 1.1 && u < 1.5 { f64::NAN } else { u - 1.3 }, 1.0);
        assert!(sol.fallback);
        // root exactly on a grid node
        let sol = solve_estimating_equation(|u| u - 2.0, 1.0);
        assert_eq!(sol.root, 2.0);
        assert_eq!(sol.diagnostics.roots_found, 1);
    }

    #[test]
    fn preliminary_scale_fallbacks_and_roundtrip() {
        let law = StableLaw::gaussian();
        let delta = 1e-2;
        let big = IncrementSample::new(vec![5.0; 100], delta).unwrap();
        let plan = make_plan(100, PlanCase::SemiCase2).unwrap();
        assert_eq!(preliminary_scale(&big, &plan, &law, 0.0).unwrap(), 1.0);
        let small = IncrementSample::new(vec![0.0; 100], delta).unwrap();
        assert_eq!(preliminary_scale(&small, &plan, &law, 0.0).unwrap(), 1.0);
        // 7 of the 22 preliminary increments exceed Δ^{1/2}
        let mut chi = vec![0.05; 100];
        for x in chi.iter_mut().take(7) {
            *x = 0.3;
        }
        let s = IncrementSample::new(chi, delta).unwrap();
        assert_eq!(plan.m, 22);
        let v = tail_frequency(&s, &plan, &law, 0.0).unwrap();
        assert_eq!(v, 7.0 / 22.0);
        let scale = preliminary_scale(&s, &plan, &law, 0.0).unwrap();
        assert!((law.tail_psi(scale).unwrap() - v).abs() < 1e-12);
    }

    #[test]
    fn preliminary_scale_is_consistent() {
        let law = StableLaw::gaussian();
        let g = PerturbationLaw::GaussianCompoundPoisson { lambda: 1.0, eta: 0.5, b: 0.0 };
        let mut values = Vec::new();
        for rep in 0..100 {
            let s = gaussian_sample(1.5, &g, 1e-3, 2000, 100 + rep);
            let plan = SamplePlan { case: PlanCase::SemiCase2, n: 2000, m: 2000, q: 0, p: 0 };
            // full-sample preliminary block
            let v = s.chi.iter().filter(|x| x.abs() > 1e-3f64.sqrt()).count() as f64 / 2000.0;
            values.push(law.tail_psi_inverse(v).unwrap());
            let _ = plan;
        }
        let (m, _) = mean_se(&values);
        assert!((m - 1.5).abs() < 0.1, "{m}");
        let inside = values.iter().filter(|v| (**v - 1.5).abs() < 0.1).count();
        assert!(inside >= 95, "{inside}");
    }

    #[test]
    fn drift_estimator_symmetric_and_equivariant() {
        let law = StableLaw::gaussian();
        let v0 = 0.0123;
        let mut chi = Vec::new();
        for i in 0..60 {
            let d = 0.01 * (1.0 + i as f64 * 0.37).sin();
            chi.push(v0 + d);
            chi.push(v0 - d);
        }
        chi.extend(std::iter::repeat_n(0.5, 200));
        let s = IncrementSample::new(chi.clone(), 1e-4).unwrap();
        let plan = make_plan(320, PlanCase::SemiCase1 { delta_frac: 0.375 }).unwrap();
        assert_eq!(plan.q, 120);
        let b = drift_estimator(&s, &plan, &law, 1.0).unwrap();
        assert!((b - v0).abs() < 1e-9, "{b}");
        let neg = IncrementSample::new(chi.iter().map(|x| -x).collect(), 1e-4).unwrap();
        assert_eq!(drift_estimator(&neg, &plan, &law, 1.0).unwrap(), -b);
        let block = &chi[plan.drift_block()];
        assert!(block.iter().any(|&x| x <= b) && block.iter().any(|&x| x >= b));
        let case2 = make_plan(320, PlanCase::SemiCase2).unwrap();
        assert_eq!(drift_estimator(&s, &case2, &law, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn drift_estimator_recovers_drift() {
        let law = StableLaw::gaussian();
        let g = PerturbationLaw::PureDrift { b: 0.5 };
        let delta = 1e-3;
        let n = 100_000;
        let plan = make_plan(n, PlanCase::SemiCase1 { delta_frac: 0.1 }).unwrap();
        let values: Vec<f64> = (0..200)
            .map(|rep| drift_estimator(&gaussian_sample(1.0, &g, delta, n, 500 + rep), &plan, &law, 1.0).unwrap() / delta)
            .collect();
        let (m, se) = mean_se(&values);
        assert!((m - 0.5).abs() < 0.1, "{m} ± {se}");
    }

    #[test]
    fn charfn_exact_and_fallback() {
        let (w, sigma0, beta) = (0.5f64, 1.37f64, 1.5f64);
        let m = (-(w * sigma0).powf(beta) / 2.0).exp();
        let v = charfn_from_statistic(m, w, beta, 1.0).unwrap();
        assert!((v - sigma0).abs() < 1e-12);
        assert!(charfn_from_statistic(0.0, w, beta, 1.0).is_none());
        assert!(charfn_from_statistic(-0.2, w, beta, 1.0).is_none());
        // every increment on a trough of the cosine
        let law = StableLaw::gaussian();
        let delta = 1e-2f64;
        let x = std::f64::consts::PI / 0.5 * delta.sqrt();
        let s = IncrementSample::new(vec![x; 200], delta).unwrap();
        let plan = make_plan(200, PlanCase::SemiCase2).unwrap();
        let r = charfn_estimate(&s, &plan, &law, 0.5, 1.0).unwrap();
        assert!(r.fallback_used);
        assert_eq!(r.sigma_hat, 1.0);
    }

    #[test]
    fn charfn_matches_semiparametric_cos() {
        let g = PerturbationLaw::GaussianCompoundPoisson { lambda: 1.0, eta: 0.5, b: 0.2 };
        for &beta in &[2.0, 1.5] {
            let law = StableLaw::new(beta).unwrap();
            let mut rng = ChaCha20Rng::seed_from_u64(9);
            let s = sample_increments(1.2, &g, &law, 1e-3, 5000, &mut rng).unwrap();
            for case in [PlanCase::SemiCase2, PlanCase::SemiCase1 { delta_frac: 0.1 }] {
                let plan = make_plan(s.n(), case).unwrap();
                let a = charfn_estimate(&s, &plan, &law, 0.5, 1.0).unwrap();
                let b = semiparametric_estimate(&s, &plan, &law, &make_cos_kernel(0.5).unwrap(), 1.0).unwrap();
                assert!(!a.fallback_used && !b.fallback_used);
                assert!((a.sigma_hat - b.sigma_hat).abs() < 1e-8, "{} vs {}", a.sigma_hat, b.sigma_hat);
            }
        }
    }

    #[test]
    fn semiparametric_exact_root() {
        let sigma0 = 1.21;
        for &beta in &[2.0, 1.5] {
            let law = StableLaw::new(beta).unwrap();
            let kernels = [
                make_cos_kernel(0.7).unwrap(),
                make_truncated_power_kernel(2.0, 3.0).unwrap(),
                make_truncated_power_kernel(0.6, 5.0).unwrap(),
            ];
            for k in &kernels {
                for &s in &[1.0, 1.1] {
                    let emp = psi_k(k, &law, sigma0 / s, 0.0).unwrap().value;
                    let sol = semiparametric_from_statistic(k, &law, emp, s);
                    assert!(!sol.fallback);
                    assert!((sol.root - sigma0).abs() < 1e-8, "{} beta={beta}: {}", k.label(), sol.root);
                }
            }
        }
        let law = StableLaw::new(1.5).unwrap();
        let k = make_optimal_kernel(&law);
        let emp = psi_k(&k, &law, sigma0, 0.0).unwrap().value;
        let sol = semiparametric_from_statistic(&k, &law, emp, 1.0);
        assert!((sol.root - sigma0).abs() < 1e-8, "{}", sol.root);
    }

    #[test]
    fn semiparametric_rejects_unbounded_kernel() {
        let law = StableLaw::gaussian();
        let s = gaussian_sample(1.0, &PerturbationLaw::none(), 1e-3, 100, 1);
        let plan = make_plan(100, PlanCase::SemiCase2).unwrap();
        let k = crate::kernels::make_power_kernel(2.0).unwrap();
        assert!(semiparametric_estimate(&s, &plan, &law, &k, 1.0).is_err());
    }

    #[test]
    fn semiparametric_monte_carlo() {
        let law = StableLaw::gaussian();
        let g = PerturbationLaw::GaussianCompoundPoisson { lambda: 1.0, eta: 0.5, b: 0.0 };
        let n = 10_000;
        let delta = (n as f64).powf(-1.2);
        let plan = make_plan(n, PlanCase::SemiCase2).unwrap();
        let k = make_cos_kernel(0.5).unwrap();
        let values: Vec<f64> = (0..200)
            .map(|rep| {
                let s = gaussian_sample(1.0, &g, delta, n, 1000 + rep);
                semiparametric_estimate(&s, &plan, &law, &k, 1.0).unwrap().sigma_hat
            })
            .collect();
        let (m, se) = mean_se(&values);
        assert!((m - 1.0).abs() < 3.0 * se, "{m} ± {se}");
    }

    #[test]
    fn truncated_power_exact_and_fallback() {
        let law = StableLaw::gaussian();
        let k = make_truncated_power_kernel(2.0, 3.0).unwrap();
        let sigma0 = 1.13;
        let target = psi_k(&k, &law, sigma0, 0.0).unwrap().value;
        let (v, fb) = truncated_power_from_statistic(target, 2.0, 3.0, &law, 1.0).unwrap();
        assert!(!fb);
        assert!((v - sigma0).abs() < 1e-8);
        // Ψ_{k_γ}(·, 0) is bounded, so large targets have no preimage
        let (v, fb) = truncated_power_from_statistic(100.0, 2.0, 3.0, &law, 1.0).unwrap();
        assert!(fb);
        assert_eq!(v, 1.0);
    }

    #[test]
    fn truncated_power_monte_carlo() {
        let law = StableLaw::gaussian();
        let g = PerturbationLaw::GaussianCompoundPoisson { lambda: 1.0, eta: 0.5, b: 0.0 };
        let (n, delta) = (10_000, 1e-4);
        let plan = make_plan(n, PlanCase::SemiCase2).unwrap();
        let values: Vec<f64> = (0..200)
            .map(|rep| {
                let s = gaussian_sample(1.0, &g, delta, n, 3000 + rep);
                truncated_power_estimate(&s, &plan, &law, 2.0, 3.0, 1.0).unwrap().sigma_hat
            })
            .collect();
        let (m, se) = mean_se(&values);
        // the jump-induced bias is O(Δ) and negligible here
        assert!((m - 1.0).abs() < 3.0 * se + 1e-3, "{m} ± {se}");
    }

    #[test]
    fn section8_reduces_to_truncated_power() {
        let law = StableLaw::gaussian();
        let g = PerturbationLaw::GaussianCompoundPoisson { lambda: 5.0, eta: 0.5, b: 0.0 };
        let s = gaussian_sample(1.0, &g, 1e-3, 20_000, 77);
        let plan = make_plan(s.n(), PlanCase::SemiCase2).unwrap();
        let a = section8_estimate(&s, &plan, 2.0, 3.0, 0.0).unwrap();
        let b = truncated_power_estimate(&s, &plan, &law, 2.0, 3.0, 1.0).unwrap();
        assert!((a.sigma_hat - b.sigma_hat).abs() < 1e-8, "{} vs {}", a.sigma_hat, b.sigma_hat);
        let sigma0 = 0.9;
        let target = section8_centering(sigma0, 1.5, 2.0, 0.2, 1e-3).unwrap();
        let (v, fb) = section8_from_statistic(target, 1.5, 2.0, 0.2, 1e-3, 1.0);
        assert!(!fb);
        assert!((v - sigma0).abs() < 1e-8);
    }

    #[test]
    fn section8_untruncated_square_confounds_jumps() {
        let g = PerturbationLaw::GaussianCompoundPoisson { lambda: 1.0, eta: 0.5, b: 0.0 };
        let (n, delta) = (20_000, 1e-2);
        let plan = make_plan(n, PlanCase::SemiCase2).unwrap();
        let values: Vec<f64> = (0..100)
            .map(|rep| section8_estimate(&gaussian_sample(1.0, &g, delta, n, 4000 + rep), &plan, 2.0, f64::INFINITY, 0.0)
                .unwrap()
                .sigma_hat)
            .collect();
        let (m, se) = mean_se(&values);
        assert!((m - 1.5f64.sqrt()).abs() < 3.0 * se + 2e-3, "{m} ± {se}");
        assert!((m - 1.0).abs() > 10.0 * se);
    }

    #[test]
    fn parametric_exact_root_closed_form() {
        let law = StableLaw::gaussian();
        let g = PerturbationLaw::GaussianCompoundPoisson { lambda: 2.0, eta: 0.5, b: 0.0 };
        let k = make_cos_kernel(0.8).unwrap();
        let (sigma0, s, delta) = (1.07, 1.02, 1e-2);
        let emp = psi_g(&k, &law, &g, 2.0, delta, sigma0 / s, 1.0 / s, 0.0, None).unwrap().value;
        let sol = parametric_from_statistic(&k, &law, &g, delta, emp, s, None).unwrap();
        assert!((sol.root - sigma0).abs() < 1e-8, "{}", sol.root);
    }

    #[test]
    fn parametric_exact_root_monte_carlo_centering() {
        let law = StableLaw::gaussian();
        let g = PerturbationLaw::GaussianCompoundPoisson { lambda: 1.0, eta: 0.5, b: 0.0 };
        let k = make_truncated_power_kernel(2.0, 3.0).unwrap();
        let delta = 1e-3;
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let draws = PerturbationDraws::sample(&g, &law, delta, 400_000, &mut rng).unwrap();
        let sigma0 = 0.95;
        let emp = psi_g(&k, &law, &g, 2.0, delta, sigma0, 1.0, 0.0, Some(&draws)).unwrap().value;
        let sol = parametric_from_statistic(&k, &law, &g, delta, emp, 1.0, Some(&draws)).unwrap();
        assert!((sol.root - sigma0).abs() < 1e-8, "{}", sol.root);
        // too few paths for a noisy perturbation
        let loud = PerturbationLaw::GaussianCompoundPoisson { lambda: 50.0, eta: 2.0, b: 0.0 };
        let draws = PerturbationDraws::sample(&loud, &law, 0.1, 50, &mut rng).unwrap();
        let err = parametric_from_statistic(&k, &law, &loud, 0.1, 1.0, 1.0, Some(&draws)).unwrap_err();
        assert!(matches!(err, Error::CenteringTooNoisy { .. }));
    }

    #[test]
    fn parametric_without_perturbation_is_unbiased() {
        let law = StableLaw::gaussian();
        let g = PerturbationLaw::GaussianCompoundPoisson { lambda: 0.0, eta: 0.5, b: 0.0 };
        let k = make_cos_kernel(0.5).unwrap();
        let phi = default_phi(&g, 2.0);
        let (n, delta) = (5000, 1e-3);
        let plan = make_plan(n, PlanCase::Parametric).unwrap();
        let values: Vec<f64> = (0..200)
            .map(|rep| {
                let s = gaussian_sample(1.3, &g, delta, n, 6000 + rep);
                parametric_estimate(&s, &plan, &law, &g, &phi, &k, None).unwrap().sigma_hat
            })
            .collect();
        let (m, se) = mean_se(&values);
        assert!((m - 1.3).abs() < 3.0 * se, "{m} ± {se}");
    }

    #[test]
    fn parametric_truncates_unbounded_kernels() {
        let law = StableLaw::gaussian();
        let g = PerturbationLaw::GaussianCompoundPoisson { lambda: 1.0, eta: 0.5, b: 0.0 };
        let s = gaussian_sample(1.0, &g, 1e-3, 3000, 8);
        let ctx = EstimationContext::new(law, PlanCase::Parametric);
        let r = estimate(&s, &"param[pow:r=0.5]".parse().unwrap(), &ctx).unwrap();
        assert!(!r.fallback_used);
        assert!((r.sigma_hat - 1.0).abs() < 0.1, "{}", r.sigma_hat);
        let again = estimate(&s, &"param[pow:r=0.5]".parse().unwrap(), &ctx).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn spec_strings_and_json() {
        for text in ["param[cos:w=1]", "semi[tpow:r=2,g=3]", "charfn:w=0.5", "tpow:r=2,g=3", "sec8:r=2,c=inf,kappa=0.4"] {
            let spec: EstimatorSpec = text.parse().unwrap();
            assert_eq!(spec.to_string(), text);
            let json = serde_json::to_string(&spec).unwrap();
            let back: EstimatorSpec = serde_json::from_str(&json).unwrap();
            assert_eq!(back, spec);
        }
        assert!("charfn[cos:w=1]".parse::<EstimatorSpec>().is_err());
        assert!("semi[cos:w=1".parse::<EstimatorSpec>().is_err());
        assert!("mle".parse::<EstimatorSpec>().is_err());
    }

    #[test]
    fn reports_are_deterministic_and_serializable() {
        let g = PerturbationLaw::GaussianCompoundPoisson { lambda: 1.0, eta: 0.5, b: 0.1 };
        let s = gaussian_sample(1.0, &g, 1e-3, 4000, 12);
        let ctx = EstimationContext::new(StableLaw::gaussian(), PlanCase::SemiCase1 { delta_frac: 0.1 });
        for text in ["semi[cos:w=0.5]", "charfn:w=0.5", "tpow:r=2,g=3", "sec8:r=1,c=3,kappa=0"] {
            let spec: EstimatorSpec = text.parse().unwrap();
            let a = estimate(&s, &spec, &ctx).unwrap();
            let b = estimate(&s, &spec, &ctx).unwrap();
            assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
            let back: EstimateReport = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
            assert_eq!(back.sigma_hat.to_bits(), a.sigma_hat.to_bits());
        }
    }
}
