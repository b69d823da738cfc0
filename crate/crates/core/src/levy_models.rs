//! Perturbation laws for `Y`, their domination classes, and simulation of
//! increments of `X = σW + Y`.

use std::f64::consts::PI;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use libm::tgamma;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::params::SpecString;
use crate::stable_core::{sample_standard, StableLaw};

/// Law of `Y_1`. Every variant has no Gaussian part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PerturbationLaw {
    PureDrift { b: f64 },
    /// Drift `b` plus jumps at rate `lambda` with `N(0, eta)` sizes.
    GaussianCompoundPoisson { lambda: f64, eta: f64, b: f64 },
    /// `scale · S_α` with `S_α` having characteristic function `exp(−|u|^α/2)`.
    SymmetricStable { alpha: f64, scale: f64 },
}

/// Domination class `x^α F([−x, x]^c) ≤ ζ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassTag {
    pub alpha: f64,
    pub zeta: f64,
    pub symmetric: bool,
}

impl PerturbationLaw {
    pub fn none() -> Self {
        PerturbationLaw::PureDrift { b: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PerturbationLaw::PureDrift { b } if b.is_finite() => Ok(()),
            PerturbationLaw::GaussianCompoundPoisson { lambda, eta, b }
                if lambda >= 0.0 && lambda.is_finite() && eta > 0.0 && eta.is_finite() && b.is_finite() =>
            {
                Ok(())
            }
            PerturbationLaw::SymmetricStable { alpha, scale }
                if alpha > 0.0 && alpha < 2.0 && scale > 0.0 && scale.is_finite() =>
            {
                Ok(())
            }
            _ => domain(format!("invalid perturbation law {self:?}")),
        }
    }

    /// Drift `b` of the characteristic triple.
    pub fn drift(&self) -> f64 {
        match *self {
            PerturbationLaw::PureDrift { b } | PerturbationLaw::GaussianCompoundPoisson { b, .. } => b,
            PerturbationLaw::SymmetricStable { .. } => 0.0,
        }
    }

    /// `b'(G, α)`: the drift with the small-jump compensator removed when
    /// `α < 1`. Every supported jump measure is symmetric, so the correction
    /// term vanishes and `b' = b` on both branches.
    pub fn drift_correction(&self, _alpha: f64) -> f64 {
        self.drift()
    }

    /// Constant `C` of the Lévy density `C|x|^{−1−α}` of the stable variant.
    fn stable_levy_constant(alpha: f64, scale: f64) -> f64 {
        // ∫_0^∞ (1 − cos y) y^{−1−α} dy
        let k = if alpha == 1.0 {
            PI / 2.0
        } else {
            tgamma(1.0 - alpha) * (PI * alpha / 2.0).cos() / alpha
        };
        scale.powf(alpha) / (4.0 * k)
    }

    pub fn class_membership(&self) -> ClassTag {
        match *self {
            PerturbationLaw::PureDrift { b } => ClassTag { alpha: 0.0, zeta: 0.0, symmetric: b == 0.0 },
            PerturbationLaw::GaussianCompoundPoisson { lambda, b, .. } => {
                ClassTag { alpha: 0.0, zeta: lambda, symmetric: b == 0.0 }
            }
            PerturbationLaw::SymmetricStable { alpha, scale } => {
                // x^α F([−x, x]^c) = 2C/α for every x
                let c = Self::stable_levy_constant(alpha, scale);
                ClassTag { alpha, zeta: 2.0 * c / alpha, symmetric: true }
            }
        }
    }

    /// `log E exp(i s Y_1)` as `(re, im)`.
    pub fn char_exponent(&self, s: f64) -> (f64, f64) {
        match *self {
            PerturbationLaw::PureDrift { b } => (0.0, s * b),
            PerturbationLaw::GaussianCompoundPoisson { lambda, eta, b } => {
                (lambda * (-0.5 * s * s * eta).exp_m1(), s * b)
            }
            PerturbationLaw::SymmetricStable { alpha, scale } => {
                (-0.5 * (scale * s.abs()).powf(alpha), 0.0)
            }
        }
    }

    /// One draw of `Y_Δ − b'Δ`.
    pub fn sample_centered<R: Rng + ?Sized>(&self, delta: f64, rng: &mut R) -> f64 {
        match *self {
            PerturbationLaw::PureDrift { .. } => 0.0,
            PerturbationLaw::GaussianCompoundPoisson { lambda, eta, .. } => {
                let jumps = sample_poisson(lambda * delta, rng);
                if jumps == 0 {
                    0.0
                } else {
                    let z: f64 = rng.sample(StandardNormal);
                    (jumps as f64 * eta).sqrt() * z
                }
            }
            PerturbationLaw::SymmetricStable { alpha, scale } => {
                let s = 0.5f64.powf(1.0 / alpha) * sample_standard(alpha, rng);
                scale * delta.powf(1.0 / alpha) * s
            }
        }
    }

    /// One draw of `Y_Δ`.
    pub fn sample_increment<R: Rng + ?Sized>(&self, delta: f64, rng: &mut R) -> f64 {
        self.drift() * delta + self.sample_centered(delta, rng)
    }
}

impl fmt::Display for PerturbationLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            PerturbationLaw::PureDrift { b } if b == 0.0 => write!(f, "none"),
            PerturbationLaw::PureDrift { b } => write!(f, "drift:b={b}"),
            PerturbationLaw::GaussianCompoundPoisson { lambda, eta, b } => {
                write!(f, "cpg:lambda={lambda},eta={eta},b={b}")
            }
            PerturbationLaw::SymmetricStable { alpha, scale } => {
                write!(f, "stable:alpha={alpha},scale={scale}")
            }
        }
    }
}

impl FromStr for PerturbationLaw {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let spec = SpecString::parse(s)?;
        let law = match spec.name {
            "none" => {
                spec.only(&[])?;
                PerturbationLaw::none()
            }
            "drift" => {
                spec.only(&["b"])?;
                PerturbationLaw::PureDrift { b: spec.req("b")? }
            }
            "cpg" => {
                spec.only(&["lambda", "eta", "b"])?;
                PerturbationLaw::GaussianCompoundPoisson {
                    lambda: spec.req("lambda")?,
                    eta: spec.req("eta")?,
                    b: spec.or("b", 0.0)?,
                }
            }
            "stable" => {
                spec.only(&["alpha", "scale"])?;
                PerturbationLaw::SymmetricStable { alpha: spec.req("alpha")?, scale: spec.or("scale", 1.0)? }
            }
            other => return Err(Error::Parse(format!("unknown perturbation '{other}'"))),
        };
        law.validate().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(law)
    }
}

pub fn drift_correction(g: &PerturbationLaw, alpha: f64) -> f64 {
    g.drift_correction(alpha)
}

pub fn class_membership(g: &PerturbationLaw) -> ClassTag {
    g.class_membership()
}

/// Poisson draw by sequential inversion; falls back to `rand_distr` only when
/// `e^{−μ}` would underflow.
pub(crate) fn sample_poisson<R: Rng + ?Sized>(mu: f64, rng: &mut R) -> u64 {
    if mu <= 0.0 {
        return 0;
    }
    if mu > 700.0 {
        return Poisson::new(mu).map(|p| p.sample(rng) as u64).unwrap_or(0);
    }
    let u: f64 = rng.random();
    let mut k = 0u64;
    let mut p = (-mu).exp();
    let mut cdf = p;
    while u > cdf {
        k += 1;
        p *= mu / k as f64;
        cdf += p;
        if p < 1e-300 && cdf >= 1.0 - 1e-16 {
            break;
        }
    }
    k
}

/// Ground truth attached to simulated samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub sigma: f64,
    pub beta: f64,
    pub perturbation: PerturbationLaw,
    pub seed: Option<u64>,
}

/// Observed increments `χ_i` at spacing `delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementSample {
    pub chi: Vec<f64>,
    pub delta: f64,
    pub meta: Option<SampleMeta>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    delta: f64,
    n: usize,
    #[serde(flatten)]
    meta: Option<SampleMeta>,
}

impl IncrementSample {
    pub fn new(chi: Vec<f64>, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return domain(format!("sampling interval must be positive, got {delta}"));
        }
        if chi.iter().any(|x| !x.is_finite()) {
            return domain("increments must be finite");
        }
        Ok(Self { chi, delta, meta: None })
    }

    pub fn n(&self) -> usize {
        self.chi.len()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# delta={}", self.delta)?;
        writeln!(out, "# n={}", self.n())?;
        if let Some(m) = &self.meta {
            if let Some(seed) = m.seed {
                writeln!(out, "# seed={seed}")?;
            }
            writeln!(out, "# sigma={}", m.sigma)?;
            writeln!(out, "# beta={}", m.beta)?;
            writeln!(out, "# perturbation={}", m.perturbation)?;
        }
        writeln!(out, "chi")?;
        for x in &self.chi {
            writeln!(out, "{x}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut delta = None;
        let mut n_declared = None;
        let (mut seed, mut sigma, mut beta, mut pert) = (None, None, None, None);
        let mut chi = Vec::new();
        let mut seen_header = false;
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = |what: &str| Error::Parse(format!("line {}: {what}", lineno + 1));
            if let Some(rest) = line.strip_prefix('#') {
                let (k, v) = rest.split_once('=').ok_or_else(|| bad("expected '# key=value'"))?;
                let (k, v) = (k.trim(), v.trim());
                let num = || v.parse::<f64>().map_err(|_| bad("bad number"));
                match k {
                    "delta" => delta = Some(num()?),
                    "n" => n_declared = Some(v.parse::<usize>().map_err(|_| bad("bad count"))?),
                    "seed" => seed = Some(v.parse::<u64>().map_err(|_| bad("bad seed"))?),
                    "sigma" => sigma = Some(num()?),
                    "beta" => beta = Some(num()?),
                    "perturbation" => pert = Some(v.parse::<PerturbationLaw>()?),
                    _ => {}
                }
                continue;
            }
            if !seen_header {
                if line != "chi" {
                    return Err(bad("expected 'chi' column header"));
                }
                seen_header = true;
                continue;
            }
            chi.push(line.parse::<f64>().map_err(|_| bad("bad increment"))?);
        }
        let delta = delta.ok_or_else(|| Error::Parse("missing '# delta=' header".into()))?;
        if let Some(n) = n_declared {
            if n != chi.len() {
                return Err(Error::Parse(format!("header says n={n} but {} rows found", chi.len())));
            }
        }
        let mut sample = IncrementSample::new(chi, delta)?;
        if let (Some(sigma), Some(beta), Some(perturbation)) = (sigma, beta, pert) {
            sample.meta = Some(SampleMeta { sigma, beta, perturbation, seed });
        }
        Ok(sample)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file))
    }

    /// JSON metadata for a CSV file.
    pub fn sidecar_json(&self) -> Result<String> {
        let car = Sidecar { delta: self.delta, n: self.n(), meta: self.meta.clone() };
        Ok(serde_json::to_string_pretty(&car)?)
    }
}

/// Simulates `n` increments of `σW + Y` at spacing `delta`. Each increment
/// draws `W` first, then `Y`.
pub fn sample_increments<R: Rng + ?Sized>(
    sigma: f64,
    g: &PerturbationLaw,
    law: &StableLaw,
    delta: f64,
    n: usize,
    rng: &mut R,
) -> Result<IncrementSample> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return domain(format!("sigma must be positive, got {sigma}"));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return domain(format!("delta must be positive, got {delta}"));
    }
    g.validate()?;
    let w_scale = sigma * delta.powf(1.0 / law.beta());
    let chi = (0..n)
        .map(|_| {
            let w = law.sample_one(rng);
            w_scale * w + g.sample_increment(delta, rng)
        })
        .collect();
    Ok(IncrementSample {
        chi,
        delta,
        meta: Some(SampleMeta { sigma, beta: law.beta(), perturbation: *g, seed: None }),
    })
}
