//! Estimating-function kernels `k`, their truncations, and the `φ_α`
//! calculus used to pick truncation levels.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::params::SpecString;
use crate::stable_core::StableLaw;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelKind {
    /// `cos(w x)`
    Cos { w: f64 },
    /// `|x|^r`
    Power { r: f64 },
    /// `|x|^r 1{|x| ≤ cut}`
    TruncatedPower { r: f64, cut: f64 },
    /// `h̄_β(x) = x h_β'(x)/h_β(x)`
    Optimal { law: StableLaw },
    Constant { c: f64 },
    /// `factor · inner(x)`
    Scaled { factor: f64, inner: Box<KernelKind> },
    /// `inner(x) 1{|inner(x)| ≤ nu}`
    Truncated { nu: f64, inner: Box<KernelKind> },
}

impl KernelKind {
    fn eval(&self, x: f64) -> f64 {
        match self {
            KernelKind::Cos { w } => (w * x).cos(),
            KernelKind::Power { r } => x.abs().powf(*r),
            KernelKind::TruncatedPower { r, cut } => {
                if x.abs() <= *cut {
                    x.abs().powf(*r)
                } else {
                    0.0
                }
            }
            KernelKind::Optimal { law } => law.scores(x).bar,
            KernelKind::Constant { c } => *c,
            KernelKind::Scaled { factor, inner } => factor * inner.eval(x),
            KernelKind::Truncated { nu, inner } => {
                let v = inner.eval(x);
                if v.abs() <= *nu {
                    v
                } else {
                    0.0
                }
            }
        }
    }

    /// Points `x > 0` where the kernel jumps.
    fn jumps(&self) -> Vec<f64> {
        match self {
            KernelKind::TruncatedPower { cut, .. } => vec![*cut],
            KernelKind::Scaled { inner, .. } => inner.jumps(),
            KernelKind::Truncated { nu, inner } => {
                let mut pts = inner.jumps();
                pts.extend(level_crossings(inner, *nu));
                pts.sort_by(f64::total_cmp);
                pts
            }
            _ => Vec::new(),
        }
    }
}

/// Points `x ∈ (0, 200]` where `|k(x)|` crosses `level`, located on a fine
/// grid and refined by bisection.
fn level_crossings(k: &KernelKind, level: f64) -> Vec<f64> {
    let g = |x: f64| k.eval(x).abs() - level;
    let mut out = Vec::new();
    let steps = 4000;
    let hi = 200.0;
    let mut x0 = 1e-9;
    let mut f0 = g(x0);
    for i in 1..=steps {
        let x1 = hi * i as f64 / steps as f64;
        let f1 = g(x1);
        if (f0 <= 0.0) != (f1 <= 0.0) {
            let (mut a, mut b) = (x0, x1);
            for _ in 0..100 {
                let m = 0.5 * (a + b);
                if (g(m) <= 0.0) == (f0 <= 0.0) {
                    a = m;
                } else {
                    b = m;
                }
            }
            out.push(0.5 * (a + b));
        }
        x0 = x1;
        f0 = f1;
    }
    out
}

/// An even estimating-function kernel with its growth metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    kind: KernelKind,
    gamma: f64,
    bounded: bool,
    /// `sup |k|` when known.
    sup: Option<f64>,
    label: String,
}

impl Kernel {
    pub fn eval(&self, x: f64) -> f64 {
        self.kind.eval(x)
    }

    pub fn kind(&self) -> &KernelKind {
        &self.kind
    }

    /// Growth exponent in `|k(x)| ≤ C(1 + |x|^γ)`.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn is_bounded(&self) -> bool {
        self.bounded
    }

    pub fn sup(&self) -> Option<f64> {
        self.sup
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Frequency when the kernel is exactly `cos(w x)`.
    pub fn cos_frequency(&self) -> Option<f64> {
        match self.kind {
            KernelKind::Cos { w } => Some(w),
            _ => None,
        }
    }

    /// Positive discontinuity points, useful as quadrature breakpoints.
    pub fn jumps(&self) -> Vec<f64> {
        self.kind.jumps()
    }

    /// Frequency of the oscillating factor, if any.
    pub(crate) fn oscillation(&self) -> Option<f64> {
        fn find(k: &KernelKind) -> Option<f64> {
            match k {
                KernelKind::Cos { w } => Some(*w),
                KernelKind::Scaled { inner, .. } | KernelKind::Truncated { inner, .. } => find(inner),
                _ => None,
            }
        }
        find(&self.kind)
    }

    /// `Some(c)` when the kernel is the constant `c`.
    pub(crate) fn constant_value(&self) -> Option<f64> {
        match self.kind {
            KernelKind::Constant { c } => Some(c),
            _ => None,
        }
    }

    /// Parses `cos:w=0.5`, `pow:r=2`, `tpow:r=2,g=3`, `opt`, `const:c=1`.
    /// A leading `-` negates the kernel.
    pub fn parse(spec: &str, law: &StableLaw) -> Result<Kernel> {
        let spec = spec.trim();
        if let Some(rest) = spec.strip_prefix('-') {
            return Ok(scale_kernel(&Kernel::parse(rest, law)?, -1.0));
        }
        let s = SpecString::parse(spec)?;
        let parse_err = |e: Error| Error::Parse(e.to_string());
        match s.name {
            "cos" => {
                s.only(&["w"])?;
                make_cos_kernel(s.req("w")?).map_err(parse_err)
            }
            "pow" => {
                s.only(&["r"])?;
                make_power_kernel(s.req("r")?).map_err(parse_err)
            }
            "tpow" => {
                s.only(&["r", "g"])?;
                make_truncated_power_kernel(s.req("r")?, s.req("g")?).map_err(parse_err)
            }
            "opt" => {
                s.only(&[])?;
                Ok(make_optimal_kernel(law))
            }
            "const" => {
                s.only(&["c"])?;
                Ok(make_constant_kernel(s.req("c")?))
            }
            other => Err(Error::Parse(format!("unknown kernel '{other}'"))),
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

pub fn make_cos_kernel(w: f64) -> Result<Kernel> {
    if !(w > 0.0 && w.is_finite()) {
        return domain(format!("cos kernel needs w > 0, got {w}"));
    }
    Ok(Kernel { kind: KernelKind::Cos { w }, gamma: 0.0, bounded: true, sup: Some(1.0), label: format!("cos:w={w}") })
}

pub fn make_power_kernel(r: f64) -> Result<Kernel> {
    if !(r > 0.0 && r.is_finite()) {
        return domain(format!("power kernel needs r > 0, got {r}"));
    }
    Ok(Kernel { kind: KernelKind::Power { r }, gamma: r, bounded: false, sup: None, label: format!("pow:r={r}") })
}

pub fn make_truncated_power_kernel(r: f64, gamma_cut: f64) -> Result<Kernel> {
    if !(r > 0.0 && r.is_finite() && gamma_cut > 0.0 && gamma_cut.is_finite()) {
        return domain(format!("truncated power kernel needs r, g > 0, got r={r}, g={gamma_cut}"));
    }
    Ok(Kernel {
        kind: KernelKind::TruncatedPower { r, cut: gamma_cut },
        gamma: 0.0,
        bounded: true,
        sup: Some(gamma_cut.powf(r)),
        label: format!("tpow:r={r},g={gamma_cut}"),
    })
}

/// `h̄_β`, which turns the estimating equation into the score equation.
pub fn make_optimal_kernel(law: &StableLaw) -> Kernel {
    let kind = KernelKind::Optimal { law: *law };
    if law.is_gaussian() {
        return Kernel { kind, gamma: 2.0, bounded: false, sup: None, label: "opt".into() };
    }
    // empirical sup on a grid in units of the law's scale, plus the limit 1+β
    let scale = law.scale();
    let mut sup = 1.0 + law.beta();
    for i in 1..=400 {
        let x = scale * 0.1 * i as f64;
        sup = sup.max(law.scores(x).bar.abs());
    }
    Kernel { kind, gamma: 0.0, bounded: true, sup: Some(sup), label: "opt".into() }
}

pub fn make_constant_kernel(c: f64) -> Kernel {
    Kernel { kind: KernelKind::Constant { c }, gamma: 0.0, bounded: true, sup: Some(c.abs()), label: format!("const:c={c}") }
}

/// `factor · k`.
pub fn scale_kernel(k: &Kernel, factor: f64) -> Kernel {
    let label = if factor == -1.0 { format!("-{}", k.label) } else { format!("{factor}*{}", k.label) };
    Kernel {
        kind: KernelKind::Scaled { factor, inner: Box::new(k.kind.clone()) },
        gamma: k.gamma,
        bounded: k.bounded,
        sup: k.sup.map(|s| s * factor.abs()),
        label,
    }
}

/// `k(x) 1{|k(x)| ≤ ν}`; returns `k` itself when it is bounded by `ν`.
pub fn truncate_kernel(k: &Kernel, nu: f64) -> Result<Kernel> {
    if !(nu > 0.0) || nu.is_nan() {
        return domain(format!("truncation level must be positive, got {nu}"));
    }
    if k.bounded && k.sup.is_some_and(|s| s <= nu) {
        return Ok(k.clone());
    }
    let out = match &k.kind {
        KernelKind::Power { r } => {
            let mut t = make_truncated_power_kernel(*r, nu.powf(1.0 / r))?;
            t.label = format!("{}|nu={nu}", k.label);
            t
        }
        KernelKind::TruncatedPower { r, cut } => {
            let mut t = make_truncated_power_kernel(*r, cut.min(nu.powf(1.0 / r)))?;
            t.label = format!("{}|nu={nu}", k.label);
            t
        }
        KernelKind::Optimal { law } if law.is_gaussian() => {
            // |−x²| ≤ ν ⟺ |x| ≤ √ν
            let mut t = scale_kernel(&make_truncated_power_kernel(2.0, nu.sqrt())?, -1.0);
            t.label = format!("{}|nu={nu}", k.label);
            t
        }
        KernelKind::Scaled { factor, inner } if *factor != 0.0 => {
            let inner_kernel = Kernel {
                kind: (**inner).clone(),
                gamma: k.gamma,
                bounded: k.bounded,
                sup: k.sup.map(|s| s / factor.abs()),
                label: String::new(),
            };
            let t = truncate_kernel(&inner_kernel, nu / factor.abs())?;
            let mut t = scale_kernel(&t, *factor);
            t.label = format!("{}|nu={nu}", k.label);
            t
        }
        KernelKind::Truncated { nu: prev, inner } if *prev <= nu => {
            return Ok(Kernel { kind: KernelKind::Truncated { nu: *prev, inner: inner.clone() }, ..k.clone() });
        }
        KernelKind::Truncated { inner, .. } => Kernel {
            kind: KernelKind::Truncated { nu, inner: inner.clone() },
            gamma: 0.0,
            bounded: true,
            sup: Some(nu),
            label: format!("{}|nu={nu}", k.label),
        },
        other => Kernel {
            kind: KernelKind::Truncated { nu, inner: Box::new(other.clone()) },
            gamma: 0.0,
            bounded: true,
            sup: Some(nu),
            label: format!("{}|nu={nu}", k.label),
        },
    };
    Ok(out)
}

/// Increasing bounded map `(0, 1] → [0, ∞)` bounding the small-jump
/// activity of a perturbation.
#[derive(Clone)]
pub struct PhiFunction {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    label: String,
}

impl fmt::Debug for PhiFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PhiFunction({})", self.label)
    }
}

impl PhiFunction {
    pub fn from_fn(label: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { f: Arc::new(f), label: label.into() }
    }

    /// `φ(x) = c·x^p`.
    pub fn power(c: f64, p: f64) -> Self {
        Self::from_fn(format!("{c}*x^{p}"), move |x| c * x.powf(p))
    }

    /// `φ ≡ ζ`, the bound for the classes `Ḡ(ζ, α)`.
    pub fn constant(zeta: f64) -> Self {
        Self::from_fn(format!("{zeta}"), move |_| zeta)
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

/// `φ_α(x)`, the bound that accounts for the small jumps of a class-`α`
/// perturbation.
pub fn phi_alpha(phi: &PhiFunction, alpha: f64, x: f64) -> Result<f64> {
    if !(x > 0.0 && x < 1.0) {
        return domain(format!("phi_alpha needs x in (0, 1), got {x}"));
    }
    if !(alpha > 0.0 && alpha <= 2.0) {
        return domain(format!("phi_alpha needs alpha in (0, 2], got {alpha}"));
    }
    let p = |t: f64| phi.eval(t);
    let value = if alpha < 1.0 {
        p(x) / (1.0 - alpha)
    } else if alpha == 1.0 {
        let s = (1.0 / x).ln().sqrt();
        p(x) + p(x) / s + p((-s).exp().min(1.0))
    } else {
        p(x) + p(x.sqrt()) / (alpha - 1.0) + p(1.0) / (alpha - 1.0) * x.powf((alpha - 1.0) / 2.0)
    };
    Ok(value)
}

/// Truncation level for unbounded kernels together with the three quantities
/// whose limits it must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuSchedule {
    pub nu: f64,
    pub phi_beta: f64,
    /// `ν² φ_β(Δ^{1/β})`, should be small.
    pub nu_sq_phi: f64,
    /// `ν⁴ / n`, should be small.
    pub nu4_over_n: f64,
    /// True when `n^{1/5}` was the binding cap.
    pub capped_by_n: bool,
}

/// `ν_n = min(n^{1/5}, φ_β(Δ_n^{1/β})^{−1/3})`.
pub fn nu_schedule(phi: &PhiFunction, beta: f64, delta_n: f64, n: usize) -> Result<NuSchedule> {
    if n == 0 || !(delta_n > 0.0) {
        return domain("nu schedule needs n ≥ 1 and delta > 0");
    }
    let x = delta_n.powf(1.0 / beta);
    let phi_beta = if x < 1.0 { phi_alpha(phi, beta, x)? } else { phi.eval(1.0) };
    let by_n = (n as f64).powf(0.2);
    let (nu, capped_by_n) = if phi_beta > 0.0 {
        let by_phi = phi_beta.powf(-1.0 / 3.0);
        if by_n <= by_phi {
            (by_n, true)
        } else {
            (by_phi, false)
        }
    } else {
        (by_n, true)
    };
    Ok(NuSchedule {
        nu,
        phi_beta,
        nu_sq_phi: nu * nu * phi_beta,
        nu4_over_n: nu.powi(4) / n as f64,
        capped_by_n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cos_kernel_basics() {
        let k = make_cos_kernel(0.5).unwrap();
        assert_eq!(k.eval(0.0), 1.0);
        assert_eq!(k.sup(), Some(1.0));
        assert!(k.is_bounded() && k.gamma() == 0.0);
        assert!(make_cos_kernel(0.0).is_err());
        assert!(make_cos_kernel(-1.0).is_err());
    }

    #[test]
    fn power_kernels() {
        let k = make_power_kernel(2.0).unwrap();
        assert_eq!(k.eval(-2.0), 4.0);
        assert_eq!(k.eval(0.0), 0.0);
        assert_eq!(k.gamma(), 2.0);
        let t = make_truncated_power_kernel(2.0, 3.0).unwrap();
        assert_eq!(t.eval(3.1), 0.0);
        assert_eq!(t.eval(3.0), 9.0);
        assert_eq!(t.eval(-1.5), t.eval(1.5));
        assert_eq!(t.sup(), Some(9.0));
    }

    #[test]
    fn optimal_kernel() {
        let k = make_optimal_kernel(&StableLaw::gaussian());
        for i in -20..=20 {
            let x = i as f64 * 0.37;
            assert_eq!(k.eval(x), -x * x);
        }
        assert_eq!(k.gamma(), 2.0);
        let law = StableLaw::new(1.5).unwrap();
        let k = make_optimal_kernel(&law);
        assert!(k.is_bounded());
        let sup = k.sup().unwrap();
        for i in 0..100 {
            let x = i as f64 * 0.3;
            assert!(k.eval(x).abs() <= sup);
            assert!((k.eval(x) - k.eval(-x)).abs() < 1e-15);
        }
    }

    #[test]
    fn truncation_rules() {
        let c = make_cos_kernel(1.0).unwrap();
        assert_eq!(truncate_kernel(&c, 2.0).unwrap(), c);
        let p = make_power_kernel(2.0).unwrap();
        let t = truncate_kernel(&p, 4.0).unwrap();
        assert_eq!(t.eval(2.5), 0.0);
        assert_eq!(t.eval(2.0), 4.0);
        assert!(t.is_bounded() && t.sup().unwrap() <= 4.0);
        let o = truncate_kernel(&make_optimal_kernel(&StableLaw::gaussian()), 9.0).unwrap();
        assert_eq!(o.eval(3.0), -9.0);
        assert_eq!(o.eval(3.01), 0.0);
        let tc = truncate_kernel(&c, 0.5).unwrap();
        assert_eq!(tc.eval(0.0), 0.0);
        assert!((tc.eval(1.2) - 1.2f64.cos()).abs() < 1e-15);
        assert!(truncate_kernel(&c, 0.0).is_err());
    }

    #[test]
    fn truncated_cos_jumps_are_level_crossings() {
        let tc = truncate_kernel(&make_cos_kernel(1.0).unwrap(), 0.5).unwrap();
        let j = tc.jumps();
        assert!((j[0] - (0.5f64).acos()).abs() < 1e-12, "{j:?}");
    }

    #[test]
    fn parse_specs() {
        let law = StableLaw::gaussian();
        assert_eq!(Kernel::parse("cos:w=0.5", &law).unwrap().cos_frequency(), Some(0.5));
        assert_eq!(Kernel::parse("pow:r=2", &law).unwrap().gamma(), 2.0);
        assert_eq!(Kernel::parse("tpow:r=2,g=3", &law).unwrap().eval(3.0), 9.0);
        assert_eq!(Kernel::parse("opt", &law).unwrap().eval(2.0), -4.0);
        assert_eq!(Kernel::parse("-tpow:r=2,g=3", &law).unwrap().eval(1.0), -1.0);
        assert!(Kernel::parse("cos:w=-1", &law).is_err());
        assert!(Kernel::parse("sin:w=1", &law).is_err());
        assert!(Kernel::parse("cos:r=1", &law).is_err());
    }

    #[test]
    fn phi_alpha_cases() {
        let zeta = 0.7;
        let v = phi_alpha(&PhiFunction::constant(zeta), 0.5, 0.3).unwrap();
        assert!((v - 2.0 * zeta).abs() < 1e-15);
        let phi = PhiFunction::power(1.0, 0.5);
        for &alpha in &[0.5, 1.0, 1.5, 2.0] {
            let mut prev = 0.0;
            for k in (1..=8).rev() {
                let x = 10f64.powi(-k);
                let v = phi_alpha(&phi, alpha, x).unwrap();
                assert!(v >= phi.eval(x));
                assert!(v >= prev, "alpha={alpha} not monotone at {x}");
                prev = v;
            }
            assert!(phi_alpha(&phi, alpha, 1e-8).unwrap() < phi_alpha(&phi, alpha, 1e-1).unwrap());
        }
        assert!(phi_alpha(&phi, 1.0, 1.0).is_err());
        assert!(phi_alpha(&phi, 1.0, 0.0).is_err());
    }

    #[test]
    fn nu_schedule_properties() {
        let phi = PhiFunction::power(1.0, 1.0);
        let s = nu_schedule(&phi, 2.0, 1e-3, 100_000).unwrap();
        assert!(s.nu4_over_n <= 100_000f64.powf(-0.2) + 1e-12);
        let mut prev = 0.0;
        for &n in &[1_000usize, 10_000, 100_000] {
            let s = nu_schedule(&phi, 2.0, 1e-3, n).unwrap();
            assert!(s.nu >= prev);
            prev = s.nu;
        }
        let mut prev = f64::INFINITY;
        for &n in &[1_000usize, 10_000, 100_000] {
            let s = nu_schedule(&phi, 2.0, 1.0 / n as f64, n).unwrap();
            assert!(s.nu_sq_phi < prev);
            prev = s.nu_sq_phi;
        }
        let zero = PhiFunction::constant(0.0);
        let s = nu_schedule(&zero, 2.0, 1e-3, 32).unwrap();
        assert!(s.capped_by_n && (s.nu - 2.0).abs() < 1e-12);
    }
}
