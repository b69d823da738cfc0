//! Monte Carlo experiments: replicate simulate → estimate over a schedule
//! of `(n, Δ)` points, summarize the errors, compare with the asymptotic
//! predictions and check configured gates.

use std::io::Write;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{section8_profile, sigma2, AsymptoticProfile};
use crate::error::{domain, Error, Result};
use crate::estimators::{estimate, make_plan, spec_kernel, EstimationContext, EstimatorSpec, PlanCase};
use crate::levy_models::{sample_increments, PerturbationLaw};
use crate::stable_core::StableLaw;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "LEVYVOL_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub sigma: f64,
    pub beta: f64,
    pub perturbation: PerturbationLaw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulePoint {
    pub n: usize,
    pub delta: f64,
}

/// `mean(σ̂ − σ) / Δ^exponent` within `rel_tol·|target|` of `target`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledBiasGate {
    pub exponent: f64,
    pub target: f64,
    pub rel_tol: f64,
}

/// Slope of log RMSE against log n within `tol` of `target`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeGate {
    pub target: f64,
    pub tol: f64,
}

/// `mean(σ̂)` within `n_se` Monte Carlo standard errors of `target`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanGate {
    pub target: f64,
    pub n_se: f64,
}

/// Pass/fail thresholds; absent entries are not checked.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Gates {
    /// `|sd / predicted sd − 1|` bound at every point.
    pub sd_rel_tol: Option<f64>,
    pub max_abs_skewness: Option<f64>,
    pub max_abs_excess_kurtosis: Option<f64>,
    pub max_fallback_rate: Option<f64>,
    pub scaled_bias: Option<ScaledBiasGate>,
    pub rate_slope: Option<SlopeGate>,
    pub mean_sigma_hat: Option<MeanGate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub schedule: Vec<SchedulePoint>,
    pub estimator: EstimatorSpec,
    pub case: PlanCase,
    pub replications: usize,
    pub master_seed: u64,
    #[serde(default = "default_theta_scale")]
    pub theta_scale: f64,
    #[serde(default = "default_mc_paths")]
    pub mc_paths: usize,
    /// Fraction of the largest squared errors dropped from the RMSE used in
    /// the rate fit.
    #[serde(default = "default_trim")]
    pub trim: f64,
    #[serde(default)]
    pub gates: Gates,
    /// Worker threads; `None` uses `LEVYVOL_THREADS` or all cores.
    #[serde(default)]
    pub threads: Option<usize>,
}

fn default_theta_scale() -> f64 {
    1.0
}

fn default_mc_paths() -> usize {
    100_000
}

fn default_trim() -> f64 {
    0.01
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if !(m.sigma > 0.0 && m.sigma.is_finite()) {
            return domain(format!("sigma must be positive, got {}", m.sigma));
        }
        StableLaw::new(m.beta)?;
        m.perturbation.validate()?;
        if self.replications < 2 {
            return domain("need at least two replications");
        }
        if self.schedule.is_empty() {
            return domain("schedule is empty");
        }
        for pt in &self.schedule {
            if !(pt.delta > 0.0 && pt.delta.is_finite()) {
                return domain(format!("delta must be positive, got {}", pt.delta));
            }
            make_plan(pt.n, self.case)?;
        }
        if !(0.0..0.5).contains(&self.trim) {
            return domain(format!("trim must be in [0, 0.5), got {}", self.trim));
        }
        if self.threads == Some(0) {
            return domain("threads must be positive");
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// One simulate → estimate run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub point: usize,
    pub replication: usize,
    pub n: usize,
    pub delta: f64,
    pub sigma_hat: Option<f64>,
    pub fallback: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub n: usize,
    pub delta: f64,
    /// Size of the main block.
    pub p: usize,
    /// Replications that produced an estimate.
    pub completed: usize,
    pub failed: usize,
    pub mean: f64,
    pub bias: f64,
    /// Standard deviation of `√p(σ̂ − σ)`.
    pub sd: f64,
    pub fallback_rate: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// Trimmed root mean squared error of `σ̂`.
    pub rmse: f64,
    pub predicted_sd: Option<f64>,
    pub predicted_bias: Option<f64>,
    /// Set when the estimator or the variance formula does not identify `σ`.
    pub not_identified: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateResult {
    pub gate: String,
    pub point: Option<usize>,
    pub value: f64,
    pub target: f64,
    pub tol: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub sigma: f64,
    pub estimator: String,
    pub replications: usize,
    pub master_seed: u64,
    pub trim: f64,
    pub points: Vec<PointSummary>,
    pub rate_slope: Option<f64>,
    pub gates: Vec<GateResult>,
    pub passed: bool,
    pub records: Vec<ReplicationRecord>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for replication `rep` at schedule point `point`.
pub fn replication_rng(master_seed: u64, point: usize, rep: usize) -> ChaCha20Rng {
    let key = splitmix64(master_seed ^ splitmix64(point as u64 + 1));
    let mut rng = ChaCha20Rng::seed_from_u64(key);
    rng.set_stream(rep as u64);
    rng
}

fn worker_count(cfg: &ExperimentConfig) -> Option<usize> {
    cfg.threads.or_else(|| std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse().ok()).filter(|&t| t > 0))
}

fn run_one(cfg: &ExperimentConfig, law: &StableLaw, point: usize, rep: usize) -> ReplicationRecord {
    let SchedulePoint { n, delta } = cfg.schedule[point];
    let mut rng = replication_rng(cfg.master_seed, point, rep);
    let m = &cfg.model;
    let outcome = sample_increments(m.sigma, &m.perturbation, law, delta, n, &mut rng).and_then(|sample| {
        let mut ctx = EstimationContext::new(*law, cfg.case);
        ctx.perturbation = Some(m.perturbation);
        ctx.theta_scale = cfg.theta_scale;
        ctx.mc_paths = cfg.mc_paths;
        ctx.seed = rng.next_u64();
        estimate(&sample, &cfg.estimator, &ctx)
    });
    let (sigma_hat, fallback, error) = match outcome {
        Ok(rep) => (Some(rep.sigma_hat), rep.fallback_used, None),
        Err(e) => (None, false, Some(e.to_string())),
    };
    ReplicationRecord { point, replication: rep, n, delta, sigma_hat, fallback, error }
}

/// Asymptotic prediction for the configured estimator: either a fixed
/// `σ²Σ²(k)` or a regime profile depending on `Δ`.
enum Prediction {
    Kernel(f64),
    Profile(AsymptoticProfile),
    None(Option<String>, bool),
}

fn prediction(cfg: &ExperimentConfig, law: &StableLaw) -> Prediction {
    let sigma = cfg.model.sigma;
    match &cfg.estimator {
        EstimatorSpec::Section8 { r, c, kappa } => {
            let (lambda, eta) = match cfg.model.perturbation {
                PerturbationLaw::GaussianCompoundPoisson { lambda, eta, .. } => (lambda, eta),
                PerturbationLaw::PureDrift { .. } => (0.0, 1.0),
                PerturbationLaw::SymmetricStable { .. } => {
                    return Prediction::None(Some("no profile for stable perturbations".into()), false)
                }
            };
            // the estimator truncates at c·S_n·Δ^{1/2+κ}, S_n → σ
            let kappa = if c.is_infinite() { None } else { Some(*kappa) };
            match section8_profile(*r, kappa, c * sigma, sigma, lambda, eta) {
                Ok(p) => Prediction::Profile(p),
                Err(Error::NotIdentified(msg)) => Prediction::None(Some(msg), true),
                Err(e) => Prediction::None(Some(e.to_string()), false),
            }
        }
        spec => match spec_kernel(spec, law).and_then(|k| match k {
            Some(k) => sigma2(&k, law),
            None => domain("no kernel"),
        }) {
            Ok(s2) => Prediction::Kernel(sigma * s2.sqrt()),
            Err(Error::NotIdentified(msg)) => Prediction::None(Some(msg), true),
            Err(e) => Prediction::None(Some(e.to_string()), false),
        },
    }
}

struct Moments {
    sd: f64,
    skewness: f64,
    excess_kurtosis: f64,
}

fn moments(xs: &[f64]) -> Moments {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return Moments { sd: f64::NAN, skewness: f64::NAN, excess_kurtosis: f64::NAN };
    }
    let mean = xs.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in xs {
        let d = x - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    let sd = if xs.len() > 1 { (m2 / (n - 1.0)).sqrt() } else { f64::NAN };
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    Moments { sd, skewness: m3 / m2.powf(1.5), excess_kurtosis: m4 / (m2 * m2) - 3.0 }
}

/// Root mean of the squared values after dropping the `trim` fraction of
/// the largest.
pub fn trimmed_rms(values: &[f64], trim: f64) -> f64 {
    let mut sq: Vec<f64> = values.iter().map(|x| x * x).collect();
    sq.sort_by(f64::total_cmp);
    let keep = sq.len() - (trim * sq.len() as f64).floor() as usize;
    if keep == 0 {
        return f64::NAN;
    }
    (sq[..keep].iter().sum::<f64>() / keep as f64).sqrt()
}

/// Least-squares slope of `log rmse` against `log n`.
pub fn fit_rate(points: &[(usize, f64)]) -> Result<f64> {
    if points.len() < 3 {
        return domain(format!("rate fit needs at least 3 points, got {}", points.len()));
    }
    let lo = points.iter().map(|p| p.0).min().unwrap_or(0) as f64;
    let hi = points.iter().map(|p| p.0).max().unwrap_or(0) as f64;
    if !(lo > 0.0 && hi >= 10.0 * lo) {
        return domain("rate fit needs schedule points spanning a decade in n");
    }
    if points.iter().any(|p| !(p.1 > 0.0 && p.1.is_finite())) {
        return domain("rate fit needs positive finite RMSE values");
    }
    let xs: Vec<f64> = points.iter().map(|p| (p.0 as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

fn summarize_point(
    cfg: &ExperimentConfig,
    idx: usize,
    records: &[ReplicationRecord],
    pred: &Prediction,
) -> Result<PointSummary> {
    let SchedulePoint { n, delta } = cfg.schedule[idx];
    let p = make_plan(n, cfg.case)?.p;
    let sigma = cfg.model.sigma;
    let hats: Vec<f64> = records.iter().filter_map(|r| r.sigma_hat).collect();
    let failed = records.len() - hats.len();
    let scaled: Vec<f64> = hats.iter().map(|h| (p as f64).sqrt() * (h - sigma)).collect();
    let errors: Vec<f64> = hats.iter().map(|h| h - sigma).collect();
    let m = moments(&scaled);
    let mean = if hats.is_empty() { f64::NAN } else { hats.iter().sum::<f64>() / hats.len() as f64 };
    let fallbacks = records.iter().filter(|r| r.fallback).count();
    let (predicted_sd, predicted_bias, mut not_identified, mut note) = match pred {
        Prediction::Kernel(sd) => (Some(*sd), None, false, None),
        Prediction::Profile(pr) => (Some((pr.v0 / delta.powf(pr.v1)).sqrt()), Some(pr.predicted_bias(delta)), false, None),
        Prediction::None(msg, unid) => (None, None, *unid, msg.clone()),
    };
    if failed > 0 {
        let first = records.iter().find_map(|r| r.error.clone()).unwrap_or_default();
        if first.starts_with("not identified") {
            not_identified = true;
        }
        let msg = format!("{failed} replications failed, first: {first}");
        note = Some(match note {
            Some(n) => format!("{n}; {msg}"),
            None => msg,
        });
    }
    Ok(PointSummary {
        n,
        delta,
        p,
        completed: hats.len(),
        failed,
        mean,
        bias: mean - sigma,
        sd: m.sd,
        fallback_rate: fallbacks as f64 / records.len() as f64,
        skewness: m.skewness,
        excess_kurtosis: m.excess_kurtosis,
        rmse: trimmed_rms(&errors, cfg.trim),
        predicted_sd,
        predicted_bias,
        not_identified,
        note,
    })
}

fn gate(name: &str, point: Option<usize>, value: f64, target: f64, tol: f64) -> GateResult {
    // NaN never passes
    let passed = (value - target).abs() <= tol;
    GateResult { gate: name.into(), point, value, target, tol, passed }
}

fn evaluate_gates(cfg: &ExperimentConfig, points: &[PointSummary], slope: Option<f64>) -> Vec<GateResult> {
    let g = &cfg.gates;
    let mut out = Vec::new();
    for (i, pt) in points.iter().enumerate() {
        let at = Some(i);
        if let Some(tol) = g.sd_rel_tol {
            let ratio = pt.predicted_sd.map_or(f64::NAN, |p| pt.sd / p);
            out.push(gate("sd_ratio", at, ratio, 1.0, tol));
        }
        if let Some(tol) = g.max_abs_skewness {
            out.push(gate("skewness", at, pt.skewness, 0.0, tol));
        }
        if let Some(tol) = g.max_abs_excess_kurtosis {
            out.push(gate("excess_kurtosis", at, pt.excess_kurtosis, 0.0, tol));
        }
        if let Some(max) = g.max_fallback_rate {
            let mut r = gate("fallback_rate", at, pt.fallback_rate, 0.0, max);
            r.passed = pt.fallback_rate < max && pt.failed == 0;
            out.push(r);
        }
        if let Some(b) = g.scaled_bias {
            out.push(gate("scaled_bias", at, pt.bias / pt.delta.powf(b.exponent), b.target, b.rel_tol * b.target.abs()));
        }
        if let Some(mg) = g.mean_sigma_hat {
            let se = pt.sd / (pt.p as f64).sqrt() / (pt.completed as f64).sqrt();
            out.push(gate("mean_sigma_hat", at, pt.mean, mg.target, mg.n_se * se));
        }
    }
    if let Some(sg) = g.rate_slope {
        out.push(gate("rate_slope", None, slope.unwrap_or(f64::NAN), sg.target, sg.tol));
    }
    out
}

/// Runs every schedule point `replications` times and summarizes.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let law = StableLaw::new(cfg.model.beta)?;
    let jobs: Vec<(usize, usize)> =
        (0..cfg.schedule.len()).flat_map(|pt| (0..cfg.replications).map(move |rep| (pt, rep))).collect();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = worker_count(cfg) {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| Error::Domain(format!("thread pool: {e}")))?;
    let records: Vec<ReplicationRecord> =
        pool.install(|| jobs.par_iter().map(|&(pt, rep)| run_one(cfg, &law, pt, rep)).collect());

    let pred = prediction(cfg, &law);
    let mut points = Vec::with_capacity(cfg.schedule.len());
    for (i, chunk) in records.chunks(cfg.replications).enumerate() {
        points.push(summarize_point(cfg, i, chunk, &pred)?);
    }
    let rate_slope = fit_rate(&points.iter().map(|p| (p.n, p.rmse)).collect::<Vec<_>>()).ok();
    let gates = evaluate_gates(cfg, &points, rate_slope);
    let passed = gates.iter().all(|g| g.passed);
    Ok(ExperimentSummary {
        sigma: cfg.model.sigma,
        estimator: cfg.estimator.to_string(),
        replications: cfg.replications,
        master_seed: cfg.master_seed,
        trim: cfg.trim,
        points,
        rate_slope,
        gates,
        passed,
        records,
    })
}

impl ExperimentSummary {
    /// Per-replication CSV: replication, n, delta, sigma_hat, fallback.
    pub fn write_records_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["point", "replication", "n", "delta", "sigma_hat", "fallback", "error"])?;
        for r in &self.records {
            w.write_record([
                r.point.to_string(),
                r.replication.to_string(),
                r.n.to_string(),
                r.delta.to_string(),
                r.sigma_hat.map(|v| v.to_string()).unwrap_or_default(),
                r.fallback.to_string(),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// One row per schedule point; the rate slope and trim fraction repeat on
    /// every row.
    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "n",
            "delta",
            "p",
            "completed",
            "failed",
            "mean",
            "bias",
            "sd",
            "predicted_sd",
            "predicted_bias",
            "fallback_rate",
            "skewness",
            "excess_kurtosis",
            "rmse",
            "trim",
            "rate_slope",
            "not_identified",
            "note",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for p in &self.points {
            w.write_record([
                p.n.to_string(),
                p.delta.to_string(),
                p.p.to_string(),
                p.completed.to_string(),
                p.failed.to_string(),
                p.mean.to_string(),
                p.bias.to_string(),
                p.sd.to_string(),
                opt(p.predicted_sd),
                opt(p.predicted_bias),
                p.fallback_rate.to_string(),
                p.skewness.to_string(),
                p.excess_kurtosis.to_string(),
                p.rmse.to_string(),
                self.trim.to_string(),
                opt(self.rate_slope),
                p.not_identified.to_string(),
                p.note.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
