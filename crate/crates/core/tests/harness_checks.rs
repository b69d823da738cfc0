//! Monte Carlo checks of the variance formulas through the experiment
//! harness.

use levyvol::asymptotics::{section8_profile, sigma2_cos_closed_form};
use levyvol::harness::{run_experiment, Gates, ModelConfig, SchedulePoint, SlopeGate};
use levyvol::{ExperimentConfig, PerturbationLaw, PlanCase};

fn config(sigma: f64, estimator: &str, schedule: Vec<SchedulePoint>, replications: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        model: ModelConfig { sigma, beta: 2.0, perturbation: PerturbationLaw::PureDrift { b: 0.0 } },
        schedule,
        estimator: estimator.parse().unwrap(),
        case: PlanCase::SemiCase2,
        replications,
        master_seed: seed,
        theta_scale: 1.0,
        mc_paths: 100_000,
        trim: 0.01,
        gates: Gates::default(),
        threads: None,
    }
}

#[test]
fn unperturbed_cosine_variance() {
    let cfg = config(1.0, "semi[cos:w=0.5]", vec![SchedulePoint { n: 10_000, delta: 1e-3 }], 500, 31);
    let s = run_experiment(&cfg).unwrap();
    let predicted = sigma2_cos_closed_form(0.5, 2.0).unwrap().sqrt();
    let ratio = s.points[0].sd / predicted;
    assert!((ratio - 1.0).abs() < 0.15, "{ratio}");
    assert!((s.points[0].predicted_sd.unwrap() - predicted).abs() < 1e-8);
    assert_eq!(s.points[0].fallback_rate, 0.0);
}

#[test]
fn unperturbed_cosine_rate() {
    let schedule = [1_000usize, 10_000, 100_000].iter().map(|&n| SchedulePoint { n, delta: 1e-3 }).collect();
    let mut cfg = config(1.0, "semi[cos:w=0.5]", schedule, 200, 32);
    cfg.gates.rate_slope = Some(SlopeGate { target: -0.5, tol: 0.07 });
    let s = run_experiment(&cfg).unwrap();
    assert!(s.passed, "slope {:?}", s.rate_slope);
}

/// Without truncation and `r < 1` the limiting variance of the power
/// variation estimator scales with `σ²`: at `σ = 2` the formula without the
/// `σ²` factor would be off by a factor of four.
#[test]
fn small_power_variance_scales_with_sigma_squared() {
    let sigma = 2.0;
    let r = 0.5;
    let cfg = config(sigma, "sec8:r=0.5,c=inf", vec![SchedulePoint { n: 20_000, delta: 1e-3 }], 400, 33);
    let s = run_experiment(&cfg).unwrap();
    let p = section8_profile(r, None, f64::INFINITY, sigma, 0.0, 1.0).unwrap();
    let with_factor = p.v0.sqrt();
    let without_factor = (p.v0 / (sigma * sigma)).sqrt();
    let sd = s.points[0].sd;
    assert!((sd / with_factor - 1.0).abs() < 0.15, "sd {sd} vs {with_factor}");
    assert!((sd / without_factor - 1.0).abs() > 0.5);
    assert_eq!(s.points[0].predicted_sd, Some(with_factor));
}

/// The root-delta truncated estimator at `σ ≠ 1`: the regime profile with
/// the truncation constant taken in absolute units `c·σ` predicts the spread.
#[test]
fn root_delta_variance_at_other_sigma() {
    let sigma = 0.6;
    let cfg = config(sigma, "sec8:r=2,c=3,kappa=0", vec![SchedulePoint { n: 20_000, delta: 1e-3 }], 400, 34);
    let s = run_experiment(&cfg).unwrap();
    let p = section8_profile(2.0, Some(0.0), 3.0 * sigma, sigma, 0.0, 1.0).unwrap();
    let sd = s.points[0].sd;
    assert!((sd / p.v0.sqrt() - 1.0).abs() < 0.15, "sd {sd} vs {}", p.v0.sqrt());
}
