use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use levyvol::asymptotics::{kernel_i, kernel_j, section8_table, sigma2};
use levyvol::harness::run_experiment;
use levyvol::levy_models::sample_increments;
use levyvol::{
    estimators, EstimationContext, EstimatorSpec, Error, ExperimentConfig, IncrementSample, Kernel,
    PerturbationLaw, PlanCase, StableLaw,
};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

#[derive(Parser)]
#[command(name = "levyvol", version, about = "Volatility estimation for discretely observed Lévy processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate increments of σW + Y and write them as CSV
    Simulate(SimulateArgs),
    /// Estimate σ from an increment CSV and print the report as JSON
    Estimate(EstimateArgs),
    /// Print I(k), J(k) and Σ²(k) for one or more kernels as CSV
    Variance(VarianceArgs),
    /// Print the truncated power variation regime table as CSV
    Table8(Table8Args),
    /// Run a Monte Carlo experiment from a JSON config
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    sigma: f64,
    #[arg(long, default_value_t = 2.0)]
    beta: f64,
    /// Perturbation: none, drift:b=, cpg:lambda=,eta=,b=, stable:alpha=,scale=
    #[arg(long = "G", default_value = "none")]
    g: String,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the ground truth as JSON here
    #[arg(long)]
    meta: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    input: PathBuf,
    /// param[<kernel>], semi[<kernel>], charfn:w=, tpow:r=,g=, sec8:r=,c=,kappa=
    #[arg(long)]
    estimator: String,
    #[arg(long, default_value_t = 2.0)]
    beta: f64,
    /// param, case1:delta=0.1, case2
    #[arg(long, default_value = "case2")]
    case: String,
    /// Perturbation law for the parametric estimator
    #[arg(long = "G")]
    g: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100_000)]
    mc_paths: usize,
    #[arg(long, default_value_t = 1.0)]
    theta_scale: f64,
}

#[derive(Args)]
struct VarianceArgs {
    /// Kernel spec such as cos:w=1, pow:r=2, tpow:r=2,g=3, opt; repeatable
    #[arg(long, required = true)]
    kernel: Vec<String>,
    #[arg(long, default_value_t = 2.0)]
    beta: f64,
}

#[derive(Args)]
struct Table8Args {
    #[arg(long)]
    sigma: f64,
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    eta: f64,
    #[arg(long, value_delimiter = ',', required = true)]
    r: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    kappa: Vec<f64>,
    /// Truncation constants; `inf` for none
    #[arg(long, value_delimiter = ',', required = true)]
    c: Vec<f64>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Worker threads; overrides the config and LEVYVOL_THREADS
    #[arg(long)]
    threads: Option<usize>,
    /// Per-replication CSV
    #[arg(long)]
    records: Option<PathBuf>,
    /// Per-point summary CSV; stdout when absent
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Full summary as JSON
    #[arg(long)]
    json: Option<PathBuf>,
}

/// Bad input (exit 2) versus a failure while doing the work (exit 1).
enum Failure {
    Usage(String),
    Run(String),
    GateFailed,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

fn usage<T>(what: &str, e: impl std::fmt::Display) -> Result<T, Failure> {
    Err(Failure::Usage(format!("invalid {what}: {e}")))
}

fn output(path: Option<&PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn law(beta: f64) -> Result<StableLaw, Failure> {
    StableLaw::new(beta).or_else(|e| usage("--beta", e))
}

fn simulate(a: SimulateArgs) -> Result<(), Failure> {
    let law = law(a.beta)?;
    let g: PerturbationLaw = a.g.parse().or_else(|e| usage("--G", e))?;
    g.validate().or_else(|e| usage("--G", e))?;
    if !(a.sigma > 0.0 && a.sigma.is_finite()) {
        return usage("--sigma", "must be positive");
    }
    if !(a.delta > 0.0 && a.delta.is_finite()) {
        return usage("--delta", "must be positive");
    }
    let mut rng = ChaCha20Rng::seed_from_u64(a.seed);
    let mut sample = sample_increments(a.sigma, &g, &law, a.delta, a.n, &mut rng)?;
    if let Some(m) = sample.meta.as_mut() {
        m.seed = Some(a.seed);
    }
    let mut out = output(a.out.as_ref())?;
    sample.write_csv(&mut out)?;
    out.flush()?;
    if let Some(p) = &a.meta {
        std::fs::write(p, sample.sidecar_json()?)?;
    }
    Ok(())
}

fn estimate(a: EstimateArgs) -> Result<(), Failure> {
    let law = law(a.beta)?;
    let spec: EstimatorSpec = a.estimator.parse().or_else(|e| usage("--estimator", e))?;
    let case: PlanCase = a.case.parse().or_else(|e| usage("--case", e))?;
    let g = match &a.g {
        Some(s) => Some(s.parse::<PerturbationLaw>().or_else(|e| usage("--G", e))?),
        None => None,
    };
    estimators::spec_kernel(&spec, &law).or_else(|e| usage("--estimator", e))?;
    let sample = IncrementSample::load(&a.input).or_else(|e| usage("--input", e))?;
    let mut ctx = EstimationContext::new(law, case);
    ctx.perturbation = g;
    ctx.seed = a.seed;
    ctx.mc_paths = a.mc_paths;
    ctx.theta_scale = a.theta_scale;
    let report = estimators::estimate(&sample, &spec, &ctx)?;
    println!("{}", serde_json::to_string_pretty(&report).map_err(|e| Failure::Run(e.to_string()))?);
    Ok(())
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn variance(a: VarianceArgs) -> Result<(), Failure> {
    let law = law(a.beta)?;
    let kernels: Vec<Kernel> =
        a.kernel.iter().map(|s| Kernel::parse(s, &law).or_else(|e| usage("--kernel", e))).collect::<Result<_, _>>()?;
    let bound = 1.0 / law.fisher_info();
    let mut w = csv::Writer::from_writer(io::stdout().lock());
    let csv_err = |e: csv::Error| Failure::Run(e.to_string());
    w.write_record(["kernel", "beta", "i", "j", "sigma2", "efficiency_bound", "note"]).map_err(csv_err)?;
    for k in &kernels {
        let (i, j, s2, note) = match (kernel_i(k, &law), kernel_j(k, &law)) {
            (Ok(i), Ok(j)) => match sigma2(k, &law) {
                Ok(s) => (Some(i), Some(j), Some(s), String::new()),
                Err(e) => (Some(i), Some(j), None, e.to_string()),
            },
            (Err(e), _) | (_, Err(e)) => (None, None, None, e.to_string()),
        };
        w.write_record([
            k.label().to_string(),
            a.beta.to_string(),
            opt_cell(i),
            opt_cell(j),
            opt_cell(s2),
            bound.to_string(),
            note,
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn table8(a: Table8Args) -> Result<(), Failure> {
    let rows = section8_table(a.sigma, a.lambda, a.eta, &a.r, &a.kappa, &a.c).or_else(|e| usage("table parameters", e))?;
    let mut w = csv::Writer::from_writer(io::stdout().lock());
    let csv_err = |e: csv::Error| Failure::Run(e.to_string());
    w.write_record(["regime", "r", "kappa", "c", "sigma", "lambda", "eta", "b0", "b1", "v0", "v1", "rate"])
        .map_err(csv_err)?;
    for row in rows {
        w.write_record([
            row.regime.map(|r| r.to_string()).unwrap_or_else(|| "not_identified".into()),
            row.r.to_string(),
            opt_cell(row.kappa),
            if row.c.is_infinite() { "inf".into() } else { row.c.to_string() },
            row.sigma.to_string(),
            row.lambda.to_string(),
            row.eta.to_string(),
            opt_cell(row.b0),
            opt_cell(row.b1),
            opt_cell(row.v0),
            opt_cell(row.v1),
            row.rate,
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn experiment(a: ExperimentArgs) -> Result<(), Failure> {
    let mut cfg = ExperimentConfig::load(&a.config).or_else(|e| usage("--config", e))?;
    if let Some(t) = a.threads {
        if t == 0 {
            return usage("--threads", "must be positive");
        }
        cfg.threads = Some(t);
    }
    let summary = run_experiment(&cfg)?;
    if let Some(p) = &a.records {
        summary.write_records_csv(BufWriter::new(File::create(p)?))?;
    }
    if let Some(p) = &a.json {
        std::fs::write(p, summary.to_json()?)?;
    }
    summary.write_summary_csv(output(a.summary.as_ref())?)?;
    for g in &summary.gates {
        let at = g.point.map(|p| format!(" at point {p}")).unwrap_or_default();
        eprintln!(
            "{} {}{at}: {} (target {} ± {})",
            if g.passed { "pass" } else { "FAIL" },
            g.gate,
            g.value,
            g.target,
            g.tol
        );
    }
    if summary.passed {
        Ok(())
    } else {
        Err(Failure::GateFailed)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Variance(a) => variance(a),
        Command::Table8(a) => table8(a),
        Command::Experiment(a) => experiment(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::GateFailed) => {
            eprintln!("experiment gates failed");
            ExitCode::from(1)
        }
    }
}
