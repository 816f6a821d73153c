use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use debiased_lasso::lasso::Lasso;
use debiased_lasso::sim::{export_diagnostics, run_configuration, NoiseKind, SimConfig};
use debiased_lasso::{
    build_decorrelator, debias, sample_covariance, test_family, Dataset, DecorrelationOptions, Error,
    ProblemScale, Result, SolverOptions,
};

#[derive(Parser)]
#[command(name = "debias", version, about = "De-biased LASSO inference for high-dimensional regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct DataArgs {
    /// CSV file, response in the first column
    #[arg(long)]
    data: PathBuf,
    /// The first CSV row is a header
    #[arg(long)]
    header: bool,
    /// Divide every column by its sample standard deviation before fitting
    #[arg(long)]
    standardize: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the LASSO
    Fit {
        #[command(flatten)]
        data: DataArgs,
        /// `auto` (scaled-LASSO recipe) or an explicit penalty
        #[arg(long, default_value = "auto")]
        lambda_rule: Rule,
        #[arg(long)]
        out: PathBuf,
    },
    /// De-biased estimates, intervals and tests
    Infer {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value = "auto")]
        lambda_rule: Rule,
        /// `auto` (2 sqrt(log p / n)) or an explicit radius
        #[arg(long, default_value = "auto")]
        mu: Rule,
        /// Bound rows of M by ‖X m‖∞ ≤ n^beta
        #[arg(long)]
        beta: Option<f64>,
        /// Summarize Bonferroni decisions instead of per-coordinate ones
        #[arg(long)]
        fwer: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a synthetic experiment
    Simulate {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 600)]
        p: usize,
        #[arg(long, default_value_t = 10)]
        s0: usize,
        #[arg(long, default_value_t = 0.5)]
        b: f64,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, value_enum, default_value_t = Noise::Gaussian)]
        noise: Noise,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decorrelator diagnostics for a dataset
    Diagnose {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "auto")]
        mu: Rule,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Noise {
    Gaussian,
    Rademacher,
    Expo,
}

impl From<Noise> for NoiseKind {
    fn from(n: Noise) -> Self {
        match n {
            Noise::Gaussian => NoiseKind::Gaussian,
            Noise::Rademacher => NoiseKind::Rademacher,
            Noise::Expo => NoiseKind::Exponential,
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Rule {
    Auto,
    Fixed(f64),
}

impl std::str::FromStr for Rule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            return Ok(Rule::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() && v >= 0.0 => Ok(Rule::Fixed(v)),
            _ => Err(format!("expected `auto` or a nonnegative number, got {s:?}")),
        }
    }
}

fn load(args: &DataArgs) -> Result<(Dataset, Option<Vec<f64>>)> {
    let data = Dataset::from_csv(&args.data, args.header)?;
    if args.standardize {
        let (d, scales) = data.standardized();
        Ok((d, Some(scales)))
    } else {
        Ok((data, None))
    }
}

fn write(path: &Path, contents: String) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(path, contents).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

struct Fitted {
    theta: ndarray::Array1<f64>,
    lasso: debiased_lasso::LassoFit,
    sigma_hat: f64,
}

/// `auto`: σ̂ from the scaled LASSO at `λ̃ = 10 sqrt(2 log p / n)`, then
/// `λ = 4 σ̂ sqrt(2 log p / n)`. A number is used as `λ` directly, with σ̂
/// taken from the residuals.
fn fit_lasso(lasso: &Lasso<'_>, scale: ProblemScale, rule: Rule) -> Result<Fitted> {
    let opts = SolverOptions::default();
    let base = scale.universal_lambda();
    let (lasso_fit, sigma_hat) = match rule {
        Rule::Auto => {
            let defaults = SimConfig::default();
            let scaled = lasso.scaled(defaults.lambda_tilde_factor * base, &opts)?;
            let lambda = defaults.lambda_factor * scaled.sigma_hat * base;
            let fit = lasso.fit(lambda, Some(scaled.theta.view()), &opts)?;
            (fit, scaled.sigma_hat)
        }
        Rule::Fixed(lambda) => {
            let fit = lasso.fit(lambda, None, &opts)?;
            let s = lasso.residual_scale(fit.theta.view());
            (fit, s)
        }
    };
    if !lasso_fit.converged {
        log::warn!("LASSO did not reach tolerance; KKT residual {:.3e}", lasso_fit.kkt_residual);
    }
    Ok(Fitted {
        theta: lasso_fit.theta.clone(),
        lasso: lasso_fit,
        sigma_hat,
    })
}

fn mu_for(rule: Rule, scale: ProblemScale) -> f64 {
    match rule {
        Rule::Auto => scale.default_mu(),
        Rule::Fixed(v) => v,
    }
}

#[derive(Serialize)]
struct FitJson {
    n: usize,
    p: usize,
    lambda: f64,
    sigma_hat: f64,
    iterations: usize,
    converged: bool,
    kkt_residual: f64,
    standardized: bool,
    /// 1-based indices of nonzero coefficients.
    support: Vec<usize>,
    theta: Vec<f64>,
}

fn cmd_fit(args: &DataArgs, rule: Rule, out: &Path) -> Result<()> {
    let (data, scales) = load(args)?;
    let lasso = Lasso::new(&data)?;
    let fitted = fit_lasso(&lasso, data.scale(), rule)?;
    let mut theta = fitted.theta.to_vec();
    if let Some(s) = &scales {
        for (t, s) in theta.iter_mut().zip(s) {
            *t /= s;
        }
    }
    let json = FitJson {
        n: data.n(),
        p: data.p(),
        lambda: fitted.lasso.lambda,
        sigma_hat: fitted.sigma_hat,
        iterations: fitted.lasso.iterations,
        converged: fitted.lasso.converged,
        kkt_residual: fitted.lasso.kkt_residual,
        standardized: scales.is_some(),
        support: theta.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i + 1).collect(),
        theta,
    };
    write(out, serde_json::to_string_pretty(&json)?)?;
    println!(
        "lambda={:.4e} sigma_hat={:.4} nonzeros={} converged={}",
        json.lambda,
        json.sigma_hat,
        json.support.len(),
        json.converged
    );
    Ok(())
}

fn cmd_infer(args: &DataArgs, alpha: f64, rule: Rule, mu: Rule, beta: Option<f64>, fwer: bool, out: &Path) -> Result<()> {
    let (data, scales) = load(args)?;
    let sigma = sample_covariance(&data)?;
    let lasso = Lasso::with_covariance(&data, &sigma)?;
    let fitted = fit_lasso(&lasso, data.scale(), rule)?;
    let mut opts = DecorrelationOptions::with_mu(mu_for(mu, data.scale()));
    opts.row_bound_beta = beta;
    let dec = build_decorrelator(&sigma, Some(data.x()), &opts)?;
    if dec.fallback_identity {
        log::warn!("decorrelation infeasible; using M = I");
    }
    let dfit = debias(&data, &fitted.lasso, &dec, fitted.sigma_hat)?;
    let mut report = test_family(&dfit, alpha, fwer)?;
    if let Some(s) = &scales {
        report.rescale(s)?;
    }
    write(out, report.to_json()?)?;
    let rejected: Vec<usize> = report.rejected().into_iter().map(|i| i + 1).collect();
    println!(
        "{} rejections at alpha={alpha} ({}): {:?}",
        rejected.len(),
        if fwer { "Bonferroni" } else { "per coordinate" },
        rejected
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    n: usize,
    p: usize,
    s0: usize,
    b: f64,
    reps: usize,
    seed: u64,
    alpha: f64,
    noise: Noise,
    beta: Option<f64>,
    out: &Path,
) -> Result<()> {
    let config = SimConfig {
        n,
        p,
        s0,
        b,
        n_reps: reps,
        seed,
        alpha,
        noise: noise.into(),
        beta,
        ..SimConfig::default()
    };
    let start = Instant::now();
    let outcome = run_configuration(&config)?;
    export_diagnostics(&outcome, out)?;
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
    println!(
        "({n},{p},{s0},{b}) reps={} failures={} ell={} ell_S={} ell_Sc={} cov={} cov_S={} cov_Sc={} FP={} TP={} [{:.1}s]",
        outcome.replicates,
        outcome.failures,
        fmt(outcome.ell),
        fmt(outcome.ell_s),
        fmt(outcome.ell_sc),
        fmt(outcome.cov),
        fmt(outcome.cov_s),
        fmt(outcome.cov_sc),
        fmt(outcome.fp),
        fmt(outcome.tp),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

#[derive(Serialize)]
struct Diagnostics {
    n: usize,
    p: usize,
    mu_requested: f64,
    mu_realized: f64,
    coherence: f64,
    fallback_identity: bool,
    rows_feasible: usize,
    rows_inflated: usize,
    /// Summary of `mᵢᵀΣ̂mᵢ / n`; multiply by σ² for the variance of `θ̂ᵘᵢ`.
    q_diag_min: f64,
    q_diag_median: f64,
    q_diag_max: f64,
}

fn cmd_diagnose(args: &DataArgs, mu: Rule, out: &Path) -> Result<()> {
    let (data, _) = load(args)?;
    let sigma = sample_covariance(&data)?;
    let mu = mu_for(mu, data.scale());
    let dec = build_decorrelator(&sigma, None, &DecorrelationOptions::with_mu(mu))?;
    let n = data.n() as f64;
    let mut q: Vec<f64> = dec.row_variance.iter().map(|v| v / n).collect();
    q.sort_by(|a, b| a.total_cmp(b));
    let diag = Diagnostics {
        n: data.n(),
        p: data.p(),
        mu_requested: mu,
        mu_realized: dec.mu,
        coherence: dec.coherence,
        fallback_identity: dec.fallback_identity,
        rows_feasible: dec.rows_certified(),
        rows_inflated: dec.row_mu.iter().filter(|&&m| m > mu).count(),
        q_diag_min: q[0],
        q_diag_median: q[q.len() / 2],
        q_diag_max: q[q.len() - 1],
    };
    fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    write(&out.join("diagnostics.json"), serde_json::to_string_pretty(&diag)?)?;

    let path = out.join("feasibility.csv");
    let csv_err = |source| Error::Csv {
        path: path.clone(),
        source,
    };
    let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
    w.write_record(["index", "feasible", "mu", "row_variance"]).map_err(csv_err)?;
    for i in 0..data.p() {
        w.write_record([
            (i + 1).to_string(),
            dec.row_feasible[i].to_string(),
            dec.row_mu[i].to_string(),
            dec.row_variance[i].to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    println!(
        "coherence={:.4} feasible={}/{} fallback={}",
        diag.coherence, diag.rows_feasible, diag.p, diag.fallback_identity
    );
    Ok(())
}

fn configure_threads() {
    if let Ok(v) = std::env::var("DEBIAS_THREADS") {
        match v.parse::<usize>() {
            Ok(k) if k > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
                    log::warn!("could not size thread pool: {e}");
                }
            }
            _ => log::warn!("ignoring DEBIAS_THREADS={v:?}"),
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit { data, lambda_rule, out } => cmd_fit(&data, lambda_rule, &out),
        Command::Infer {
            data,
            alpha,
            lambda_rule,
            mu,
            beta,
            fwer,
            out,
        } => cmd_infer(&data, alpha, lambda_rule, mu, beta, fwer, &out),
        Command::Simulate {
            n,
            p,
            s0,
            b,
            reps,
            seed,
            alpha,
            noise,
            beta,
            out,
        } => cmd_simulate(n, p, s0, b, reps, seed, alpha, noise, beta, &out),
        Command::Diagnose { data, mu, out } => cmd_diagnose(&data, mu, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    configure_threads();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
