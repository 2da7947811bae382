//! Command-line front end: seeded experiment runs, the exact
//! lower-bound verifier, and disagreement-coefficient estimation.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use deepal::harness::{
    run_experiment, verify_lower_bound_instance, write_outputs, Algorithm, ExperimentConfig,
    PoolSpec,
};
use deepal::metrics::{
    estimate_classifier_dis_coeff, estimate_value_dis_coeff, log_spaced_grid,
};
use deepal::version_space::ThresholdClassifier;

#[derive(Parser)]
#[command(name = "deepal", about = "Active-learning simulation harness", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the experiment described by a JSON config.
    Run(RunArgs),
    /// Exhaustively verify the hard-instance query lower bound.
    VerifyLowerBound(VerifyArgs),
    /// Estimate disagreement coefficients for the configured pool.
    EstimateTheta(ThetaArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's algorithm.
    #[arg(long)]
    algorithm: Option<String>,
    /// Override the epsilon grid (repeatable).
    #[arg(long = "epsilon")]
    epsilons: Vec<f64>,
    /// Override the number of seeded runs.
    #[arg(long)]
    runs: Option<usize>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the worker-group size.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory for records.csv, traces, and aggregate.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Margin parameter, as a float or a fraction like 1/16.
    #[arg(long, value_parser = parse_fraction)]
    gamma: f64,
    #[arg(long)]
    dim: usize,
    /// Query budget of the adversary's strategy.
    #[arg(long)]
    queries: usize,
    #[arg(long, default_value_t = 15)]
    seed: u64,
}

#[derive(Args)]
struct ThetaArgs {
    #[arg(long)]
    config: PathBuf,
}

fn parse_fraction(s: &str) -> Result<f64, String> {
    if let Some((num, den)) = s.split_once('/') {
        let n: f64 = num.trim().parse().map_err(|e| format!("{e}"))?;
        let d: f64 = den.trim().parse().map_err(|e| format!("{e}"))?;
        if d == 0.0 {
            return Err("zero denominator".into());
        }
        Ok(n / d)
    } else {
        s.trim().parse().map_err(|e| format!("{e}"))
    }
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    match s {
        "neuralcal" => Ok(Algorithm::Neuralcal),
        "neuralcalpp" => Ok(Algorithm::Neuralcalpp),
        "passive-erm" => Ok(Algorithm::PassiveErm),
        other => Err(format!(
            "unknown algorithm {other:?}; expected neuralcal, neuralcalpp, or passive-erm"
        )),
    }
}

fn cmd_run(args: RunArgs) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let text = std::fs::read_to_string(&args.config)?;
    let mut config = ExperimentConfig::from_json(&text)?;
    if let Some(a) = &args.algorithm {
        config.algorithm = parse_algorithm(a)?;
    }
    if !args.epsilons.is_empty() {
        config.epsilons = args.epsilons.clone();
    }
    if let Some(r) = args.runs {
        config.n_runs = r;
    }
    if let Some(s) = args.seed {
        config.master_seed = s;
    }
    if let Some(w) = args.workers {
        config.workers = w;
    }
    let out_dir = args
        .out
        .or_else(|| config.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let outcome = run_experiment(&config)?;
    write_outputs(&outcome, &out_dir)?;
    eprintln!(
        "wrote {} records to {}; audits {}",
        outcome.records.len(),
        out_dir.display(),
        if outcome.audits_ok { "passed" } else { "FAILED" }
    );
    Ok(if outcome.audits_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn cmd_verify(args: VerifyArgs) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let report = verify_lower_bound_instance(args.gamma, args.dim, args.queries, args.seed)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(if report.meets_bound {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn cmd_theta(args: ThetaArgs) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let text = std::fs::read_to_string(&args.config)?;
    let config = ExperimentConfig::from_json(&text)?;
    let instance = config.instance.build()?;
    let mut rng = deepal::run_rng(config.master_seed, 0, 2);
    let n_mc = config.eval_mc.max(1000);
    let estimate = match &config.pool {
        PoolSpec::Thresholds { .. } => {
            let pool = config.pool.build_classifiers()?;
            let center = ThresholdClassifier { threshold: 0.5 };
            let eps0 = 0.01;
            let grid = log_spaced_grid(eps0 * 1.5, 1.0, 32);
            estimate_classifier_dis_coeff(
                &pool, &center, eps0, &grid, n_mc, &instance, &mut rng,
            )?
        }
        PoolSpec::StepFunctions { .. } => {
            let (pool, eta_index) = config.pool.build_regression()?;
            let fstar = eta_index.unwrap_or(0);
            let gamma0 = config.gamma / 8.0;
            let gamma_grid = log_spaced_grid(gamma0 * 1.5, 0.49, 32);
            let eps_grid = log_spaced_grid(0.01, 1.0, 32);
            estimate_value_dis_coeff(
                &pool,
                fstar,
                gamma0,
                &gamma_grid,
                &eps_grid,
                n_mc,
                &instance.marginal,
                &mut rng,
            )?
        }
    };
    println!("{}", serde_json::to_string_pretty(&estimate)?);
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::VerifyLowerBound(args) => cmd_verify(args),
        Command::EstimateTheta(args) => cmd_theta(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
