//! `jacobi verify`: runs one Monte Carlo harness on a fixed synthetic setup
//! and writes its report.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use jacobi_core::io::{load_feature_csv, write_json_report};
use jacobi_core::synth::{
    derive_seed, generate_onehot, rng_from_seed, sample_design, Design, SyntheticSpec,
};
use jacobi_core::verify::{
    all_passed, default_invariance_grid, run_bias_check, run_clt, run_consistency,
    run_invariance_grid, thresholds, Check,
};
use jacobi_core::Matrix;
use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Harness {
    Consistency,
    Clt,
    Bias,
    Invariance,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum)]
    what: Harness,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// Sample size (clt default 2000, bias 5000, invariance 2000).
    #[arg(long)]
    n: Option<usize>,
    /// Monte Carlo replications for clt and bias.
    #[arg(long, default_value_t = 500)]
    replications: usize,
    /// Trials per size for consistency.
    #[arg(long, default_value_t = 20)]
    trials: usize,
    /// Comma-separated size ladder for consistency.
    #[arg(long, value_delimiter = ',', default_values_t = [500usize, 5000, 50000])]
    sizes: Vec<usize>,
    /// Rate multiplier s_n (consistency default 1, clt default 100).
    #[arg(long)]
    intensity: Option<f64>,
    /// Common Poisson rate for the intercept-only bias check, in [1, 5].
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Feature count of the generated invariance dataset.
    #[arg(long, default_value_t = 20)]
    features: usize,
    /// Class count of the generated invariance dataset.
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 500)]
    eval_rows: usize,
    /// Run the invariance grid on a feature CSV instead of generated data.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Serialize)]
struct VerifyReport<T: Serialize> {
    what: Harness,
    seed: u64,
    passed: bool,
    checks: Vec<Check>,
    setup: serde_json::Value,
    report: T,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn write<T: Serialize>(
    args: &VerifyArgs,
    setup: serde_json::Value,
    checks: Vec<Check>,
    report: T,
) -> Result<(), CliError> {
    let passed = all_passed(&checks);
    let out = VerifyReport {
        what: args.what,
        seed: args.seed,
        passed,
        checks,
        setup,
        report,
    };
    write_json_report(&out, &args.output)?;
    for c in &out.checks {
        let tag = if c.passed { "ok  " } else { "FAIL" };
        eprintln!(
            "{tag} {}: {:.6} (threshold {})",
            c.name, c.value, c.threshold
        );
    }
    if passed {
        Ok(())
    } else {
        let failing: Vec<String> = out
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{} = {:.6} (threshold {})", c.name, c.value, c.threshold))
            .collect();
        Err(CliError::VerifyFailed(failing.join("; ")))
    }
}

pub fn run(args: &VerifyArgs) -> Result<(), CliError> {
    if let Some(threads) = args.threads {
        if threads == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Data(format!("cannot start thread pool: {e}")))?;
    }
    let positive = |v: usize, flag: &str| {
        if v == 0 {
            Err(usage(format!("{flag} must be positive")))
        } else {
            Ok(v)
        }
    };

    match args.what {
        Harness::Consistency => {
            if args.sizes.len() < 2 || args.sizes.contains(&0) {
                return Err(usage("--sizes needs at least two positive sizes"));
            }
            positive(args.trials, "--trials")?;
            // x = (1, u), u ~ U[−1, 1]; log-rates span [0, log 10] for both classes
            let h = 10f64.ln() / 2.0;
            let beta0 = Matrix::from_rows(&[[h, h], [h, -h]])?;
            let spec = spec(
                beta0,
                Design::BoundedUniformWithIntercept,
                args.intensity.unwrap_or(1.0),
                args.seed,
            )?;
            let report = run_consistency(&spec, &args.sizes, args.trials)?;
            write(
                args,
                serde_json::to_value(&spec).unwrap_or_default(),
                report.checks(),
                report,
            )
        }
        Harness::Clt => {
            if args.replications < thresholds::CLT_MIN_REPLICATIONS {
                return Err(usage(format!(
                    "--replications must be at least {} for clt, got {}",
                    thresholds::CLT_MIN_REPLICATIONS,
                    args.replications
                )));
            }
            let beta0 = Matrix::from_rows(&[[0.0, 0.3], [0.5, -0.5]])?;
            let spec = spec(
                beta0,
                Design::BoundedUniformWithIntercept,
                args.intensity.unwrap_or(100.0),
                args.seed,
            )?;
            let report = run_clt(
                &spec,
                positive(args.n.unwrap_or(2000), "--n")?,
                args.replications,
            )?;
            write(
                args,
                serde_json::to_value(&spec).unwrap_or_default(),
                report.checks(),
                report,
            )
        }
        Harness::Bias => {
            let (lo, hi) = thresholds::BIAS_RATE_RANGE;
            if !(lo..=hi).contains(&args.lambda) {
                return Err(usage(format!(
                    "--lambda must lie in [{lo}, {hi}], got {}",
                    args.lambda
                )));
            }
            if args.replications < 2 {
                return Err(usage("--replications must be at least 2 for bias"));
            }
            let beta0 = Matrix::filled(1, 1, args.lambda.ln());
            let spec = spec(beta0, Design::BoundedUniformWithIntercept, 1.0, args.seed)?;
            let report = run_bias_check(
                &spec,
                positive(args.n.unwrap_or(5000), "--n")?,
                args.replications,
            )?;
            write(
                args,
                serde_json::to_value(&spec).unwrap_or_default(),
                report.checks(),
                report,
            )
        }
        Harness::Invariance => {
            let (x, labels, k, eval_x, setup) = match &args.data {
                Some(path) => {
                    let ds = load_feature_csv(path)?;
                    let k = ds.class_names.len();
                    let setup = serde_json::json!({ "data": path, "class_names": ds.class_names });
                    (ds.features.clone(), ds.labels, k, ds.features, setup)
                }
                None => {
                    let p = positive(args.features, "--features")?;
                    if args.classes < 2 {
                        return Err(usage("--classes must be at least 2"));
                    }
                    let mut rng = rng_from_seed(args.seed);
                    let beta0 =
                        sample_design(Design::StandardNormal, p, args.classes, &mut rng).scale(0.5);
                    let train = spec(
                        beta0,
                        Design::StandardNormalWithIntercept,
                        1.0,
                        derive_seed(args.seed, 1),
                    )?;
                    let held_out = SyntheticSpec {
                        seed: derive_seed(args.seed, 2),
                        ..train.clone()
                    };
                    let (x, labels) =
                        generate_onehot(&train, positive(args.n.unwrap_or(2000), "--n")?)?;
                    let (eval_x, _) =
                        generate_onehot(&held_out, positive(args.eval_rows, "--eval-rows")?)?;
                    (
                        x,
                        labels,
                        args.classes,
                        eval_x,
                        serde_json::to_value(&train).unwrap_or_default(),
                    )
                }
            };
            let report = run_invariance_grid(&x, &labels, k, &eval_x, &default_invariance_grid())?;
            write(args, setup, report.checks(), report)
        }
    }
}

fn spec(
    beta0: Matrix,
    design: Design,
    intensity: f64,
    seed: u64,
) -> Result<SyntheticSpec, CliError> {
    SyntheticSpec::new(beta0, design, intensity, seed).map_err(|e| usage(e.to_string()))
}
