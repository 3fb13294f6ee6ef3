mod model_file;
mod verify;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use jacobi_core::features::PcaProjection;
use jacobi_core::io::{load_feature_csv, write_json_report, FeatureDataset};
use jacobi_core::metrics::{evaluate, time_fit};
use jacobi_core::ridge::DEFAULT_ALPHA;
use jacobi_core::{GpParams, JacobiDmrModel, JacobiGpModel, Prior, RidgeModel};

use model_file::{Classifier, GpInfo, PcaInfo, Sidecar};

/// Closed-form Jacobi-prior classifiers: train, evaluate, predict, verify.
#[derive(Debug, Parser)]
#[command(name = "jacobi", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a classifier on a feature CSV.
    Train(TrainArgs),
    /// Score a model on a labelled feature CSV (or replay stored label pairs).
    Eval(EvalArgs),
    /// Write one predicted class name per input row.
    Predict(PredictArgs),
    /// Run a Monte Carlo verification harness.
    Verify(verify::VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Dmr,
    Gp,
    Ridge,
}

#[derive(Debug, Args)]
struct TrainArgs {
    features: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Dmr)]
    method: Method,
    /// Prior shape a (default 1/n).
    #[arg(long = "a")]
    a: Option<f64>,
    /// Prior rate b (default 1/n).
    #[arg(long = "b")]
    b: Option<f64>,
    /// Apply the second-order bias correction (dmr only).
    #[arg(long)]
    bias_correct: bool,
    /// Reduce to the top d principal components before fitting.
    #[arg(long)]
    pca: Option<usize>,
    /// Ridge penalty.
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long)]
    length_scale: Option<f64>,
    #[arg(long)]
    signal_var: Option<f64>,
    #[arg(long)]
    noise_var: Option<f64>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(required_unless_present = "pairs")]
    model: Option<PathBuf>,
    #[arg(required_unless_present = "pairs")]
    features: Option<PathBuf>,
    /// CSV with `true,predicted` class-name columns, evaluated as given.
    #[arg(long, conflicts_with_all = ["model", "features"])]
    pairs: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct PredictArgs {
    model: PathBuf,
    features: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    VerifyFailed(String),
}

impl From<jacobi_core::Error> for CliError {
    fn from(e: jacobi_core::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

fn csv_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn train(args: &TrainArgs) -> Result<(), CliError> {
    if args.bias_correct && args.method != Method::Dmr {
        return Err(CliError::Usage(
            "--bias-correct only applies to --method dmr".into(),
        ));
    }
    if args.method == Method::Ridge && (args.a.is_some() || args.b.is_some()) {
        return Err(CliError::Usage(
            "--a/--b do not apply to --method ridge".into(),
        ));
    }
    if args.method != Method::Gp
        && (args.length_scale.is_some() || args.signal_var.is_some() || args.noise_var.is_some())
    {
        return Err(CliError::Usage(
            "kernel flags only apply to --method gp".into(),
        ));
    }
    let ds = load_feature_csv(&args.features)?;
    let (n, p) = (ds.n_samples(), ds.n_features());
    let names = ds.class_names.clone();
    let prior = match (args.a, args.b) {
        (None, None) => None,
        (a, b) => {
            let default = 1.0 / n as f64;
            Some(
                Prior::new(a.unwrap_or(default), b.unwrap_or(default))
                    .map_err(|e| CliError::Usage(e.to_string()))?,
            )
        }
    };

    let fitted = time_fit(|| -> Result<_, CliError> {
        let pca = args
            .pca
            .map(|d| PcaProjection::fit(&ds.features, d))
            .transpose()?;
        let x = match &pca {
            Some(proj) => proj.apply(&ds.features)?,
            None => ds.features.clone(),
        };
        let classifier = match args.method {
            Method::Dmr => {
                let mut m = JacobiDmrModel::fit(&x, &ds.labels, names.clone(), prior)?;
                if args.bias_correct {
                    log::warn!(
                        "bias correction targets counts with moderate rates; on one-hot labels \
                         exp(-score) is of order n and the corrected model can lose accuracy"
                    );
                    m = m.bias_correct(&x)?;
                }
                Classifier::Dmr(m)
            }
            Method::Gp => {
                let params = GpParams {
                    length_scale: args.length_scale,
                    signal_var: args.signal_var,
                    noise_var: args.noise_var,
                };
                Classifier::Gp(JacobiGpModel::fit(
                    &x,
                    &ds.labels,
                    names.clone(),
                    prior,
                    params,
                )?)
            }
            Method::Ridge => {
                Classifier::Ridge(RidgeModel::fit(&x, &ds.labels, names.clone(), args.alpha)?)
            }
        };
        Ok((pca, classifier))
    });
    let ((pca, classifier), fit_seconds) = (fitted.0?, fitted.1);

    let (a, b, gram_jitter, gp) = match &classifier {
        Classifier::Dmr(m) => (
            Some(m.prior().a),
            Some(m.prior().b),
            Some(m.gram_jitter()),
            None,
        ),
        Classifier::Gp(m) => {
            log::warn!(
                "GP model stores all {n} training rows; its size grows with n ({} values vs {} for dmr)",
                m.stored_values(),
                m.n_features() * m.class_names().len()
            );
            let info = GpInfo {
                length_scale: m.length_scale(),
                signal_var: m.signal_var(),
                noise_var: m.noise_var(),
                stored_values: m.stored_values(),
            };
            (Some(m.prior().a), Some(m.prior().b), None, Some(info))
        }
        Classifier::Ridge(_) => (None, None, None, None),
    };
    let sidecar = Sidecar {
        method: classifier.method().into(),
        n_samples: n,
        n_features: p,
        n_classes: names.len(),
        class_names: names,
        a,
        b,
        alpha: (args.method == Method::Ridge).then_some(args.alpha),
        bias_corrected: args.bias_correct,
        fit_seconds,
        gram_jitter,
        gp,
        pca: pca.map(|proj| PcaInfo {
            dims: proj.dims(),
            explained_variance_ratio: proj.explained_variance_ratio(),
            projection: proj,
        }),
    };
    model_file::save(&classifier, &sidecar, &args.output)?;
    eprintln!(
        "trained {} on {n}×{p} in {fit_seconds:.6}s -> {}",
        classifier.method(),
        args.output.display()
    );
    Ok(())
}

/// Loads a model and a CSV and predicts every row; returns the data set,
/// the predictions and the mean per-row prediction time in microseconds.
fn predict_all(
    model: &Path,
    features: &Path,
) -> Result<(model_file::LoadedModel, FeatureDataset, Vec<usize>, f64), CliError> {
    let loaded = model_file::load(model)?;
    let ds = load_feature_csv(features)?;
    let x = loaded.prepare(&ds.features, features)?;
    let start = Instant::now();
    let pred = x
        .row_iter()
        .map(|row| loaded.classifier.predict_class(row))
        .collect::<Result<Vec<_>, _>>()?;
    let micros = start.elapsed().as_secs_f64() * 1e6 / x.rows() as f64;
    Ok((loaded, ds, pred, micros))
}

fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let report = match (&args.pairs, &args.model, &args.features) {
        (Some(pairs), _, _) => {
            let (truth, pred, names) = read_pairs(pairs)?;
            evaluate(&truth, &pred, &names)?
        }
        (None, Some(model), Some(features)) => {
            let (loaded, ds, pred, _) = predict_all(model, features)?;
            let names = loaded.classifier.class_names().to_vec();
            let truth = ds.labels_for(&names)?;
            let mut report = evaluate(&truth, &pred, &names)?;
            report.fit_seconds = loaded.sidecar.as_ref().map(|s| s.fit_seconds);
            report
        }
        _ => {
            return Err(CliError::Usage(
                "eval needs MODEL and FEATURES, or --pairs".into(),
            ))
        }
    };
    write_json_report(&report, &args.output)?;
    eprintln!(
        "accuracy {:.4}, macro-F1 {:.4}",
        report.accuracy, report.macro_f1
    );
    Ok(())
}

/// Class names are indexed by first appearance, true column first.
fn read_pairs(path: &Path) -> Result<(Vec<usize>, Vec<usize>, Vec<String>), CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut names: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut raw = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, format!("line {}: {e}", i + 2)))?;
        if rec.len() != 2 {
            return Err(csv_err(
                path,
                format!("line {}: expected 2 columns, found {}", i + 2, rec.len()),
            ));
        }
        raw.push((rec[0].trim().to_string(), rec[1].trim().to_string()));
    }
    let mut intern = |s: &str| {
        *index.entry(s.to_string()).or_insert_with(|| {
            names.push(s.to_string());
            names.len() - 1
        })
    };
    let truth: Vec<usize> = raw.iter().map(|(t, _)| intern(t)).collect();
    let pred: Vec<usize> = raw.iter().map(|(_, p)| intern(p)).collect();
    if truth.is_empty() {
        return Err(csv_err(path, "no label pairs"));
    }
    Ok((truth, pred, names))
}

fn predict(args: &PredictArgs) -> Result<(), CliError> {
    let (loaded, _, pred, micros) = predict_all(&args.model, &args.features)?;
    let names = loaded.classifier.class_names();
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(&args.output)
        .map_err(|e| csv_err(&args.output, e))?;
    for &c in &pred {
        w.write_record([&names[c]])
            .map_err(|e| csv_err(&args.output, e))?;
    }
    w.flush().map_err(|e| csv_err(&args.output, e))?;
    eprintln!("{} predictions, mean {micros:.3} µs per sample", pred.len());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Predict(a) => predict(a),
        Command::Verify(a) => verify::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::VerifyFailed(msg)) => {
            eprintln!("FAIL: {msg}");
            ExitCode::from(3)
        }
    }
}
