//! Monte Carlo harnesses for the estimator's large-sample behaviour:
//! consistency over a size ladder, asymptotic normality against the
//! sandwich covariance `Q⁻¹V_kQ⁻¹`, the moderate-rate bias correction, and
//! argmax invariance over a hyperparameter grid.
//!
//! Replications run in parallel; each draws from its own stream seeded by
//! [`derive_seed`], so reports are identical for any thread count.

use rayon::prelude::*;
use serde::Serialize;

use crate::dmr::{
    argmax, bias_correct_with_projector, fit_with_projector, one_hot, Prior, EXP_GUARD,
};
use crate::error::{Error, Result};
use crate::linalg::{DesignProjector, Matrix, SpdFactorization};
use crate::synth::{
    derive_seed, effective_truth, rates, rng_from_seed, sample_counts, sample_design, SyntheticSpec,
};

/// Pass thresholds used by [`ConsistencyReport::checks`] and friends.
pub mod thresholds {
    pub const CONSISTENCY_LAST_OVER_FIRST: f64 = 0.4;
    pub const CLT_MAX_RELATIVE_DEVIATION: f64 = 0.25;
    pub const CLT_MAX_ABS_SKEWNESS: f64 = 0.3;
    pub const CLT_MAX_CROSS_CORRELATION: f64 = 0.15;
    pub const BIAS_MIN_RATIO: f64 = 2.0;
    pub const BIAS_MAX_STANDARD_ERRORS: f64 = 3.0;
    pub const CLT_MIN_REPLICATIONS: usize = 100;
    pub const BIAS_RATE_RANGE: (f64, f64) = (1.0, 5.0);
}

/// One named pass/fail statistic.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            passed: value <= threshold,
        }
    }

    fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            passed: value >= threshold,
        }
    }

    fn flag(name: &str, passed: bool) -> Self {
        Self {
            name: name.into(),
            value: f64::from(u8::from(passed)),
            threshold: 1.0,
            passed,
        }
    }
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.passed)
}

fn frobenius_distance(a: &Matrix, b: &Matrix) -> Result<f64> {
    Ok(a.sub(b)?.frobenius_norm())
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

// ---------------------------------------------------------------------------
// consistency

#[derive(Debug, Clone, Serialize)]
pub struct ConsistencyReport {
    pub sizes: Vec<usize>,
    pub trials: usize,
    pub intensity: f64,
    /// Median `‖β̂ − β₀‖_F` per size.
    pub plain_median_error: Vec<f64>,
    pub corrected_median_error: Vec<f64>,
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

impl ConsistencyReport {
    pub fn corrected_strictly_decreasing(&self) -> bool {
        strictly_decreasing(&self.corrected_median_error)
    }

    pub fn plain_strictly_decreasing(&self) -> bool {
        strictly_decreasing(&self.plain_median_error)
    }

    /// Corrected error at the largest size over that at the smallest.
    pub fn corrected_shrinkage(&self) -> f64 {
        match (
            self.corrected_median_error.first(),
            self.corrected_median_error.last(),
        ) {
            (Some(first), Some(last)) if *first > 0.0 => last / first,
            _ => f64::NAN,
        }
    }

    pub fn checks(&self) -> Vec<Check> {
        vec![
            Check::flag(
                "corrected median error strictly decreasing",
                self.corrected_strictly_decreasing(),
            ),
            Check::at_most(
                "corrected error ratio largest/smallest size",
                self.corrected_shrinkage(),
                thresholds::CONSISTENCY_LAST_OVER_FIRST,
            ),
        ]
    }
}

/// For each size, `trials` independent datasets are fitted with
/// `a = b = 1/n`; the plain and bias-corrected estimates are compared to the
/// coefficients of `log λ`.
pub fn run_consistency(
    spec: &SyntheticSpec,
    sizes: &[usize],
    trials: usize,
) -> Result<ConsistencyReport> {
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    if sizes.is_empty() || !sizes.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::invalid(
            "sizes must be non-empty and strictly ascending",
        ));
    }
    let mut plain_median_error = Vec::with_capacity(sizes.len());
    let mut corrected_median_error = Vec::with_capacity(sizes.len());
    for (si, &n) in sizes.iter().enumerate() {
        if n < spec.n_features() {
            return Err(Error::invalid(format!(
                "size {n} is below the feature count {}",
                spec.n_features()
            )));
        }
        let size_seed = derive_seed(spec.seed, si as u64);
        let errors: Vec<(f64, f64)> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = rng_from_seed(derive_seed(size_seed, t as u64));
                let x = sample_design(spec.design, n, spec.n_features(), &mut rng);
                let y = sample_counts(&x, &spec.beta0, spec.intensity, &mut rng)?;
                let truth = effective_truth(&x, spec)?;
                let projector = DesignProjector::new(&x)?;
                let plain = fit_with_projector(&projector, &x, &y, Prior::for_sample_size(n))?;
                let corrected = bias_correct_with_projector(&projector, &x, &plain)?;
                Ok((
                    frobenius_distance(&plain, &truth)?,
                    frobenius_distance(&corrected, &truth)?,
                ))
            })
            .collect::<Result<_>>()?;
        let (plain, corrected): (Vec<f64>, Vec<f64>) = errors.into_iter().unzip();
        plain_median_error.push(median(&plain));
        corrected_median_error.push(median(&corrected));
    }
    Ok(ConsistencyReport {
        sizes: sizes.to_vec(),
        trials,
        intensity: spec.intensity,
        plain_median_error,
        corrected_median_error,
    })
}

// ---------------------------------------------------------------------------
// asymptotic normality

/// `Q_n⁻¹·V_n·Q_n⁻¹` with `Q_n = XᵀX/n` and
/// `V_n = (1/n)·Σ x_i x_iᵀ exp(−x_i·β)`, where `β` is column `k` of `beta`.
pub fn compute_target_covariance(x: &Matrix, beta: &Matrix, k: usize) -> Result<Matrix> {
    if beta.rows() != x.cols() || k >= beta.cols() {
        return Err(Error::invalid(
            "coefficient matrix does not match the design",
        ));
    }
    let (n, p) = x.shape();
    let nf = n as f64;
    let q = crate::linalg::gram(x)?.scale(1.0 / nf);
    let mut v = Matrix::zeros(p, p);
    let beta_k = beta.column(k);
    for (i, row) in x.row_iter().enumerate() {
        let exponent = -crate::linalg::dot(row, &beta_k);
        if exponent > EXP_GUARD {
            return Err(Error::OverflowGuard { row: i, exponent });
        }
        let w = exponent.exp() / nf;
        for a in 0..p {
            let wa = w * row[a];
            for b in a..p {
                v[(a, b)] += wa * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            v[(a, b)] = v[(b, a)];
        }
    }
    let qf = SpdFactorization::new(&q)?;
    let left = qf.solve(&v)?; // Q⁻¹V
    let sandwich = qf.solve(&left.transpose())?; // Q⁻¹(Q⁻¹V)ᵀ = Q⁻¹VQ⁻¹
    let sym = sandwich.add(&sandwich.transpose())?.scale(0.5);
    Ok(sym)
}

#[derive(Debug, Clone, Serialize)]
pub struct CltClassReport {
    /// Mean of `√n(β̂_k − β_k)` over replications.
    pub mean: Vec<f64>,
    pub empirical_covariance: Matrix,
    pub target_covariance: Matrix,
    /// `‖empirical − target‖_F / ‖target‖_F`.
    pub relative_frobenius_deviation: f64,
    /// Per-coefficient skewness of the standardized estimates.
    pub skewness: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CltReport {
    pub n: usize,
    pub replications: usize,
    pub intensity: f64,
    pub bias_corrected: bool,
    pub classes: Vec<CltClassReport>,
    /// Largest `|corr|` between coefficients of different classes.
    pub max_cross_class_correlation: f64,
}

impl CltReport {
    pub fn checks(&self) -> Vec<Check> {
        let mut out = Vec::new();
        for (k, c) in self.classes.iter().enumerate() {
            out.push(Check::at_most(
                &format!("class {k} relative Frobenius deviation"),
                c.relative_frobenius_deviation,
                thresholds::CLT_MAX_RELATIVE_DEVIATION,
            ));
            let skew = c.skewness.iter().fold(0.0f64, |m, s| m.max(s.abs()));
            out.push(Check::at_most(
                &format!("class {k} max |skewness|"),
                skew,
                thresholds::CLT_MAX_ABS_SKEWNESS,
            ));
        }
        out.push(Check::at_most(
            "max cross-class correlation",
            self.max_cross_class_correlation,
            thresholds::CLT_MAX_CROSS_CORRELATION,
        ));
        out
    }
}

/// Fixed-design CLT experiment: `X` is drawn once from `spec.seed`, counts
/// are redrawn per replication and the bias-corrected estimator is centred
/// at the coefficients of `log λ`.
pub fn run_clt(spec: &SyntheticSpec, n: usize, replications: usize) -> Result<CltReport> {
    if replications < thresholds::CLT_MIN_REPLICATIONS {
        return Err(Error::invalid(format!(
            "CLT needs at least {} replications, got {replications}",
            thresholds::CLT_MIN_REPLICATIONS
        )));
    }
    let (p, k) = (spec.n_features(), spec.n_classes());
    let mut rng = rng_from_seed(spec.seed);
    let x = sample_design(spec.design, n, p, &mut rng);
    let truth = effective_truth(&x, spec)?;
    let projector = DesignProjector::new(&x)?;
    let prior = Prior::for_sample_size(n);
    let root_n = (n as f64).sqrt();

    let draws: Vec<Matrix> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_from_seed(derive_seed(spec.seed, r as u64));
            let y = sample_counts(&x, &spec.beta0, spec.intensity, &mut rng)?;
            let plain = fit_with_projector(&projector, &x, &y, prior)?;
            let corrected = bias_correct_with_projector(&projector, &x, &plain)?;
            Ok(corrected.sub(&truth)?.scale(root_n))
        })
        .collect::<Result<_>>()?;

    // replications × (p·K), column index = class·p + coefficient
    let width = p * k;
    let mut flat = Matrix::zeros(replications, width);
    for (r, d) in draws.iter().enumerate() {
        for c in 0..k {
            for j in 0..p {
                flat[(r, c * p + j)] = d[(j, c)];
            }
        }
    }
    let means: Vec<f64> = (0..width)
        .map(|c| flat.column(c).iter().sum::<f64>() / replications as f64)
        .collect();
    let mut cov = Matrix::zeros(width, width);
    for row in flat.row_iter() {
        for a in 0..width {
            let da = row[a] - means[a];
            for b in a..width {
                cov[(a, b)] += da * (row[b] - means[b]);
            }
        }
    }
    let denom = (replications - 1) as f64;
    for a in 0..width {
        for b in a..width {
            let v = cov[(a, b)] / denom;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }

    let mut classes = Vec::with_capacity(k);
    for c in 0..k {
        let mut emp = Matrix::zeros(p, p);
        for a in 0..p {
            for b in 0..p {
                emp[(a, b)] = cov[(c * p + a, c * p + b)];
            }
        }
        let target = compute_target_covariance(&x, &truth, c)?;
        let deviation = frobenius_distance(&emp, &target)? / target.frobenius_norm();
        let skewness = (0..p)
            .map(|j| {
                let col = flat.column(c * p + j);
                let m = means[c * p + j];
                let m2 = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / replications as f64;
                let m3 = col.iter().map(|v| (v - m).powi(3)).sum::<f64>() / replications as f64;
                m3 / m2.powf(1.5)
            })
            .collect();
        classes.push(CltClassReport {
            mean: means[c * p..(c + 1) * p].to_vec(),
            empirical_covariance: emp,
            target_covariance: target,
            relative_frobenius_deviation: deviation,
            skewness,
        });
    }

    let mut max_cross = 0.0f64;
    for a in 0..width {
        for b in (a + 1)..width {
            if a / p != b / p {
                let corr = cov[(a, b)] / (cov[(a, a)] * cov[(b, b)]).sqrt();
                max_cross = max_cross.max(corr.abs());
            }
        }
    }

    Ok(CltReport {
        n,
        replications,
        intensity: spec.intensity,
        bias_corrected: true,
        classes,
        max_cross_class_correlation: max_cross,
    })
}

// ---------------------------------------------------------------------------
// bias correction

#[derive(Debug, Clone, Serialize)]
pub struct BiasReport {
    pub n: usize,
    pub replications: usize,
    /// Mean of `β̂ − β₀` over replications, flattened class-major.
    pub plain_mean_bias: Vec<f64>,
    pub corrected_mean_bias: Vec<f64>,
    /// Monte Carlo standard error of each corrected mean bias entry.
    pub corrected_standard_error: Vec<f64>,
    pub plain_bias_norm: f64,
    pub corrected_bias_norm: f64,
    /// `plain_bias_norm / corrected_bias_norm`.
    pub ratio: f64,
    pub corrected_within_standard_errors: bool,
}

impl BiasReport {
    pub fn checks(&self) -> Vec<Check> {
        vec![
            Check::at_least(
                "plain/corrected mean bias ratio",
                self.ratio,
                thresholds::BIAS_MIN_RATIO,
            ),
            Check::at_most(
                "corrected mean bias in standard errors",
                self.corrected_mean_bias
                    .iter()
                    .zip(&self.corrected_standard_error)
                    .fold(0.0f64, |m, (b, se)| m.max(b.abs() / se)),
                thresholds::BIAS_MAX_STANDARD_ERRORS,
            ),
        ]
    }
}

/// Compares the mean error of the plain and bias-corrected estimators over
/// `replications` fresh datasets (fixed design). All rates must lie in
/// `[1, 5]`.
pub fn run_bias_check(spec: &SyntheticSpec, n: usize, replications: usize) -> Result<BiasReport> {
    if replications < 2 {
        return Err(Error::invalid("bias check needs at least 2 replications"));
    }
    let (p, k) = (spec.n_features(), spec.n_classes());
    let mut rng = rng_from_seed(spec.seed);
    let x = sample_design(spec.design, n, p, &mut rng);
    let (lo, hi) = thresholds::BIAS_RATE_RANGE;
    let lambda = rates(&x, spec)?;
    if lambda
        .as_slice()
        .iter()
        .any(|&l| l < lo * (1.0 - 1e-9) || l > hi * (1.0 + 1e-9))
    {
        return Err(Error::invalid(format!(
            "bias check requires all rates in [{lo}, {hi}]"
        )));
    }
    let truth = effective_truth(&x, spec)?;
    let projector = DesignProjector::new(&x)?;
    let prior = Prior::for_sample_size(n);

    let draws: Vec<(Matrix, Matrix)> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_from_seed(derive_seed(spec.seed, r as u64));
            let y = sample_counts(&x, &spec.beta0, spec.intensity, &mut rng)?;
            let plain = fit_with_projector(&projector, &x, &y, prior)?;
            let corrected = bias_correct_with_projector(&projector, &x, &plain)?;
            Ok((plain.sub(&truth)?, corrected.sub(&truth)?))
        })
        .collect::<Result<_>>()?;

    let flatten = |m: &Matrix| -> Vec<f64> {
        (0..k)
            .flat_map(|c| (0..p).map(move |j| (j, c)))
            .map(|(j, c)| m[(j, c)])
            .collect()
    };
    let width = p * k;
    let r = replications as f64;
    let mut plain_mean = vec![0.0; width];
    let mut corr_mean = vec![0.0; width];
    let corr_flat: Vec<Vec<f64>> = draws.iter().map(|(_, c)| flatten(c)).collect();
    for (pl, co) in draws.iter().map(|(pl, _)| flatten(pl)).zip(&corr_flat) {
        for i in 0..width {
            plain_mean[i] += pl[i] / r;
            corr_mean[i] += co[i] / r;
        }
    }
    let corrected_standard_error: Vec<f64> = (0..width)
        .map(|i| {
            let var = corr_flat
                .iter()
                .map(|c| (c[i] - corr_mean[i]).powi(2))
                .sum::<f64>()
                / (r - 1.0);
            (var / r).sqrt()
        })
        .collect();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let plain_bias_norm = norm(&plain_mean);
    let corrected_bias_norm = norm(&corr_mean);
    let corrected_within_standard_errors = corr_mean
        .iter()
        .zip(&corrected_standard_error)
        .all(|(b, se)| b.abs() <= thresholds::BIAS_MAX_STANDARD_ERRORS * se);
    Ok(BiasReport {
        n,
        replications,
        plain_mean_bias: plain_mean,
        corrected_mean_bias: corr_mean,
        corrected_standard_error,
        plain_bias_norm,
        corrected_bias_norm,
        ratio: plain_bias_norm / corrected_bias_norm,
        corrected_within_standard_errors,
    })
}

// ---------------------------------------------------------------------------
// hyperparameter invariance

/// `{1/2000, 0.01, 0.05, 0.1, 0.2, 0.5, 1.0}²`, 49 pairs.
pub fn default_invariance_grid() -> Vec<Prior> {
    const VALUES: [f64; 7] = [1.0 / 2000.0, 0.01, 0.05, 0.1, 0.2, 0.5, 1.0];
    VALUES
        .iter()
        .flat_map(|&a| VALUES.iter().map(move |&b| Prior { a, b }))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct GridDisagreement {
    pub a: f64,
    pub b: f64,
    pub mismatched_rows: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct InvarianceReport {
    pub grid_size: usize,
    pub eval_rows: usize,
    /// Whether the training targets were one-hot. Invariance is only
    /// guaranteed when they are.
    pub one_hot: bool,
    pub identical: bool,
    pub reference: Option<Prior>,
    pub disagreements: Vec<GridDisagreement>,
}

impl InvarianceReport {
    pub fn checks(&self) -> Vec<Check> {
        vec![Check::flag(
            "identical predictions across the grid",
            self.identical,
        )]
    }
}

pub fn run_invariance_grid(
    x: &Matrix,
    labels: &[usize],
    n_classes: usize,
    eval_x: &Matrix,
    grid: &[Prior],
) -> Result<InvarianceReport> {
    let counts = one_hot(labels, n_classes)?;
    run_invariance_grid_counts(x, &counts, eval_x, grid)
}

/// Fits one model per grid point on arbitrary counts and compares every
/// prediction vector on `eval_x` to the first grid point's, exactly.
pub fn run_invariance_grid_counts(
    x: &Matrix,
    counts: &Matrix,
    eval_x: &Matrix,
    grid: &[Prior],
) -> Result<InvarianceReport> {
    if eval_x.cols() != x.cols() {
        return Err(Error::invalid(format!(
            "evaluation rows have {} features, training rows have {}",
            eval_x.cols(),
            x.cols()
        )));
    }
    let one_hot = counts
        .row_iter()
        .all(|r| r.iter().all(|&v| v == 0.0 || v == 1.0) && r.iter().sum::<f64>() == 1.0);
    if !one_hot {
        log::warn!("training targets are not one-hot; grid invariance is not guaranteed");
    }
    let projector = DesignProjector::new(x)?;
    let predictions: Vec<Vec<usize>> = grid
        .par_iter()
        .map(|prior| {
            let prior = Prior::new(prior.a, prior.b)?;
            let coef = fit_with_projector(&projector, x, counts, prior)?;
            let scores = eval_x.matmul(&coef)?;
            Ok(scores.row_iter().map(argmax).collect())
        })
        .collect::<Result<_>>()?;

    let mut disagreements = Vec::new();
    if let Some(reference) = predictions.first() {
        for (prior, preds) in grid.iter().zip(&predictions).skip(1) {
            let mismatched_rows = preds.iter().zip(reference).filter(|(a, b)| a != b).count();
            if mismatched_rows > 0 {
                disagreements.push(GridDisagreement {
                    a: prior.a,
                    b: prior.b,
                    mismatched_rows,
                });
            }
        }
    }
    Ok(InvarianceReport {
        grid_size: grid.len(),
        eval_rows: eval_x.rows(),
        one_hot,
        identical: disagreements.is_empty(),
        reference: grid.first().copied(),
        disagreements,
    })
}
