//! Jacobi-DMR: K independent Poisson working regressions whose per-row
//! conjugate posterior modes are projected onto the design in closed form.
//!
//! Per class `k` the target `η̂_ik = log(Y_ik + a) − log(1 + b)` is regressed
//! on `X` by least squares; class scores for a new row are `x·β̂_k`. There is
//! no iteration anywhere: one Gram factorization and `K` triangular solves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DesignProjector, Matrix};

/// Exponents beyond this magnitude are refused rather than overflowing.
pub(crate) const EXP_GUARD: f64 = 700.0;

/// Gamma-prior hyperparameters (shape `a`, rate `b`), both strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    pub a: f64,
    pub b: f64,
}

impl Prior {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidHyperparameter(format!(
                "shape a must be > 0, got {a}"
            )));
        }
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::InvalidHyperparameter(format!(
                "rate b must be > 0, got {b}"
            )));
        }
        Ok(Self { a, b })
    }

    /// `a = b = 1/n`, the rate under which the estimator is consistent.
    pub fn for_sample_size(n: usize) -> Self {
        let v = 1.0 / n.max(1) as f64;
        Self { a: v, b: v }
    }
}

/// `η̂_ik = log(Y_ik + a) − log(1 + b)` for a matrix of nonnegative integer counts.
pub fn transform_targets(counts: &Matrix, a: f64, b: f64) -> Result<Matrix> {
    Prior::new(a, b)?;
    if let Some(bad) = counts
        .as_slice()
        .iter()
        .find(|&&y| !(y >= 0.0 && y.fract() == 0.0 && y.is_finite()))
    {
        return Err(Error::invalid(format!(
            "counts must be nonnegative integers, found {bad}"
        )));
    }
    let shift = b.ln_1p();
    Ok(counts.map(|y| (y + a).ln() - shift))
}

/// n×K indicator matrix for `labels` in `0..k`.
pub fn one_hot(labels: &[usize], k: usize) -> Result<Matrix> {
    let mut y = Matrix::zeros(labels.len(), k);
    for (i, &l) in labels.iter().enumerate() {
        if l >= k {
            return Err(Error::invalid(format!(
                "label {l} at row {i} is outside 0..{k}"
            )));
        }
        y[(i, l)] = 1.0;
    }
    Ok(y)
}

/// p×K coefficients `(XᵀX)⁻¹Xᵀη̂` for a count matrix. Works for any K ≥ 1,
/// including genuine Poisson counts.
pub fn fit_coefficients(x: &Matrix, counts: &Matrix, prior: Prior) -> Result<Matrix> {
    let projector = DesignProjector::new(x)?;
    fit_with_projector(&projector, x, counts, prior)
}

pub(crate) fn fit_with_projector(
    projector: &DesignProjector,
    x: &Matrix,
    counts: &Matrix,
    prior: Prior,
) -> Result<Matrix> {
    if counts.rows() != x.rows() {
        return Err(Error::invalid(format!(
            "count matrix has {} rows, design has {}",
            counts.rows(),
            x.rows()
        )));
    }
    let eta = transform_targets(counts, prior.a, prior.b)?;
    projector.project(x, &eta)
}

/// Adds `½(XᵀX)⁻¹Xᵀ(exp(−x_i·β̂_k))_i` to every coefficient column.
pub fn bias_correction(x: &Matrix, coefficients: &Matrix) -> Result<Matrix> {
    let projector = DesignProjector::new(x)?;
    bias_correct_with_projector(&projector, x, coefficients)
}

pub(crate) fn bias_correct_with_projector(
    projector: &DesignProjector,
    x: &Matrix,
    coefficients: &Matrix,
) -> Result<Matrix> {
    if coefficients.rows() != x.cols() {
        return Err(Error::invalid(format!(
            "coefficients have {} rows but the design has {} columns",
            coefficients.rows(),
            x.cols()
        )));
    }
    let linear = x.matmul(coefficients)?;
    let mut weights = Matrix::zeros(linear.rows(), linear.cols());
    for i in 0..linear.rows() {
        for k in 0..linear.cols() {
            let exponent = -linear[(i, k)];
            if exponent > EXP_GUARD {
                return Err(Error::OverflowGuard { row: i, exponent });
            }
            weights[(i, k)] = exponent.exp();
        }
    }
    let correction = projector.project(x, &weights)?;
    coefficients.add(&correction.scale(0.5))
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (k, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = k;
        }
    }
    best
}

/// The deployable linear classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobiDmrModel {
    /// p×K, column `k` is `β̂_k`.
    coefficients: Matrix,
    prior: Prior,
    class_names: Vec<String>,
    /// Diagonal jitter that was needed to factor `XᵀX`; 0 for a
    /// full-rank design. Not part of the serialized binary.
    #[serde(default)]
    gram_jitter: f64,
}

impl JacobiDmrModel {
    pub fn new(coefficients: Matrix, prior: Prior, class_names: Vec<String>) -> Result<Self> {
        let prior = Prior::new(prior.a, prior.b)?;
        if coefficients.cols() < 2 {
            return Err(Error::invalid(format!(
                "need at least 2 classes, got {}",
                coefficients.cols()
            )));
        }
        if coefficients.rows() == 0 {
            return Err(Error::invalid("model needs at least one feature"));
        }
        if class_names.len() != coefficients.cols() {
            return Err(Error::invalid(format!(
                "{} class names for {} coefficient columns",
                class_names.len(),
                coefficients.cols()
            )));
        }
        if !coefficients.is_finite() {
            return Err(Error::invalid("coefficients must be finite"));
        }
        Ok(Self {
            coefficients,
            prior,
            class_names,
            gram_jitter: 0.0,
        })
    }

    /// Fits on one-hot labels. `prior` defaults to `a = b = 1/n`.
    pub fn fit(
        x: &Matrix,
        labels: &[usize],
        class_names: Vec<String>,
        prior: Option<Prior>,
    ) -> Result<Self> {
        if labels.len() != x.rows() {
            return Err(Error::invalid(format!(
                "{} labels for {} rows",
                labels.len(),
                x.rows()
            )));
        }
        if x.rows() < x.cols() {
            return Err(Error::invalid(format!(
                "need at least as many rows as features (n={}, p={})",
                x.rows(),
                x.cols()
            )));
        }
        let prior = prior.unwrap_or_else(|| Prior::for_sample_size(x.rows()));
        let counts = one_hot(labels, class_names.len())?;
        let projector = DesignProjector::new(x)?;
        let coefficients = fit_with_projector(&projector, x, &counts, prior)?;
        let mut model = Self::new(coefficients, prior, class_names)?;
        model.gram_jitter = projector.jitter_applied();
        Ok(model)
    }

    /// Returns the bias-corrected model. `x` must be the training design.
    pub fn bias_correct(&self, x: &Matrix) -> Result<Self> {
        let coefficients = bias_correction(x, &self.coefficients)?;
        let mut model = Self::new(coefficients, self.prior, self.class_names.clone())?;
        model.gram_jitter = self.gram_jitter;
        Ok(model)
    }

    /// The K log-scale scores `x·β̂_k`.
    pub fn predict_scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_features() {
            return Err(Error::invalid(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.n_features()
            )));
        }
        let mut scores = vec![0.0; self.n_classes()];
        for (j, &xj) in x.iter().enumerate() {
            for (s, &c) in scores.iter_mut().zip(self.coefficients.row(j)) {
                *s += xj * c;
            }
        }
        Ok(scores)
    }

    pub fn predict_class(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.predict_scores(x)?))
    }

    pub fn predict_batch(&self, x: &Matrix) -> Result<Vec<usize>> {
        x.row_iter().map(|r| self.predict_class(r)).collect()
    }

    pub fn coefficients(&self) -> &Matrix {
        &self.coefficients
    }

    pub fn prior(&self) -> Prior {
        self.prior
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn n_features(&self) -> usize {
        self.coefficients.rows()
    }

    pub fn n_classes(&self) -> usize {
        self.coefficients.cols()
    }

    pub fn gram_jitter(&self) -> f64 {
        self.gram_jitter
    }
}

/// For one-hot targets the fitted coefficients split as
/// `β̂_k(a,b) = c(a,b)·v + γ(a)·w_k`, with `v = (XᵀX)⁻¹Xᵀ1`,
/// `w_k = (XᵀX)⁻¹XᵀY_k`, `c = log a − log(1+b)` and `γ = log((1+a)/a)`.
/// Since `γ > 0` and `c·x·v` is shared by every class, the argmax does not
/// depend on `(a, b)`.
#[derive(Debug, Clone)]
pub struct InvarianceDecomposition {
    pub v: Vec<f64>,
    pub w: Matrix,
    pub c: f64,
    pub gamma: f64,
}

impl InvarianceDecomposition {
    /// `c·v·1ᵀ + γ·w`.
    pub fn reconstruct(&self) -> Matrix {
        let mut out = self.w.scale(self.gamma);
        for j in 0..out.rows() {
            for k in 0..out.cols() {
                out[(j, k)] += self.c * self.v[j];
            }
        }
        out
    }
}

pub fn decompose_invariance(
    x: &Matrix,
    labels: &[usize],
    k: usize,
    prior: Prior,
) -> Result<InvarianceDecomposition> {
    let prior = Prior::new(prior.a, prior.b)?;
    if labels.len() != x.rows() {
        return Err(Error::invalid(format!(
            "{} labels for {} rows",
            labels.len(),
            x.rows()
        )));
    }
    let y = one_hot(labels, k)?;
    let projector = DesignProjector::new(x)?;
    let v = projector
        .project(x, &Matrix::filled(x.rows(), 1, 1.0))?
        .into_vec();
    let w = projector.project(x, &y)?;
    Ok(InvarianceDecomposition {
        v,
        w,
        c: prior.a.ln() - prior.b.ln_1p(),
        gamma: (1.0 / prior.a).ln_1p(),
    })
}

/// Scores for every row of `x` (n×K).
pub fn score_matrix(model: &JacobiDmrModel, x: &Matrix) -> Result<Matrix> {
    if x.cols() != model.n_features() {
        return Err(Error::invalid(format!(
            "input has {} features, model expects {}",
            x.cols(),
            model.n_features()
        )));
    }
    x.matmul(model.coefficients())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn transform_examples() {
        let y = Matrix::column_vector(&[0.0]);
        // b is required to be positive; a=1 with vanishing b approaches log 1 = 0
        let t = transform_targets(&y, 1.0, 1e-300).unwrap();
        assert!(t[(0, 0)].abs() < 1e-15);

        let t = transform_targets(&Matrix::column_vector(&[1.0]), 0.0005, 0.0005).unwrap();
        assert!(t[(0, 0)].abs() < 1e-15);

        let t = transform_targets(&y, 1.0 / 2000.0, 1.0 / 2000.0).unwrap();
        let expected = (0.0005f64).ln() - (1.0005f64).ln();
        assert!((t[(0, 0)] - expected).abs() < 1e-12);
        assert!((t[(0, 0)] + 7.6014).abs() < 1e-4);
    }

    #[test]
    fn transform_rejects_bad_hyperparameters_and_counts() {
        let y = Matrix::column_vector(&[0.0]);
        assert!(matches!(
            transform_targets(&y, 0.0, 1.0),
            Err(Error::InvalidHyperparameter(_))
        ));
        assert!(matches!(
            transform_targets(&y, 1.0, -1.0),
            Err(Error::InvalidHyperparameter(_))
        ));
        let bad = Matrix::column_vector(&[0.5]);
        assert!(matches!(
            transform_targets(&bad, 1.0, 1.0),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn intercept_only_fit() {
        let x = Matrix::filled(4, 1, 1.0);
        let m = JacobiDmrModel::fit(
            &x,
            &[0, 0, 1, 2],
            names(3),
            Some(Prior::new(1.0, 1.0).unwrap()),
        )
        .unwrap();
        // class 0: η̂ = (0, 0, −log2, −log2)·... mean of two zeros and two −log 2
        let l2 = 2f64.ln();
        let expected = [-l2 / 2.0, -3.0 * l2 / 4.0, -3.0 * l2 / 4.0];
        for (k, e) in expected.iter().enumerate() {
            assert!((m.coefficients()[(0, k)] - e).abs() < 1e-12);
        }
        assert!((expected[0] + 0.34657).abs() < 1e-5);
        assert!((expected[1] + 0.51986).abs() < 1e-5);

        let scores = m.predict_scores(&[1.0]).unwrap();
        for (s, e) in scores.iter().zip(expected) {
            assert!((s - e).abs() < 1e-12);
        }
        assert_eq!(m.predict_class(&[1.0]).unwrap(), 0);
    }

    #[test]
    fn identity_design_interpolates() {
        let k = 4;
        let x = Matrix::identity(k);
        let labels: Vec<usize> = (0..k).collect();
        let m = JacobiDmrModel::fit(&x, &labels, names(k), Some(Prior::new(0.3, 0.3).unwrap()))
            .unwrap();
        for i in 0..k {
            assert_eq!(m.predict_class(x.row(i)).unwrap(), i);
        }
    }

    #[test]
    fn default_prior_is_one_over_n() {
        let x = Matrix::filled(5, 1, 1.0);
        let m = JacobiDmrModel::fit(&x, &[0, 1, 0, 1, 1], names(2), None).unwrap();
        assert_eq!(m.prior(), Prior { a: 0.2, b: 0.2 });
    }

    #[test]
    fn fit_rejects_out_of_range_label() {
        let x = Matrix::filled(3, 1, 1.0);
        let r = JacobiDmrModel::fit(&x, &[0, 1, 2], names(2), None);
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn zero_design_is_singular() {
        let x = Matrix::zeros(3, 2);
        let r = JacobiDmrModel::fit(&x, &[0, 1, 0], names(2), None);
        assert!(matches!(r, Err(Error::SingularGram { .. })));
    }

    #[test]
    fn zero_model_and_basis_extraction() {
        let zero =
            JacobiDmrModel::new(Matrix::zeros(3, 3), Prior::new(1.0, 1.0).unwrap(), names(3))
                .unwrap();
        assert_eq!(
            zero.predict_scores(&[0.4, -2.0, 1.0]).unwrap(),
            vec![0.0; 3]
        );
        assert_eq!(zero.predict_class(&[0.4, -2.0, 1.0]).unwrap(), 0);

        let coef = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, -6.0]]).unwrap();
        let m = JacobiDmrModel::new(coef.clone(), Prior::new(1.0, 1.0).unwrap(), names(2)).unwrap();
        for j in 0..3 {
            let mut e = vec![0.0; 3];
            e[j] = 1.0;
            assert_eq!(m.predict_scores(&e).unwrap(), coef.row(j));
        }
        assert!(matches!(
            m.predict_scores(&[1.0]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn model_invariants_enforced() {
        let p = Prior::new(1.0, 1.0).unwrap();
        assert!(JacobiDmrModel::new(Matrix::zeros(2, 1), p, names(1)).is_err());
        assert!(JacobiDmrModel::new(Matrix::zeros(2, 2), p, names(3)).is_err());
        assert!(JacobiDmrModel::new(Matrix::filled(2, 2, f64::INFINITY), p, names(2)).is_err());
        assert!(
            JacobiDmrModel::new(Matrix::zeros(2, 2), Prior { a: 0.0, b: 1.0 }, names(2)).is_err()
        );
    }

    #[test]
    fn bias_correction_intercept_only() {
        let x = Matrix::filled(6, 1, 1.0);
        let c = bias_correction(&x, &Matrix::zeros(1, 2)).unwrap();
        assert!((c[(0, 0)] - 0.5).abs() < 1e-12);

        let l2 = 2f64.ln();
        let c = bias_correction(&x, &Matrix::filled(1, 1, l2)).unwrap();
        assert!((c[(0, 0)] - (l2 + 0.25)).abs() < 1e-12);
    }

    #[test]
    fn bias_correction_orthonormal_design() {
        // 5×2 design with orthonormal columns
        let s = 1.0 / 5f64.sqrt();
        let t = 1.0 / 10f64.sqrt();
        let x =
            Matrix::from_rows(&[[s, -2.0 * t], [s, -t], [s, 0.0], [s, t], [s, 2.0 * t]]).unwrap();
        let corrected = bias_correction(&x, &Matrix::zeros(2, 1)).unwrap();
        // brute force: weights are all 1, so the correction is ½·Xᵀ1
        for j in 0..2 {
            let col_sum: f64 = x.column(j).iter().sum();
            assert!((corrected[(j, 0)] - 0.5 * col_sum).abs() < 1e-12);
        }
    }

    #[test]
    fn bias_correction_overflow_guard_names_row() {
        let x = Matrix::from_rows(&[[1.0], [1.0], [-1.0]]).unwrap();
        let r = bias_correction(&x, &Matrix::filled(1, 1, -800.0));
        match r {
            Err(Error::OverflowGuard { row, .. }) => assert_eq!(row, 0),
            other => panic!("expected overflow guard, got {other:?}"),
        }
    }

    #[test]
    fn decomposition_scalars() {
        let x = Matrix::filled(5, 1, 1.0);
        let d =
            decompose_invariance(&x, &[0, 1, 1, 0, 1], 2, Prior::new(1.0, 0.5).unwrap()).unwrap();
        assert!((d.gamma - 2f64.ln()).abs() < 1e-15);
        assert!((d.v[0] - 1.0).abs() < 1e-12);
        assert!((d.c - (0.0 - 1.5f64.ln())).abs() < 1e-15);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }
}
