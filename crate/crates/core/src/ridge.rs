//! Closed-form ridge baseline: K one-vs-all ridge regressions on one-hot
//! targets over standardized features, decoded by argmax.

use serde::{Deserialize, Serialize};

use crate::dmr::{argmax, one_hot};
use crate::error::{Error, Result};
use crate::features::Standardizer;
use crate::linalg::{dot, gram, spd_solve, Matrix};

pub const DEFAULT_ALPHA: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    /// p×K, in standardized feature units.
    coefficients: Matrix,
    intercepts: Vec<f64>,
    alpha: f64,
    standardizer: Standardizer,
    class_names: Vec<String>,
}

impl RidgeModel {
    pub fn fit(x: &Matrix, labels: &[usize], class_names: Vec<String>, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidHyperparameter(format!(
                "ridge alpha must be > 0, got {alpha}"
            )));
        }
        if labels.len() != x.rows() {
            return Err(Error::invalid(format!(
                "{} labels for {} rows",
                labels.len(),
                x.rows()
            )));
        }
        if class_names.len() < 2 {
            return Err(Error::invalid("need at least 2 classes"));
        }
        let standardizer = Standardizer::fit(x)?;
        let xs = standardizer.apply(x)?;
        let y = one_hot(labels, class_names.len())?;
        let n = x.rows() as f64;
        let intercepts: Vec<f64> = (0..y.cols())
            .map(|k| y.column(k).iter().sum::<f64>() / n)
            .collect();
        let mut yc = y;
        for i in 0..yc.rows() {
            for (v, m) in yc.row_mut(i).iter_mut().zip(&intercepts) {
                *v -= m;
            }
        }
        let mut lhs = gram(&xs)?;
        for j in 0..lhs.rows() {
            lhs[(j, j)] += alpha;
        }
        let coefficients = spd_solve(&lhs, &xs.t_matmul(&yc)?)?;
        // standardized columns have mean zero, so the intercept is just ȳ_k
        Ok(Self {
            coefficients,
            intercepts,
            alpha,
            standardizer,
            class_names,
        })
    }

    pub fn from_parts(
        coefficients: Matrix,
        intercepts: Vec<f64>,
        alpha: f64,
        standardizer: Standardizer,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::InvalidHyperparameter(format!(
                "ridge alpha must be > 0, got {alpha}"
            )));
        }
        let k = coefficients.cols();
        if intercepts.len() != k
            || class_names.len() != k
            || standardizer.dims() != coefficients.rows()
        {
            return Err(Error::invalid(
                "ridge model parts have inconsistent dimensions",
            ));
        }
        if !coefficients.is_finite() || intercepts.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("ridge model must be finite"));
        }
        Ok(Self {
            coefficients,
            intercepts,
            alpha,
            standardizer,
            class_names,
        })
    }

    pub fn predict_scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.standardizer.apply_row(x)?;
        let mut scores = self.intercepts.clone();
        for (k, s) in scores.iter_mut().enumerate() {
            *s += dot(&z, &self.coefficients.column(k));
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

    pub fn intercepts(&self) -> &[f64] {
        &self.intercepts
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn n_features(&self) -> usize {
        self.coefficients.rows()
    }
}
