//! Jacobi-GP: exact Gaussian-process regression with a squared-exponential
//! kernel on the Jacobi-transformed targets, one regression per class.
//!
//! Each class target `η̂_k` is centred by its mean; the GP models the
//! residual with a zero mean function and the mean is added back at
//! prediction. The model stores every training row, so memory and
//! per-prediction cost are both O(n·p).

use serde::{Deserialize, Serialize};

use crate::dmr::{argmax, one_hot, transform_targets, Prior};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, SpdFactorization};

const MEDIAN_SUBSAMPLE: usize = 500;
const NOISE_ESCALATIONS: usize = 3;
const DEFAULT_NOISE_RATIO: f64 = 1e-6;

pub fn rbf_kernel(x1: &[f64], x2: &[f64], length_scale: f64, signal_var: f64) -> f64 {
    debug_assert_eq!(x1.len(), x2.len());
    signal_var * (-squared_distance(x1, x2) / (2.0 * length_scale * length_scale)).exp()
}

fn squared_distance(x1: &[f64], x2: &[f64]) -> f64 {
    x1.iter().zip(x2).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Optional overrides for the kernel hyperparameters.
#[derive(Debug, Clone, Copy, Default)]
pub struct GpParams {
    pub length_scale: Option<f64>,
    pub signal_var: Option<f64>,
    pub noise_var: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobiGpModel {
    train_x: Matrix,
    /// n×K dual weights.
    alphas: Matrix,
    class_means: Vec<f64>,
    length_scale: f64,
    signal_var: f64,
    noise_var: f64,
    prior: Prior,
    class_names: Vec<String>,
}

/// Median pairwise Euclidean distance over an evenly strided subsample of
/// at most 500 rows.
pub fn median_heuristic(x: &Matrix) -> f64 {
    let n = x.rows();
    let m = n.min(MEDIAN_SUBSAMPLE);
    let idx: Vec<usize> = (0..m).map(|i| i * n / m).collect();
    let mut d = Vec::with_capacity(m * (m - 1) / 2);
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            d.push(squared_distance(x.row(i), x.row(j)).sqrt());
        }
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    if d.len() % 2 == 1 {
        d[mid]
    } else {
        0.5 * (d[mid - 1] + d[mid])
    }
}

fn kernel_matrix(x: &Matrix, length_scale: f64, signal_var: f64) -> Matrix {
    let n = x.rows();
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = signal_var;
        for j in 0..i {
            let v = rbf_kernel(x.row(i), x.row(j), length_scale, signal_var);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidHyperparameter(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

impl JacobiGpModel {
    /// Fits one GP per class. Unset kernel hyperparameters default to the
    /// median heuristic (length scale), the variance of all `η̂` entries
    /// (signal) and `1e-6·signal` (noise). A kernel matrix that cannot be
    /// factored has its noise raised ×10, at most three times.
    pub fn fit(
        x: &Matrix,
        labels: &[usize],
        class_names: Vec<String>,
        prior: Option<Prior>,
        params: GpParams,
    ) -> Result<Self> {
        let n = x.rows();
        if n < 2 {
            return Err(Error::invalid(format!(
                "GP needs at least 2 training rows, got {n}"
            )));
        }
        if labels.len() != n {
            return Err(Error::invalid(format!(
                "{} labels for {n} rows",
                labels.len()
            )));
        }
        if class_names.len() < 2 {
            return Err(Error::invalid("need at least 2 classes"));
        }
        if !x.is_finite() {
            return Err(Error::invalid(
                "training features contain a non-finite entry",
            ));
        }
        let prior = prior.unwrap_or_else(|| Prior::for_sample_size(n));
        let eta = transform_targets(&one_hot(labels, class_names.len())?, prior.a, prior.b)?;

        let length_scale = match params.length_scale {
            Some(l) => positive("length_scale", l)?,
            None => {
                let l = median_heuristic(x);
                if l > 0.0 {
                    l
                } else {
                    log::warn!("all sampled training rows coincide; using length scale 1");
                    1.0
                }
            }
        };
        let signal_var = match params.signal_var {
            Some(s) => positive("signal_var", s)?,
            None => {
                let s = sample_variance(eta.as_slice());
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            }
        };
        let mut noise_var = match params.noise_var {
            Some(v) => positive("noise_var", v)?,
            None => DEFAULT_NOISE_RATIO * signal_var,
        };

        let k = kernel_matrix(x, length_scale, signal_var);
        let mut attempt = 0;
        let factor = loop {
            let mut noisy = k.clone();
            for i in 0..n {
                noisy[(i, i)] += noise_var;
            }
            match SpdFactorization::new(&noisy) {
                Ok(f) => break f,
                Err(Error::SingularGram { .. }) if attempt < NOISE_ESCALATIONS => {
                    attempt += 1;
                    noise_var *= 10.0;
                    log::warn!("kernel matrix singular; raising noise variance to {noise_var:e}");
                }
                Err(e) => return Err(e),
            }
        };

        let class_means: Vec<f64> = (0..eta.cols()).map(|c| mean(&eta.column(c))).collect();
        let centred = {
            let mut c = eta.clone();
            for i in 0..n {
                for (kk, m) in class_means.iter().enumerate() {
                    c[(i, kk)] -= m;
                }
            }
            c
        };
        let alphas = factor.solve(&centred)?;
        Ok(Self {
            train_x: x.clone(),
            alphas,
            class_means,
            length_scale,
            signal_var,
            noise_var,
            prior,
            class_names,
        })
    }

    /// Posterior mean of `η` for every class at `x`.
    pub fn predict_means(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_features() {
            return Err(Error::invalid(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.n_features()
            )));
        }
        let mut means = self.class_means.clone();
        for (i, row) in self.train_x.row_iter().enumerate() {
            let kv = rbf_kernel(x, row, self.length_scale, self.signal_var);
            for (m, &a) in means.iter_mut().zip(self.alphas.row(i)) {
                *m += a * kv;
            }
        }
        Ok(means)
    }

    pub fn predict_class(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.predict_means(x)?))
    }

    pub fn predict_batch(&self, x: &Matrix) -> Result<Vec<usize>> {
        x.row_iter().map(|r| self.predict_class(r)).collect()
    }

    pub fn n_features(&self) -> usize {
        self.train_x.cols()
    }

    pub fn n_train(&self) -> usize {
        self.train_x.rows()
    }

    pub fn alphas(&self) -> &Matrix {
        &self.alphas
    }

    pub fn class_means(&self) -> &[f64] {
        &self.class_means
    }

    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }

    pub fn signal_var(&self) -> f64 {
        self.signal_var
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn prior(&self) -> Prior {
        self.prior
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Number of stored `f64` values (training rows plus dual weights).
    pub fn stored_values(&self) -> usize {
        self.train_x.as_slice().len() + self.alphas.as_slice().len() + self.class_means.len()
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn kernel_examples() {
        assert_eq!(rbf_kernel(&[0.3, 1.0], &[0.3, 1.0], 0.7, 2.5), 2.5);
        assert!(rbf_kernel(&[0.0], &[100.0], 1.0, 1.0) <= 1e-30);
        assert!((rbf_kernel(&[0.0], &[1.0], 1.0, 1.0) - (-0.5f64).exp()).abs() < 1e-15);
        assert!((rbf_kernel(&[0.0], &[1.0], 1.0, 1.0) - 0.60653).abs() < 1e-5);
    }

    #[test]
    fn single_row_rejected() {
        let x = Matrix::filled(1, 2, 1.0);
        assert!(JacobiGpModel::fit(&x, &[0], names(2), None, GpParams::default()).is_err());
    }

    #[test]
    fn non_positive_override_rejected() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let params = GpParams {
            length_scale: Some(0.0),
            ..Default::default()
        };
        assert!(matches!(
            JacobiGpModel::fit(&x, &[0, 1], names(2), None, params),
            Err(Error::InvalidHyperparameter(_))
        ));
    }

    #[test]
    fn interpolates_training_targets() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 0.3], [0.2, 2.0], [1.5, 1.5], [3.0, -1.0]])
            .unwrap();
        let labels = [0, 1, 2, 1, 0];
        let prior = Prior::new(0.1, 0.1).unwrap();
        let params = GpParams {
            noise_var: Some(1e-12),
            ..Default::default()
        };
        let m = JacobiGpModel::fit(&x, &labels, names(3), Some(prior), params).unwrap();
        let eta = transform_targets(&one_hot(&labels, 3).unwrap(), 0.1, 0.1).unwrap();
        for i in 0..x.rows() {
            let means = m.predict_means(x.row(i)).unwrap();
            for k in 0..3 {
                assert!((means[k] - eta[(i, k)]).abs() < 1e-6, "row {i} class {k}");
            }
            assert_eq!(m.predict_class(x.row(i)).unwrap(), labels[i]);
        }
    }

    #[test]
    fn zero_alphas_tie_to_class_zero() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let mut m = JacobiGpModel::fit(&x, &[0, 1], names(2), None, GpParams::default()).unwrap();
        m.alphas = Matrix::zeros(2, 2);
        m.class_means = vec![0.0, 0.0];
        assert_eq!(m.predict_class(&[0.5]).unwrap(), 0);
        assert!(m.predict_class(&[0.5, 1.0]).is_err());
    }

    #[test]
    fn median_heuristic_on_square() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]]).unwrap();
        assert!((median_heuristic(&x) - 1.0).abs() < 1e-15);
    }
}
