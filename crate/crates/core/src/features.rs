//! PCA and column standardization. Variances use the sample (n−1)
//! convention throughout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sym_eig, Matrix};

fn column_means(x: &Matrix) -> Vec<f64> {
    let mut m = vec![0.0; x.cols()];
    for row in x.row_iter() {
        for (a, v) in m.iter_mut().zip(row) {
            *a += v;
        }
    }
    let n = x.rows() as f64;
    m.iter_mut().for_each(|a| *a /= n);
    m
}

fn centred(x: &Matrix, mean: &[f64]) -> Matrix {
    let mut c = x.clone();
    for i in 0..c.rows() {
        for (v, m) in c.row_mut(i).iter_mut().zip(mean) {
            *v -= m;
        }
    }
    c
}

fn check_width(x: &Matrix, p: usize) -> Result<()> {
    if x.cols() != p {
        return Err(Error::invalid(format!(
            "input has {} columns, expected {p}",
            x.cols()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaProjection {
    mean: Vec<f64>,
    /// p×d, orthonormal columns.
    components: Matrix,
    explained_variance: Vec<f64>,
    total_variance: f64,
}

impl PcaProjection {
    /// Keeps the top `d` eigenvectors of the sample covariance.
    pub fn fit(x: &Matrix, d: usize) -> Result<Self> {
        let (n, p) = x.shape();
        if n < 2 || d == 0 || d > (n - 1).min(p) {
            return Err(Error::invalid(format!(
                "PCA dimension {d} outside 1..={} for {n}x{p} data",
                n.saturating_sub(1).min(p)
            )));
        }
        if !x.is_finite() {
            return Err(Error::invalid("PCA input contains a non-finite entry"));
        }
        let mean = column_means(x);
        let c = centred(x, &mean);
        let cov = crate::linalg::gram(&c)?.scale(1.0 / (n - 1) as f64);
        let eig = sym_eig(&cov)?;
        let clamp = |v: f64| v.max(0.0);
        let total_variance = eig.values.iter().copied().map(clamp).sum();
        let explained_variance = eig.values[..d].iter().copied().map(clamp).collect();
        let mut components = Matrix::zeros(p, d);
        for j in 0..d {
            let mut col = eig.vectors.column(j);
            // largest-magnitude entry positive
            let pivot =
                col.iter().copied().fold(
                    0.0f64,
                    |best, v| if v.abs() > best.abs() { v } else { best },
                );
            if pivot < 0.0 {
                col.iter_mut().for_each(|v| *v = -*v);
            }
            components.set_column(j, &col);
        }
        Ok(Self {
            mean,
            components,
            explained_variance,
            total_variance,
        })
    }

    /// `(X − mean)·components`.
    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        check_width(x, self.mean.len())?;
        centred(x, &self.mean).matmul(&self.components)
    }

    /// Maps reduced coordinates back to the original space.
    pub fn reconstruct(&self, z: &Matrix) -> Result<Matrix> {
        check_width(z, self.dims())?;
        let mut x = z.matmul(&self.components.transpose())?;
        for i in 0..x.rows() {
            for (v, m) in x.row_mut(i).iter_mut().zip(&self.mean) {
                *v += m;
            }
        }
        Ok(x)
    }

    pub fn explained_variance_ratio(&self) -> f64 {
        if self.total_variance > 0.0 {
            self.explained_variance.iter().sum::<f64>() / self.total_variance
        } else {
            1.0
        }
    }

    pub fn dims(&self) -> usize {
        self.components.cols()
    }

    pub fn input_dims(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn components(&self) -> &Matrix {
        &self.components
    }

    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    pub fn total_variance(&self) -> f64 {
        self.total_variance
    }
}

/// Per-column centring and scaling to unit sample variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    /// Zero-variance columns keep scale 1 and come out centred (all zeros).
    pub fn fit(x: &Matrix) -> Result<Self> {
        if x.rows() < 2 {
            return Err(Error::invalid("standardizer needs at least 2 rows"));
        }
        let mean = column_means(x);
        let mut ss = vec![0.0; x.cols()];
        for row in x.row_iter() {
            for ((s, v), m) in ss.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let denom = (x.rows() - 1) as f64;
        let scale = ss
            .iter()
            .map(|s| {
                let sd = (s / denom).sqrt();
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn identity(p: usize) -> Self {
        Self {
            mean: vec![0.0; p],
            scale: vec![1.0; p],
        }
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        check_width(x, self.mean.len())?;
        let mut out = x.clone();
        for i in 0..out.rows() {
            self.apply_in_place(out.row_mut(i));
        }
        Ok(out)
    }

    pub fn apply_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.mean.len() {
            return Err(Error::invalid(format!(
                "input has {} features, expected {}",
                x.len(),
                self.mean.len()
            )));
        }
        let mut v = x.to_vec();
        self.apply_in_place(&mut v);
        Ok(v)
    }

    fn apply_in_place(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
            *v = (*v - m) / s;
        }
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn dims(&self) -> usize {
        self.mean.len()
    }
}
