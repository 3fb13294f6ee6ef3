//! Dense real linear algebra: Gram matrices, SPD solves with reported
//! jitter, least-squares projection and symmetric eigendecomposition.
//!
//! Everything accumulates in `f64`. Normal equations are solved through a
//! Cholesky factor, never an explicit inverse.

use std::ops::{Index, IndexMut};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::invalid(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::invalid(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn column_vector(values: &[f64]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        // chunks_exact(0) panics; a matrix with zero columns has no data anyway
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_column(&mut self, j: usize, values: &[f64]) {
        assert_eq!(values.len(), self.rows);
        for (i, v) in values.iter().enumerate() {
            self[(i, j)] = *v;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::invalid(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · other` without materialising the transpose.
    pub fn t_matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::invalid(format!(
                "cannot form Xᵀ·T for X {}x{} and T {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.cols, other.cols);
        for r in 0..self.rows {
            let t_row = other.row(r);
            for (i, &x) in self.row(r).iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &t) in out_row.iter_mut().zip(t_row) {
                    *o += x * t;
                }
            }
        }
        Ok(out)
    }

    /// `self · v` for a vector `v` of length `cols`.
    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::invalid(format!(
                "vector of length {} does not match {} columns",
                v.len(),
                self.cols
            )));
        }
        Ok(self.row_iter().map(|r| dot(r, v)).collect())
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a + b)
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::invalid(format!(
                "shape mismatch: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&self, factor: f64) -> Matrix {
        self.map(|v| v * factor)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Copies the rows at `indices`, in order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Dot product with four independent accumulators (fixed summation order).
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn require_finite(m: &Matrix, what: &str) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "{what} contains a non-finite entry"
        )))
    }
}

/// `XᵀX`. The upper triangle is computed and mirrored, so the result is
/// exactly symmetric.
pub fn gram(x: &Matrix) -> Result<Matrix> {
    if x.rows() == 0 || x.cols() == 0 {
        return Err(Error::invalid(
            "design matrix must have at least one row and column",
        ));
    }
    require_finite(x, "design matrix")?;
    let p = x.cols();
    let columns = x.transpose();
    let mut g = Matrix::zeros(p, p);
    for i in 0..p {
        let ci = columns.row(i);
        for j in i..p {
            let v = dot(ci, columns.row(j));
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}

/// Number of jitter escalations after the initial jitter.
const JITTER_ESCALATIONS: usize = 3;
const JITTER_START: f64 = 1e-10;

/// Cholesky factor `L` of a symmetric positive-definite matrix, possibly
/// after adding `jitter_applied · I`.
#[derive(Debug, Clone)]
pub struct SpdFactorization {
    factor: Matrix,
    jitter_applied: f64,
}

impl SpdFactorization {
    /// Factors `a`, retrying with diagonal jitter `λ·I` (λ starting at
    /// `1e-10·trace(a)/p`, ×10 per retry, three retries) when the plain
    /// factorization breaks down.
    pub fn new(a: &Matrix) -> Result<Self> {
        if a.rows() != a.cols() || a.rows() == 0 {
            return Err(Error::invalid(format!(
                "SPD factorization needs a square matrix, got {:?}",
                a.shape()
            )));
        }
        require_finite(a, "matrix to factor")?;
        if let Some(factor) = cholesky(a, 0.0) {
            return Ok(Self {
                factor,
                jitter_applied: 0.0,
            });
        }
        let p = a.rows() as f64;
        let mut jitter = JITTER_START * a.trace() / p;
        for _ in 0..=JITTER_ESCALATIONS {
            if jitter > 0.0 {
                if let Some(factor) = cholesky(a, jitter) {
                    log::warn!("matrix was not numerically positive definite; factored with jitter {jitter:e}");
                    return Ok(Self {
                        factor,
                        jitter_applied: jitter,
                    });
                }
            }
            jitter *= 10.0;
        }
        Err(Error::SingularGram {
            last_jitter: jitter / 10.0,
        })
    }

    pub fn dimension(&self) -> usize {
        self.factor.rows()
    }

    /// Lower-triangular `L` with `L·Lᵀ = A + jitter·I`.
    pub fn factor(&self) -> &Matrix {
        &self.factor
    }

    pub fn jitter_applied(&self) -> f64 {
        self.jitter_applied
    }

    /// Solves `(A + jitter·I)·Z = B`.
    pub fn solve(&self, b: &Matrix) -> Result<Matrix> {
        let p = self.dimension();
        if b.rows() != p {
            return Err(Error::invalid(format!(
                "right-hand side has {} rows, expected {p}",
                b.rows()
            )));
        }
        let mut out = Matrix::zeros(p, b.cols());
        let mut col = vec![0.0; p];
        for c in 0..b.cols() {
            for (i, v) in col.iter_mut().enumerate() {
                *v = b[(i, c)];
            }
            self.solve_in_place(&mut col);
            out.set_column(c, &col);
        }
        Ok(out)
    }

    pub fn solve_vec(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.dimension() {
            return Err(Error::invalid(format!(
                "right-hand side has length {}, expected {}",
                b.len(),
                self.dimension()
            )));
        }
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        Ok(x)
    }

    fn solve_in_place(&self, x: &mut [f64]) {
        let l = &self.factor;
        let p = x.len();
        // L y = b
        for i in 0..p {
            let s = dot(&l.row(i)[..i], &x[..i]);
            x[i] = (x[i] - s) / l[(i, i)];
        }
        // Lᵀ z = y, column-oriented so L is read by rows
        for i in (0..p).rev() {
            x[i] /= l[(i, i)];
            let zi = x[i];
            for (xk, &lik) in x[..i].iter_mut().zip(&l.row(i)[..i]) {
                *xk -= lik * zi;
            }
        }
    }
}

/// Row-oriented Cholesky of `a + jitter·I`; `None` when a pivot is not
/// safely positive.
fn cholesky(a: &Matrix, jitter: f64) -> Option<Matrix> {
    let p = a.rows();
    let max_diag = (0..p).map(|i| a[(i, i)].abs()).fold(0.0, f64::max) + jitter;
    let tol = p as f64 * f64::EPSILON * max_diag;
    let mut l = Matrix::zeros(p, p);
    for i in 0..p {
        for j in 0..=i {
            let s = dot(&l.row(i)[..j], &l.row(j)[..j]);
            if i == j {
                let pivot = a[(i, i)] + jitter - s;
                if !(pivot > tol) || !pivot.is_finite() {
                    return None;
                }
                l[(i, i)] = pivot.sqrt();
            } else {
                l[(i, j)] = (a[(i, j)] - s) / l[(j, j)];
            }
        }
    }
    Some(l)
}

/// Solves `A·Z = B` for symmetric positive-definite `A` via [`SpdFactorization`].
pub fn spd_solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    SpdFactorization::new(a)?.solve(b)
}

/// Least-squares projector onto the column space of a fixed design `X`.
///
/// Holds the factor of `XᵀX` so several right-hand sides (one per class, or
/// the bias-correction pass) reuse one factorization.
#[derive(Debug, Clone)]
pub struct DesignProjector {
    rows: usize,
    gram: SpdFactorization,
}

impl DesignProjector {
    pub fn new(x: &Matrix) -> Result<Self> {
        let g = gram(x)?;
        Ok(Self {
            rows: x.rows(),
            gram: SpdFactorization::new(&g)?,
        })
    }

    pub fn jitter_applied(&self) -> f64 {
        self.gram.jitter_applied()
    }

    /// `(XᵀX)⁻¹XᵀT`. `x` must be the design this projector was built from.
    pub fn project(&self, x: &Matrix, t: &Matrix) -> Result<Matrix> {
        if x.rows() != self.rows || x.cols() != self.gram.dimension() {
            return Err(Error::invalid("design does not match the projector"));
        }
        if t.rows() != x.rows() {
            return Err(Error::invalid(format!(
                "targets have {} rows, design has {}",
                t.rows(),
                x.rows()
            )));
        }
        require_finite(t, "targets")?;
        self.gram.solve(&x.t_matmul(t)?)
    }
}

/// `(XᵀX)⁻¹XᵀT`: the column-wise least-squares coefficients of `T` on `X`.
pub fn project_onto_design(x: &Matrix, t: &Matrix) -> Result<Matrix> {
    DesignProjector::new(x)?.project(x, t)
}

/// Eigenpairs of a symmetric matrix, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors as columns, in the order of `values`.
    pub vectors: Matrix,
}

const EIG_MAX_ITER: usize = 10_000;

pub fn sym_eig(a: &Matrix) -> Result<SymEig> {
    if a.rows() != a.cols() || a.rows() == 0 {
        return Err(Error::invalid(format!(
            "eigendecomposition needs a square matrix, got {:?}",
            a.shape()
        )));
    }
    require_finite(a, "matrix to decompose")?;
    let eig = SymmetricEigen::try_new(a.to_nalgebra(), f64::EPSILON, EIG_MAX_ITER)
        .ok_or(Error::EigFailure)?;
    let n = a.rows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..n {
            vectors[(r, dst)] = eig.eigenvectors[(r, src)];
        }
    }
    Ok(SymEig { values, vectors })
}
