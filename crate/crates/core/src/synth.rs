//! Seeded synthetic data: Poisson-surrogate counts and multinomial-logit
//! one-hot labels drawn from a ground-truth coefficient matrix.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::dmr::EXP_GUARD;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// How design rows are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Design {
    StandardNormal,
    /// Independent uniform entries on `[−1, 1]`.
    BoundedUniform,
    /// Column 0 is the constant 1, the rest standard normal.
    StandardNormalWithIntercept,
    /// Column 0 is the constant 1, the rest uniform on `[−1, 1]`.
    BoundedUniformWithIntercept,
}

impl Design {
    pub fn has_intercept(self) -> bool {
        matches!(
            self,
            Design::StandardNormalWithIntercept | Design::BoundedUniformWithIntercept
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// p×K ground truth `β₀`.
    pub beta0: Matrix,
    pub design: Design,
    /// Rate multiplier `s_n ≥ 1`: `λ_ik = s_n·exp(x_i·β₀ₖ)`.
    pub intensity: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(beta0: Matrix, design: Design, intensity: f64, seed: u64) -> Result<Self> {
        if !beta0.is_finite() || beta0.rows() == 0 || beta0.cols() == 0 {
            return Err(Error::invalid("beta0 must be a non-empty finite matrix"));
        }
        if !(intensity >= 1.0 && intensity.is_finite()) {
            return Err(Error::invalid(format!(
                "intensity must be >= 1, got {intensity}"
            )));
        }
        Ok(Self {
            beta0,
            design,
            intensity,
            seed,
        })
    }

    pub fn n_features(&self) -> usize {
        self.beta0.rows()
    }

    pub fn n_classes(&self) -> usize {
        self.beta0.cols()
    }
}

/// SplitMix64 finaliser over `(base, index)`: independent per-replication
/// streams regardless of execution order.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn sample_design<R: Rng>(design: Design, n: usize, p: usize, rng: &mut R) -> Matrix {
    let mut x = Matrix::zeros(n, p);
    let first = if design.has_intercept() { 1 } else { 0 };
    for i in 0..n {
        let row = x.row_mut(i);
        if first == 1 && p > 0 {
            row[0] = 1.0;
        }
        for v in row.iter_mut().skip(first) {
            *v = match design {
                Design::StandardNormal | Design::StandardNormalWithIntercept => {
                    rng.sample(StandardNormal)
                }
                Design::BoundedUniform | Design::BoundedUniformWithIntercept => {
                    rng.random_range(-1.0..=1.0)
                }
            };
        }
    }
    x
}

/// Threshold between sequential inversion and transformed rejection.
const INVERSION_LIMIT: f64 = 30.0;

/// Exact Poisson draw: sequential-search inversion below rate 30, Hörmann's
/// PTRS transformed rejection above.
pub fn sample_poisson<R: Rng>(rate: f64, rng: &mut R) -> u64 {
    debug_assert!(rate >= 0.0 && rate.is_finite());
    if rate == 0.0 {
        return 0;
    }
    if rate < INVERSION_LIMIT {
        poisson_inversion(rate, rng)
    } else {
        poisson_ptrs(rate, rng)
    }
}

fn poisson_inversion<R: Rng>(rate: f64, rng: &mut R) -> u64 {
    let u: f64 = rng.random();
    let mut k = 0u64;
    let mut p = (-rate).exp();
    let mut cdf = p;
    while u > cdf {
        k += 1;
        p *= rate / k as f64;
        let next = cdf + p;
        if next == cdf {
            // tail mass below f64 resolution
            break;
        }
        cdf = next;
    }
    k
}

fn poisson_ptrs<R: Rng>(rate: f64, rng: &mut R) -> u64 {
    let slam = rate.sqrt();
    let loglam = rate.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + rate + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        if v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln()
            <= -rate + k * loglam - ln_gamma(k + 1.0)
        {
            return k as u64;
        }
    }
}

/// Counts `Y_ik ~ Poisson(s_n·exp(x_i·β₀ₖ))`, independent over `i` and `k`.
pub fn sample_counts<R: Rng>(
    x: &Matrix,
    beta0: &Matrix,
    intensity: f64,
    rng: &mut R,
) -> Result<Matrix> {
    let linear = x.matmul(beta0)?;
    let log_scale = intensity.ln();
    let limit = EXP_GUARD - log_scale;
    let mut y = Matrix::zeros(linear.rows(), linear.cols());
    for i in 0..linear.rows() {
        for k in 0..linear.cols() {
            let eta = linear[(i, k)];
            if eta > limit {
                return Err(Error::OverflowGuard {
                    row: i,
                    exponent: eta + log_scale,
                });
            }
            y[(i, k)] = sample_poisson(intensity * eta.exp(), rng) as f64;
        }
    }
    Ok(y)
}

/// `(X, Y)` with Poisson counts. Deterministic in `(spec, n)`.
pub fn generate_poisson_dmr(spec: &SyntheticSpec, n: usize) -> Result<(Matrix, Matrix)> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    let mut rng = rng_from_seed(spec.seed);
    let x = sample_design(spec.design, n, spec.n_features(), &mut rng);
    let y = sample_counts(&x, &spec.beta0, spec.intensity, &mut rng)?;
    Ok((x, y))
}

/// Labels drawn from `softmax(x·β₀ₖ)`.
pub fn sample_labels<R: Rng>(x: &Matrix, beta0: &Matrix, rng: &mut R) -> Result<Vec<usize>> {
    let scores = x.matmul(beta0)?;
    let k = beta0.cols();
    let mut probs = vec![0.0; k];
    let labels = scores
        .row_iter()
        .map(|s| {
            let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for (p, v) in probs.iter_mut().zip(s) {
                *p = (v - max).exp();
            }
            let total: f64 = probs.iter().sum();
            let u: f64 = rng.random::<f64>() * total;
            let mut acc = 0.0;
            for (c, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    return c;
                }
            }
            k - 1
        })
        .collect();
    Ok(labels)
}

/// `(X, labels)` from the multinomial-logit model. Deterministic in `(spec, n)`.
pub fn generate_onehot(spec: &SyntheticSpec, n: usize) -> Result<(Matrix, Vec<usize>)> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    let mut rng = rng_from_seed(spec.seed);
    let x = sample_design(spec.design, n, spec.n_features(), &mut rng);
    let labels = sample_labels(&x, &spec.beta0, &mut rng)?;
    Ok((x, labels))
}

/// Coefficients of `log λ` on the design: `β₀ + log(s_n)·(XᵀX)⁻¹Xᵀ1`.
/// Equal to `β₀` when `s_n = 1`; with an intercept column the shift lands
/// on the intercept only.
pub fn effective_truth(x: &Matrix, spec: &SyntheticSpec) -> Result<Matrix> {
    if spec.intensity == 1.0 {
        return Ok(spec.beta0.clone());
    }
    let v = crate::linalg::project_onto_design(x, &Matrix::filled(x.rows(), 1, 1.0))?;
    let shift = spec.intensity.ln();
    let mut out = spec.beta0.clone();
    for j in 0..out.rows() {
        for k in 0..out.cols() {
            out[(j, k)] += shift * v[(j, 0)];
        }
    }
    Ok(out)
}

/// Rates `s_n·exp(x_i·β₀ₖ)` for every row and class.
pub fn rates(x: &Matrix, spec: &SyntheticSpec) -> Result<Matrix> {
    let linear = x.matmul(&spec.beta0)?;
    Ok(linear.map(|e| spec.intensity * e.exp()))
}
