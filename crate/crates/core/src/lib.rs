//! Closed-form Bayesian multinomial classification with a Jacobi (conjugate
//! Gamma) prior on Poisson-surrogate rates.
//!
//! - [`dmr`]: the linear Jacobi-DMR classifier, its bias correction and the
//!   hyperparameter-invariance decomposition.
//! - [`gp`]: the Gaussian-process variant on the same transformed targets.
//! - [`ridge`]: a closed-form ridge baseline.
//! - [`features`]: PCA and standardization.
//! - [`synth`] / [`verify`]: seeded generators and Monte Carlo harnesses.
//! - [`metrics`] / [`io`]: evaluation, CSV ingestion, model files, reports.

pub mod dmr;
pub mod error;
pub mod features;
pub mod gp;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod ridge;
pub mod synth;
pub mod verify;

pub use dmr::{JacobiDmrModel, Prior};
pub use error::{Error, Result};
pub use gp::{GpParams, JacobiGpModel};
pub use linalg::Matrix;
pub use ridge::RidgeModel;
