//! Model files on disk: the binary format for DMR, JSON for the GP and
//! ridge models, plus a JSON sidecar with training metadata and any PCA
//! projection that has to be replayed before prediction.

use std::fs;
use std::path::Path;

use jacobi_core::features::PcaProjection;
use jacobi_core::io::{self, MODEL_MAGIC};
use jacobi_core::{JacobiDmrModel, JacobiGpModel, Matrix, RidgeModel};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
enum JsonModel {
    Gp { model: JacobiGpModel },
    Ridge { model: RidgeModel },
}

pub enum Classifier {
    Dmr(JacobiDmrModel),
    Gp(JacobiGpModel),
    Ridge(RidgeModel),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcaInfo {
    pub dims: usize,
    pub explained_variance_ratio: f64,
    pub projection: PcaProjection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpInfo {
    pub length_scale: f64,
    pub signal_var: f64,
    pub noise_var: f64,
    pub stored_values: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sidecar {
    pub method: String,
    pub n_samples: usize,
    /// Feature count of the CSV the model was trained on (before PCA).
    pub n_features: usize,
    pub n_classes: usize,
    pub class_names: Vec<String>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub alpha: Option<f64>,
    pub bias_corrected: bool,
    pub fit_seconds: f64,
    pub gram_jitter: Option<f64>,
    pub gp: Option<GpInfo>,
    pub pca: Option<PcaInfo>,
}

pub struct LoadedModel {
    pub classifier: Classifier,
    pub sidecar: Option<Sidecar>,
}

impl Classifier {
    pub fn class_names(&self) -> &[String] {
        match self {
            Classifier::Dmr(m) => m.class_names(),
            Classifier::Gp(m) => m.class_names(),
            Classifier::Ridge(m) => m.class_names(),
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            Classifier::Dmr(m) => m.n_features(),
            Classifier::Gp(m) => m.n_features(),
            Classifier::Ridge(m) => m.n_features(),
        }
    }

    pub fn predict_class(&self, row: &[f64]) -> jacobi_core::Result<usize> {
        match self {
            Classifier::Dmr(m) => m.predict_class(row),
            Classifier::Gp(m) => m.predict_class(row),
            Classifier::Ridge(m) => m.predict_class(row),
        }
    }

    pub fn method(&self) -> &'static str {
        match self {
            Classifier::Dmr(_) => "dmr",
            Classifier::Gp(_) => "gp",
            Classifier::Ridge(_) => "ridge",
        }
    }
}

impl LoadedModel {
    fn pca(&self) -> Option<&PcaProjection> {
        self.sidecar
            .as_ref()
            .and_then(|s| s.pca.as_ref())
            .map(|p| &p.projection)
    }

    /// Feature count the raw input CSV must have.
    pub fn input_dims(&self) -> usize {
        self.pca()
            .map_or_else(|| self.classifier.n_features(), PcaProjection::input_dims)
    }

    /// Checks the input width and applies the stored PCA, if any.
    pub fn prepare(&self, features: &Matrix, source: &Path) -> Result<Matrix, CliError> {
        let expected = self.input_dims();
        if features.cols() != expected {
            return Err(CliError::Data(format!(
                "dimension mismatch: model expects {expected} features but {} has {}",
                source.display(),
                features.cols()
            )));
        }
        match self.pca() {
            Some(pca) => Ok(pca.apply(features)?),
            None => Ok(features.clone()),
        }
    }
}

pub fn save(classifier: &Classifier, sidecar: &Sidecar, path: &Path) -> Result<(), CliError> {
    match classifier {
        Classifier::Dmr(m) => io::save_model(m, path)?,
        Classifier::Gp(m) => write_json(&JsonModel::Gp { model: m.clone() }, path)?,
        Classifier::Ridge(m) => write_json(&JsonModel::Ridge { model: m.clone() }, path)?,
    }
    io::write_json_report(sidecar, io::sidecar_path(path))?;
    Ok(())
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let text = serde_json::to_string(value).map_err(|e| CliError::Data(e.to_string()))?;
    fs::write(path, text)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

/// Reads a model of any method; the format is recognised by its first bytes.
pub fn load(path: &Path) -> Result<LoadedModel, CliError> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let classifier = if bytes.starts_with(&MODEL_MAGIC) {
        Classifier::Dmr(
            io::decode_model(&bytes)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?,
        )
    } else {
        match serde_json::from_slice::<JsonModel>(&bytes) {
            Ok(JsonModel::Gp { model }) => Classifier::Gp(model),
            Ok(JsonModel::Ridge { model }) => Classifier::Ridge(model),
            Err(e) => {
                return Err(CliError::Data(format!(
                    "{}: not a model file ({e})",
                    path.display()
                )))
            }
        }
    };

    let side_path = io::sidecar_path(path);
    let sidecar =
        if side_path.exists() {
            let text = fs::read_to_string(&side_path)
                .map_err(|e| CliError::Data(format!("cannot read {}: {e}", side_path.display())))?;
            Some(serde_json::from_str::<Sidecar>(&text).map_err(|e| {
                CliError::Data(format!("{}: bad sidecar ({e})", side_path.display()))
            })?)
        } else {
            log::warn!(
                "no sidecar at {}; assuming raw features",
                side_path.display()
            );
            None
        };
    Ok(LoadedModel {
        classifier,
        sidecar,
    })
}
