//! Feature CSV ingestion and the binary model format.
//!
//! Model binary layout (all little-endian):
//!
//! | bytes | field                                        |
//! |-------|----------------------------------------------|
//! | 4     | magic `TBJD`                                 |
//! | 2     | format version, `u16` = 1                    |
//! | 4     | feature count `p`, `u32`                     |
//! | 4     | class count `K`, `u32`                       |
//! | 8     | prior shape `a`, `f64`                       |
//! | 8     | prior rate `b`, `f64`                        |
//! | 8·p·K | coefficients, `f64`, class-major (`β̂_1` first) |
//! | …     | K names, each `u16` byte length + UTF-8      |

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::dmr::{JacobiDmrModel, Prior};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const MODEL_MAGIC: [u8; 4] = *b"TBJD";
pub const MODEL_VERSION: u16 = 1;
pub const MODEL_HEADER_BYTES: usize = 30;

/// Features with class labels mapped to `0..K` by first appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
}

impl FeatureDataset {
    pub fn n_samples(&self) -> usize {
        self.features.rows()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    /// Label indices re-expressed against `names` (e.g. a model's classes).
    pub fn labels_for(&self, names: &[String]) -> Result<Vec<usize>> {
        let lookup: HashMap<&str, usize> = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        self.labels
            .iter()
            .map(|&l| {
                let name = &self.class_names[l];
                lookup.get(name.as_str()).copied().ok_or_else(|| {
                    Error::invalid(format!(
                        "label '{name}' is not one of the model classes {names:?}"
                    ))
                })
            })
            .collect()
    }
}

fn data_err(path: &Path, message: String) -> Error {
    Error::Data {
        path: path.to_path_buf(),
        message,
    }
}

/// Reads `label,f0,…,f{p−1}` with a header row.
pub fn load_feature_csv(path: impl AsRef<Path>) -> Result<FeatureDataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| data_err(path, format!("cannot open: {e}")))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| data_err(path, format!("cannot read header: {e}")))?
        .clone();
    if header.is_empty() || header.iter().all(|h| h.trim().is_empty()) {
        return Err(data_err(path, "file is empty".into()));
    }
    if header.get(0).map(str::trim) != Some("label") {
        return Err(data_err(path, "first header column must be 'label'".into()));
    }
    let p = header.len() - 1;
    if p == 0 {
        return Err(data_err(path, "header declares no feature columns".into()));
    }

    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut class_names: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| data_err(path, format!("line {line}: {e}")))?;
        if record.len() != p + 1 {
            return Err(data_err(
                path,
                format!(
                    "line {line}: expected {p} features, found {}",
                    record.len().saturating_sub(1)
                ),
            ));
        }
        let name = record[0].trim().to_string();
        let next = class_names.len();
        let label = *index.entry(name.clone()).or_insert_with(|| {
            class_names.push(name);
            next
        });
        labels.push(label);
        for (j, field) in record.iter().skip(1).enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                data_err(
                    path,
                    format!("line {line}: feature f{j} is not a number: '{field}'"),
                )
            })?;
            if !v.is_finite() {
                return Err(data_err(
                    path,
                    format!("line {line}: feature f{j} is not finite"),
                ));
            }
            data.push(v);
        }
    }
    if labels.is_empty() {
        return Err(data_err(path, "no data rows".into()));
    }
    Ok(FeatureDataset {
        features: Matrix::from_vec(labels.len(), p, data)?,
        labels,
        class_names,
    })
}

/// Writes a feature CSV in the format [`load_feature_csv`] reads.
pub fn write_feature_csv(
    path: impl AsRef<Path>,
    features: &Matrix,
    labels: &[String],
) -> Result<()> {
    if labels.len() != features.rows() {
        return Err(Error::invalid("one label per row required"));
    }
    let mut w = csv::Writer::from_path(path.as_ref())
        .map_err(|e| data_err(path.as_ref(), e.to_string()))?;
    let mut header = vec!["label".to_string()];
    header.extend((0..features.cols()).map(|j| format!("f{j}")));
    w.write_record(&header)
        .map_err(|e| data_err(path.as_ref(), e.to_string()))?;
    for (row, label) in features.row_iter().zip(labels) {
        let mut rec = vec![label.clone()];
        // `{:?}` prints the shortest string that parses back to the same f64
        rec.extend(row.iter().map(|v| format!("{v:?}")));
        w.write_record(&rec)
            .map_err(|e| data_err(path.as_ref(), e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn encode_model(model: &JacobiDmrModel) -> Result<Vec<u8>> {
    let (p, k) = (model.n_features(), model.n_classes());
    let to_u32 = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::Format(format!("{what} {v} exceeds u32")))
    };
    let mut out = Vec::with_capacity(MODEL_HEADER_BYTES + 8 * p * k + 64);
    out.extend_from_slice(&MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&to_u32(p, "feature count")?.to_le_bytes());
    out.extend_from_slice(&to_u32(k, "class count")?.to_le_bytes());
    out.extend_from_slice(&model.prior().a.to_le_bytes());
    out.extend_from_slice(&model.prior().b.to_le_bytes());
    let coef = model.coefficients();
    for c in 0..k {
        for j in 0..p {
            out.extend_from_slice(&coef[(j, c)].to_le_bytes());
        }
    }
    for name in model.class_names() {
        let len = u16::try_from(name.len())
            .map_err(|_| Error::Format(format!("class name '{name}' is too long")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Format(format!(
                "truncated file while reading {what} at byte {}",
                self.pos
            ))),
        }
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self
            .take(N, what)?
            .try_into()
            .expect("slice length checked"))
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<JacobiDmrModel> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.array::<4>("magic")? != MODEL_MAGIC {
        return Err(Error::Format("bad magic bytes (expected TBJD)".into()));
    }
    let version = u16::from_le_bytes(cur.array("version")?);
    if version != MODEL_VERSION {
        return Err(Error::Format(format!(
            "unsupported format version {version}"
        )));
    }
    let p = u32::from_le_bytes(cur.array("feature count")?) as usize;
    let k = u32::from_le_bytes(cur.array("class count")?) as usize;
    let a = f64::from_le_bytes(cur.array("prior a")?);
    let b = f64::from_le_bytes(cur.array("prior b")?);
    let payload = p
        .checked_mul(k)
        .and_then(|v| v.checked_mul(8))
        .ok_or_else(|| Error::Format("coefficient count overflows".into()))?;
    let raw = cur.take(payload, "coefficients")?;
    let mut coef = Matrix::zeros(p, k);
    for (idx, chunk) in raw.chunks_exact(8).enumerate() {
        let (c, j) = (idx / p, idx % p);
        coef[(j, c)] = f64::from_le_bytes(chunk.try_into().expect("chunk of 8"));
    }
    let mut names = Vec::with_capacity(k);
    for _ in 0..k {
        let len = u16::from_le_bytes(cur.array("class name length")?) as usize;
        let s = cur.take(len, "class name")?;
        names.push(
            String::from_utf8(s.to_vec())
                .map_err(|_| Error::Format("class name is not UTF-8".into()))?,
        );
    }
    if cur.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after class names",
            bytes.len() - cur.pos
        )));
    }
    JacobiDmrModel::new(coef, Prior { a, b }, names)
        .map_err(|e| Error::Format(format!("invalid model: {e}")))
}

pub fn save_model(model: &JacobiDmrModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_model(model)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<JacobiDmrModel> {
    decode_model(&fs::read(path)?)
}

/// Writes any report as pretty-printed JSON with a trailing newline.
pub fn write_json_report<T: Serialize>(report: &T, path: impl AsRef<Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Path of the JSON sidecar that accompanies a model file.
pub fn sidecar_path(model_path: &Path) -> PathBuf {
    let mut s = model_path.as_os_str().to_os_string();
    s.push(".json");
    PathBuf::from(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn small_fixture() {
        let f = write("label,f0,f1\nh,1,2\nc,3,4\nh,5,1e3\n");
        let d = load_feature_csv(f.path()).unwrap();
        assert_eq!(d.features.shape(), (3, 2));
        assert_eq!(d.labels, vec![0, 1, 0]);
        assert_eq!(d.class_names, vec!["h", "c"]);
        assert_eq!(d.features[(2, 1)], 1000.0);
    }

    #[test]
    fn arity_error_names_line() {
        let f = write("label,f0,f1,f2\nh,1,2,3\nc,1,2\n");
        let err = load_feature_csv(f.path()).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn non_numeric_and_empty() {
        let f = write("label,f0\nh,abc\n");
        let err = load_feature_csv(f.path()).unwrap_err().to_string();
        assert!(
            err.contains("line 2") && err.contains("not a number"),
            "{err}"
        );

        let f = write("");
        assert!(load_feature_csv(f.path()).is_err());
        let f = write("label,f0\n");
        assert!(load_feature_csv(f.path())
            .unwrap_err()
            .to_string()
            .contains("no data rows"));
        assert!(load_feature_csv("/definitely/not/here.csv").is_err());
    }

    #[test]
    fn labels_remapped_to_model_order() {
        let f = write("label,f0\nb,1\na,2\nb,3\n");
        let d = load_feature_csv(f.path()).unwrap();
        let names = vec!["a".to_string(), "b".to_string()];
        assert_eq!(d.labels_for(&names).unwrap(), vec![1, 0, 1]);
        assert!(d.labels_for(&names[..1]).is_err());
    }

    fn model(p: usize, names: &[&str]) -> JacobiDmrModel {
        let k = names.len();
        let coef =
            Matrix::from_vec(p, k, (0..p * k).map(|i| i as f64 * 0.5 - 1.0).collect()).unwrap();
        JacobiDmrModel::new(
            coef,
            Prior { a: 0.25, b: 0.5 },
            names.iter().map(|s| s.to_string()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn tiny_model_layout() {
        let bytes = encode_model(&model(1, &["x", "y"])).unwrap();
        assert_eq!(&bytes[..4], b"TBJD");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(bytes.len(), MODEL_HEADER_BYTES + 16 + 2 * 3);
        // class-major: β̂_1 = [-1.0], β̂_2 = [-0.5]
        assert_eq!(f64::from_le_bytes(bytes[30..38].try_into().unwrap()), -1.0);
        assert_eq!(f64::from_le_bytes(bytes[38..46].try_into().unwrap()), -0.5);
    }

    #[test]
    fn decode_errors() {
        let bytes = encode_model(&model(2, &["a", "b"])).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_model(&bad)
            .unwrap_err()
            .to_string()
            .contains("magic"));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(decode_model(&bad)
            .unwrap_err()
            .to_string()
            .contains("version"));
        for cut in [3, 20, 40, bytes.len() - 1] {
            assert!(
                decode_model(&bytes[..cut])
                    .unwrap_err()
                    .to_string()
                    .contains("truncated"),
                "cut {cut}"
            );
        }
        let mut long = bytes.clone();
        long.push(0);
        assert!(decode_model(&long).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let m = model(3, &["healthy", "cssvd", "anthracnose"]);
        save_model(&m, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), m);
    }
}
