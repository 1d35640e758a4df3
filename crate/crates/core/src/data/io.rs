//! On-disk dataset layout.
//!
//! ```text
//! manifest.json          name, N, C, modality list, file names, knn_k
//! features_<id>.csv      N rows x d_m columns, no header
//! labels.txt             N lines, class index per line
//! split.txt              N lines, `train` or `test`
//! ```
//!
//! Relative paths in the manifest resolve against the manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{count, Modality, MultiModalDataset};
use crate::error::{Error, Result};
use crate::hypergraph::build_knn_hypergraph;
use crate::matrix::Matrix;

pub const MANIFEST_FILE: &str = "manifest.json";

fn default_knn_k() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityEntry {
    pub id: String,
    pub dim: usize,
    pub feature_file: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub n_vertices: usize,
    pub n_classes: usize,
    pub modalities: Vec<ModalityEntry>,
    pub labels_file: PathBuf,
    pub split_file: PathBuf,
    #[serde(default = "default_knn_k")]
    pub knn_k: usize,
    /// Informational; recomputed from the split file on load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_rate: Option<f64>,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(file: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Splits into lines and checks there are exactly `n` of them.
fn exact_lines<'a>(text: &'a str, file: &Path, n: usize) -> Result<Vec<&'a str>> {
    let lines: Vec<&str> = text.lines().collect();
    if lines.len() > n {
        return Err(parse_err(
            file,
            n + 1,
            format!("expected {n} lines, found {}", lines.len()),
        ));
    }
    if lines.len() < n {
        return Err(parse_err(
            file,
            lines.len() + 1,
            format!("expected {n} lines, file ends after {}", lines.len()),
        ));
    }
    Ok(lines)
}

fn read_features(path: &Path, n: usize, dim: usize) -> Result<Matrix> {
    let text = read_text(path)?;
    let lines = exact_lines(&text, path, n)?;
    let mut data = Vec::with_capacity(n * dim);
    for (i, line) in lines.iter().enumerate() {
        let start = data.len();
        for field in line.split(',') {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(path, i + 1, format!("cannot parse '{field}' as a number")))?;
            if !v.is_finite() {
                return Err(parse_err(path, i + 1, format!("non-finite value '{field}'")));
            }
            data.push(v);
        }
        if data.len() - start != dim {
            return Err(parse_err(
                path,
                i + 1,
                format!("{} columns, manifest says {dim}", data.len() - start),
            ));
        }
    }
    Matrix::from_vec(n, dim, data)
}

fn read_labels(path: &Path, n: usize, n_classes: usize) -> Result<Vec<usize>> {
    let text = read_text(path)?;
    exact_lines(&text, path, n)?
        .iter()
        .enumerate()
        .map(|(i, line)| {
            let l: usize = line
                .trim()
                .parse()
                .map_err(|_| parse_err(path, i + 1, format!("cannot parse '{line}' as a label")))?;
            if l >= n_classes {
                return Err(parse_err(
                    path,
                    i + 1,
                    format!("label {l} out of range for {n_classes} classes"),
                ));
            }
            Ok(l)
        })
        .collect()
}

fn read_split(path: &Path, n: usize) -> Result<Vec<bool>> {
    let text = read_text(path)?;
    exact_lines(&text, path, n)?
        .iter()
        .enumerate()
        .map(|(i, line)| match line.trim() {
            "train" => Ok(true),
            "test" => Ok(false),
            other => Err(parse_err(
                path,
                i + 1,
                format!("expected 'train' or 'test', found '{other}'"),
            )),
        })
        .collect()
}

/// Reads a manifest and its files, then builds one kNN hypergraph per modality.
pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<MultiModalDataset> {
    let manifest_path = manifest_path.as_ref();
    let manifest: DatasetManifest = serde_json::from_str(&read_text(manifest_path)?)
        .map_err(|e| parse_err(manifest_path, e.line(), e.to_string()))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &Path| base.join(p);
    let n = manifest.n_vertices;
    if n == 0 || manifest.n_classes == 0 {
        return Err(Error::Validation(format!(
            "{}: n_vertices and n_classes must be positive",
            manifest_path.display()
        )));
    }
    if manifest.modalities.is_empty() {
        return Err(Error::Validation(format!(
            "{}: no modalities listed",
            manifest_path.display()
        )));
    }

    let mut modalities = Vec::with_capacity(manifest.modalities.len());
    for entry in &manifest.modalities {
        let features = read_features(&resolve(&entry.feature_file), n, entry.dim)?;
        let hypergraph = build_knn_hypergraph(&features, manifest.knn_k)?;
        modalities.push(Modality {
            id: entry.id.clone(),
            features,
            hypergraph,
        });
    }
    let labels = read_labels(&resolve(&manifest.labels_file), n, manifest.n_classes)?;
    let train_mask = read_split(&resolve(&manifest.split_file), n)?;
    let test_mask = train_mask.iter().map(|t| !t).collect();

    let ds = MultiModalDataset {
        name: manifest.name,
        modalities,
        labels,
        train_mask,
        test_mask,
        n_classes: manifest.n_classes,
        knn_k: manifest.knn_k,
    };
    ds.validate()?;
    Ok(ds)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `ds` under `dir` in the format [`load_dataset`] reads. Refuses to
/// replace an existing manifest unless `force` is set.
pub fn save_dataset(
    ds: &MultiModalDataset,
    dir: impl AsRef<Path>,
    force: bool,
) -> Result<DatasetManifest> {
    let dir = dir.as_ref();
    ds.validate()?;
    if let Some(v) = (0..ds.n_vertices()).find(|&v| !ds.train_mask[v] && !ds.test_mask[v]) {
        return Err(Error::Validation(format!(
            "vertex {v} is in neither split; the split file cannot represent it"
        )));
    }
    let manifest_path = dir.join(MANIFEST_FILE);
    if manifest_path.exists() && !force {
        return Err(Error::Validation(format!(
            "{} already exists; pass force to overwrite",
            manifest_path.display()
        )));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut entries = Vec::with_capacity(ds.modalities.len());
    for m in &ds.modalities {
        let file = PathBuf::from(format!("features_{}.csv", m.id));
        let mut text = String::new();
        for r in 0..m.features.rows() {
            let row: Vec<String> = m.features.row(r).iter().map(|v| format!("{v:.16e}")).collect();
            text.push_str(&row.join(","));
            text.push('\n');
        }
        write_text(&dir.join(&file), &text)?;
        entries.push(ModalityEntry {
            id: m.id.clone(),
            dim: m.features.cols(),
            feature_file: file,
        });
    }

    let labels: String = ds.labels.iter().map(|l| format!("{l}\n")).collect();
    write_text(&dir.join("labels.txt"), &labels)?;
    let split: String = ds
        .train_mask
        .iter()
        .map(|&t| if t { "train\n" } else { "test\n" })
        .collect();
    write_text(&dir.join("split.txt"), &split)?;

    let manifest = DatasetManifest {
        name: ds.name.clone(),
        n_vertices: ds.n_vertices(),
        n_classes: ds.n_classes,
        modalities: entries,
        labels_file: "labels.txt".into(),
        split_file: "split.txt".into(),
        knn_k: ds.knn_k,
        label_rate: Some(count(&ds.train_mask) as f64 / ds.n_vertices() as f64),
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Validation(format!("cannot serialize manifest: {e}")))?;
    write_text(&manifest_path, &(json + "\n"))?;
    Ok(manifest)
}
