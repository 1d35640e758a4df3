//! Multi-modal transductive datasets.
//!
//! A dataset is a fixed vertex set seen through `M` modalities. Each
//! modality carries its own feature matrix and hypergraph; labels and the
//! train/test split are shared.

mod io;
mod synthetic;

pub use io::{load_dataset, save_dataset, DatasetManifest, ModalityEntry, MANIFEST_FILE};
pub use synthetic::{generate_synthetic, SyntheticSpec};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::hypergraph::Hypergraph;
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Modality {
    pub id: String,
    pub features: Matrix,
    pub hypergraph: Hypergraph,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiModalDataset {
    pub name: String,
    pub modalities: Vec<Modality>,
    pub labels: Vec<usize>,
    pub train_mask: Vec<bool>,
    pub test_mask: Vec<bool>,
    pub n_classes: usize,
    /// Neighbourhood size used to (re)build hypergraphs from features.
    pub knn_k: usize,
}

impl MultiModalDataset {
    pub fn n_vertices(&self) -> usize {
        self.labels.len()
    }

    /// Fraction of vertices in the training mask.
    pub fn label_rate(&self) -> f64 {
        count(&self.train_mask) as f64 / self.n_vertices() as f64
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.labels.len();
        if n == 0 {
            return Err(Error::Validation("dataset has no vertices".into()));
        }
        if self.modalities.is_empty() {
            return Err(Error::Validation("dataset has no modalities".into()));
        }
        for m in &self.modalities {
            if m.features.rows() != n || m.hypergraph.n_vertices() != n {
                return Err(Error::Validation(format!(
                    "modality '{}' has {} feature rows and {} hypergraph vertices, expected {n}",
                    m.id,
                    m.features.rows(),
                    m.hypergraph.n_vertices()
                )));
            }
        }
        if self.train_mask.len() != n || self.test_mask.len() != n {
            return Err(Error::Validation("mask length differs from vertex count".into()));
        }
        if let Some(v) = (0..n).find(|&v| self.train_mask[v] && self.test_mask[v]) {
            return Err(Error::Validation(format!(
                "vertex {v} is in both the train and test masks"
            )));
        }
        if let Some((v, &l)) = self
            .labels
            .iter()
            .enumerate()
            .find(|&(_, &l)| l >= self.n_classes)
        {
            return Err(Error::Validation(format!(
                "vertex {v} has label {l}, but there are {} classes",
                self.n_classes
            )));
        }
        Ok(())
    }

    /// The single-hypergraph view: features and incidence matrices
    /// concatenated column-wise over the shared vertex set.
    pub fn concat_modalities(&self) -> Result<(Matrix, Hypergraph)> {
        let first = self
            .modalities
            .first()
            .ok_or_else(|| Error::Validation("no modalities to concatenate".into()))?;
        if self.modalities.len() == 1 {
            return Ok((first.features.clone(), first.hypergraph.clone()));
        }
        let n = first.features.rows();
        if let Some(m) = self.modalities.iter().find(|m| m.features.rows() != n) {
            return Err(Error::Validation(format!(
                "modality '{}' has {} vertices, '{}' has {n}",
                m.id,
                m.features.rows(),
                first.id
            )));
        }
        let feats: Vec<&Matrix> = self.modalities.iter().map(|m| &m.features).collect();
        let graphs: Vec<&Hypergraph> = self.modalities.iter().map(|m| &m.hypergraph).collect();
        Ok((Matrix::hcat(&feats)?, Hypergraph::concat(&graphs)?))
    }

    /// Copy with a replaced split.
    pub fn with_masks(&self, train_mask: Vec<bool>, test_mask: Vec<bool>) -> Result<Self> {
        let ds = Self {
            train_mask,
            test_mask,
            ..self.clone()
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Copy with a fresh stratified split at `rate`; every unlabelled vertex is a test vertex.
    pub fn resplit<R: Rng + ?Sized>(&self, rate: f64, rng: &mut R) -> Result<Self> {
        let train = stratified_mask(&self.labels, self.n_classes, rate, rng)?;
        let test = train.iter().map(|t| !t).collect();
        self.with_masks(train, test)
    }

    /// Per-class counts over vertices selected by `mask`.
    pub fn class_counts(&self, mask: &[bool]) -> Vec<usize> {
        class_histogram(&self.labels, mask, self.n_classes)
    }
}

pub(crate) fn count(mask: &[bool]) -> usize {
    mask.iter().filter(|&&b| b).count()
}

pub fn class_histogram(labels: &[usize], mask: &[bool], n_classes: usize) -> Vec<usize> {
    let mut hist = vec![0; n_classes];
    for (&l, _) in labels.iter().zip(mask).filter(|(_, &m)| m) {
        if l < n_classes {
            hist[l] += 1;
        }
    }
    hist
}

/// Draws a training mask containing `round(rate * N)` vertices, split
/// across classes in proportion to their sizes (largest remainder, ties to
/// the lower class). Every non-empty class keeps at least one vertex.
pub fn stratified_mask<R: Rng + ?Sized>(
    labels: &[usize],
    n_classes: usize,
    rate: f64,
    rng: &mut R,
) -> Result<Vec<bool>> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(Error::Validation(format!(
            "label rate must lie in (0, 1), got {rate}"
        )));
    }
    let n = labels.len();
    let sizes = class_histogram(labels, &vec![true; n], n_classes);
    let target = (rate * n as f64).round() as usize;
    let exact: Vec<f64> = sizes.iter().map(|&s| rate * s as f64).collect();
    let mut quota: Vec<usize> = exact.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..n_classes).collect();
    order.sort_by(|&a, &b| {
        let (fa, fb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut remaining = target.saturating_sub(quota.iter().sum());
    for &c in order.iter().cycle().take(n_classes * 2) {
        if remaining == 0 {
            break;
        }
        if quota[c] < sizes[c] {
            quota[c] += 1;
            remaining -= 1;
        }
    }
    for c in 0..n_classes {
        if sizes[c] > 0 && quota[c] == 0 {
            quota[c] = 1;
        }
    }

    let mut mask = vec![false; n];
    for (c, &q) in quota.iter().enumerate() {
        let mut members: Vec<usize> = (0..n).filter(|&v| labels[v] == c).collect();
        members.shuffle(rng);
        for &v in members.iter().take(q) {
            mask[v] = true;
        }
    }
    Ok(mask)
}
