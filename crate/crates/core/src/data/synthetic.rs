//! Gaussian-mixture stand-ins for multi-view feature datasets.
//!
//! Each modality has its own set of class centres. A vertex's features in
//! a modality are its class centre plus isotropic noise. With probability
//! `1 - correlation` a vertex gets one corrupted modality, picked uniformly,
//! whose features are drawn around a different random class. The other
//! modalities still carry the true class, so fusing them recovers labels
//! that any single modality gets wrong.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{stratified_mask, Modality, MultiModalDataset};
use crate::error::{Error, Result};
use crate::hypergraph::build_knn_hypergraph;
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    #[serde(default = "default_name")]
    pub name: String,
    pub n_vertices: usize,
    pub n_classes: usize,
    pub n_modalities: usize,
    /// One feature width per modality.
    pub dims: Vec<usize>,
    /// Minimum pairwise distance between class centres within a modality.
    pub separation: f64,
    pub noise_std: f64,
    /// Probability that a modality's features reflect the vertex's own class.
    pub correlation: f64,
    pub label_rate: f64,
    pub seed: u64,
    #[serde(default = "default_knn_k")]
    pub knn_k: usize,
}

fn default_name() -> String {
    "synthetic".into()
}

fn default_knn_k() -> usize {
    10
}

impl SyntheticSpec {
    /// The fixed benchmark used by the over-smoothing and label-ratio
    /// studies: 600 vertices, 4 classes, 2 modalities, correlation 0.7,
    /// label rate 0.2, centre separation 6 against unit noise.
    pub fn benchmark() -> Self {
        Self {
            name: "synthetic-benchmark".into(),
            n_vertices: 600,
            n_classes: 4,
            n_modalities: 2,
            dims: vec![16, 16],
            separation: 6.0,
            noise_std: 1.0,
            correlation: 0.7,
            label_rate: 0.2,
            seed: 2021,
            knn_k: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(msg));
        if self.n_classes < 2 {
            return fail(format!("need at least 2 classes, got {}", self.n_classes));
        }
        if self.n_modalities == 0 || self.dims.len() != self.n_modalities {
            return fail(format!(
                "{} modalities but {} dims",
                self.n_modalities,
                self.dims.len()
            ));
        }
        if self.dims.iter().any(|&d| d < 2) {
            return fail(format!("every modality needs dim >= 2, got {:?}", self.dims));
        }
        if !(self.separation > 0.0 && self.separation.is_finite()) {
            return fail(format!("separation must be positive, got {}", self.separation));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return fail(format!("noise_std must be >= 0, got {}", self.noise_std));
        }
        if !(0.0..=1.0).contains(&self.correlation) {
            return fail(format!("correlation must lie in [0, 1], got {}", self.correlation));
        }
        if !(self.label_rate > 0.0 && self.label_rate < 1.0) {
            return fail(format!("label_rate must lie in (0, 1), got {}", self.label_rate));
        }
        if self.label_rate * (self.n_vertices as f64) < self.n_classes as f64 {
            return fail(format!(
                "label_rate * n_vertices = {} is below the class count {}",
                self.label_rate * self.n_vertices as f64,
                self.n_classes
            ));
        }
        if self.knn_k == 0 || self.n_vertices < self.knn_k + 1 {
            return fail(format!(
                "knn_k = {} needs at least {} vertices, got {}",
                self.knn_k,
                self.knn_k + 1,
                self.n_vertices
            ));
        }
        Ok(())
    }
}

/// Class centres drawn from a standard normal, then rescaled so the
/// closest pair sits exactly `separation` apart.
fn class_centres(n_classes: usize, dim: usize, separation: f64, rng: &mut ChaCha8Rng) -> Result<Matrix> {
    let raw = Matrix::from_fn(n_classes, dim, |_, _| rng.sample(StandardNormal));
    let mut min_dist = f64::INFINITY;
    for a in 0..n_classes {
        for b in a + 1..n_classes {
            let d: f64 = raw
                .row(a)
                .iter()
                .zip(raw.row(b))
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            min_dist = min_dist.min(d);
        }
    }
    if !(min_dist > 1e-12) {
        return Err(Error::Validation("degenerate class centres".into()));
    }
    Ok(raw.scale(separation / min_dist))
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<MultiModalDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, c) = (spec.n_vertices, spec.n_classes);

    let mut labels: Vec<usize> = (0..n).map(|i| i % c).collect();
    labels.shuffle(&mut rng);

    // With probability 1 - correlation a vertex has one modality, chosen
    // uniformly, that reflects a different class.
    let corrupted: Vec<Option<(usize, usize)>> = labels
        .iter()
        .map(|&label| {
            if rng.random::<f64>() < spec.correlation {
                return None;
            }
            let m = rng.random_range(0..spec.n_modalities);
            let other = rng.random_range(0..c - 1);
            Some((m, if other >= label { other + 1 } else { other }))
        })
        .collect();

    let mut modalities = Vec::with_capacity(spec.n_modalities);
    for (m, &dim) in spec.dims.iter().enumerate() {
        let centres = class_centres(c, dim, spec.separation, &mut rng)?;
        let mut features = Matrix::zeros(n, dim);
        for (v, &label) in labels.iter().enumerate() {
            let seen = match corrupted[v] {
                Some((cm, other)) if cm == m => other,
                _ => label,
            };
            for (x, mu) in features.row_mut(v).iter_mut().zip(centres.row(seen)) {
                let z: f64 = rng.sample(StandardNormal);
                *x = mu + spec.noise_std * z;
            }
        }
        let hypergraph = build_knn_hypergraph(&features, spec.knn_k)?;
        modalities.push(Modality {
            id: format!("m{m}"),
            features,
            hypergraph,
        });
    }

    let train_mask = stratified_mask(&labels, c, spec.label_rate, &mut rng)?;
    let test_mask = train_mask.iter().map(|t| !t).collect();
    let ds = MultiModalDataset {
        name: spec.name.clone(),
        modalities,
        labels,
        train_mask,
        test_mask,
        n_classes: c,
        knn_k: spec.knn_k,
    };
    ds.validate()?;
    Ok(ds)
}
