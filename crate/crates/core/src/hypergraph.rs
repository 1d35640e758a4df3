//! Hypergraphs, degree vectors and the normalized hypergraph Laplacian.
//!
//! A hypergraph over `n` vertices is a list of non-empty vertex sets. Its
//! incidence matrix `H` is `n x |E|` with `H[v, e] = 1` iff `v` is in `e`.
//! The propagation operator used by every convolution in this crate is
//!
//! ```text
//! L = Dv^{-1/2} H De^{-1} H^T Dv^{-1/2}
//! ```
//!
//! with unit hyperedge weights. Vertices contained in no hyperedge get a
//! zero `Dv^{-1/2}` entry, so their rows and columns of `L` are zero.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone)]
pub struct Hypergraph {
    n_vertices: usize,
    hyperedges: Vec<Vec<usize>>,
    incidence: Matrix,
    laplacian: OnceLock<Laplacian>,
}

impl PartialEq for Hypergraph {
    fn eq(&self, other: &Self) -> bool {
        self.n_vertices == other.n_vertices && self.hyperedges == other.hyperedges
    }
}

/// Vertex degrees `d_v` and hyperedge degrees `d_e`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegreePair {
    pub d_v: Vec<usize>,
    pub d_e: Vec<usize>,
}

/// The symmetric `|V| x |V|` propagation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    matrix: Matrix,
}

impl Laplacian {
    /// Wraps an arbitrary square matrix as a propagation operator.
    pub fn from_matrix(matrix: Matrix) -> Result<Self> {
        if matrix.rows() != matrix.cols() {
            return Err(Error::shape(
                "Laplacian::from_matrix",
                format!("{}x{} is not square", matrix.rows(), matrix.cols()),
            ));
        }
        Ok(Self { matrix })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            matrix: Matrix::identity(n),
        }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn n_vertices(&self) -> usize {
        self.matrix.rows()
    }

    pub fn into_matrix(self) -> Matrix {
        self.matrix
    }
}

impl Hypergraph {
    /// Validates and stores the hyperedge list. Vertex order inside each
    /// hyperedge is preserved.
    pub fn new(n_vertices: usize, hyperedges: Vec<Vec<usize>>) -> Result<Self> {
        if n_vertices == 0 {
            return Err(Error::Size("hypergraph needs at least one vertex".into()));
        }
        let mut incidence = Matrix::zeros(n_vertices, hyperedges.len());
        for (e, members) in hyperedges.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::Validation(format!("hyperedge {e} is empty")));
            }
            for &v in members {
                if v >= n_vertices {
                    return Err(Error::Validation(format!(
                        "hyperedge {e} references vertex {v}, but there are only {n_vertices}"
                    )));
                }
                if incidence.get(v, e) != 0.0 {
                    return Err(Error::Validation(format!(
                        "hyperedge {e} contains vertex {v} twice"
                    )));
                }
                incidence.set(v, e, 1.0);
            }
        }
        Ok(Self {
            n_vertices,
            hyperedges,
            incidence,
            laplacian: OnceLock::new(),
        })
    }

    /// Reads hyperedges off the nonzero entries of a 0/1 incidence matrix.
    pub fn from_incidence(incidence: &Matrix) -> Result<Self> {
        let mut edges = vec![Vec::new(); incidence.cols()];
        for v in 0..incidence.rows() {
            for (e, &h) in incidence.row(v).iter().enumerate() {
                match h {
                    0.0 => {}
                    1.0 => edges[e].push(v),
                    other => {
                        return Err(Error::Validation(format!(
                            "incidence entry ({v}, {e}) is {other}, expected 0 or 1"
                        )))
                    }
                }
            }
        }
        Self::new(incidence.rows(), edges)
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_hyperedges(&self) -> usize {
        self.hyperedges.len()
    }

    pub fn hyperedges(&self) -> &[Vec<usize>] {
        &self.hyperedges
    }

    pub fn incidence(&self) -> &Matrix {
        &self.incidence
    }

    pub fn degrees(&self) -> DegreePair {
        let mut d_v = vec![0usize; self.n_vertices];
        for e in &self.hyperedges {
            for &v in e {
                d_v[v] += 1;
            }
        }
        DegreePair {
            d_v,
            d_e: self.hyperedges.iter().map(Vec::len).collect(),
        }
    }

    /// The normalized Laplacian, computed on first use and cached.
    pub fn laplacian(&self) -> &Laplacian {
        self.laplacian.get_or_init(|| self.compute_laplacian())
    }

    fn compute_laplacian(&self) -> Laplacian {
        let DegreePair { d_v, .. } = self.degrees();
        let inv_sqrt: Vec<f64> = d_v
            .iter()
            .map(|&d| if d == 0 { 0.0 } else { 1.0 / (d as f64).sqrt() })
            .collect();
        let n = self.n_vertices;
        let mut m = Matrix::zeros(n, n);
        // L[u, v] = sum over e containing u and v of 1 / (|e| sqrt(d_u d_v)).
        // Each term is added to (u, v) and (v, u) in the same order, so the
        // result is exactly symmetric.
        let data = m.data_mut();
        for e in &self.hyperedges {
            let inv_de = 1.0 / e.len() as f64;
            for &u in e {
                let su = inv_sqrt[u] * inv_de;
                for &v in e {
                    data[u * n + v] += su * inv_sqrt[v];
                }
            }
        }
        Laplacian { matrix: m }
    }

    /// Relabels vertices so that new vertex `i` is old vertex `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let inverse = inverse_permutation(perm, self.n_vertices)?;
        let edges = self
            .hyperedges
            .iter()
            .map(|e| e.iter().map(|&v| inverse[v]).collect())
            .collect();
        Self::new(self.n_vertices, edges)
    }

    /// Column-wise concatenation of incidence matrices over one vertex set.
    pub fn concat(parts: &[&Hypergraph]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Validation("no hypergraphs to concatenate".into()))?;
        let mut edges = Vec::new();
        for (m, g) in parts.iter().enumerate() {
            if g.n_vertices != first.n_vertices {
                return Err(Error::Validation(format!(
                    "modality {m} has {} vertices, modality 0 has {}",
                    g.n_vertices, first.n_vertices
                )));
            }
            edges.extend(g.hyperedges.iter().cloned());
        }
        Self::new(first.n_vertices, edges)
    }
}

pub(crate) fn inverse_permutation(perm: &[usize], n: usize) -> Result<Vec<usize>> {
    if perm.len() != n {
        return Err(Error::Validation(format!(
            "permutation has {} entries for {n} vertices",
            perm.len()
        )));
    }
    let mut inverse = vec![usize::MAX; n];
    for (new, &old) in perm.iter().enumerate() {
        if old >= n || inverse[old] != usize::MAX {
            return Err(Error::Validation("not a permutation".into()));
        }
        inverse[old] = new;
    }
    Ok(inverse)
}

/// Options for [`build_knn_hypergraph_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KnnOptions {
    /// Put the central vertex into its own hyperedge (size `k + 1`).
    pub include_center: bool,
}

impl Default for KnnOptions {
    fn default() -> Self {
        Self {
            include_center: true,
        }
    }
}

/// One hyperedge per vertex: the vertex itself plus its `k` nearest
/// neighbours by Euclidean distance. Ties go to the lower vertex index.
pub fn build_knn_hypergraph(features: &Matrix, k: usize) -> Result<Hypergraph> {
    build_knn_hypergraph_with(features, k, KnnOptions::default())
}

pub fn build_knn_hypergraph_with(
    features: &Matrix,
    k: usize,
    options: KnnOptions,
) -> Result<Hypergraph> {
    let n = features.rows();
    if k == 0 {
        return Err(Error::Parameter("k must be positive".into()));
    }
    if n < k + 1 {
        return Err(Error::Size(format!(
            "kNN with k = {k} needs at least {} vertices, got {n}",
            k + 1
        )));
    }
    if let Some(pos) = features.data().iter().position(|v| !v.is_finite()) {
        let cols = features.cols().max(1);
        return Err(Error::Validation(format!(
            "non-finite feature at row {}, column {}",
            pos / cols,
            pos % cols
        )));
    }

    let mut edges = Vec::with_capacity(n);
    let mut candidates: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        let xi = features.row(i);
        candidates.clear();
        candidates.extend((0..n).filter(|&j| j != i).map(|j| {
            let d2: f64 = xi
                .iter()
                .zip(features.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            (d2, j)
        }));
        let by_distance =
            |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < candidates.len() {
            candidates.select_nth_unstable_by(k - 1, by_distance);
        }
        let nearest = &mut candidates[..k];
        nearest.sort_unstable_by(by_distance);

        let mut edge = Vec::with_capacity(k + 1);
        if options.include_center {
            edge.push(i);
        }
        edge.extend(nearest.iter().map(|&(_, j)| j));
        edges.push(edge);
    }
    Hypergraph::new(n, edges)
}
