#![allow(dead_code, unused_imports)]

use hypernet::hypergraph::{build_knn_hypergraph, Hypergraph};
use hypernet::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Uniform in [-1, 1] but bounded away from zero, so ReLU kinks are not
/// straddled by a finite-difference step.
pub fn uniform_away_from_zero(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| loop {
        let v: f64 = rng.random_range(-1.0..1.0);
        if v.abs() >= 1e-3 {
            break v;
        }
    })
}

pub use hypernet::gradcheck::{central_difference as finite_diff, relative_error as rel_err};

pub fn random_knn(n: usize, k: usize, dim: usize, rng: &mut ChaCha8Rng) -> Hypergraph {
    let x = uniform(n, dim, rng);
    build_knn_hypergraph(&x, k).unwrap()
}

pub fn random_perm(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// Direct dense evaluation of Dv^-1/2 H De^-1 H^T Dv^-1/2 with explicit
/// diagonal matrices.
pub fn dense_laplacian(g: &Hypergraph) -> Matrix {
    let h = g.incidence();
    let (n, m) = h.shape();
    let dv: Vec<f64> = (0..n).map(|v| h.row(v).iter().sum()).collect();
    let de: Vec<f64> = (0..m).map(|e| (0..n).map(|v| h.get(v, e)).sum()).collect();
    let dv_is = Matrix::from_fn(n, n, |i, j| {
        if i == j && dv[i] > 0.0 {
            1.0 / dv[i].sqrt()
        } else {
            0.0
        }
    });
    let de_inv = Matrix::from_fn(m, m, |i, j| if i == j { 1.0 / de[i] } else { 0.0 });
    dv_is
        .matmul(h)
        .unwrap()
        .matmul(&de_inv)
        .unwrap()
        .matmul(&h.transpose())
        .unwrap()
        .matmul(&dv_is)
        .unwrap()
}
