//! Hypergraph neural networks for transductive vertex classification.
//!
//! The crate covers the whole pipeline at desk scale: kNN hypergraph
//! construction and normalization ([`hypergraph`]), a small reverse-mode
//! autodiff engine over dense matrices ([`autodiff`]), the HGNN family of
//! models with plain, multi-branch and residual variants ([`models`]),
//! full-batch training ([`training`]) and dataset I/O plus synthetic
//! benchmarks ([`data`]).

pub mod autodiff;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod hypergraph;
pub mod matrix;
pub mod models;
pub mod training;

pub use error::{Error, Result};
pub use matrix::Matrix;
