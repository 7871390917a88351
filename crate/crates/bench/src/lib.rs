//! Deterministic fixtures shared by the kernel benchmarks.

use fedcompress_core::compression::{snap, ClusteredModel, Codebook};
use fedcompress_core::seed;
use fedcompress_core::{Matrix, ModelWeights};
use rand::Rng as _;

/// Uniform `[-1, 1)` matrix.
pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = seed::rng_from(seed);
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("shape matches data")
}

/// Glorot-initialised MLP with the given layer widths.
pub fn mlp(dims: &[usize], seed: u64) -> ModelWeights {
    ModelWeights::init_mlp(dims, &mut seed::rng_from(seed)).expect("valid dims")
}

/// `model` snapped onto a k-means codebook of `clusters` entries per layer.
pub fn clustered(model: &ModelWeights, clusters: usize, seed: u64) -> ClusteredModel {
    let codebook =
        Codebook::init(model, clusters, &mut seed::rng_from(seed)).expect("positive clusters");
    snap(model, &codebook).expect("codebook matches model")
}
