//! Effective-rank representation score.
//!
//! The score of an embedding matrix `Z` (n × h) with singular values `σ` is
//!
//! ```text
//! r_j = σ_j / ‖σ‖₁ + 1e-7
//! E   = exp(−Σ_j r_j ln r_j)
//! ```
//!
//! It lies in `[1, min(n, h)]` up to the stabilising constant and needs no labels.

use crate::matrix::Matrix;
use crate::nn::{penultimate_embeddings, ModelWeights};
use crate::{Error, Result};

const RATIO_EPSILON: f64 = 1e-7;
const JACOBI_TOLERANCE: f64 = 1e-10;
const JACOBI_MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    /// Descending singular values.
    pub singular_values: Vec<f64>,
    pub ratios: Vec<f64>,
    pub score: f64,
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, unsorted.
///
/// Sweeps stop once the off-diagonal Frobenius norm drops below
/// `1e-10 · ‖A‖_F`.
pub fn symmetric_eigenvalues(a: &Matrix) -> Vec<f64> {
    let n = a.rows();
    assert_eq!(n, a.cols(), "matrix must be square");
    let mut m = a.clone();
    let total: f64 = m.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
    if total == 0.0 {
        return vec![0.0; n];
    }
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += 2.0 * m[(p, q)] * m[(p, q)];
            }
        }
        if off.sqrt() <= JACOBI_TOLERANCE * total {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    (0..n).map(|i| m[(i, i)]).collect()
}

/// Singular values of `z`, descending, `min(n, h)` of them.
///
/// Computed as square roots of the eigenvalues of the smaller Gram matrix.
pub fn singular_values(z: &Matrix) -> Vec<f64> {
    let gram = if z.rows() >= z.cols() {
        z.gram()
    } else {
        z.transpose().gram()
    };
    let mut s: Vec<f64> = symmetric_eigenvalues(&gram)
        .into_iter()
        .map(|l| l.max(0.0).sqrt())
        .collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn effective_rank_score(singular_values: &[f64]) -> Result<ScoreReport> {
    if singular_values
        .iter()
        .any(|s| !(s.is_finite() && *s >= 0.0))
    {
        return Err(Error::InvalidInput(
            "singular values must be finite and non-negative".into(),
        ));
    }
    let l1: f64 = singular_values.iter().sum();
    if l1 <= 0.0 {
        return Err(Error::DegenerateEmbedding);
    }
    let ratios: Vec<f64> = singular_values
        .iter()
        .map(|s| s / l1 + RATIO_EPSILON)
        .collect();
    let entropy: f64 = -ratios.iter().map(|r| r * r.ln()).sum::<f64>();
    let mut sorted = singular_values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    Ok(ScoreReport {
        singular_values: sorted,
        ratios,
        score: entropy.exp(),
    })
}

pub fn embedding_score(z: &Matrix) -> Result<ScoreReport> {
    if z.rows() == 0 || z.cols() == 0 {
        return Err(Error::InvalidInput("empty embedding matrix".into()));
    }
    if !z.is_finite() {
        return Err(Error::InvalidInput("non-finite embeddings".into()));
    }
    effective_rank_score(&singular_values(z))
}

/// Score of a model's penultimate embeddings over one unlabeled set.
pub fn client_score(model: &ModelWeights, unlabeled: &Matrix) -> Result<f64> {
    let z = penultimate_embeddings(model, unlabeled)?;
    Ok(embedding_score(&z)?.score)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, DenseLayer};

    #[test]
    fn identity_and_diagonal_spectra() {
        let s = singular_values(&Matrix::identity(4));
        assert!(s.iter().all(|v| (v - 1.0).abs() < 1e-12));
        let d = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 3.0]]).unwrap();
        let s = singular_values(&d);
        assert!((s[0] - 3.0).abs() < 1e-12 && (s[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wide_matrices_use_the_row_gram() {
        let z = Matrix::from_rows(&[vec![3.0, 0.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 0.0]]).unwrap();
        let s = singular_values(&z);
        assert_eq!(s.len(), 2);
        assert!((s[0] - 3.0).abs() < 1e-12 && (s[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn score_examples() {
        let e = effective_rank_score(&[1.0; 4]).unwrap().score;
        assert!((e - 4.0).abs() < 1e-3);
        let e = effective_rank_score(&[5.0, 0.0]).unwrap().score;
        assert!((e - 1.0).abs() < 1e-3);
        let reference = (-(0.75f64 * 0.75f64.ln() + 0.25 * 0.25f64.ln())).exp();
        let e = effective_rank_score(&[3.0, 1.0]).unwrap().score;
        assert!((e - reference).abs() < 1e-5 && (e - 1.7548).abs() < 1e-3);
        assert!(matches!(
            effective_rank_score(&[0.0, 0.0]),
            Err(Error::DegenerateEmbedding)
        ));
    }

    fn one_hidden(w1: Vec<f64>, b1: Vec<f64>) -> ModelWeights {
        let h = b1.len();
        ModelWeights::new(vec![
            DenseLayer::new(2, h, w1, Some(b1), Activation::Relu).unwrap(),
            DenseLayer::new(h, 2, vec![1.0; 2 * h], None, Activation::Identity).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn zero_network_is_degenerate() {
        let m = one_hidden(vec![0.0; 6], vec![0.0; 3]);
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.5]]).unwrap();
        assert!(matches!(
            client_score(&m, &x),
            Err(Error::DegenerateEmbedding)
        ));
    }

    #[test]
    fn collapsed_hidden_layer_scores_one() {
        // zero input weights, positive bias: every input maps to the same embedding
        let m = one_hidden(vec![0.0; 6], vec![0.5, 1.0, 2.0]);
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.5], vec![0.3, 0.3]]).unwrap();
        let e = client_score(&m, &x).unwrap();
        assert!((e - 1.0).abs() < 1e-3, "{e}");
    }
}
