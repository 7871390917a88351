//! Sample-weighted averaging of client updates and scores.

use crate::nn::ModelWeights;
use crate::{Error, Result};

/// `Σ_k (N_k / N) θ_k`.
pub fn fedavg_aggregate(updates: &[(&ModelWeights, usize)]) -> Result<ModelWeights> {
    let (first, _) = updates.first().ok_or(Error::EmptyAggregation)?;
    let total: usize = updates.iter().map(|(_, n)| n).sum();
    if total == 0 {
        return Err(Error::InvalidInput(
            "aggregation weights sum to zero".into(),
        ));
    }
    let mut out = first.zeros_like();
    for (w, n) in updates {
        out.axpy(*n as f64 / total as f64, w)?;
    }
    Ok(out)
}

/// `Σ_k (N_k / N) E_k`.
pub fn score_aggregate(scores: &[(f64, usize)]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyAggregation);
    }
    let total: usize = scores.iter().map(|(_, n)| n).sum();
    if total == 0 {
        return Err(Error::InvalidInput(
            "aggregation weights sum to zero".into(),
        ));
    }
    Ok(scores
        .iter()
        .map(|(s, n)| s * (*n as f64 / total as f64))
        .sum())
}
