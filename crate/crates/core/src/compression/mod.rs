//! Weight clustering.
//!
//! Each weight matrix gets its own codebook of `C` centroids; the cluster count
//! is shared by all layers. Biases are never clustered and travel as `f32`.
//!
//! The clustering penalty for a model is
//!
//! ```text
//! L_wc = Σ_layers Σ_i (θ_i − μ_{a(i)})²,   a(i) = argmin_j (θ_i − μ_j)²
//! ```
//!
//! Assignments are recomputed from current values and treated as constants when
//! differentiating.

pub mod bitpack;
pub mod codec;
pub mod kmeans;

use crate::nn::{Activation, DenseLayer, ModelWeights};
use crate::seed::Rng;
use crate::{Error, Result};

pub use codec::{
    decode, encode, encoded_len, model_compression_ratio, payload_len, HEADER_LEN,
    LAYER_FRAMING_LEN, MAGIC, VERSION,
};
pub use kmeans::{init_centroids, nearest};

/// Per-layer centroid lists sharing one cluster count.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    layers: Vec<Vec<f64>>,
}

impl Codebook {
    pub fn new(layers: Vec<Vec<f64>>) -> Result<Self> {
        let count = layers.first().map_or(0, Vec::len);
        if count == 0 {
            return Err(Error::InvalidInput(
                "codebook needs at least one centroid".into(),
            ));
        }
        if layers.iter().any(|l| l.len() != count) {
            return Err(Error::InvalidInput(
                "every layer must have the same number of centroids".into(),
            ));
        }
        if layers.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("non-finite centroid".into()));
        }
        Ok(Self { layers })
    }

    /// k-means codebook over each layer's current weight values.
    pub fn init(model: &ModelWeights, count: usize, rng: &mut Rng) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidInput("cluster count must be positive".into()));
        }
        Self::new(
            model
                .layers()
                .iter()
                .map(|l| init_centroids(&l.weights, count, rng))
                .collect(),
        )
    }

    pub fn cluster_count(&self) -> usize {
        self.layers[0].len()
    }

    pub fn layers(&self) -> &[Vec<f64>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.layers
    }

    /// Increases the cluster count, keeping existing centroids and inserting new
    /// ones at the midpoints of the widest gaps.
    pub fn grow_to(&mut self, count: usize) {
        for layer in &mut self.layers {
            layer.sort_by(f64::total_cmp);
            while layer.len() < count {
                if layer.len() == 1 {
                    let c = layer[0];
                    layer.push(c + 1e-3 * c.abs().max(1.0));
                    continue;
                }
                let (gap_at, _) = layer
                    .windows(2)
                    .enumerate()
                    .map(|(i, w)| (i, w[1] - w[0]))
                    .fold((0, f64::NEG_INFINITY), |best, cur| {
                        if cur.1 > best.1 {
                            cur
                        } else {
                            best
                        }
                    });
                let mid = 0.5 * (layer[gap_at] + layer[gap_at + 1]);
                layer.insert(gap_at + 1, mid);
            }
        }
    }

    /// The same codebook with every centroid rounded to `f32`.
    pub fn to_f32_precision(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| l.iter().map(|&c| c as f32 as f64).collect())
                .collect(),
        }
    }

    fn check_model(&self, model: &ModelWeights) -> Result<()> {
        if self.layers.len() != model.layers().len() {
            return Err(Error::DimensionMismatch {
                context: "codebook layers",
                expected: model.layers().len(),
                actual: self.layers.len(),
            });
        }
        Ok(())
    }
}

/// Cluster index of every weight, per layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub layers: Vec<Vec<u32>>,
}

/// Nearest-centroid index for each weight; ties go to the lowest index.
pub fn assign(weights: &[f64], centroids: &[f64]) -> Vec<u32> {
    assert!(!centroids.is_empty(), "centroid list must be non-empty");
    weights
        .iter()
        .map(|&w| nearest(w, centroids) as u32)
        .collect()
}

pub fn assign_model(model: &ModelWeights, codebook: &Codebook) -> Result<Assignment> {
    codebook.check_model(model)?;
    Ok(Assignment {
        layers: model
            .layers()
            .iter()
            .zip(codebook.layers())
            .map(|(l, c)| assign(&l.weights, c))
            .collect(),
    })
}

/// Clustering penalty and its gradients.
#[derive(Debug, Clone)]
pub struct WcTerms {
    pub loss: f64,
    /// Gradient with respect to the weights; bias entries are zero.
    pub grad_weights: ModelWeights,
    /// Gradient with respect to each layer's centroids.
    pub grad_centroids: Vec<Vec<f64>>,
    /// Members per centroid under the assignment used.
    pub cluster_sizes: Vec<Vec<usize>>,
}

/// `L_wc` with assignments recomputed from the current weights.
pub fn wc_loss_and_grads(model: &ModelWeights, codebook: &Codebook) -> Result<WcTerms> {
    let assignment = assign_model(model, codebook)?;
    wc_terms_with_assignment(model, codebook, &assignment)
}

/// `L_wc` and gradients for a fixed assignment.
pub fn wc_terms_with_assignment(
    model: &ModelWeights,
    codebook: &Codebook,
    assignment: &Assignment,
) -> Result<WcTerms> {
    codebook.check_model(model)?;
    let count = codebook.cluster_count();
    let mut grad_weights = model.zeros_like();
    let mut grad_centroids = vec![vec![0.0; count]; codebook.layers.len()];
    let mut cluster_sizes = vec![vec![0usize; count]; codebook.layers.len()];
    let mut loss = 0.0;
    for (l, layer) in model.layers().iter().enumerate() {
        let centroids = &codebook.layers[l];
        let idx = &assignment.layers[l];
        if idx.len() != layer.weights.len() {
            return Err(Error::DimensionMismatch {
                context: "assignment length",
                expected: layer.weights.len(),
                actual: idx.len(),
            });
        }
        let gw = &mut grad_weights.layers_mut()[l].weights;
        for (i, (&w, &a)) in layer.weights.iter().zip(idx).enumerate() {
            let a = a as usize;
            let diff = w - centroids[a];
            loss += diff * diff;
            gw[i] = 2.0 * diff;
            grad_centroids[l][a] -= 2.0 * diff;
            cluster_sizes[l][a] += 1;
        }
    }
    Ok(WcTerms {
        loss,
        grad_weights,
        grad_centroids,
        cluster_sizes,
    })
}

pub fn wc_loss(model: &ModelWeights, codebook: &Codebook) -> Result<f64> {
    Ok(wc_loss_and_grads(model, codebook)?.loss)
}

/// A weight matrix in codebook form.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub centroids: Vec<f32>,
    pub indices: Vec<u32>,
    pub bias: Option<Vec<f32>>,
}

/// The compressed wire form of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredModel {
    pub cluster_count: usize,
    pub layers: Vec<ClusteredLayer>,
}

impl ClusteredModel {
    /// Reconstructs dense weights: every weight equals its assigned centroid.
    pub fn to_weights(&self) -> Result<ModelWeights> {
        let n = self.layers.len();
        let layers = self
            .layers
            .iter()
            .enumerate()
            .map(|(l, cl)| {
                let weights = cl
                    .indices
                    .iter()
                    .map(|&i| f64::from(cl.centroids[i as usize]))
                    .collect();
                let bias = cl
                    .bias
                    .as_ref()
                    .map(|b| b.iter().map(|&v| f64::from(v)).collect());
                let act = if l + 1 == n {
                    Activation::Identity
                } else {
                    Activation::Relu
                };
                DenseLayer::new(cl.inputs, cl.outputs, weights, bias, act)
            })
            .collect::<Result<Vec<_>>>()?;
        ModelWeights::new(layers)
    }

    pub fn codebook(&self) -> Result<Codebook> {
        Codebook::new(
            self.layers
                .iter()
                .map(|l| l.centroids.iter().map(|&c| f64::from(c)).collect())
                .collect(),
        )
    }

    pub fn bitwise_eq(&self, other: &ClusteredModel) -> bool {
        let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        self.cluster_count == other.cluster_count
            && self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.inputs == b.inputs
                    && a.outputs == b.outputs
                    && a.indices == b.indices
                    && bits(&a.centroids) == bits(&b.centroids)
                    && a.bias.as_deref().map(bits) == b.bias.as_deref().map(bits)
            })
    }
}

/// Replaces every weight by its nearest centroid.
///
/// Centroids are first rounded to `f32`, so the dense reconstruction of the
/// result has a clustering penalty of exactly zero against its own codebook and
/// snapping that reconstruction again is a no-op.
pub fn snap(model: &ModelWeights, codebook: &Codebook) -> Result<ClusteredModel> {
    codebook.check_model(model)?;
    let rounded = codebook.to_f32_precision();
    let layers = model
        .layers()
        .iter()
        .zip(rounded.layers())
        .map(|(l, c)| ClusteredLayer {
            inputs: l.inputs(),
            outputs: l.outputs(),
            centroids: c.iter().map(|&v| v as f32).collect(),
            indices: assign(&l.weights, c),
            bias: l
                .bias
                .as_ref()
                .map(|b| b.iter().map(|&v| v as f32).collect()),
        })
        .collect();
    Ok(ClusteredModel {
        cluster_count: codebook.cluster_count(),
        layers,
    })
}

/// Largest number of distinct values in any weight matrix.
pub fn max_distinct_values(model: &ModelWeights) -> usize {
    model
        .layers()
        .iter()
        .map(|l| {
            let mut v = l.weights.clone();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v.len()
        })
        .max()
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::finite_diff_check;
    use crate::seed;

    fn row_model(w: Vec<f64>) -> ModelWeights {
        let n = w.len();
        ModelWeights::new(vec![
            DenseLayer::new(n, 1, w, None, Activation::Identity).unwrap()
        ])
        .unwrap()
    }

    #[test]
    fn assign_examples() {
        assert_eq!(assign(&[0.0, 0.4, 1.0], &[0.0, 1.0]), vec![0, 0, 1]);
        assert_eq!(assign(&[0.5], &[0.0, 1.0]), vec![0]);
        assert_eq!(assign(&[3.0, 1.0, 2.0], &[2.0, 3.0, 1.0]), vec![1, 2, 0]);
    }

    #[test]
    fn wc_hand_example() {
        let m = row_model(vec![0.0, 0.4, 1.0]);
        let cb = Codebook::new(vec![vec![0.0, 1.0]]).unwrap();
        let t = wc_loss_and_grads(&m, &cb).unwrap();
        assert!((t.loss - 0.16).abs() < 1e-12);
        let gw = &t.grad_weights.layers()[0].weights;
        assert!((gw[0]).abs() < 1e-12 && (gw[1] - 0.8).abs() < 1e-12 && gw[2].abs() < 1e-12);
        assert!((t.grad_centroids[0][0] + 0.8).abs() < 1e-12);
        assert!(t.grad_centroids[0][1].abs() < 1e-12);
    }

    #[test]
    fn perfectly_clustered_has_zero_loss_and_grads() {
        let m = row_model(vec![1.0, -2.0, 1.0, 0.5]);
        let cb = Codebook::new(vec![vec![-2.0, 0.5, 1.0]]).unwrap();
        let t = wc_loss_and_grads(&m, &cb).unwrap();
        assert_eq!(t.loss, 0.0);
        assert!(t.grad_weights.to_flat().iter().all(|&g| g == 0.0));
        assert!(t.grad_centroids[0].iter().all(|&g| g == 0.0));
    }

    #[test]
    fn wc_gradients_match_finite_differences() {
        let mut rng = seed::rng_from(21);
        let m = ModelWeights::init_mlp(&[4, 5, 3], &mut rng).unwrap();
        let cb = Codebook::init(&m, 3, &mut rng).unwrap();
        let a = assign_model(&m, &cb).unwrap();
        let t = wc_terms_with_assignment(&m, &cb, &a).unwrap();
        // parameters: flattened weights (biases included, zero gradient) then centroids
        let mut params = m.to_flat();
        let nw = params.len();
        params.extend(cb.layers().iter().flatten());
        let mut analytic = t.grad_weights.to_flat();
        analytic.extend(t.grad_centroids.iter().flatten());
        let err = finite_diff_check(
            |p| {
                let mm = m.with_flat(&p[..nw]).unwrap();
                let c = p[nw..].chunks(3).map(<[f64]>::to_vec).collect();
                let cb = Codebook::new(c).unwrap();
                wc_terms_with_assignment(&mm, &cb, &a).unwrap().loss
            },
            &params,
            &analytic,
            1e-5,
        );
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn snap_examples_and_idempotence() {
        let m = row_model(vec![0.1, 0.9]);
        let cb = Codebook::new(vec![vec![0.0, 1.0]]).unwrap();
        let s = snap(&m, &cb).unwrap();
        let w = s.to_weights().unwrap();
        assert_eq!(w.layers()[0].weights, vec![0.0, 1.0]);
        assert_eq!(wc_loss(&w, &s.codebook().unwrap()).unwrap(), 0.0);
        let s2 = snap(&w, &s.codebook().unwrap()).unwrap();
        assert!(s.bitwise_eq(&s2));
        assert_eq!(s2.to_weights().unwrap(), w);
    }

    #[test]
    fn grow_inserts_midpoints_of_widest_gaps() {
        let mut cb = Codebook::new(vec![vec![0.0, 1.0, 4.0]]).unwrap();
        cb.grow_to(5);
        assert_eq!(cb.layers()[0], vec![0.0, 1.0, 1.75, 2.5, 4.0]);
        assert_eq!(cb.cluster_count(), 5);
    }

    #[test]
    fn structure_mismatch_rejected() {
        let m = row_model(vec![0.1, 0.9]);
        let cb = Codebook::new(vec![vec![0.0], vec![1.0]]).unwrap();
        assert!(wc_loss_and_grads(&m, &cb).is_err());
    }
}
