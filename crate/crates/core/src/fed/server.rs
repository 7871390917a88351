use crate::compression::{wc_loss, wc_loss_and_grads, Codebook};
use crate::distill::{kld_grad_student, LogitsPair};
use crate::matrix::Matrix;
use crate::nn::{self, backward, forward, minibatches, predict, ModelWeights};
use crate::seed::{self, Stream};
use crate::Result;

use super::{centroid_step, TrainConfig};

#[derive(Debug, Clone)]
pub struct SelfCompressOutcome {
    /// Trained, not yet snapped weights.
    pub weights: ModelWeights,
    pub codebook: Codebook,
    /// Clustering penalty of the input model against the k-means codebook.
    pub wc_entry: f64,
    /// Clustering penalty of the output against the trained codebook.
    pub wc_exit: f64,
}

/// Server-side self-compression by distillation on unlabeled OOD inputs.
///
/// Centroids are seeded by k-means on `global`. Each epoch freezes a teacher
/// copy of the current weights, then every mini-batch takes a step on
/// `KL(teacher ‖ student) + β_s·L_wc`.
pub fn self_compress(
    global: &ModelWeights,
    clusters: usize,
    ood: &Matrix,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<SelfCompressOutcome> {
    let mut shuffle_rng = seed::rng(seed, Stream::Server, &[0]);
    let mut kmeans_rng = seed::rng(seed, Stream::Server, &[1]);
    let mut codebook = Codebook::init(global, clusters, &mut kmeans_rng)?;
    let wc_entry = wc_loss(global, &codebook)?;
    let mut theta = global.clone();

    for _ in 0..cfg.epochs_server {
        let teacher = theta.clone();
        for batch in minibatches(ood.rows(), cfg.batch_size, &mut shuffle_rng) {
            let x = ood.select_rows(&batch);
            let teacher_logits = predict(&teacher, &x)?;
            let (student_logits, cache) = forward(&theta, &x)?;
            let pair = LogitsPair::new(&teacher_logits, &student_logits, cfg.temperature)?;
            let mut grads = backward(&theta, &cache, &kld_grad_student(&pair))?;
            if cfg.beta_server > 0.0 {
                let terms = wc_loss_and_grads(&theta, &codebook)?;
                grads.axpy(cfg.beta_server, &terms.grad_weights)?;
                centroid_step(&mut codebook, &terms, cfg.lr_server * cfg.beta_server);
            }
            nn::sgd_step_in_place(&mut theta, &grads, cfg.lr_server)?;
        }
    }

    let wc_exit = wc_loss(&theta, &codebook)?;
    Ok(SelfCompressOutcome {
        weights: theta,
        codebook,
        wc_entry,
        wc_exit,
    })
}
