use crate::compression::{wc_loss_and_grads, Codebook};
use crate::data::ClientState;
use crate::nn::{self, accuracy, backward_ce, forward, minibatches, ModelWeights};
use crate::rank::client_score;
use crate::seed::{self, Stream};
use crate::{Error, Result};

use super::{centroid_step, TrainConfig};

#[derive(Debug, Clone)]
pub struct ClientUpdate {
    pub client: usize,
    pub weights: ModelWeights,
    /// Present when clustering was requested.
    pub codebook: Option<Codebook>,
    pub score: f64,
    /// Accuracy on the unlabeled set's hidden labels, for reporting only.
    pub validation_accuracy: f64,
    /// Clustering penalty at the end of each epoch after the warm-up.
    pub wc_per_epoch: Vec<f64>,
}

/// Local training on one client.
///
/// With `clusters = Some(C)`, the first `beta_warmup_epochs` epochs minimise
/// cross-entropy alone. The codebook is then seeded by k-means on the current
/// weights and the remaining epochs minimise `L_ce + β·L_wc`, updating both
/// weights and centroids. `seed` drives mini-batch order and k-means seeding
/// through separate streams.
pub fn client_update(
    global: &ModelWeights,
    clusters: Option<usize>,
    client: &ClientState,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<ClientUpdate> {
    let tag = |e: Error| Error::Client {
        client: client.id,
        source: Box::new(e),
    };
    let mut shuffle_rng = seed::rng(seed, Stream::Client, &[0]);
    let mut kmeans_rng = seed::rng(seed, Stream::Client, &[1]);

    let mut theta = global.clone();
    let mut codebook: Option<Codebook> = None;
    let mut wc_per_epoch = Vec::new();
    let labels = client.labeled.labels.as_deref();
    let n = client.labeled.len();

    for epoch in 0..cfg.epochs_client {
        let clustering = clusters.is_some() && epoch >= cfg.beta_warmup_epochs;
        if clustering && codebook.is_none() {
            codebook =
                Some(Codebook::init(&theta, clusters.unwrap_or(1), &mut kmeans_rng).map_err(tag)?);
        }
        for batch in minibatches(n, cfg.batch_size, &mut shuffle_rng) {
            let x = client.labeled.inputs.select_rows(&batch);
            let y: Option<Vec<usize>> = labels.map(|l| batch.iter().map(|&i| l[i]).collect());
            let (_, cache) = forward(&theta, &x).map_err(tag)?;
            let (_, mut grads) = backward_ce(&theta, &cache, y.as_deref()).map_err(tag)?;
            if clustering && cfg.beta_client > 0.0 {
                let cb = codebook.as_mut().expect("codebook initialised");
                let terms = wc_loss_and_grads(&theta, cb).map_err(tag)?;
                grads
                    .axpy(cfg.beta_client, &terms.grad_weights)
                    .map_err(tag)?;
                centroid_step(cb, &terms, cfg.lr_client * cfg.beta_client);
            }
            nn::sgd_step_in_place(&mut theta, &grads, cfg.lr_client).map_err(tag)?;
        }
        if let Some(cb) = codebook.as_ref().filter(|_| clustering) {
            wc_per_epoch.push(wc_loss_and_grads(&theta, cb).map_err(tag)?.loss);
        }
    }

    let score = client_score(&theta, &client.unlabeled).map_err(tag)?;
    let validation_accuracy =
        accuracy(&theta, &client.unlabeled, &client.validation_labels).map_err(tag)?;
    Ok(ClientUpdate {
        client: client.id,
        weights: theta,
        codebook,
        score,
        validation_accuracy,
        wc_per_epoch,
    })
}
