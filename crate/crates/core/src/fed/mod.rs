//! Federated training loop: client updates, aggregation, server-side
//! self-compression and the cluster-count controller.

pub mod aggregate;
pub mod client;
pub mod controller;
pub mod runtime;
pub mod server;

use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

pub use aggregate::{fedavg_aggregate, score_aggregate};
pub use client::{client_update, ClientUpdate};
pub use controller::ControllerState;
pub use runtime::{run_experiment, ExperimentRun, ExperimentSummary, RoundMetrics, Simulation};
pub use server::{self_compress, SelfCompressOutcome};

/// Which protocol a run simulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    /// Plain local training, raw `f32` traffic in both directions.
    FedAvg,
    /// Client clustering at a constant cluster count, raw downstream.
    FixedCluster,
    /// Client clustering with the adaptive controller, raw downstream.
    FedCompressNoScs,
    /// Client clustering, adaptive controller and server self-compression.
    FedCompress,
}

impl Mode {
    pub const ALL: [Mode; 4] = [
        Mode::FedAvg,
        Mode::FixedCluster,
        Mode::FedCompressNoScs,
        Mode::FedCompress,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::FedAvg => "fedavg",
            Mode::FixedCluster => "fixed-cluster",
            Mode::FedCompressNoScs => "fedcompress-no-scs",
            Mode::FedCompress => "fedcompress",
        }
    }

    pub fn clusters_clients(self) -> bool {
        self != Mode::FedAvg
    }

    pub fn adaptive(self) -> bool {
        matches!(self, Mode::FedCompressNoScs | Mode::FedCompress)
    }

    pub fn self_compresses(self) -> bool {
        self == Mode::FedCompress
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown mode `{s}`")))
    }
}

/// Optimisation hyperparameters shared by clients and server.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr_client: f64,
    pub lr_server: f64,
    pub epochs_client: usize,
    pub epochs_server: usize,
    pub batch_size: usize,
    pub beta_client: f64,
    pub beta_server: f64,
    /// Leading client epochs trained without the clustering penalty.
    pub beta_warmup_epochs: usize,
    pub temperature: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_client: 0.1,
            lr_server: 0.1,
            epochs_client: 10,
            epochs_server: 10,
            batch_size: 32,
            beta_client: 1.0,
            beta_server: 1.0,
            beta_warmup_epochs: 2,
            temperature: 3.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(name, format!("must be positive, got {v}")))
            }
        };
        let non_negative = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(
                    name,
                    format!("must be non-negative, got {v}"),
                ))
            }
        };
        positive("train.lr_client", self.lr_client)?;
        positive("train.lr_server", self.lr_server)?;
        positive("train.temperature", self.temperature)?;
        non_negative("train.beta_client", self.beta_client)?;
        non_negative("train.beta_server", self.beta_server)?;
        if self.epochs_client == 0 {
            return Err(Error::config("train.epochs_client", "must be at least 1"));
        }
        if self.epochs_server == 0 {
            return Err(Error::config("train.epochs_server", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be at least 1"));
        }
        if self.beta_warmup_epochs >= self.epochs_client {
            return Err(Error::config(
                "train.beta_warmup_epochs",
                format!(
                    "must be below train.epochs_client ({} >= {})",
                    self.beta_warmup_epochs, self.epochs_client
                ),
            ));
        }
        Ok(())
    }
}

/// Applies `−lr·β·∇_μ L_wc` with each centroid's step divided by twice its
/// cluster size, so the update moves a centroid a fraction `lr·β` of the way
/// toward its members' mean regardless of how many weights it holds.
pub(crate) fn centroid_step(
    codebook: &mut crate::compression::Codebook,
    terms: &crate::compression::WcTerms,
    lr_beta: f64,
) {
    for ((mu, g), sizes) in codebook
        .layers_mut()
        .iter_mut()
        .zip(&terms.grad_centroids)
        .zip(&terms.cluster_sizes)
    {
        for ((m, &gj), &nj) in mu.iter_mut().zip(g).zip(sizes) {
            if nj > 0 {
                *m -= lr_beta * gj / (2.0 * nj as f64);
            }
        }
    }
}
