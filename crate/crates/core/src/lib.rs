//! Deterministic federated-learning simulator with bidirectional model
//! compression.
//!
//! Clients train small MLPs with a weight-clustering penalty and upload
//! codebook-encoded models. The server averages them, restores the clustered
//! structure by distilling the aggregate into itself on unlabeled noise, and
//! sends the snapped model back down. The number of clusters grows when the
//! clients' embedding effective rank stops improving.
//!
//! Module map:
//!
//! - [`nn`]: MLP forward/backward, SGD, penultimate embeddings
//! - [`compression`]: k-means codebooks, clustering penalty, snapping, `FCMP` codec
//! - [`distill`]: temperature-scaled KL loss
//! - [`rank`]: singular values and the effective-rank score
//! - [`data`]: synthetic blobs, non-IID partitioning, OOD noise
//! - [`fed`]: client update, aggregation, self-compression, controller, round driver
//! - [`config`] and [`report`]: experiment configuration and output files

pub mod compression;
pub mod config;
pub mod data;
pub mod distill;
mod error;
pub mod fed;
pub mod gradcheck;
pub mod matrix;
pub mod nn;
pub mod rank;
pub mod report;
pub mod seed;
pub mod stats;

pub use compression::{ClusteredModel, Codebook};
pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use fed::{Mode, RoundMetrics, TrainConfig};
pub use matrix::Matrix;
pub use nn::{Batch, ModelWeights};
