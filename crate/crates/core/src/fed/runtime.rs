//! Round driver.
//!
//! Traffic accounting per round `i` with `K` participants:
//!
//! - downstream: the current global model sent to each participant, either as
//!   raw `f32` (4 bytes per parameter) or as its `FCMP` encoding when the server
//!   holds a snapped model;
//! - upstream: each participant's update, raw or `FCMP`-encoded.
//!
//! Whatever is counted is exactly what the receiver decodes.

use std::time::Instant;

use rand::seq::index;
use rayon::prelude::*;

use crate::compression::{self, decode, encode, snap};
use crate::config::ExperimentConfig;
use crate::data::{self, ClientState, PartitionSpec};
use crate::matrix::Matrix;
use crate::nn::{accuracy, ModelWeights};
use crate::seed::{self, Stream};
use crate::stats::spearman;
use crate::{Error, Result};

use super::{
    client_update, fedavg_aggregate, score_aggregate, self_compress, ControllerState, Mode,
};

#[derive(Debug, Clone, PartialEq)]
pub struct RoundMetrics {
    pub round: usize,
    /// Cluster count used this round; 0 when clients do not cluster.
    pub clusters: usize,
    /// Test accuracy of the global model at the end of the round.
    pub test_accuracy: f64,
    /// Mean accuracy of participants' local models on their unlabeled sets.
    pub validation_accuracy: f64,
    /// Sample-weighted mean of participants' representation scores.
    pub score: f64,
    pub upstream_bytes: u64,
    pub downstream_bytes: u64,
    pub cumulative_bytes: u64,
    /// Cumulative FedAvg traffic divided by this run's cumulative traffic.
    pub ccr: f64,
    pub mcr: f64,
    /// Self-compression diagnostics, present in `fedcompress` mode.
    pub scs: Option<ScsMetrics>,
    /// Not written to any output file.
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScsMetrics {
    pub wc_entry: f64,
    pub wc_exit: f64,
    pub pre_snap_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSummary {
    pub mode: Mode,
    pub seed: u64,
    pub rounds: usize,
    pub param_count: usize,
    pub final_test_accuracy: f64,
    pub final_validation_accuracy: f64,
    pub final_clusters: usize,
    pub upstream_bytes: u64,
    pub downstream_bytes: u64,
    pub cumulative_bytes: u64,
    pub fedavg_cumulative_bytes: u64,
    pub ccr: f64,
    pub mcr: f64,
    pub score_accuracy_spearman: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub metrics: Vec<RoundMetrics>,
    pub summary: ExperimentSummary,
    pub final_model: ModelWeights,
}

/// Mutable server-side state of one run.
pub struct Simulation {
    cfg: ExperimentConfig,
    mode: Mode,
    seed: u64,
    clients: Vec<ClientState>,
    test_inputs: Matrix,
    test_labels: Vec<usize>,
    ood: Matrix,
    global: ModelWeights,
    /// Encoded size of `global` when the server holds it in snapped form.
    global_encoded: Option<usize>,
    controller: Option<ControllerState>,
    round: usize,
    cumulative: u64,
    pool: rayon::ThreadPool,
}

impl Simulation {
    pub fn new(cfg: &ExperimentConfig, mode: Mode, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let dataset = match &cfg.data.path {
            Some(path) => data::load_csv(path)?,
            None => data::make_blobs(
                cfg.data.classes,
                cfg.data.dim,
                cfg.data.samples,
                cfg.data.spread,
                seed::derive(seed, Stream::Data, &[]),
            )?,
        };
        let (train, test) = dataset.split(
            cfg.data.test_fraction,
            &mut seed::rng(seed, Stream::Split, &[]),
        )?;
        let clients = data::partition(
            &train,
            &PartitionSpec {
                clients: cfg.fed.clients,
                size_cv: cfg.partition.size_cv,
                label_alpha: cfg.partition.label_alpha,
                unlabeled_fraction: cfg.partition.unlabeled_fraction,
                seed: seed::derive(seed, Stream::Partition, &[]),
            },
        )?;
        let ood = data::make_ood(
            train.dim(),
            cfg.data.ood_samples,
            train.coordinate_range(),
            seed::derive(seed, Stream::Ood, &[]),
        )?
        .inputs;

        let mut dims = vec![train.dim()];
        dims.extend(&cfg.model.hidden);
        dims.push(dataset.classes);
        let global = ModelWeights::init_mlp(&dims, &mut seed::rng(seed, Stream::Init, &[]))?
            .to_f32_precision();

        let c = &cfg.controller;
        let controller = match mode {
            Mode::FedAvg => None,
            Mode::FixedCluster => Some(ControllerState::new(
                c.fixed_clusters,
                c.fixed_clusters,
                c.window,
                c.patience,
                c.tolerance,
            )?),
            Mode::FedCompressNoScs | Mode::FedCompress => Some(ControllerState::new(
                c.c_min,
                c.c_max,
                c.window,
                c.patience,
                c.tolerance,
            )?),
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;

        Ok(Self {
            cfg: cfg.clone(),
            mode,
            seed,
            clients,
            test_inputs: test.inputs,
            test_labels: test.labels,
            ood,
            global,
            global_encoded: None,
            controller,
            round: 0,
            cumulative: 0,
            pool,
        })
    }

    pub fn global(&self) -> &ModelWeights {
        &self.global
    }

    pub fn clients(&self) -> &[ClientState] {
        &self.clients
    }

    pub fn ood(&self) -> &Matrix {
        &self.ood
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn controller(&self) -> Option<&ControllerState> {
        self.controller.as_ref()
    }

    pub fn test_accuracy(&self, model: &ModelWeights) -> Result<f64> {
        if self.test_labels.is_empty() {
            return Ok(0.0);
        }
        accuracy(model, &self.test_inputs, &self.test_labels)
    }

    fn raw_bytes(&self) -> u64 {
        4 * self.global.param_count() as u64
    }

    /// Participants of the upcoming round, ascending by client id.
    pub fn participants(&self, round: usize) -> Vec<usize> {
        let mut rng = seed::rng(self.seed, Stream::Participation, &[round as u64]);
        let mut chosen =
            index::sample(&mut rng, self.cfg.fed.clients, self.cfg.fed.participants).into_vec();
        chosen.sort_unstable();
        chosen
    }

    pub fn run_round(&mut self) -> Result<RoundMetrics> {
        let started = Instant::now();
        self.round += 1;
        let round = self.round;
        let participants = self.participants(round);
        let k = participants.len() as u64;
        let downstream = k * self.global_encoded.map_or(self.raw_bytes(), |b| b as u64);

        let clusters = self.controller.as_ref().map(ControllerState::clusters);
        let request = clusters.filter(|_| self.mode.clusters_clients());
        let global = &self.global;
        let train = &self.cfg.train;
        let seed = self.seed;
        let clients = &self.clients;
        let updates = self.pool.install(|| {
            participants
                .par_iter()
                .map(|&id| {
                    let s = seed::derive(seed, Stream::Client, &[round as u64, id as u64]);
                    client_update(global, request, &clients[id], train, s)
                })
                .collect::<Result<Vec<_>>>()
        })?;

        let mut upstream = 0u64;
        let mut received = Vec::with_capacity(updates.len());
        for u in &updates {
            let w = match &u.codebook {
                Some(cb) => {
                    let bytes = encode(&snap(&u.weights, cb)?);
                    upstream += bytes.len() as u64;
                    decode(&bytes)?.to_weights()?
                }
                None => {
                    upstream += self.raw_bytes();
                    u.weights.to_f32_precision()
                }
            };
            received.push((w, self.clients[u.client].sample_count()));
        }
        let weighted: Vec<(&ModelWeights, usize)> = received.iter().map(|(w, n)| (w, *n)).collect();
        let aggregated = fedavg_aggregate(&weighted)?;
        let score = score_aggregate(
            &updates
                .iter()
                .map(|u| (u.score, self.clients[u.client].sample_count()))
                .collect::<Vec<_>>(),
        )?;
        let validation_accuracy =
            updates.iter().map(|u| u.validation_accuracy).sum::<f64>() / updates.len() as f64;

        let mut scs = None;
        if self.mode.self_compresses() {
            let c = clusters.expect("fedcompress keeps a controller");
            let s = seed::derive(seed, Stream::Server, &[round as u64]);
            let out = self_compress(&aggregated, c, &self.ood, train, s)?;
            let pre_snap_accuracy = self.test_accuracy(&out.weights)?;
            let bytes = encode(&snap(&out.weights, &out.codebook)?);
            self.global = decode(&bytes)?.to_weights()?;
            self.global_encoded = Some(bytes.len());
            scs = Some(ScsMetrics {
                wc_entry: out.wc_entry,
                wc_exit: out.wc_exit,
                pre_snap_accuracy,
            });
        } else {
            self.global = aggregated.to_f32_precision();
            self.global_encoded = None;
        }

        if self.mode.adaptive() {
            if let Some(ctrl) = self.controller.as_mut() {
                ctrl.update(score);
            }
        }

        let test_accuracy = self.test_accuracy(&self.global)?;
        self.cumulative += upstream + downstream;
        let fedavg_cumulative = round as u64 * 2 * k * self.raw_bytes();
        let mcr = match clusters.filter(|_| self.mode.clusters_clients()) {
            Some(c) => compression::model_compression_ratio(&self.global, c),
            None => 1.0,
        };
        Ok(RoundMetrics {
            round,
            clusters: request.unwrap_or(0),
            test_accuracy,
            validation_accuracy,
            score,
            upstream_bytes: upstream,
            downstream_bytes: downstream,
            cumulative_bytes: self.cumulative,
            ccr: fedavg_cumulative as f64 / self.cumulative as f64,
            mcr,
            scs,
            wall_clock_secs: started.elapsed().as_secs_f64(),
        })
    }

    pub fn summarize(&self, metrics: &[RoundMetrics]) -> Result<ExperimentSummary> {
        let last = metrics
            .last()
            .ok_or_else(|| Error::InvalidInput("no rounds were run".into()))?;
        let scores: Vec<f64> = metrics.iter().map(|m| m.score).collect();
        let accs: Vec<f64> = metrics.iter().map(|m| m.validation_accuracy).collect();
        let k = self.cfg.fed.participants as u64;
        Ok(ExperimentSummary {
            mode: self.mode,
            seed: self.seed,
            rounds: metrics.len(),
            param_count: self.global.param_count(),
            final_test_accuracy: last.test_accuracy,
            final_validation_accuracy: last.validation_accuracy,
            final_clusters: last.clusters,
            upstream_bytes: metrics.iter().map(|m| m.upstream_bytes).sum(),
            downstream_bytes: metrics.iter().map(|m| m.downstream_bytes).sum(),
            cumulative_bytes: last.cumulative_bytes,
            fedavg_cumulative_bytes: metrics.len() as u64 * 2 * k * self.raw_bytes(),
            ccr: last.ccr,
            mcr: last.mcr,
            score_accuracy_spearman: spearman(&scores, &accs),
        })
    }
}

/// Runs every round, handing each round's metrics to `sink` as soon as it completes.
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    mode: Mode,
    seed: u64,
    sink: &mut dyn FnMut(&RoundMetrics) -> Result<()>,
) -> Result<ExperimentRun> {
    let mut sim = Simulation::new(cfg, mode, seed)?;
    let mut metrics = Vec::with_capacity(cfg.fed.rounds);
    for _ in 0..cfg.fed.rounds {
        let m = sim.run_round()?;
        sink(&m)?;
        metrics.push(m);
    }
    let summary = sim.summarize(&metrics)?;
    Ok(ExperimentRun {
        metrics,
        summary,
        final_model: sim.global,
    })
}

pub fn run_experiment(cfg: &ExperimentConfig, mode: Mode, seed: u64) -> Result<ExperimentRun> {
    run_experiment_with(cfg, mode, seed, &mut |_| Ok(()))
}
