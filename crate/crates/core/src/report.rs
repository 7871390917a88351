//! Output files: per-round metrics CSVs, key-value summaries and the
//! cross-mode comparison table.
//!
//! Wall-clock time is deliberately left out of every file so that two runs
//! with the same seed produce byte-identical outputs.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::compression::{encode, snap, Codebook};
use crate::config::{ExperimentConfig, EXECUTION_KEYS};
use crate::fed::runtime::{run_experiment_with, ExperimentRun, ExperimentSummary};
use crate::fed::{Mode, RoundMetrics};
use crate::seed::{self, Stream};
use crate::Result;

pub const METRICS_VERSION_LINE: &str = "# fedcompress metrics v1";

pub const METRICS_COLUMNS: [&str; 13] = [
    "round",
    "clusters",
    "test_accuracy",
    "val_accuracy",
    "score",
    "upstream_bytes",
    "downstream_bytes",
    "cumulative_bytes",
    "ccr",
    "mcr",
    "scs_wc_entry",
    "scs_wc_exit",
    "pre_snap_accuracy",
];

pub const COMPARISON_COLUMNS: [&str; 6] = [
    "mode",
    "final_accuracy",
    "delta_acc",
    "ccr",
    "mcr",
    "cumulative_bytes",
];

fn real(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:.6}")
    }
}

pub fn metrics_row(m: &RoundMetrics) -> String {
    let (entry, exit, pre) = m.scs.map_or((f64::NAN, f64::NAN, f64::NAN), |s| {
        (s.wc_entry, s.wc_exit, s.pre_snap_accuracy)
    });
    [
        m.round.to_string(),
        m.clusters.to_string(),
        real(m.test_accuracy),
        real(m.validation_accuracy),
        real(m.score),
        m.upstream_bytes.to_string(),
        m.downstream_bytes.to_string(),
        m.cumulative_bytes.to_string(),
        real(m.ccr),
        real(m.mcr),
        format!("{entry:e}"),
        format!("{exit:e}"),
        real(pre),
    ]
    .join(",")
}

/// Appends one row per round and flushes it, so an interrupted run keeps
/// everything completed so far.
pub struct MetricsWriter {
    out: BufWriter<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{METRICS_VERSION_LINE}")?;
        writeln!(out, "{}", METRICS_COLUMNS.join(","))?;
        out.flush()?;
        Ok(Self { out })
    }

    pub fn write(&mut self, m: &RoundMetrics) -> Result<()> {
        writeln!(self.out, "{}", metrics_row(m))?;
        self.out.flush()?;
        Ok(())
    }
}

pub fn summary_text(s: &ExperimentSummary, cfg: &ExperimentConfig) -> String {
    let mut out = String::new();
    let mut kv = |k: &str, v: String| out.push_str(&format!("{k}={v}\n"));
    kv("mode", s.mode.to_string());
    kv("seed", s.seed.to_string());
    kv("rounds", s.rounds.to_string());
    kv("param_count", s.param_count.to_string());
    kv("final_test_accuracy", real(s.final_test_accuracy));
    kv("final_val_accuracy", real(s.final_validation_accuracy));
    kv("final_clusters", s.final_clusters.to_string());
    kv("upstream_bytes", s.upstream_bytes.to_string());
    kv("downstream_bytes", s.downstream_bytes.to_string());
    kv("cumulative_bytes", s.cumulative_bytes.to_string());
    kv(
        "fedavg_cumulative_bytes",
        s.fedavg_cumulative_bytes.to_string(),
    );
    kv("ccr", real(s.ccr));
    kv("mcr", real(s.mcr));
    kv("score_accuracy_spearman", real(s.score_accuracy_spearman));
    // Execution-only keys are left out so that outputs do not depend on where
    // or how many threads the run used.
    for (k, v) in cfg
        .echo()
        .into_iter()
        .filter(|(k, _)| !EXECUTION_KEYS.contains(k))
    {
        kv(&format!("config.{k}"), v);
    }
    out
}

/// One row of the comparison table, averaged over trials.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub mode: Mode,
    pub final_accuracy: f64,
    /// Accuracy difference to fedavg, in percentage points.
    pub delta_acc: f64,
    pub ccr: f64,
    pub mcr: f64,
    pub cumulative_bytes: u64,
}

/// Builds the comparison table from per-mode trial summaries.
///
/// Accuracy and MCR are trial means; CCR is the ratio of fedavg traffic to the
/// mode's traffic, both summed over trials; bytes are the per-trial mean.
pub fn comparison(results: &[(Mode, Vec<ExperimentSummary>)]) -> Vec<ComparisonRow> {
    let mean = |xs: &[ExperimentSummary], f: &dyn Fn(&ExperimentSummary) -> f64| {
        xs.iter().map(f).sum::<f64>() / xs.len() as f64
    };
    let baseline_acc = results
        .iter()
        .find(|(m, _)| *m == Mode::FedAvg)
        .map(|(_, s)| mean(s, &|x| x.final_test_accuracy));
    results
        .iter()
        .filter(|(_, s)| !s.is_empty())
        .map(|(mode, s)| {
            let acc = mean(s, &|x| x.final_test_accuracy);
            let bytes: u64 = s.iter().map(|x| x.cumulative_bytes).sum();
            let fedavg: u64 = s.iter().map(|x| x.fedavg_cumulative_bytes).sum();
            ComparisonRow {
                mode: *mode,
                final_accuracy: acc,
                delta_acc: baseline_acc.map_or(f64::NAN, |b| 100.0 * (acc - b)),
                ccr: fedavg as f64 / bytes as f64,
                mcr: mean(s, &|x| x.mcr),
                cumulative_bytes: bytes / s.len() as u64,
            }
        })
        .collect()
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = format!("{METRICS_VERSION_LINE}\n{}\n", COMPARISON_COLUMNS.join(","));
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.4},{:.4},{}\n",
            r.mode,
            real(r.final_accuracy),
            if r.delta_acc.is_nan() {
                "NaN".to_string()
            } else {
                format!("{:.2}", r.delta_acc)
            },
            r.ccr,
            r.mcr,
            r.cumulative_bytes
        ));
    }
    out
}

/// `FCMP` bytes for a run's final model.
///
/// A model already restricted to few values per layer (the snapped
/// `fedcompress` global) is encoded exactly; any other model is clustered with
/// k-means at the run's final cluster count, or `controller.c_max` when the
/// mode never clustered.
pub fn final_model_bytes(run: &ExperimentRun, cfg: &ExperimentConfig) -> Result<Vec<u8>> {
    let clusters = match run.summary.final_clusters {
        0 => cfg.controller.c_max,
        c => c,
    };
    let mut rng = seed::rng(run.summary.seed, Stream::Server, &[u64::MAX]);
    let codebook = Codebook::init(&run.final_model, clusters, &mut rng)?;
    Ok(encode(&snap(&run.final_model, &codebook)?))
}

fn suffix(trial: usize, trials: usize) -> String {
    if trials > 1 {
        format!("_trial{trial}")
    } else {
        String::new()
    }
}

pub fn metrics_path(out_dir: &Path, mode: Mode, trial: usize, trials: usize) -> PathBuf {
    out_dir.join(format!("metrics_{mode}{}.csv", suffix(trial, trials)))
}

pub fn summary_path(out_dir: &Path, mode: Mode, trial: usize, trials: usize) -> PathBuf {
    out_dir.join(format!("summary_{mode}{}.txt", suffix(trial, trials)))
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Also write `model_<mode>.fcmp` for each mode's last trial.
    pub save_model: bool,
}

/// Runs `cfg.trials` trials (seed offsets 0, 1, ...) of every mode and writes
/// all output files into `out_dir`. `comparison.csv` is written when more
/// than one mode runs.
pub fn run_modes(
    cfg: &ExperimentConfig,
    modes: &[Mode],
    out_dir: &Path,
    opts: &RunOptions,
) -> Result<Vec<ComparisonRow>> {
    fs::create_dir_all(out_dir)?;
    let mut results = Vec::with_capacity(modes.len());
    for &mode in modes {
        let mut summaries = Vec::with_capacity(cfg.trials);
        for trial in 0..cfg.trials {
            let seed = cfg.seed.wrapping_add(trial as u64);
            let mut writer =
                MetricsWriter::create(&metrics_path(out_dir, mode, trial, cfg.trials))?;
            let run = run_experiment_with(cfg, mode, seed, &mut |m| writer.write(m))?;
            fs::write(
                summary_path(out_dir, mode, trial, cfg.trials),
                summary_text(&run.summary, cfg),
            )?;
            if opts.save_model && trial + 1 == cfg.trials {
                fs::write(
                    out_dir.join(format!("model_{mode}.fcmp")),
                    final_model_bytes(&run, cfg)?,
                )?;
            }
            summaries.push(run.summary);
        }
        results.push((mode, summaries));
    }
    let rows = comparison(&results);
    if modes.len() > 1 {
        fs::write(out_dir.join("comparison.csv"), comparison_csv(&rows))?;
    }
    Ok(rows)
}
