use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use fedcompress_core::config::{parse_config_from, ModeSelection};
use fedcompress_core::report::{run_modes, RunOptions};
use fedcompress_core::ExperimentConfig;

/// Deterministic federated-learning simulator with bidirectional model compression.
#[derive(Debug, Parser)]
#[command(name = "fedcompress", version)]
struct Args {
    /// TOML config file; keys as printed in summary files without the `config.` prefix.
    #[arg(long)]
    config: Option<PathBuf>,
    /// fedavg | fixed-cluster | fedcompress-no-scs | fedcompress | all
    #[arg(long)]
    mode: Option<ModeSelection>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: the config's `out_dir`, else $FEDCOMPRESS_OUT, else `out`].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of trials; trial t runs with seed + t.
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads for client updates (0 = all CPUs); never changes results.
    #[arg(long)]
    threads: Option<usize>,
    /// Override any config key, e.g. `--set fed.rounds=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Write each mode's final model as `model_<mode>.fcmp`.
    #[arg(long)]
    save_model: bool,
}

fn run(args: Args) -> Result<()> {
    // The environment only changes the default output directory, so a config
    // file or a flag still overrides it.
    let mut base = ExperimentConfig::default();
    if let Some(dir) = std::env::var_os("FEDCOMPRESS_OUT") {
        base.out_dir = PathBuf::from(dir);
    }
    let mut overrides = args.overrides;
    if let Some(m) = args.mode {
        overrides.push(format!("fed.mode={m}"));
    }
    if let Some(s) = args.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(t) = args.trials {
        overrides.push(format!("trials={t}"));
    }
    if let Some(t) = args.threads {
        overrides.push(format!("threads={t}"));
    }
    let mut cfg = parse_config_from(base, args.config.as_deref(), &overrides)
        .context("invalid configuration")?;
    if let Some(out) = args.out {
        cfg.out_dir = out;
    }

    let modes = cfg.fed.mode.modes();
    let rows = run_modes(
        &cfg,
        &modes,
        &cfg.out_dir,
        &RunOptions {
            save_model: args.save_model,
        },
    )
    .with_context(|| {
        format!(
            "run failed; partial outputs are in {}",
            cfg.out_dir.display()
        )
    })?;
    // A closed stdout (e.g. piped into `head`) must not fail a finished run.
    let mut out = std::io::stdout().lock();
    let _ = writeln!(
        out,
        "{:<20} {:>10} {:>9} {:>8} {:>8} {:>16}",
        "mode", "accuracy", "δ-Acc", "CCR", "MCR", "bytes"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<20} {:>10.4} {:>9.2} {:>8.2} {:>8.2} {:>16}",
            r.mode.as_str(),
            r.final_accuracy,
            r.delta_acc,
            r.ccr,
            r.mcr,
            r.cumulative_bytes
        );
    }
    let _ = writeln!(out, "outputs written to {}", cfg.out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
