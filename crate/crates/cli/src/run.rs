//! Pre-training and linear-probe runs driven by an experiment config.

use std::fs::File;
use std::path::Path;

use miolab_core::eval::{extract_labeled, linear_probe, ProbeReport};
use miolab_core::model::{init_params, Checkpoint};
use miolab_core::trainer::pretrain;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::{write_manifest, write_text};

pub const METRICS_FILE: &str = "metrics.csv";
pub const MODEL_FILE: &str = "model.json";
pub const SUMMARY_FILE: &str = "final.json";
pub const PROBE_FILE: &str = "probe.csv";
pub const PROBE_TRACE_FILE: &str = "probe_trace.csv";

/// Last-epoch statistics of a pre-training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PretrainSummary {
    pub epochs: usize,
    pub steps: usize,
    pub final_loss: Option<f64>,
    pub pos_sim: Option<f64>,
    pub neg_sim: Option<f64>,
    pub gap: Option<f64>,
}

/// Runs pre-training and writes the manifest, metrics CSV, periodic
/// checkpoints, the final model and a summary into `out_dir`.
pub fn run_pretrain(
    cfg: &ExperimentConfig,
    base_dir: &Path,
    out_dir: &Path,
    config_text: &[u8],
) -> CliResult<(Checkpoint, PretrainSummary)> {
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    write_manifest(
        &out_dir.join("manifest.json"),
        "pretrain",
        config_text,
        cfg.train.seed,
    )?;

    let (train, _) = cfg.datasets(base_dir)?;
    let spec = cfg.model_spec(train.dim())?;
    let metrics_path = out_dir.join(METRICS_FILE);
    let file = File::create(&metrics_path).map_err(|e| CliError::io(&metrics_path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    let ck_dir = out_dir.join("checkpoints");
    let every = cfg.checkpoint_every;

    let outcome = pretrain(&cfg.train, &train, &spec, cfg.augmenter(), |row, state| {
        let io = |e: &dyn std::fmt::Display| {
            miolab_core::Error::Checkpoint(format!("{}: {e}", metrics_path.display()))
        };
        writer.serialize(row).map_err(|e| io(&e))?;
        writer.flush().map_err(|e| io(&e))?;
        if every > 0 && (row.epoch + 1) % every == 0 {
            std::fs::create_dir_all(&ck_dir).map_err(|e| io(&e))?;
            Checkpoint::new(spec.clone(), state.clone(), cfg.train.seed)?
                .save(&ck_dir.join(format!("epoch_{:04}.json", row.epoch + 1)))?;
        }
        Ok(())
    });
    // An empty run still gets a header row.
    if cfg.train.epochs == 0 {
        writer.write_record([
            "epoch", "step", "loss", "pos_sim", "neg_sim", "lr", "seconds",
        ])?;
    }
    writer.flush().map_err(|e| CliError::io(&metrics_path, e))?;
    let outcome = outcome?;

    let last = outcome.metrics.last();
    let summary = PretrainSummary {
        epochs: outcome.metrics.len(),
        steps: last.map_or(0, |r| r.step),
        final_loss: last.map(|r| r.loss),
        pos_sim: last.map(|r| r.pos_sim),
        neg_sim: last.map(|r| r.neg_sim),
        gap: last.map(|r| r.pos_sim - r.neg_sim),
    };
    let ck = Checkpoint::new(spec, outcome.state, cfg.train.seed)?;
    ck.save(&out_dir.join(MODEL_FILE))?;
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_text(&out_dir.join(SUMMARY_FILE), &(text + "\n"))?;
    Ok((ck, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeRow {
    pub encoder: String,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub epochs_run: usize,
    pub best_epoch: usize,
}

#[derive(Serialize)]
struct TraceRow<'a> {
    encoder: &'a str,
    epoch: usize,
    lr: f64,
    train_loss: f64,
    train_accuracy: f64,
    val_accuracy: f64,
}

/// Probes the checkpoint's encoder and, with `baseline`, the untrained
/// encoder the same run started from.
pub fn probe_reports(
    cfg: &ExperimentConfig,
    base_dir: &Path,
    ck: &Checkpoint,
    baseline: bool,
) -> CliResult<Vec<(String, ProbeReport)>> {
    let (train, test) = cfg.datasets(base_dir)?;
    let spec = cfg.model_spec(train.dim())?;
    if ck.spec != spec {
        return Err(CliError::usage(
            "checkpoint does not match the config's model spec",
        ));
    }
    let mut encoders = vec![("trained".to_string(), ck.state.clone())];
    if baseline {
        encoders.push(("random".to_string(), init_params(&spec, ck.seed)?));
    }
    encoders
        .into_iter()
        .map(|(name, state)| {
            let tr = extract_labeled(&state, &spec, &train)?;
            let te = extract_labeled(&state, &spec, &test)?;
            Ok((name, linear_probe(&tr, &te, &cfg.probe)?))
        })
        .collect()
}

pub fn probe_row(name: &str, r: &ProbeReport) -> ProbeRow {
    ProbeRow {
        encoder: name.to_string(),
        train_accuracy: r.train_accuracy,
        val_accuracy: r.val_accuracy,
        test_accuracy: r.test_accuracy,
        epochs_run: r.epochs_run,
        best_epoch: r.best_epoch,
    }
}

pub fn run_probe(
    cfg: &ExperimentConfig,
    base_dir: &Path,
    checkpoint: &Path,
    out_dir: &Path,
    config_text: &[u8],
    baseline: bool,
) -> CliResult<Vec<ProbeRow>> {
    if !checkpoint.is_file() {
        return Err(CliError::usage(format!(
            "checkpoint {} does not exist",
            checkpoint.display()
        )));
    }
    let ck = Checkpoint::load(checkpoint).map_err(|e| CliError::usage(e.to_string()))?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    write_manifest(
        &out_dir.join("probe.manifest.json"),
        "probe",
        config_text,
        cfg.probe.seed,
    )?;

    let reports = probe_reports(cfg, base_dir, &ck, baseline)?;
    let mut rows = csv::Writer::from_path(out_dir.join(PROBE_FILE))?;
    let mut trace = csv::Writer::from_path(out_dir.join(PROBE_TRACE_FILE))?;
    let mut out = Vec::new();
    for (name, r) in &reports {
        let row = probe_row(name, r);
        rows.serialize(&row)?;
        out.push(row);
        for t in &r.trace {
            trace.serialize(TraceRow {
                encoder: name,
                epoch: t.epoch,
                lr: t.lr,
                train_loss: t.train_loss,
                train_accuracy: t.train_accuracy,
                val_accuracy: t.val_accuracy,
            })?;
        }
    }
    rows.flush().map_err(|e| CliError::io(out_dir, e))?;
    trace.flush().map_err(|e| CliError::io(out_dir, e))?;
    Ok(out)
}
