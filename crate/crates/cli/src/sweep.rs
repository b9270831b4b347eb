//! One-parameter ablation sweeps: pretrain and probe once per value.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, SCHEMA_VERSION};
use crate::error::{CliError, CliResult};
use crate::manifest::write_manifest;
use crate::run::{probe_reports, run_pretrain};

pub const SWEEP_FILE: &str = "sweep.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Lambda,
    BatchSize,
    Tau,
    BaseLr,
    /// Number of hidden projector layers, each as wide as the first
    /// configured hidden layer (or the feature width when there is none).
    ProjectorHiddenLayers,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Lambda => "lambda",
            SweepParameter::BatchSize => "batch_size",
            SweepParameter::Tau => "tau",
            SweepParameter::BaseLr => "base_lr",
            SweepParameter::ProjectorHiddenLayers => "projector_hidden_layers",
        }
    }

    fn is_count(self) -> bool {
        matches!(
            self,
            SweepParameter::BatchSize | SweepParameter::ProjectorHiddenLayers
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub schema_version: u32,
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    /// Run the configurations concurrently. Every run uses the base
    /// config's seed, so the rows do not depend on the order.
    #[serde(default)]
    pub parallel: bool,
    /// Also probe the untrained encoder and report the margin.
    #[serde(default = "yes")]
    pub baseline: bool,
    pub base: ExperimentConfig,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub index: usize,
    pub parameter: &'static str,
    pub value: f64,
    /// `ok`, `diverged` or `failed`.
    pub status: &'static str,
    pub final_loss: Option<f64>,
    pub pos_sim: Option<f64>,
    pub neg_sim: Option<f64>,
    pub gap: Option<f64>,
    pub probe_accuracy: Option<f64>,
    pub random_probe_accuracy: Option<f64>,
    pub margin: Option<f64>,
    pub error: String,
}

impl SweepSpec {
    pub fn parse(text: &str) -> CliResult<Self> {
        let spec: Self = toml::from_str(text)
            .map_err(|e| CliError::usage(format!("invalid sweep spec: {e}")))?;
        if spec.schema_version != SCHEMA_VERSION {
            return Err(CliError::usage(format!(
                "invalid sweep spec: schema_version: expected {SCHEMA_VERSION}, got {}",
                spec.schema_version
            )));
        }
        if spec.values.is_empty() {
            return Err(CliError::usage(
                "invalid sweep spec: values: must not be empty",
            ));
        }
        spec.base.validate()?;
        for i in 0..spec.values.len() {
            spec.child(i)?;
        }
        Ok(spec)
    }

    /// The base config with value `index` applied, validated.
    pub fn child(&self, index: usize) -> CliResult<ExperimentConfig> {
        let v = self.values[index];
        let name = self.parameter.name();
        if self.parameter.is_count() && !(v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64) {
            return Err(CliError::usage(format!(
                "invalid sweep spec: values[{index}]: {name} needs a whole number, got {v}"
            )));
        }
        let mut cfg = self.base.clone();
        match self.parameter {
            SweepParameter::Lambda => cfg.train.lambda = v,
            SweepParameter::Tau => cfg.train.tau = v,
            SweepParameter::BaseLr => cfg.train.base_lr = v,
            SweepParameter::BatchSize => cfg.train.batch_size = v as usize,
            SweepParameter::ProjectorHiddenLayers => {
                let width = cfg
                    .model
                    .projector_hidden
                    .first()
                    .copied()
                    .unwrap_or(cfg.model.feature);
                cfg.model.projector_hidden = vec![width; v as usize];
            }
        }
        cfg.validate().map_err(|e| {
            CliError::usage(format!(
                "invalid sweep spec: values[{index}] ({name} = {v}): {e}"
            ))
        })?;
        Ok(cfg)
    }
}

fn run_child(spec: &SweepSpec, index: usize, base_dir: &Path, out_dir: &Path) -> SweepRow {
    let mut row = SweepRow {
        index,
        parameter: spec.parameter.name(),
        value: spec.values[index],
        status: "ok",
        final_loss: None,
        pos_sim: None,
        neg_sim: None,
        gap: None,
        probe_accuracy: None,
        random_probe_accuracy: None,
        margin: None,
        error: String::new(),
    };
    let result = (|| -> CliResult<()> {
        let cfg = spec.child(index)?;
        let dir = out_dir.join(format!("run_{index:03}"));
        let text = serde_json::to_vec(&cfg).expect("config serializes");
        let (ck, summary) = run_pretrain(&cfg, base_dir, &dir, &text)?;
        row.final_loss = summary.final_loss;
        row.pos_sim = summary.pos_sim;
        row.neg_sim = summary.neg_sim;
        row.gap = summary.gap;
        let reports = probe_reports(&cfg, base_dir, &ck, spec.baseline)?;
        row.probe_accuracy = Some(reports[0].1.test_accuracy);
        if let Some((_, random)) = reports.get(1) {
            row.random_probe_accuracy = Some(random.test_accuracy);
            row.margin = Some(reports[0].1.test_accuracy - random.test_accuracy);
        }
        Ok(())
    })();
    if let Err(e) = result {
        row.status = if e.exit_code() == 3 {
            "diverged"
        } else {
            "failed"
        };
        row.error = e.to_string();
    }
    row
}

/// Runs every configuration and writes `sweep.csv`; the error lists the
/// failed rows.
pub fn run(spec_path: &Path, out: Option<&Path>) -> CliResult<(Vec<SweepRow>, PathBuf)> {
    let text = std::fs::read_to_string(spec_path).map_err(|e| CliError::io(spec_path, e))?;
    let spec = SweepSpec::parse(&text)
        .map_err(|e| CliError::usage(format!("{}: {e}", spec_path.display())))?;
    let base_dir = spec_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let out_dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| base_dir.join(&spec.base.output_dir));
    std::fs::create_dir_all(&out_dir).map_err(|e| CliError::io(&out_dir, e))?;
    write_manifest(
        &out_dir.join("sweep.manifest.json"),
        "sweep",
        text.as_bytes(),
        spec.base.train.seed,
    )?;

    let rows: Vec<SweepRow> = if spec.parallel {
        (0..spec.values.len())
            .into_par_iter()
            .map(|i| run_child(&spec, i, &base_dir, &out_dir))
            .collect()
    } else {
        (0..spec.values.len())
            .map(|i| run_child(&spec, i, &base_dir, &out_dir))
            .collect()
    };

    let path = out_dir.join(SWEEP_FILE);
    let mut w = csv::Writer::from_path(&path)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;

    let failed: Vec<String> = rows
        .iter()
        .filter(|r| r.status != "ok")
        .map(|r| format!("{} = {}: {}", r.parameter, r.value, r.error))
        .collect();
    if !failed.is_empty() {
        return Err(CliError::check(format!(
            "{} of {} sweep runs failed:\n  {}",
            failed.len(),
            rows.len(),
            failed.join("\n  ")
        )));
    }
    Ok((rows, path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_text(parameter: &str, values: &str) -> String {
        format!(
            r#"
schema_version = 1
parameter = "{parameter}"
values = {values}

[base]
schema_version = 1
output_dir = "out"

[base.dataset]
kind = "vector"
num_classes = 2
samples_per_class = 8
ambient_dim = 4
class_separation = 3.0
within_class_sigma = 1.0
seed = 1

[base.model]
encoder_hidden = [8]
feature = 6
projector_hidden = []
output = 4
"#
        )
    }

    #[test]
    fn values_are_applied() {
        let spec = SweepSpec::parse(&spec_text("projector_hidden_layers", "[0, 2]")).unwrap();
        assert!(spec.child(0).unwrap().model.projector_hidden.is_empty());
        assert_eq!(spec.child(1).unwrap().model.projector_hidden, vec![6, 6]);
        let spec = SweepSpec::parse(&spec_text("batch_size", "[4, 8]")).unwrap();
        assert_eq!(spec.child(1).unwrap().train.batch_size, 8);
        assert!(spec.baseline && !spec.parallel);
    }

    #[test]
    fn bad_specs_are_usage_errors() {
        for (p, v) in [
            ("lambda", "[]"),
            ("tau", "[0.0]"),
            ("batch_size", "[2.5]"),
            ("depth", "[1]"),
        ] {
            let err = SweepSpec::parse(&spec_text(p, v)).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{p} {v}: {err}");
        }
    }
}
