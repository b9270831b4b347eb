//! The experiment config document (TOML) and what it builds.

use std::path::{Path, PathBuf};

use miolab_core::data_augment::{
    images_to_vectors, load_cifar10_binary, make_vector_dataset, AugmentPolicy, Augmenter,
    LabeledVectors, VectorAugment, VectorDatasetSpec,
};
use miolab_core::eval::ProbeConfig;
use miolab_core::model::ModelSpec;
use miolab_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Relative paths resolve against the config file's directory.
    pub output_dir: PathBuf,
    /// Write a checkpoint every this many epochs; 0 keeps only the final one.
    #[serde(default)]
    pub checkpoint_every: usize,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub augment: AugmentConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub probe: ProbeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Gaussian classes on a simplex; the test split is a fresh draw.
    Vector {
        num_classes: usize,
        samples_per_class: usize,
        ambient_dim: usize,
        class_separation: f64,
        within_class_sigma: f64,
        seed: u64,
        /// Defaults to `samples_per_class`.
        test_samples_per_class: Option<usize>,
        /// Defaults to `seed + 1`.
        test_seed: Option<u64>,
    },
    /// CIFAR-10 binary batches.
    Cifar {
        train_path: PathBuf,
        test_path: PathBuf,
        max_records: Option<usize>,
        test_max_records: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub vector: VectorAugment,
    pub image: AugmentPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder_hidden: Vec<usize>,
    pub feature: usize,
    pub projector_hidden: Vec<usize>,
    pub output: usize,
}

/// A loaded config together with where it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub base_dir: PathBuf,
    /// The document text, hashed into run manifests.
    pub text: String,
}

fn field_error(section: &str, e: impl Into<FieldMessage>) -> CliError {
    CliError::usage(format!("invalid config: {section}.{}", e.into().0))
}

/// A validation message without the error-kind prefix, so it reads as
/// `field: reason`.
struct FieldMessage(String);

impl From<miolab_core::Error> for FieldMessage {
    fn from(e: miolab_core::Error) -> Self {
        match e {
            miolab_core::Error::Domain(m) => FieldMessage(m),
            other => FieldMessage(other.to_string()),
        }
    }
}

impl From<&str> for FieldMessage {
    fn from(m: &str) -> Self {
        FieldMessage(m.to_string())
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| CliError::usage(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Schema checks beyond what deserialization enforces. Messages start
    /// with the dotted path of the offending field.
    pub fn validate(&self) -> CliResult<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::usage(format!(
                "invalid config: schema_version: expected {SCHEMA_VERSION}, got {}",
                self.schema_version
            )));
        }
        match &self.dataset {
            DatasetConfig::Vector {
                test_samples_per_class,
                ..
            } => {
                self.vector_spec(false)
                    .validate()
                    .map_err(|e| field_error("dataset", e))?;
                if *test_samples_per_class == Some(0) {
                    return Err(field_error(
                        "dataset",
                        "test_samples_per_class: must be at least 1",
                    ));
                }
                self.augment
                    .vector
                    .validate()
                    .map_err(|e| field_error("augment.vector", e))?;
            }
            DatasetConfig::Cifar { .. } => {
                self.augment
                    .image
                    .validate()
                    .map_err(|e| field_error("augment.image", e))?;
            }
        }
        let m = &self.model;
        if m.feature == 0
            || m.output == 0
            || m.encoder_hidden.contains(&0)
            || m.projector_hidden.contains(&0)
        {
            return Err(field_error(
                "model",
                "widths: every layer width must be positive",
            ));
        }
        self.train.validate().map_err(|e| field_error("train", e))?;
        self.probe.validate().map_err(|e| field_error("probe", e))?;
        Ok(())
    }

    fn vector_spec(&self, test: bool) -> VectorDatasetSpec {
        match self.dataset {
            DatasetConfig::Vector {
                num_classes,
                samples_per_class,
                ambient_dim,
                class_separation,
                within_class_sigma,
                seed,
                test_samples_per_class,
                test_seed,
            } => VectorDatasetSpec {
                num_classes,
                samples_per_class: if test {
                    test_samples_per_class.unwrap_or(samples_per_class)
                } else {
                    samples_per_class
                },
                ambient_dim,
                class_separation,
                within_class_sigma,
                seed: if test {
                    test_seed.unwrap_or(seed.wrapping_add(1))
                } else {
                    seed
                },
            },
            DatasetConfig::Cifar { .. } => unreachable!("vector_spec on a cifar dataset"),
        }
    }

    /// Train and test splits.
    pub fn datasets(&self, base_dir: &Path) -> CliResult<(LabeledVectors, LabeledVectors)> {
        match &self.dataset {
            DatasetConfig::Vector { .. } => Ok((
                make_vector_dataset(&self.vector_spec(false))?,
                make_vector_dataset(&self.vector_spec(true))?,
            )),
            DatasetConfig::Cifar {
                train_path,
                test_path,
                max_records,
                test_max_records,
            } => {
                let load = |p: &Path, max: Option<usize>| -> CliResult<LabeledVectors> {
                    let path = base_dir.join(p);
                    let images = load_cifar10_binary(&path, max)
                        .map_err(|e| CliError::usage(format!("dataset: {e}")))?;
                    if images.is_empty() {
                        return Err(CliError::usage(format!(
                            "dataset: {} holds no records",
                            path.display()
                        )));
                    }
                    Ok(images_to_vectors(&images)?)
                };
                Ok((
                    load(train_path, *max_records)?,
                    load(test_path, *test_max_records)?,
                ))
            }
        }
    }

    pub fn model_spec(&self, input_dim: usize) -> CliResult<ModelSpec> {
        let m = &self.model;
        ModelSpec::desk(
            input_dim,
            &m.encoder_hidden,
            m.feature,
            &m.projector_hidden,
            m.output,
        )
        .map_err(|e| field_error("model", e))
    }

    pub fn augmenter(&self) -> &dyn Augmenter {
        match self.dataset {
            DatasetConfig::Vector { .. } => &self.augment.vector,
            DatasetConfig::Cifar { .. } => &self.augment.image,
        }
    }
}

impl LoadedConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let config = ExperimentConfig::parse(&text)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self {
            config,
            base_dir,
            text,
        })
    }

    /// The output directory, or `over` when given on the command line.
    pub fn output_dir(&self, over: Option<&Path>) -> PathBuf {
        match over {
            Some(p) => p.to_path_buf(),
            None => self.base_dir.join(&self.config.output_dir),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
output_dir = "out"

[dataset]
kind = "vector"
num_classes = 2
samples_per_class = 8
ambient_dim = 4
class_separation = 3.0
within_class_sigma = 1.0
seed = 1

[model]
encoder_hidden = [8]
feature = 8
projector_hidden = [8]
output = 4
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.train, TrainConfig::default());
        assert_eq!(cfg.augment.vector, VectorAugment::default());
        let (train, test) = cfg.datasets(Path::new(".")).unwrap();
        assert_eq!((train.len(), test.len()), (16, 16));
        assert_ne!(train.features, test.features);
    }

    #[test]
    fn errors_name_the_field() {
        let bad = format!("{MINIMAL}\n[train]\ntau = 0.0\n");
        let err = ExperimentConfig::parse(&bad).unwrap_err().to_string();
        assert!(err.contains("train.tau"), "{err}");

        let bad = format!("{MINIMAL}\n[train]\ntemperature = 0.5\n");
        let err = ExperimentConfig::parse(&bad).unwrap_err().to_string();
        assert!(err.contains("temperature") && err.contains("line"), "{err}");

        let err =
            ExperimentConfig::parse(&MINIMAL.replace("= 1\noutput", "= 2\noutput")).unwrap_err();
        assert!(err.to_string().contains("schema_version"));

        let err =
            ExperimentConfig::parse(&MINIMAL.replace("feature = 8", "feature = 0")).unwrap_err();
        assert!(err.to_string().contains("model."));
    }

    #[test]
    fn unknown_dataset_key_is_rejected() {
        let bad = MINIMAL.replace("seed = 1", "seed = 1\nnoise = 2");
        assert!(ExperimentConfig::parse(&bad).is_err());
    }
}
