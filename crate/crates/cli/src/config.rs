//! Run configuration documents.
//!
//! Every section rejects unknown keys. Relative paths are resolved against
//! the directory holding the configuration file.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use selbo::bnn::Method;
use selbo::data::CorruptionSpec;
use selbo::summary::{Partition, SoftHistogramConfig, DEFAULT_FLOOR};
use selbo::train::{CvGrid, ModelSpec, TrainConfig};

use crate::error::CliError;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ModelSpec,
    pub objective: ObjectiveSection,
    pub train: TrainConfig,
    pub output: OutputSection,
    /// Train once per listed seed instead of once with `train.seed`.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    /// Cross-validation grid, used by `cv`.
    #[serde(default)]
    pub grid: Option<CvGrid>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub source: Source,
    #[serde(default)]
    pub imbalance: Option<ImbalanceSpec>,
    /// Applied to the test split only.
    #[serde(default)]
    pub corruption: Option<CorruptionSpec>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Source {
    MnistIdx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        #[serde(default)]
        binary: Option<BinarySpec>,
        #[serde(default)]
        seed: u64,
    },
    Embeddings {
        train: PathBuf,
        #[serde(default)]
        test: Option<PathBuf>,
        #[serde(default)]
        seed: u64,
    },
    Blobs {
        n: usize,
        classes: usize,
        separation: f64,
        std: f64,
        #[serde(default)]
        seed: u64,
    },
    Moons {
        n: usize,
        noise: f64,
        #[serde(default)]
        seed: u64,
    },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinarySpec {
    pub classes: [usize; 2],
    pub size: usize,
    #[serde(default)]
    pub eval_per_class: Option<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImbalanceSpec {
    pub ratios: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSection {
    pub method: Method,
    #[serde(default = "default_mc")]
    pub mc_samples: usize,
    #[serde(default = "default_prior_std")]
    pub prior_std: f64,
    #[serde(default)]
    pub smoothing: f64,
    #[serde(default)]
    pub summary: Option<SummarySection>,
    #[serde(default)]
    pub soft: SoftHistogramConfig,
}

fn default_mc() -> usize {
    4
}

fn default_prior_std() -> f64 {
    1.0
}

/// Either a prior file written by `derive-prior`, or a partition, a base
/// measure and α.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummarySection {
    #[serde(default)]
    pub prior_file: Option<PathBuf>,
    #[serde(default)]
    pub partition: Option<Partition>,
    #[serde(default)]
    pub base: Option<BaseSpec>,
    /// Overrides the file's α when both are given.
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default = "default_floor")]
    pub floor: f64,
}

fn default_floor() -> f64 {
    DEFAULT_FLOOR
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BaseSpec {
    Uniform,
    Beta {
        a: f64,
        b: f64,
    },
    Dirichlet {
        concentration: Vec<f64>,
    },
    /// Per-class weights; the train split's class counts when omitted.
    ClassFractions {
        #[serde(default)]
        fractions: Option<Vec<f64>>,
    },
    /// Beta solved from a minority fraction and an expected accuracy.
    Derived {
        minority_fraction: f64,
        expected_accuracy: f64,
    },
    /// Chosen from the train split's class counts.
    Auto,
    /// Explicit region masses.
    Mass {
        mass: Vec<f64>,
    },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub directory: PathBuf,
}

/// Parses a JSON document of type `T` from `path`.
pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Directory against which relative paths inside `config` resolve.
pub fn base_dir(config: &Path) -> PathBuf {
    config
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// A partition given inline as JSON or as the path of a JSON file.
pub fn partition_arg(arg: &str) -> Result<Partition, CliError> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg)
            .map_err(|e| CliError::Config(format!("cannot read partition {arg}: {e}")))?
    };
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("partition: {e}")))
}
