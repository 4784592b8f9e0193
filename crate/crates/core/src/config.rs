//! Run configuration: defaults, overridden by a TOML file, overridden by
//! command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{self, Dataset, ImageShape, PixelRange};
use crate::error::{Error, Result};
use crate::network::TrainConfig;
use crate::pipeline::PruneConfig;
use crate::seed::{self, stage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    #[default]
    Synthetic,
    Idx,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub source: DataSource,
    /// IDX image file.
    pub images: Option<PathBuf>,
    /// IDX label file.
    pub labels: Option<PathBuf>,
    /// CSV file (`label, pixels...`).
    pub csv: Option<PathBuf>,
    pub pixel_range: PixelRange,
    /// Image shape for synthetic and CSV data.
    pub shape: ImageShape,
    /// Synthetic sample count (train + held-out).
    pub samples: usize,
    pub classes: usize,
    pub train_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source: DataSource::Synthetic,
            images: None,
            labels: None,
            csv: None,
            pixel_range: PixelRange::Byte,
            shape: ImageShape::new(1, 16, 16),
            samples: 6000,
            classes: 3,
            train_fraction: 5.0 / 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Filters of each conv block.
    pub filters: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            filters: vec![8, 16, 16],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Single source of randomness for the whole run.
    pub seed: u64,
    pub out: PathBuf,
    /// Checkpoint read by `prune` and `compare`; defaults to `<out>/model.json`.
    pub model: Option<PathBuf>,
    pub data: DataConfig,
    pub network: ModelConfig,
    pub train: TrainConfig,
    pub prune: PruneConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: PathBuf::from("runs"),
            model: None,
            data: DataConfig::default(),
            network: ModelConfig::default(),
            train: TrainConfig::default(),
            prune: PruneConfig::default(),
        }
    }
}

impl RunConfig {
    /// Values in `text` replace the defaults key by key, including inside
    /// nested tables.
    pub fn from_toml(text: &str) -> Result<Self> {
        let file: toml::Table = toml::from_str(text).map_err(|e| Error::Parse {
            offset: e.span().map_or(0, |s| s.start),
            message: e.message().to_string(),
        })?;
        let mut merged = toml::Table::try_from(RunConfig::default()).expect("defaults serialize");
        merge(&mut merged, file);
        toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Parse {
                offset: 0,
                message: e.message().to_string(),
            })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn model_path(&self) -> PathBuf {
        self.model.clone().unwrap_or_else(|| self.out.join("model.json"))
    }

    /// Copies the run seed into the train and prune sections.
    pub fn propagate_seed(&mut self) {
        self.train.seed = self.seed;
        self.prune.seed = self.seed;
    }

    /// Checks that the configured data files are named and exist.
    pub fn check_data_paths(&self) -> std::result::Result<(), String> {
        let need = |p: &Option<PathBuf>, what: &str| match p {
            None => Err(format!("--{what} is required for {:?} data", self.data.source)),
            Some(p) if !p.exists() => Err(format!("dataset file {} does not exist", p.display())),
            Some(_) => Ok(()),
        };
        match self.data.source {
            DataSource::Synthetic => Ok(()),
            DataSource::Idx => need(&self.data.images, "images").and(need(&self.data.labels, "labels")),
            DataSource::Csv => need(&self.data.csv, "csv"),
        }
    }

    /// Loads the dataset and splits it into `(train, heldout)`.
    pub fn load_data(&self) -> Result<(Dataset, Dataset)> {
        let d = &self.data;
        let all = match d.source {
            DataSource::Synthetic => data::synthetic(d.samples, d.classes, d.shape, self.seed)?,
            DataSource::Idx => data::load_idx(
                d.images
                    .as_ref()
                    .ok_or_else(|| Error::Parameter("missing IDX image path".into()))?,
                d.labels
                    .as_ref()
                    .ok_or_else(|| Error::Parameter("missing IDX label path".into()))?,
            )?,
            DataSource::Csv => data::load_csv(
                d.csv
                    .as_ref()
                    .ok_or_else(|| Error::Parameter("missing CSV path".into()))?,
                d.shape,
                d.pixel_range,
            )?,
        };
        data::split(&all, d.train_fraction, seed::derive(self.seed, stage::SPLIT, 0))
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}
