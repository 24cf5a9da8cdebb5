//! Run configuration: a JSON document describing one training/evaluation
//! run, strictly validated (unknown keys are rejected so typos fail loudly).

use imsnn_core::dataio::{FetchOptions, SourceCatalog};
use imsnn_core::{Error, Result, TrainConfig};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Where samples come from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Dataset name in the source catalog.
    pub dataset: String,
    /// Use only the first N training samples.
    pub train_limit: Option<usize>,
    /// Use only the first N test samples.
    pub test_limit: Option<usize>,
    /// Cache root override (also settable via `IMSNN_CACHE_DIR`).
    pub cache_dir: Option<PathBuf>,
    /// Path to an alternative source catalog JSON.
    pub datasets_file: Option<PathBuf>,
    /// Never download; fail on a cold cache.
    pub offline: bool,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            dataset: "mnist".to_string(),
            train_limit: None,
            test_limit: None,
            cache_dir: None,
            datasets_file: None,
            offline: false,
        }
    }
}

/// Top-level run description: training hyperparameters plus data source.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub data: DataSection,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
    }

    pub fn catalog(&self) -> Result<SourceCatalog> {
        match &self.data.datasets_file {
            Some(path) => SourceCatalog::from_path(path),
            None => Ok(SourceCatalog::embedded()),
        }
    }

    pub fn fetch_options(&self) -> FetchOptions {
        FetchOptions {
            cache_dir: self.data.cache_dir.clone(),
            offline: self.data.offline,
            refresh: false,
        }
    }
}
