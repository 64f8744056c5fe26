//! Files: per-geometry dataset JSON, the dataset manifest, binary
//! checkpoints and CSV tables.

mod checkpoint;
mod dataset;
mod tables;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use dataset::{
    load_dataset, read_manifest, write_manifest, DatasetFile, Manifest, ManifestEntry, DATASET_SCHEMA_VERSION,
    MANIFEST_FILE,
};
pub use tables::{
    read_csv, read_history, read_predictions, write_csv, write_error_map, write_history, write_predictions,
    PredictionRow,
};

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("missing inputs: {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    Missing(Vec<PathBuf>),
}

pub(crate) fn file_error(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::File { path: path.to_path_buf(), source }
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`, so
/// readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(file_error(dir))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(file_error(&tmp))?;
    fs::rename(&tmp, path).map_err(file_error(path))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| IoError::Json { path: path.to_path_buf(), source })?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(file_error(path))?;
    serde_json::from_str(&text).map_err(|source| IoError::Json { path: path.to_path_buf(), source })
}
