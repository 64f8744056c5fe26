use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_json, write_json, IoError};
use crate::geometry::{DomainSpec, PointCloud, SensorSet};
use crate::oracle::{Material, Resolution};
use crate::training::Sample;

pub const DATASET_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// One labelled geometry as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFile {
    pub schema_version: u32,
    pub id: String,
    /// Seed the cloud was sampled with.
    pub seed: u64,
    pub material: Material,
    pub resolution: Resolution,
    pub cloud: PointCloud,
    pub sensors: SensorSet,
}

impl DatasetFile {
    pub fn into_sample(self) -> Sample {
        Sample::new(self.id, self.cloud, self.sensors)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub spec: DomainSpec,
    /// File name relative to the manifest, absent when generation failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub root_seed: u64,
    pub points: usize,
    pub sensors: usize,
    pub material: Material,
    pub resolution: Resolution,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn succeeded(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(|e| e.file.is_some())
    }

    pub fn failed(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(|e| e.file.is_none())
    }
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<(), IoError> {
    write_json(&dir.join(MANIFEST_FILE), manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, IoError> {
    let path = dir.join(MANIFEST_FILE);
    if !path.exists() {
        return Err(IoError::Missing(vec![path]));
    }
    let manifest: Manifest = read_json(&path)?;
    if manifest.schema_version != DATASET_SCHEMA_VERSION {
        return Err(IoError::Format { path, reason: format!("unsupported schema version {}", manifest.schema_version) });
    }
    Ok(manifest)
}

/// Loads every successful geometry accepted by `keep`, in manifest order.
pub fn load_dataset<F>(dir: &Path, keep: F) -> Result<(Manifest, Vec<Sample>), IoError>
where
    F: Fn(&DomainSpec) -> bool,
{
    let manifest = read_manifest(dir)?;
    let entries: Vec<&ManifestEntry> = manifest.succeeded().filter(|e| keep(&e.spec)).collect();
    let paths: Vec<PathBuf> = entries.iter().filter_map(|e| e.file.as_ref()).map(|f| dir.join(f)).collect();
    let missing: Vec<PathBuf> = paths.iter().filter(|p| !p.exists()).cloned().collect();
    if !missing.is_empty() {
        return Err(IoError::Missing(missing));
    }
    let mut samples = Vec::with_capacity(paths.len());
    for path in &paths {
        let file: DatasetFile = read_json(path)?;
        if file.schema_version != DATASET_SCHEMA_VERSION {
            return Err(IoError::Format {
                path: path.clone(),
                reason: format!("unsupported schema version {}", file.schema_version),
            });
        }
        samples.push(file.into_sample());
    }
    Ok((manifest, samples))
}
