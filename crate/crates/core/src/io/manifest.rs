//! Dataset manifests: a JSON document listing every contour file with its
//! ground-truth individual, role and perturbation.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::contour::{ContourFile, ContourRecord};
use crate::encode::Role;
use crate::error::{Error, Result};
use crate::synth::{Dataset, DatasetEntry, PerturbationConfig};

pub const MANIFEST_VERSION: u32 = 1;
const FORMAT: &str = "finid-manifest";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub name: String,
    /// Contour file path relative to the manifest.
    pub file: String,
    pub class: u32,
    pub role: Role,
    pub perturbation: PerturbationConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(text).map_err(|e| super::json_error(text, e))?;
        if m.format != FORMAT {
            return Err(Error::Parse {
                offset: 0,
                message: format!("not a manifest (format {:?})", m.format),
            });
        }
        if m.version != MANIFEST_VERSION {
            return Err(Error::Version {
                found: m.version,
                supported: MANIFEST_VERSION,
            });
        }
        Ok(m)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }
}

/// Writes `manifest.json` and one contour file per entry under `dir`.
pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<Manifest> {
    fs::create_dir_all(dir.join("contours"))?;
    let mut entries = Vec::with_capacity(dataset.entries.len());
    for e in &dataset.entries {
        let file = format!("contours/{}.contour", e.name);
        ContourFile::new(vec![ContourRecord::from_fin(
            &e.name,
            &e.fin,
            Some(e.class),
        )])
        .write(&dir.join(&file))?;
        entries.push(ManifestEntry {
            name: e.name.clone(),
            file,
            class: e.class,
            role: e.role,
            perturbation: e.perturbation,
        });
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        version: MANIFEST_VERSION,
        seed: dataset.seed,
        entries,
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    super::atomic_write(&dir.join("manifest.json"), text.as_bytes())?;
    Ok(manifest)
}

/// Loads a dataset from its manifest path.
pub fn read_dataset(manifest_path: &Path) -> Result<Dataset> {
    let manifest = Manifest::read(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let entries = manifest
        .entries
        .iter()
        .map(|e| {
            let file = ContourFile::read(&base.join(&e.file))?;
            let rec = file
                .curves
                .iter()
                .find(|c| c.name == e.name)
                .ok_or_else(|| {
                    Error::InvalidParameter(format!("{} has no curve named {}", e.file, e.name))
                })?;
            Ok(DatasetEntry {
                name: e.name.clone(),
                class: e.class,
                role: e.role,
                perturbation: e.perturbation,
                fin: rec.to_fin()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        seed: manifest.seed,
        entries,
    })
}
