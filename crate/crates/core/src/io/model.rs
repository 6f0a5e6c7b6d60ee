//! Model files: a JSON document with a format header around a trained
//! forest and the configuration it depends on.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ensemble::Forest;
use crate::error::{Error, Result};
use crate::finspace::ReliabilityModel;

pub const MODEL_VERSION: u32 = 1;
const FORMAT: &str = "finid-model";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    /// Stroke quality regressor.
    Quality { forest: Forest },
    /// Fin-space reliability classifier.
    Reliability { model: ReliabilityModel },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub model: ModelKind,
}

pub fn store_model(model: ModelKind, path: &Path) -> Result<()> {
    let file = ModelFile {
        format: FORMAT.into(),
        version: MODEL_VERSION,
        model,
    };
    let mut text = serde_json::to_string(&file).expect("model serializes");
    text.push('\n');
    super::atomic_write(path, text.as_bytes())
}

pub fn load_model(path: &Path) -> Result<ModelKind> {
    let text = std::fs::read_to_string(path)?;
    // Check the header before committing to the full schema so version
    // errors are reported as such.
    #[derive(Deserialize)]
    struct Header {
        format: String,
        version: u32,
    }
    let h: Header = serde_json::from_str(&text).map_err(|e| super::json_error(&text, e))?;
    if h.format != FORMAT {
        return Err(Error::Parse {
            offset: 0,
            message: format!("not a model file (format {:?})", h.format),
        });
    }
    if h.version != MODEL_VERSION {
        return Err(Error::Version {
            found: h.version,
            supported: MODEL_VERSION,
        });
    }
    let f: ModelFile = serde_json::from_str(&text).map_err(|e| super::json_error(&text, e))?;
    Ok(f.model)
}
