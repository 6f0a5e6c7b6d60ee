//! Persistent formats: contour files, dataset manifests, run
//! configuration, the binary descriptor index, model files and reports.

mod config;
mod contour;
mod index;
mod manifest;
mod model;
mod report;

pub use config::RunConfig;
pub use contour::{ContourFile, ContourRecord, CONTOUR_VERSION};
pub use index::{load_index, read_index, store_index, write_index, INDEX_MAGIC, INDEX_VERSION};
pub use manifest::{read_dataset, write_dataset, Manifest, ManifestEntry, MANIFEST_VERSION};
pub use model::{load_model, store_model, ModelFile, ModelKind, MODEL_VERSION};
pub use report::{bins_csv, pr_csv, ranked_csv};

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidParameter(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::Io(e)
    })
}

/// Byte offset of a 1-based (line, column) position.
pub(crate) fn offset_of(text: &str, line: usize, column: usize) -> usize {
    let start: usize = text
        .split_inclusive('\n')
        .take(line.saturating_sub(1))
        .map(str::len)
        .sum();
    (start + column.saturating_sub(1)).min(text.len())
}

pub(crate) fn json_error(text: &str, e: serde_json::Error) -> Error {
    Error::Parse {
        offset: offset_of(text, e.line(), e.column()),
        message: e.to_string(),
    }
}
