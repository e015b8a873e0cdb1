//! On-disk formats: FGRD grids, scene files, report CSV, basis and parameter
//! stores. Every write goes to a temporary file next to the target and is
//! renamed into place.

mod fgrd;
mod report;
mod scene_file;
mod store;

pub use fgrd::{
    decode_grid, encode_complex, encode_real, load_grid, load_real_grid, save_complex_grid, save_real_grid, StoredGrid,
    FGRD_HEADER_LEN, FGRD_MAGIC, FGRD_VERSION,
};
pub use report::{read_report, write_report, ReportRow, REPORT_COLUMNS, REPORT_VERSION_LINE};
pub use scene_file::{OpticsFile, PopulationFile, SceneFile, SpeciesFile};
pub use store::{
    basis_paths, load_basis, load_params, load_training_set, read_trace, save_basis, save_params, save_training_set,
    write_trace, BasisMeta,
};

use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("in-memory JSON serialization");
    v.push(b'\n');
    v
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &to_json_bytes(value))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
