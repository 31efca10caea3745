//! File helpers shared by trajectory, dataset, checkpoint and report writers.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Version of the on-disk binary + manifest layout.
pub const FORMAT_VERSION: u32 = 1;

pub fn generator_version() -> String {
    format!("ssp-{}", env!("CARGO_PKG_VERSION"))
}

/// Writes to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn encode_f32(values: impl IntoIterator<Item = f32>) -> Vec<u8> {
    values.into_iter().flat_map(f32::to_le_bytes).collect()
}

pub fn decode_f32(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

/// Manifest path next to a binary payload: `x.bin` → `x.json`.
pub fn manifest_path(payload: &Path) -> PathBuf {
    payload.with_extension("json")
}

/// Checks version, length and checksum of a payload against its manifest.
pub fn verify_payload(
    path: &Path,
    bytes: &[u8],
    version: u32,
    expected_len: u64,
    sha256: &str,
) -> Result<()> {
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    if bytes.len() as u64 != expected_len {
        return Err(Error::LengthMismatch {
            path: path.to_path_buf(),
            expected: expected_len,
            found: bytes.len() as u64,
        });
    }
    if sha256_hex(bytes) != sha256 {
        return Err(Error::Checksum {
            path: path.to_path_buf(),
        });
    }
    Ok(())
}

/// Renders one CSV row; floats use the shortest round-trip representation.
pub fn csv_row<I, S>(cells: I) -> String
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut row = cells
        .into_iter()
        .map(|c| c.as_ref().to_string())
        .collect::<Vec<_>>()
        .join(",");
    row.push('\n');
    row
}
