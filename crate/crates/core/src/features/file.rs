//! Binary feature files.
//!
//! Layout (all integers little-endian):
//!
//! | offset    | size     | content                                   |
//! |-----------|----------|-------------------------------------------|
//! | 0         | 8        | magic `BMFEAT01`                          |
//! | 8         | 4        | `u32` M (frames)                          |
//! | 12        | 4        | `u32` K (bands)                           |
//! | 16        | 4        | `u32` value width in bytes (4 or 8)       |
//! | 20        | 4        | `u32` F, fingerprint length in bytes      |
//! | 24        | F        | UTF-8 fingerprint                         |
//! | 24 + F    | M*K*w    | values, row-major, IEEE-754 `f32`/`f64`   |
//!
//! Writers always emit 8-byte values; 4-byte values are widened on read.
//! A JSON sidecar `<file>.json` carries the same header in readable form.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{FeatureConfig, Spectrogram};
use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 8] = b"BMFEAT01";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureHeader {
    pub version: u32,
    pub m: usize,
    pub k: usize,
    pub fingerprint: String,
    pub config: Option<FeatureConfig>,
    pub source_path: Option<String>,
    /// SHA-256 of the audio file the features were computed from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_sha256: Option<String>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn encode_features(spec: &Spectrogram, fingerprint: &str) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + fingerprint.len() + spec.values().len() * 8);
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&(spec.n_frames() as u32).to_le_bytes());
    out.extend_from_slice(&(spec.n_bands() as u32).to_le_bytes());
    out.extend_from_slice(&8u32.to_le_bytes());
    out.extend_from_slice(&(fingerprint.len() as u32).to_le_bytes());
    out.extend_from_slice(fingerprint.as_bytes());
    for v in spec.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_features(bytes: &[u8], path: &Path) -> Result<(Spectrogram, String)> {
    let bad = |reason: &str| Error::format(path, reason);
    let u32_at = |at: usize| -> Result<usize> {
        bytes
            .get(at..at + 4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()) as usize)
            .ok_or_else(|| bad("truncated header"))
    };
    if bytes.len() < 24 || &bytes[..8] != FEATURE_MAGIC {
        return Err(bad("not a feature file (bad magic)"));
    }
    let (m, k, width, f_len) = (u32_at(8)?, u32_at(12)?, u32_at(16)?, u32_at(20)?);
    let fp_end = 24 + f_len;
    let fingerprint = bytes
        .get(24..fp_end)
        .and_then(|b| std::str::from_utf8(b).ok())
        .ok_or_else(|| bad("invalid fingerprint"))?
        .to_owned();
    let body = &bytes[fp_end.min(bytes.len())..];
    if body.len() != m * k * width {
        return Err(bad(&format!(
            "expected {} value bytes, found {}",
            m * k * width,
            body.len()
        )));
    }
    let values = match width {
        8 => body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        4 => body
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect(),
        w => return Err(bad(&format!("unsupported value width {w}"))),
    };
    let spec = Spectrogram::new(values, m, k).map_err(|e| bad(&e.to_string()))?;
    Ok((spec, fingerprint))
}

/// Writes the binary file and its JSON sidecar. Returns the binary bytes written.
pub fn write_feature_file(
    path: impl AsRef<Path>,
    spec: &Spectrogram,
    fingerprint: &str,
    config: Option<&FeatureConfig>,
    source_path: Option<&str>,
) -> Result<Vec<u8>> {
    let header = FeatureHeader {
        version: 1,
        m: spec.n_frames(),
        k: spec.n_bands(),
        fingerprint: fingerprint.to_owned(),
        config: config.cloned(),
        source_path: source_path.map(str::to_owned),
        source_sha256: None,
    };
    write_feature_file_with_header(path, spec, &header)
}

/// Like [`write_feature_file`] with a caller-built sidecar header.
pub fn write_feature_file_with_header(
    path: impl AsRef<Path>,
    spec: &Spectrogram,
    header: &FeatureHeader,
) -> Result<Vec<u8>> {
    let path = path.as_ref();
    if (header.m, header.k) != (spec.n_frames(), spec.n_bands()) {
        return Err(Error::Dimension(format!(
            "header says {}x{}, spectrogram is {}x{}",
            header.m,
            header.k,
            spec.n_frames(),
            spec.n_bands()
        )));
    }
    let bytes = encode_features(spec, &header.fingerprint);
    fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(header).expect("header serializes");
    fs::write(&side, json).map_err(|e| Error::io(&side, e))?;
    Ok(bytes)
}

/// Reads the JSON sidecar of a feature file.
pub fn read_sidecar(path: impl AsRef<Path>) -> Result<FeatureHeader> {
    let side = sidecar_path(path.as_ref());
    let json = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    serde_json::from_str(&json).map_err(|e| Error::format(&side, e.to_string()))
}

/// Reads a binary feature file; returns the spectrogram and its fingerprint.
pub fn read_feature_file(path: impl AsRef<Path>) -> Result<(Spectrogram, String)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes, path)
}
