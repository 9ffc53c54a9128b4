//! Manifest and feature-index CSV files.
//!
//! A manifest lists audio inputs: `path,scene,device,split`.
//! An index lists feature files: `path,scene,device,split,adapted,fingerprint`.
//! Relative paths are resolved against the directory holding the CSV.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use bandmatch::features::read_feature_file;
use bandmatch::{Error, FeatureDataset, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::args::Filter;

pub const SPLITS: [&str; 3] = ["train", "validation", "test"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub scene: String,
    pub device: String,
    pub split: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub path: String,
    pub scene: String,
    pub device: String,
    pub split: String,
    pub adapted: String,
    pub fingerprint: String,
}

/// A parsed index plus the directory its relative paths refer to.
#[derive(Debug, Clone)]
pub struct Index {
    pub base: PathBuf,
    pub entries: Vec<IndexEntry>,
}

fn base_dir(csv_path: &Path) -> PathBuf {
    csv_path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path, header: &[&str]) -> Result<Vec<T>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let found = reader.headers().map_err(|e| Error::format(path, e.to_string()))?;
    if found.iter().collect::<Vec<_>>() != header {
        return Err(Error::Config(format!(
            "{}: expected header `{}`",
            path.display(),
            header.join(",")
        )));
    }
    reader
        .deserialize()
        .map(|row| row.map_err(|e| Error::format(path, e.to_string())))
        .collect()
}

fn check_rows<'a>(path: &Path, rows: impl Iterator<Item = (&'a str, &'a str, &'a str)>) -> Result<()> {
    let mut seen = HashSet::new();
    for (line, (file, scene, split)) in rows.enumerate() {
        let fail = |why: String| Err(Error::Config(format!("{} row {}: {why}", path.display(), line + 2)));
        if file.is_empty() || scene.is_empty() {
            return fail("path and scene must be non-empty".into());
        }
        if !seen.insert(file) {
            return fail(format!("duplicate path '{file}'"));
        }
        if !SPLITS.contains(&split) {
            return fail(format!("split '{split}' is not one of {SPLITS:?}"));
        }
    }
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<(PathBuf, Vec<ManifestEntry>)> {
    let rows: Vec<ManifestEntry> = read_csv(path, &["path", "scene", "device", "split"])?;
    check_rows(
        path,
        rows.iter()
            .map(|r| (r.path.as_str(), r.scene.as_str(), r.split.as_str())),
    )?;
    Ok((base_dir(path), rows))
}

impl Index {
    pub fn read(path: &Path) -> Result<Self> {
        let entries: Vec<IndexEntry> = read_csv(path, &["path", "scene", "device", "split", "adapted", "fingerprint"])?;
        check_rows(
            path,
            entries
                .iter()
                .map(|r| (r.path.as_str(), r.scene.as_str(), r.split.as_str())),
        )?;
        Ok(Self {
            base: base_dir(path),
            entries,
        })
    }

    pub fn resolve(&self, entry: &IndexEntry) -> PathBuf {
        self.base.join(&entry.path)
    }

    pub fn select(&self, filter: &Filter) -> Result<Vec<&IndexEntry>> {
        let picked: Vec<&IndexEntry> = self
            .entries
            .iter()
            .filter(|e| filter.split.as_deref().is_none_or(|s| s == e.split))
            .filter(|e| filter.device.is_empty() || filter.device.contains(&e.device))
            .collect();
        if picked.is_empty() {
            return Err(Error::Config(format!(
                "no index entries match split {:?} and devices {:?}",
                filter.split, filter.device
            )));
        }
        Ok(picked)
    }

    /// Loads the selected feature files into one dataset with device labels.
    /// Every file must carry the fingerprint recorded in the index, and all must agree.
    pub fn load(&self, entries: &[&IndexEntry]) -> Result<FeatureDataset> {
        let fingerprint = &entries
            .first()
            .ok_or_else(|| Error::Config("empty selection".into()))?
            .fingerprint;
        let spectrograms = entries
            .par_iter()
            .map(|e| {
                let path = self.resolve(e);
                let (spec, fp) = read_feature_file(&path)?;
                if fp != e.fingerprint || fp != *fingerprint {
                    return Err(Error::Config(format!(
                        "mixed feature fingerprints: {} is {fp}, expected {fingerprint}",
                        path.display()
                    )));
                }
                Ok(spec)
            })
            .collect::<Result<Vec<_>>>()?;
        FeatureDataset::from_spectrograms(&spectrograms, fingerprint.clone())?
            .with_device_labels(entries.iter().map(|e| e.device.clone()).collect())
    }
}

/// Sorted distinct scene names.
pub fn vocabulary<'a>(entries: impl IntoIterator<Item = &'a IndexEntry>) -> Vec<String> {
    entries
        .into_iter()
        .map(|e| e.scene.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Class index of every entry's scene under `classes`.
pub fn scene_labels(entries: &[&IndexEntry], classes: &[String]) -> Result<Vec<usize>> {
    entries
        .iter()
        .map(|e| {
            classes
                .iter()
                .position(|c| *c == e.scene)
                .ok_or_else(|| Error::Config(format!("scene '{}' ({}) is unknown to the model", e.scene, e.path)))
        })
        .collect()
}

pub fn write_index(path: &Path, entries: &[IndexEntry]) -> Result<bool> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    if entries.is_empty() {
        writer
            .write_record(["path", "scene", "device", "split", "adapted", "fingerprint"])
            .expect("in-memory write");
    }
    for e in entries {
        writer.serialize(e).expect("in-memory write");
    }
    write_if_changed(path, &writer.into_inner().expect("in-memory write"))
}

/// Writes `bytes` unless the file already holds exactly them. Returns whether it wrote.
pub fn write_if_changed(path: &Path, bytes: &[u8]) -> Result<bool> {
    if fs::read(path).is_ok_and(|old| old == bytes) {
        return Ok(false);
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    Ok(true)
}
