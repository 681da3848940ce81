//! Per-layer activation storage.
//!
//! A feature set on disk is a directory holding a JSON manifest, one tensor
//! file per layer and one labels file. All integers and reals are
//! little-endian.
//!
//! Tensor file:
//!
//! | bytes | content                         |
//! |-------|---------------------------------|
//! | 4     | magic `CHEF`                    |
//! | 4     | u32 version, always 1           |
//! | 4     | u32 rows                        |
//! | 4     | u32 cols                        |
//! | 4·r·c | f32 values, row-major           |
//!
//! Labels file: magic `CHFL`, u32 version 1, u32 count, then `count` u32
//! class indices.
//!
//! Paths inside the manifest are relative to the manifest's directory.
//! Values are stored as `f32` and widened to `f64` on load.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const TENSOR_MAGIC: [u8; 4] = *b"CHEF";
pub const LABELS_MAGIC: [u8; 4] = *b"CHFL";
pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
const HEADER_BYTES: u64 = 16;
const LABELS_HEADER_BYTES: u64 = 12;

/// An ordered list of named matrices sharing a row count.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Layers {
    entries: Vec<(String, Matrix)>,
}

impl Layers {
    pub fn new() -> Self {
        Layers::default()
    }

    /// Appends a layer; rejects duplicate names and mismatched row counts.
    pub fn push(&mut self, id: impl Into<String>, features: Matrix) -> Result<()> {
        let id = id.into();
        if self.entries.iter().any(|(name, _)| *name == id) {
            return Err(Error::Config(format!("duplicate layer id {id:?}")));
        }
        if let Some((first, m)) = self.entries.first() {
            if m.rows() != features.rows() {
                return Err(Error::InvalidData(format!(
                    "layer {id:?} has {} rows but layer {first:?} has {}",
                    features.rows(),
                    m.rows()
                )));
            }
        }
        self.entries.push((id, features));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.entries.iter().map(|(id, _)| id.clone()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.entries.iter().map(|(id, m)| (id.as_str(), m))
    }

    pub fn get(&self, id: &str) -> Result<&Matrix> {
        self.entries
            .iter()
            .find(|(name, _)| name == id)
            .map(|(_, m)| m)
            .ok_or_else(|| Error::UnknownLayer {
                requested: id.to_string(),
                available: self.ids(),
            })
    }

    /// Row count shared by all layers (0 when empty).
    pub fn rows(&self) -> usize {
        self.entries.first().map_or(0, |(_, m)| m.rows())
    }

    /// Restricts every layer to the given rows.
    pub fn select_rows(&self, indices: &[usize]) -> Layers {
        Layers {
            entries: self
                .entries
                .iter()
                .map(|(id, m)| (id.clone(), m.select_rows(indices)))
                .collect(),
        }
    }
}

/// Activations of several backbone layers for one split, plus labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    split_name: String,
    class_names: Vec<String>,
    labels: Vec<usize>,
    layers: Layers,
}

impl FeatureSet {
    /// Validates and assembles a feature set.
    pub fn new(
        split_name: impl Into<String>,
        class_names: Vec<String>,
        labels: Vec<usize>,
        layers: Layers,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidData(
                "a feature set needs at least one layer".into(),
            ));
        }
        if layers.rows() != labels.len() {
            return Err(Error::InvalidData(format!(
                "layers have {} rows but there are {} labels",
                layers.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= class_names.len()) {
            return Err(Error::InvalidData(format!(
                "label {bad} out of range for {} classes",
                class_names.len()
            )));
        }
        for (id, m) in layers.iter() {
            if !m.is_finite() {
                return Err(Error::NonFinite(format!("layer {id:?}")));
            }
        }
        Ok(FeatureSet {
            split_name: split_name.into(),
            class_names,
            labels,
            layers,
        })
    }

    pub fn split_name(&self) -> &str {
        &self.split_name
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample_count(&self) -> usize {
        self.labels.len()
    }

    pub fn layers(&self) -> &Layers {
        &self.layers
    }

    pub fn layer_ids(&self) -> Vec<String> {
        self.layers.ids()
    }

    pub fn layer(&self, id: &str) -> Result<&Matrix> {
        self.layers.get(id)
    }

    /// Sample indices of each class, ascending.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.class_names.len()];
        for (i, &y) in self.labels.iter().enumerate() {
            by_class[y].push(i);
        }
        by_class
    }

    /// The same samples restricted to `layer_ids`, in the order requested.
    pub fn select_layers<S: AsRef<str>>(&self, layer_ids: &[S]) -> Result<FeatureSet> {
        if layer_ids.is_empty() {
            return Err(Error::Config("no layers requested".into()));
        }
        let mut layers = Layers::new();
        for id in layer_ids {
            let id = id.as_ref();
            layers.push(id, self.layers.get(id)?.clone())?;
        }
        Ok(FeatureSet {
            split_name: self.split_name.clone(),
            class_names: self.class_names.clone(),
            labels: self.labels.clone(),
            layers,
        })
    }
}

/// One layer entry of a manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub name: String,
    pub dim: usize,
    pub path: String,
}

/// The JSON document describing a stored feature set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub split_name: String,
    pub class_names: Vec<String>,
    pub sample_count: usize,
    pub layers: Vec<LayerEntry>,
    pub labels_path: String,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Manifest> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|source| Error::Manifest {
            path: path.to_path_buf(),
            source,
        })?;
        if manifest.version != FORMAT_VERSION {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: format!(
                    "unsupported manifest version {} (expected {FORMAT_VERSION})",
                    manifest.version
                ),
            });
        }
        Ok(manifest)
    }
}

fn file_name_for(index: usize, layer: &str) -> String {
    let safe: String = layer
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{index:02}_{safe}.bin")
}

fn to_u32(value: usize, what: &str) -> Result<u32> {
    u32::try_from(value)
        .map_err(|_| Error::InvalidData(format!("{what} {value} exceeds u32 range")))
}

/// Encodes a matrix as a tensor file image.
pub fn encode_tensor(m: &Matrix) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(HEADER_BYTES as usize + 4 * m.rows() * m.cols());
    buf.extend_from_slice(&TENSOR_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&to_u32(m.rows(), "row count")?.to_le_bytes());
    buf.extend_from_slice(&to_u32(m.cols(), "column count")?.to_le_bytes());
    for &v in m.as_slice() {
        let narrow = v as f32;
        if !narrow.is_finite() {
            return Err(Error::NonFinite(format!(
                "tensor value {v} (not representable as f32)"
            )));
        }
        buf.extend_from_slice(&narrow.to_le_bytes());
    }
    Ok(buf)
}

/// Encodes a label vector as a labels file image.
pub fn encode_labels(labels: &[usize]) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(LABELS_HEADER_BYTES as usize + 4 * labels.len());
    buf.extend_from_slice(&LABELS_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&to_u32(labels.len(), "label count")?.to_le_bytes());
    for &y in labels {
        buf.extend_from_slice(&to_u32(y, "label")?.to_le_bytes());
    }
    Ok(buf)
}

fn read_u32(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap())
}

fn check_header(path: &Path, bytes: &[u8], magic: [u8; 4], header_len: u64) -> Result<()> {
    if (bytes.len() as u64) < header_len {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: header_len,
            found: bytes.len() as u64,
        });
    }
    if bytes[..4] != magic {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!(
                "bad magic {:?} (expected {:?})",
                String::from_utf8_lossy(&bytes[..4]),
                String::from_utf8_lossy(&magic)
            ),
        });
    }
    let version = read_u32(bytes, 4);
    if version != FORMAT_VERSION {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("unsupported version {version} (expected {FORMAT_VERSION})"),
        });
    }
    Ok(())
}

fn check_length(path: &Path, found: usize, expected: u64) -> Result<()> {
    let found = found as u64;
    if found < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    if found > expected {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!(
                "{} trailing bytes after {expected} expected",
                found - expected
            ),
        });
    }
    Ok(())
}

/// Decodes a tensor file image; `path` is only used in error messages.
pub fn decode_tensor(path: &Path, bytes: &[u8]) -> Result<Matrix> {
    check_header(path, bytes, TENSOR_MAGIC, HEADER_BYTES)?;
    let rows = read_u32(bytes, 8) as usize;
    let cols = read_u32(bytes, 12) as usize;
    check_length(
        path,
        bytes.len(),
        HEADER_BYTES + 4 * rows as u64 * cols as u64,
    )?;
    let data: Vec<f64> = bytes[HEADER_BYTES as usize..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!(
                "non-finite value at row {}, column {}",
                pos / cols,
                pos % cols
            ),
        });
    }
    Matrix::from_vec(rows, cols, data)
}

/// Decodes a labels file image.
pub fn decode_labels(path: &Path, bytes: &[u8]) -> Result<Vec<usize>> {
    check_header(path, bytes, LABELS_MAGIC, LABELS_HEADER_BYTES)?;
    let count = read_u32(bytes, 8) as usize;
    check_length(path, bytes.len(), LABELS_HEADER_BYTES + 4 * count as u64)?;
    Ok(bytes[LABELS_HEADER_BYTES as usize..]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes `fs` into `dir` (created if missing) and returns the manifest.
pub fn write_feature_set(fs: &FeatureSet, dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut layers = Vec::with_capacity(fs.layers.len());
    for (i, (id, m)) in fs.layers.iter().enumerate() {
        let name = file_name_for(i, id);
        write_file(&dir.join(&name), &encode_tensor(m)?)?;
        layers.push(LayerEntry {
            name: id.to_string(),
            dim: m.cols(),
            path: name,
        });
    }
    let labels_path = "labels.bin".to_string();
    write_file(&dir.join(&labels_path), &encode_labels(&fs.labels)?)?;

    let manifest = Manifest {
        version: FORMAT_VERSION,
        split_name: fs.split_name.clone(),
        class_names: fs.class_names.clone(),
        sample_count: fs.sample_count(),
        layers,
        labels_path,
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    write_file(&dir.join(MANIFEST_FILE), text.as_bytes())?;
    Ok(manifest)
}

/// Accepts either a manifest file or the directory that holds one.
pub fn resolve_manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}

/// Loads and validates the feature set a manifest describes.
pub fn read_feature_set(manifest_path: &Path) -> Result<FeatureSet> {
    let manifest_path = resolve_manifest_path(manifest_path);
    let manifest = Manifest::load(&manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let format_err = |path: &Path, message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };

    let labels_path = base.join(&manifest.labels_path);
    let bytes = fs::read(&labels_path).map_err(|e| Error::io(&labels_path, e))?;
    let labels = decode_labels(&labels_path, &bytes)?;
    if labels.len() != manifest.sample_count {
        return Err(format_err(
            &labels_path,
            format!(
                "{} labels but manifest sample_count is {}",
                labels.len(),
                manifest.sample_count
            ),
        ));
    }
    if let Some((i, &y)) = labels
        .iter()
        .enumerate()
        .find(|(_, &y)| y >= manifest.class_names.len())
    {
        return Err(format_err(
            &labels_path,
            format!(
                "label {y} at sample {i} out of range for {} classes",
                manifest.class_names.len()
            ),
        ));
    }

    let mut seen = HashSet::new();
    let mut layers = Layers::new();
    for entry in &manifest.layers {
        if !seen.insert(entry.name.as_str()) {
            return Err(format_err(
                &manifest_path,
                format!("duplicate layer {:?}", entry.name),
            ));
        }
        let path = base.join(&entry.path);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let m = decode_tensor(&path, &bytes)?;
        if m.rows() != manifest.sample_count {
            return Err(format_err(
                &path,
                format!(
                    "header has {} rows, manifest sample_count is {}",
                    m.rows(),
                    manifest.sample_count
                ),
            ));
        }
        if m.cols() != entry.dim {
            return Err(format_err(
                &path,
                format!(
                    "header dim {} disagrees with manifest dim {} for layer {:?}",
                    m.cols(),
                    entry.dim,
                    entry.name
                ),
            ));
        }
        layers.push(entry.name.clone(), m)?;
    }
    if layers.is_empty() {
        return Err(format_err(
            &manifest_path,
            "manifest lists no layers".into(),
        ));
    }
    FeatureSet::new(manifest.split_name, manifest.class_names, labels, layers)
}
