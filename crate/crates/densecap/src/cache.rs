//! Binary frame-feature cache.
//!
//! Layout, all little-endian: magic `ZTAF`, `u16` format version, `u32` frame
//! count `L`, `u32` dimension `D`, then `L·D` `f32` values row-major. A JSON
//! sidecar at `<path>.json` records the video id, duration, sampling rate and
//! the scorer that produced the features.

use std::path::{Path, PathBuf};

use densecap_core::math::Matrix;
use serde::{Deserialize, Serialize};

use crate::data_io::{parse_json, read_text, to_json_bytes, write_atomic};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"ZTAF";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheMeta {
    pub video_id: String,
    /// Seconds.
    pub duration: f64,
    /// Frames per second.
    pub sampling_rate: f64,
    pub scorer_id: String,
}

/// An `L × D` block of `f32` features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Option<Self> {
        (rows.checked_mul(cols) == Some(data.len())).then_some(FeatureMatrix { rows, cols, data })
    }

    pub fn from_matrix(m: &Matrix) -> Self {
        FeatureMatrix {
            rows: m.rows(),
            cols: m.cols(),
            data: m.as_slice().iter().map(|&x| x as f32).collect(),
        }
    }

    pub fn to_matrix(&self) -> Matrix {
        let data = self.data.iter().map(|&x| f64::from(x)).collect();
        Matrix::from_vec(self.rows, self.cols, data).expect("consistent shape")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCache {
    pub features: FeatureMatrix,
    pub meta: CacheMeta,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn encode(features: &FeatureMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + features.data.len() * 4);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(features.rows as u32).to_le_bytes());
    out.extend_from_slice(&(features.cols as u32).to_le_bytes());
    for x in &features.data {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

/// Decodes cache bytes; `path` only labels errors.
pub fn decode(path: &Path, bytes: &[u8]) -> Result<FeatureMatrix> {
    if bytes.len() < HEADER_LEN {
        let mut found = [0u8; 4];
        let n = bytes.len().min(4);
        found[..n].copy_from_slice(&bytes[..n]);
        if found != MAGIC {
            return Err(Error::BadMagic {
                path: path.into(),
                found,
            });
        }
        return Err(Error::Truncated {
            path: path.into(),
            expected: HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    let found: [u8; 4] = bytes[0..4].try_into().expect("4 bytes");
    if found != MAGIC {
        return Err(Error::BadMagic {
            path: path.into(),
            found,
        });
    }
    let version = u16::from_le_bytes(bytes[4..6].try_into().expect("2 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::CacheVersion {
            path: path.into(),
            expected: FORMAT_VERSION,
            found: version,
        });
    }
    let rows = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes")) as usize;
    let cols = u32::from_le_bytes(bytes[10..14].try_into().expect("4 bytes")) as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::EmptyCache { path: path.into() });
    }
    let expected = HEADER_LEN as u64 + rows as u64 * cols as u64 * 4;
    if bytes.len() as u64 != expected {
        return Err(Error::Truncated {
            path: path.into(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok(FeatureMatrix { rows, cols, data })
}

pub fn write_feature_cache(path: &Path, cache: &FeatureCache) -> Result<()> {
    if cache.features.rows == 0 {
        return Err(Error::EmptyCache { path: path.into() });
    }
    write_atomic(path, &encode(&cache.features))?;
    write_atomic(&sidecar_path(path), &to_json_bytes(&cache.meta))
}

pub fn read_cache_meta(path: &Path) -> Result<CacheMeta> {
    let side = sidecar_path(path);
    let value = parse_json(&side, &read_text(&side)?)?;
    serde_json::from_value(value).map_err(|e| Error::field(&side, "<root>", e.to_string()))
}

/// How a scorer-id mismatch between cache and run is handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScorerCheck<'a> {
    Skip,
    /// Mismatch is returned as a warning.
    Warn(&'a str),
    /// Mismatch is an error.
    Strict(&'a str),
}

/// Reads a cache and its sidecar. Returns the cache plus any warnings.
pub fn read_feature_cache(path: &Path, check: ScorerCheck<'_>) -> Result<(FeatureCache, Vec<String>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let features = decode(path, &bytes)?;
    let meta = read_cache_meta(path)?;
    let mut warnings = Vec::new();
    let expected = match check {
        ScorerCheck::Skip => None,
        ScorerCheck::Warn(id) | ScorerCheck::Strict(id) => Some(id),
    };
    if let Some(expected) = expected.filter(|id| *id != meta.scorer_id) {
        let err = Error::ScorerMismatch {
            path: path.into(),
            expected: expected.to_string(),
            found: meta.scorer_id.clone(),
        };
        if matches!(check, ScorerCheck::Strict(_)) {
            return Err(err);
        }
        warnings.push(err.to_string());
    }
    Ok((FeatureCache { features, meta }, warnings))
}
