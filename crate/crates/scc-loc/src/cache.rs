//! Sidecar cache of database GeM descriptors keyed by feature-file hash.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use scc_loc_core::retrieval::{
    gem_pool_unnormalized, FeatureMap, GlobalDescriptor, RetrievalConfig, RetrievalError,
};

use crate::formats;

pub const CACHE_FILE: &str = "descriptors.cache.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Entry {
    sha256: String,
    psi: f64,
    eps_min: f64,
    /// Pooled vector before normalization, so a cache hit rebuilds the
    /// descriptor bit-for-bit.
    pooled: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
struct CacheFile {
    entries: BTreeMap<String, Entry>,
}

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error(transparent)]
    Format(#[from] formats::FormatError),
    #[error("{0}: {1}")]
    Retrieval(String, RetrievalError),
}

/// Descriptors for a list of feature files, reusing cached entries whose
/// content hash and pooling parameters still match.
#[derive(Debug)]
pub struct DescriptorCache {
    path: PathBuf,
    file: CacheFile,
    dirty: bool,
    pub hits: usize,
    pub misses: usize,
}

impl DescriptorCache {
    /// Opens `dir/descriptors.cache.json`; a missing or unreadable cache
    /// starts empty.
    pub fn open(dir: &Path) -> Self {
        let path = dir.join(CACHE_FILE);
        let file = std::fs::read_to_string(&path)
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok())
            .unwrap_or_default();
        Self {
            path,
            file,
            dirty: false,
            hits: 0,
            misses: 0,
        }
    }

    /// Loads `path`, returning its feature map and descriptor.
    pub fn load(
        &mut self,
        key: &str,
        path: &Path,
        cfg: &RetrievalConfig,
    ) -> Result<(FeatureMap, GlobalDescriptor), CacheError> {
        let bytes = std::fs::read(path).map_err(|source| formats::FormatError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let map = formats::decode_features(&bytes)?;
        let sha = format!("{:x}", Sha256::digest(&bytes));
        if let Some(e) = self.file.entries.get(key) {
            if e.sha256 == sha && e.psi == cfg.psi && e.eps_min == cfg.eps_min {
                if let Ok(d) = GlobalDescriptor::from_unnormalized(e.pooled.clone()) {
                    if d.dim() == map.d() {
                        self.hits += 1;
                        return Ok((map, d));
                    }
                }
            }
        }
        self.misses += 1;
        let pooled = gem_pool_unnormalized(&map, cfg.psi, cfg.eps_min);
        let d = GlobalDescriptor::from_unnormalized(pooled.clone())
            .map_err(|e| CacheError::Retrieval(key.to_string(), e))?;
        self.file.entries.insert(
            key.to_string(),
            Entry {
                sha256: sha,
                psi: cfg.psi,
                eps_min: cfg.eps_min,
                pooled,
            },
        );
        self.dirty = true;
        Ok((map, d))
    }

    /// Writes the cache back if it changed. Failures are ignored: the cache
    /// is an optimization only.
    pub fn save(&mut self) {
        if !self.dirty {
            return;
        }
        if let Ok(text) = serde_json::to_string(&self.file) {
            let tmp = self.path.with_extension("tmp");
            if std::fs::write(&tmp, text).is_ok() && std::fs::rename(&tmp, &self.path).is_ok() {
                self.dirty = false;
            }
        }
    }
}
