//! Content-addressed cache of band analyses under `<out>/.band-cache/`.

use std::fs;
use std::path::{Path, PathBuf};

use magband::bands::BandAnalysis;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const CACHE_VERSION: u32 = 1;
pub const CACHE_DIR: &str = ".band-cache";

/// Everything the band data depends on.
#[derive(Debug, Serialize)]
pub struct CacheKey<'a> {
    pub period: f64,
    pub cos: &'a [f64],
    pub sin: &'a [f64],
    pub b: f64,
    pub size: usize,
    pub quad_order: usize,
    pub j_max: usize,
    pub grid: usize,
}

impl CacheKey<'_> {
    pub fn digest(&self) -> String {
        let text = serde_json::to_string(self).expect("cache key serializes");
        let mut h = Sha256::new();
        h.update(CACHE_VERSION.to_le_bytes());
        h.update(text.as_bytes());
        hex::encode(h.finalize())
    }
}

#[derive(Serialize, Deserialize)]
struct Blob {
    version: u32,
    key: String,
    bands: Vec<BandAnalysis>,
}

pub struct BandCache {
    dir: PathBuf,
    enabled: bool,
}

impl BandCache {
    pub fn new(out: &Path, enabled: bool) -> Self {
        Self {
            dir: out.join(CACHE_DIR),
            enabled,
        }
    }

    fn file(&self, key: &str) -> PathBuf {
        self.dir.join(format!("v{CACHE_VERSION}-{key}.json"))
    }

    /// Cached bands for `key`; unreadable or stale blobs are deleted.
    pub fn load(&self, key: &str) -> Option<Vec<BandAnalysis>> {
        if !self.enabled {
            return None;
        }
        let path = self.file(key);
        let text = fs::read_to_string(&path).ok()?;
        match serde_json::from_str::<Blob>(&text) {
            Ok(blob) if blob.version == CACHE_VERSION && blob.key == key => Some(blob.bands),
            _ => {
                log::warn!("evicting unusable cache entry {}", path.display());
                let _ = fs::remove_file(&path);
                None
            }
        }
    }

    pub fn store(&self, key: &str, bands: &[BandAnalysis]) -> Result<(), CliError> {
        if !self.enabled {
            return Ok(());
        }
        fs::create_dir_all(&self.dir)?;
        self.evict_stale()?;
        let blob = Blob {
            version: CACHE_VERSION,
            key: key.to_string(),
            bands: bands.to_vec(),
        };
        fs::write(self.file(key), serde_json::to_string(&blob)?)?;
        Ok(())
    }

    /// Removes blobs written by other cache versions.
    fn evict_stale(&self) -> Result<(), CliError> {
        let prefix = format!("v{CACHE_VERSION}-");
        for entry in fs::read_dir(&self.dir)? {
            let entry = entry?;
            let name = entry.file_name();
            if !name.to_string_lossy().starts_with(&prefix) {
                log::info!("evicting stale cache entry {}", name.to_string_lossy());
                fs::remove_file(entry.path())?;
            }
        }
        Ok(())
    }

    pub fn get_or_compute(
        &self,
        key: &str,
        compute: impl FnOnce() -> Result<Vec<BandAnalysis>, CliError>,
    ) -> Result<Vec<BandAnalysis>, CliError> {
        if let Some(bands) = self.load(key) {
            log::info!("band cache hit {key}");
            return Ok(bands);
        }
        let bands = compute()?;
        self.store(key, &bands)?;
        Ok(bands)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use magband::bands::band_edges_and_gaps;
    use magband::{FiberSolver, FourierPotential};

    fn bands() -> Vec<BandAnalysis> {
        let w = FourierPotential::new(1.0, vec![0.1, 0.3], vec![0.05]).unwrap();
        let solver = FiberSolver::with_size(w, 1.5, 24).unwrap();
        band_edges_and_gaps(&solver, 2, 32).unwrap()
    }

    fn key() -> String {
        CacheKey {
            period: 1.0,
            cos: &[0.1, 0.3],
            sin: &[0.05],
            b: 1.5,
            size: 24,
            quad_order: 0,
            j_max: 2,
            grid: 32,
        }
        .digest()
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let cache = BandCache::new(dir.path(), true);
        let fresh = bands();
        cache.store(&key(), &fresh).unwrap();
        let loaded = cache.load(&key()).unwrap();
        assert_eq!(loaded, fresh);
        for (a, b) in loaded.iter().zip(&fresh) {
            for (x, y) in a.values.iter().zip(&b.values) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn stale_and_corrupt_entries_evicted() {
        let dir = tempfile::tempdir().unwrap();
        let cache = BandCache::new(dir.path(), true);
        fs::create_dir_all(dir.path().join(CACHE_DIR)).unwrap();
        let old = dir.path().join(CACHE_DIR).join("v0-deadbeef.json");
        fs::write(&old, "{}").unwrap();
        fs::write(cache.file(&key()), "not json").unwrap();
        assert!(cache.load(&key()).is_none());
        assert!(!cache.file(&key()).exists());
        cache.store(&key(), &bands()).unwrap();
        assert!(!old.exists());
    }

    #[test]
    fn key_depends_on_inputs() {
        let a = key();
        let b = CacheKey {
            period: 1.0,
            cos: &[0.1, 0.3],
            sin: &[0.05],
            b: 1.5000000000000002,
            size: 24,
            quad_order: 0,
            j_max: 2,
            grid: 32,
        }
        .digest();
        assert_ne!(a, b);
    }

    #[test]
    fn disabled_cache_never_hits() {
        let dir = tempfile::tempdir().unwrap();
        let cache = BandCache::new(dir.path(), false);
        cache.store(&key(), &bands()).unwrap();
        assert!(cache.load(&key()).is_none());
        assert!(!dir.path().join(CACHE_DIR).exists());
    }
}
