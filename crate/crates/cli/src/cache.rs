use crate::error::CliError;
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::path::{Path, PathBuf};

/// Pure function results on disk, one JSON file per key under the config hash.
/// Floats are written in shortest round-trip form and parsed back exactly.
#[derive(Clone, Debug)]
pub struct DiskCache {
    dir: PathBuf,
    read: bool,
}

impl DiskCache {
    pub fn new(root: &Path, config_hash: &str, read: bool) -> Self {
        DiskCache {
            dir: root.join(config_hash),
            read,
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    /// A missing or unreadable entry is a miss.
    pub fn load<T: DeserializeOwned>(&self, key: &str) -> Option<T> {
        if !self.read {
            return None;
        }
        let bytes = std::fs::read(self.path(key)).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    pub fn store<T: Serialize>(&self, key: &str, value: &T) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.dir).map_err(|e| CliError::io(&self.dir, e))?;
        let path = self.path(key);
        let tmp = self.dir.join(format!(".{key}.{}.tmp", std::process::id()));
        let bytes = serde_json::to_vec(value).expect("cache entry serializes");
        std::fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| CliError::io(&path, e))
    }

    pub fn get_or_compute<T, F>(&self, key: &str, compute: F) -> Result<(T, bool), CliError>
    where
        T: Serialize + DeserializeOwned,
        F: FnOnce() -> Result<T, CliError>,
    {
        if let Some(v) = self.load(key) {
            return Ok((v, true));
        }
        let v = compute()?;
        self.store(key, &v)?;
        Ok((v, false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_survive_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::new(dir.path(), "abc", true);
        let values: Vec<f64> = (1..200).map(|i| (i as f64).sqrt() * 1e-7 + 1.0 / 3.0).collect();
        cache.store("v", &values).unwrap();
        let back: Vec<f64> = cache.load("v").unwrap();
        for (a, b) in values.iter().zip(&back) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn disabled_reads_always_miss() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DiskCache::new(dir.path(), "abc", false);
        cache.store("v", &1.5f64).unwrap();
        assert!(cache.load::<f64>("v").is_none());
        let (v, hit) = cache.get_or_compute("v", || Ok(2.5f64)).unwrap();
        assert_eq!((v, hit), (2.5, false));
        assert_eq!(DiskCache::new(dir.path(), "abc", true).load::<f64>("v"), Some(2.5));
    }
}
