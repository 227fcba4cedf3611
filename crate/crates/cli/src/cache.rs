//! Flat-file result cache keyed by a content hash of the canonical system
//! JSON and the operation parameters.

use std::fs::{self, OpenOptions};
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

const LOCK_NAME: &str = "cache.lock";
const LOCK_ATTEMPTS: u32 = 50;

/// Open cache directory. Holding the value holds the lock file.
pub struct Cache {
    dir: PathBuf,
    lock: PathBuf,
}

impl Cache {
    /// `CIRCLELAB_CACHE`, else `$XDG_CACHE_HOME/circlelab`, else `~/.cache/circlelab`.
    pub fn default_dir() -> Option<PathBuf> {
        if let Some(d) = std::env::var_os("CIRCLELAB_CACHE") {
            return Some(PathBuf::from(d));
        }
        if let Some(d) = std::env::var_os("XDG_CACHE_HOME") {
            return Some(PathBuf::from(d).join("circlelab"));
        }
        std::env::var_os("HOME").map(|h| PathBuf::from(h).join(".cache").join("circlelab"))
    }

    pub fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating cache dir {}", dir.display()))?;
        let lock = dir.join(LOCK_NAME);
        for _ in 0..LOCK_ATTEMPTS {
            match OpenOptions::new().write(true).create_new(true).open(&lock) {
                Ok(_) => return Ok(Cache { dir: dir.to_path_buf(), lock }),
                Err(e) if e.kind() == ErrorKind::AlreadyExists => thread::sleep(Duration::from_millis(100)),
                Err(e) => return Err(e).with_context(|| format!("creating {}", lock.display())),
            }
        }
        bail!("cache is locked by another writer ({}); remove the file if no run is active", lock.display())
    }

    pub fn key(system_json: &str, op: &str, params: &str) -> String {
        let mut h = Sha256::new();
        for part in [system_json, op, params] {
            h.update(part.as_bytes());
            h.update([0u8]);
        }
        hex::encode(h.finalize())
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get<T: DeserializeOwned>(&self, key: &str) -> Option<T> {
        let text = fs::read_to_string(self.path(key)).ok()?;
        // A corrupt entry is treated as a miss and overwritten later.
        serde_json::from_str(&text).ok()
    }

    pub fn put<T: Serialize>(&self, key: &str, value: &T) -> Result<()> {
        let path = self.path(key);
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, serde_json::to_vec(value)?).with_context(|| format!("writing {}", tmp.display()))?;
        fs::rename(&tmp, &path).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

impl Drop for Cache {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_lock() {
        let dir = tempfile::tempdir().unwrap();
        let key = Cache::key("{}", "count", "x=3");
        assert_eq!(key.len(), 64);
        assert_ne!(key, Cache::key("{}", "count", "x=4"));
        {
            let c = Cache::open(dir.path()).unwrap();
            assert!(c.get::<u64>(&key).is_none());
            c.put(&key, &17u64).unwrap();
            assert_eq!(c.get::<u64>(&key), Some(17));
            assert!(dir.path().join(LOCK_NAME).exists());
        }
        assert!(!dir.path().join(LOCK_NAME).exists());
    }
}
