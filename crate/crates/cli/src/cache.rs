//! Content-addressed artifact cache. A stage's directory name is derived from
//! a hash of everything that determines its output, so a directory that
//! exists is complete and never rewritten.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

/// Bumped when an artifact encoding changes.
pub const CACHE_FORMAT: u32 = 1;

/// Hash of length-prefixed parts, as lowercase hex.
pub fn key(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    h.update(CACHE_FORMAT.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// One stage's entry in the manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub stage: String,
    pub key: String,
    /// Directory relative to the output root.
    pub dir: String,
    /// File name → SHA-256 of its contents.
    pub files: BTreeMap<String, String>,
}

pub struct Cache {
    out: PathBuf,
}

impl Cache {
    pub fn new(out: &Path) -> Result<Self> {
        fs::create_dir_all(out.join("cache")).with_context(|| format!("creating {}", out.display()))?;
        Ok(Cache { out: out.to_path_buf() })
    }

    fn relative(stage: &str, key: &str) -> String {
        format!("cache/{stage}-{}", &key[..16])
    }

    pub fn dir(&self, stage: &str, key: &str) -> PathBuf {
        self.out.join(Self::relative(stage, key))
    }

    /// Run `produce` into a fresh directory unless the stage is cached.
    /// Returns the record and whether it was a cache hit.
    pub fn stage(
        &self,
        stage: &str,
        key: &str,
        produce: impl FnOnce(&Path) -> Result<()>,
    ) -> Result<(ArtifactRecord, bool)> {
        let dir = self.dir(stage, key);
        let hit = dir.is_dir();
        if !hit {
            let tmp = tempfile::Builder::new().prefix(".partial-").tempdir_in(self.out.join("cache"))?;
            produce(tmp.path()).with_context(|| format!("stage {stage}"))?;
            let staged = tmp.keep();
            fs::rename(&staged, &dir).with_context(|| format!("publishing {}", dir.display()))?;
        }
        let mut files = BTreeMap::new();
        for entry in fs::read_dir(&dir)? {
            let entry = entry?;
            if entry.file_type()?.is_file() {
                files.insert(entry.file_name().to_string_lossy().into_owned(), file_sha256(&entry.path())?);
            }
        }
        let record = ArtifactRecord { stage: stage.to_string(), key: key.to_string(), dir: Self::relative(stage, key), files };
        Ok((record, hit))
    }
}
