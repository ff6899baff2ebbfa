//! Maps opaque checkpoint ids to local checkpoint directories.
//!
//! A checkpoint directory holds `config.json`, `model.safetensors` and
//! `tokenizer.json` in the usual pretrained-model layout. Nothing here talks
//! to the network: the cache is populated out of band, and tests point the
//! resolver at tiny stand-in checkpoints.

use std::path::{Path, PathBuf};

use super::BackendError;

pub const CACHE_ENV: &str = "AQUASIFT_CACHE";

pub const CONFIG_FILE: &str = "config.json";
pub const WEIGHTS_FILE: &str = "model.safetensors";
pub const TOKENIZER_FILE: &str = "tokenizer.json";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointFiles {
    pub dir: PathBuf,
    pub config: PathBuf,
    pub weights: PathBuf,
    pub tokenizer: PathBuf,
}

impl CheckpointFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            config: dir.join(CONFIG_FILE),
            weights: dir.join(WEIGHTS_FILE),
            tokenizer: dir.join(TOKENIZER_FILE),
        }
    }

    fn missing(&self) -> Vec<&'static str> {
        [
            (CONFIG_FILE, &self.config),
            (WEIGHTS_FILE, &self.weights),
            (TOKENIZER_FILE, &self.tokenizer),
        ]
        .into_iter()
        .filter(|(_, p)| !p.is_file())
        .map(|(n, _)| n)
        .collect()
    }
}

pub trait CheckpointResolver: Send + Sync {
    fn resolve(&self, checkpoint_id: &str) -> Result<CheckpointFiles, BackendError>;
}

/// Looks checkpoints up under a cache root: id `org/name` lives in
/// `<root>/org/name/`. An id that is itself an existing directory is used
/// as-is.
#[derive(Debug, Clone)]
pub struct CacheResolver {
    root: PathBuf,
}

impl CacheResolver {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    /// Root from `AQUASIFT_CACHE`, falling back to `~/.cache/aquasift`.
    pub fn from_env() -> Self {
        let root = std::env::var_os(CACHE_ENV)
            .map(PathBuf::from)
            .or_else(|| std::env::var_os("HOME").map(|h| PathBuf::from(h).join(".cache/aquasift")))
            .unwrap_or_else(|| PathBuf::from(".aquasift-cache"));
        Self::new(root)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

impl CheckpointResolver for CacheResolver {
    fn resolve(&self, checkpoint_id: &str) -> Result<CheckpointFiles, BackendError> {
        let unresolved = |reason: String| BackendError::CheckpointResolution {
            checkpoint_id: checkpoint_id.to_string(),
            reason,
        };
        if checkpoint_id.is_empty() {
            return Err(unresolved("empty checkpoint id".into()));
        }
        let direct = Path::new(checkpoint_id);
        let dir = if direct.is_dir() {
            direct.to_path_buf()
        } else {
            if checkpoint_id.split('/').any(|part| part == "..") {
                return Err(unresolved("checkpoint id may not contain '..'".into()));
            }
            self.root.join(checkpoint_id)
        };
        if !dir.is_dir() {
            return Err(unresolved(format!("no directory at {}", dir.display())));
        }
        let files = CheckpointFiles::in_dir(&dir);
        let missing = files.missing();
        if !missing.is_empty() {
            return Err(unresolved(format!(
                "{} is missing {}",
                dir.display(),
                missing.join(", ")
            )));
        }
        Ok(files)
    }
}
