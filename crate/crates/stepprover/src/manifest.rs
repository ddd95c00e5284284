//! Run manifests: what a command read and wrote, with SHA-256 digests, and
//! the full effective configuration.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    /// Every config key with its effective value, in canonical key order.
    pub config: Vec<(String, String)>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of the file at `root/rel`, recorded under `rel`.
pub fn digest_file(root: &Path, rel: &Path) -> Result<FileDigest> {
    let full = root.join(rel);
    let bytes = std::fs::read(&full).map_err(|e| CliError::io(&full, e))?;
    Ok(FileDigest { path: rel.to_string_lossy().replace('\\', "/"), sha256: sha256_hex(&bytes) })
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Manifest {
            command: command.to_string(),
            seed: config.seed,
            config: config.pairs().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, root: &Path, rel: impl Into<PathBuf>) -> Result<()> {
        self.inputs.push(digest_file(root, &rel.into())?);
        Ok(())
    }

    pub fn output(&mut self, root: &Path, rel: impl Into<PathBuf>) -> Result<()> {
        self.outputs.push(digest_file(root, &rel.into())?);
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn digests_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("a")).unwrap();
        std::fs::write(dir.path().join("a/x.txt"), b"abc").unwrap();
        let mut m = Manifest::new("test", &RunConfig::default());
        m.output(dir.path(), "a/x.txt").unwrap();
        assert_eq!(m.outputs[0].path, "a/x.txt");
        assert!(m.input(dir.path(), "missing").is_err());
        assert_eq!(m.config.len(), RunConfig::KEYS.len());
    }
}
