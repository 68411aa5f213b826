//! Output directory bookkeeping: atomic writes and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> Result<FileDigest, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
        bytes: bytes.len() as u64,
    })
}

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(CliError::io(path, e));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    config: &'a RunConfig,
    inputs: &'a BTreeMap<String, FileDigest>,
    artifacts: &'a BTreeMap<String, FileDigest>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    details: &'a BTreeMap<String, serde_json::Value>,
    notes: &'a [String],
}

/// Collects every file a command writes so the manifest can list them.
#[derive(Debug)]
pub struct Outputs {
    root: PathBuf,
    inputs: BTreeMap<String, FileDigest>,
    artifacts: BTreeMap<String, FileDigest>,
    details: BTreeMap<String, serde_json::Value>,
    notes: Vec<String>,
}

impl Outputs {
    pub fn new(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Outputs {
            root: root.to_path_buf(),
            inputs: BTreeMap::new(),
            artifacts: BTreeMap::new(),
            details: BTreeMap::new(),
            notes: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn record_input(&mut self, role: &str, path: &Path) -> Result<(), CliError> {
        let digest = digest_file(path)?;
        self.inputs.insert(role.to_string(), digest);
        Ok(())
    }

    /// Renders into memory, then writes atomically under the root.
    pub fn write_with(
        &mut self,
        rel: &str,
        render: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    ) -> Result<(), CliError> {
        let path = self.path(rel);
        let mut buf = Vec::new();
        render(&mut buf).map_err(|e| CliError::io(&path, e))?;
        write_atomic(&path, &buf)?;
        self.artifacts.insert(
            rel.to_string(),
            FileDigest {
                path: rel.to_string(),
                sha256: sha256_hex(&buf),
                bytes: buf.len() as u64,
            },
        );
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<(), CliError> {
        self.write_with(rel, |buf| {
            serde_json::to_writer_pretty(&mut *buf, value).map_err(std::io::Error::other)?;
            buf.push(b'\n');
            Ok(())
        })
    }

    pub fn detail<T: Serialize>(&mut self, key: &str, value: &T) {
        let v = serde_json::to_value(value).expect("serializable detail");
        self.details.insert(key.to_string(), v);
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    pub fn finish(self, command: &str, config: &RunConfig) -> Result<(), CliError> {
        let manifest = Manifest {
            tool: "climpact",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed: config.seed,
            config,
            inputs: &self.inputs,
            artifacts: &self.artifacts,
            details: &self.details,
            notes: &self.notes,
        };
        let mut buf = serde_json::to_vec_pretty(&manifest).expect("serializable manifest");
        buf.push(b'\n');
        write_atomic(&self.root.join(MANIFEST_NAME), &buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_leaves_no_temp_files() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("sub").join("a.csv");
        write_atomic(&target, b"x\n").unwrap();
        write_atomic(&target, b"y\n").unwrap();
        assert_eq!(fs::read(&target).unwrap(), b"y\n");
        let names: Vec<_> = fs::read_dir(dir.path().join("sub")).unwrap().collect();
        assert_eq!(names.len(), 1);
    }

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
