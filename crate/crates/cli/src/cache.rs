//! Content-hash manifests. A stage whose manifest records the same inputs
//! and config, and whose outputs still hash as recorded, is not rerun.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Failure;

pub fn sha256(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String, Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    Ok(sha256(&bytes))
}

/// One digest over every file of a directory, names included.
pub fn hash_dir(dir: &Path) -> Result<String, Failure> {
    let mut h = Sha256::new();
    for rel in mvseg_core::io::bundle::list_files(dir)? {
        if rel.as_os_str() == MANIFEST {
            continue;
        }
        h.update(rel.to_string_lossy().as_bytes());
        h.update([0]);
        h.update(hash_file(&dir.join(&rel))?.as_bytes());
        h.update([b'\n']);
    }
    Ok(format!("{:x}", h.finalize()))
}

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub config: Option<String>,
    pub inputs: BTreeMap<String, String>,
    /// Output paths relative to the manifest's directory.
    pub outputs: BTreeMap<String, String>,
}

pub struct Stage {
    manifest_path: PathBuf,
    stage: &'static str,
    config: Option<String>,
    inputs: BTreeMap<String, String>,
}

impl Stage {
    pub fn new(manifest_path: PathBuf, stage: &'static str) -> Self {
        Self { manifest_path, stage, config: None, inputs: BTreeMap::new() }
    }

    pub fn config<C: Serialize>(mut self, config: &C) -> Self {
        self.config = Some(sha256(&serde_json::to_vec(config).expect("config serializes")));
        self
    }

    pub fn input_file(mut self, name: &str, path: &Path) -> Result<Self, Failure> {
        self.inputs.insert(name.to_string(), hash_file(path)?);
        Ok(self)
    }

    pub fn input_dir(mut self, name: &str, dir: &Path) -> Result<Self, Failure> {
        self.inputs.insert(name.to_string(), hash_dir(dir)?);
        Ok(self)
    }

    fn root(&self) -> &Path {
        self.manifest_path.parent().unwrap_or(Path::new("."))
    }

    /// True when a previous run with identical inputs left intact outputs.
    pub fn is_cached(&self) -> bool {
        let Ok(bytes) = std::fs::read(&self.manifest_path) else { return false };
        let Ok(old) = serde_json::from_slice::<Manifest>(&bytes) else { return false };
        old.stage == self.stage
            && old.config == self.config
            && old.inputs == self.inputs
            && !old.outputs.is_empty()
            && old.outputs.iter().all(|(rel, h)| hash_file(&self.root().join(rel)).ok().as_ref() == Some(h))
    }

    /// Records the outputs, given relative to the manifest's directory.
    pub fn finish(self, outputs: &[PathBuf]) -> Result<(), Failure> {
        let mut hashes = BTreeMap::new();
        for rel in outputs {
            hashes.insert(rel.to_string_lossy().into_owned(), hash_file(&self.root().join(rel))?);
        }
        let m = Manifest { stage: self.stage.to_string(), config: self.config, inputs: self.inputs, outputs: hashes };
        let mut json = serde_json::to_vec_pretty(&m).expect("manifest serializes");
        json.push(b'\n');
        std::fs::write(&self.manifest_path, json)
            .map_err(|e| Failure::Data(format!("{}: {e}", self.manifest_path.display())))
    }
}
