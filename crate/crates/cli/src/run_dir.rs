use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// SHA-256 over git's blob framing: `blob <len>\0<bytes>`.
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

/// Hashes a file, or every file under a directory, keyed by path.
pub fn hash_input(path: &Path, out: &mut BTreeMap<String, String>) -> Result<()> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(path)
            .map_err(CliError::io(path))?
            .map(|e| e.map(|e| e.path()).map_err(CliError::io(path)))
            .collect::<Result<_>>()?;
        entries.sort();
        for e in entries {
            hash_input(&e, out)?;
        }
    } else {
        let bytes = fs::read(path).map_err(CliError::io(path))?;
        out.insert(path.display().to_string(), blob_hash(&bytes));
    }
    Ok(())
}

pub struct RunDir {
    root: PathBuf,
}

#[derive(Serialize)]
struct Inputs<'a> {
    config: String,
    inputs: &'a BTreeMap<String, String>,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(CliError::io(root))?;
        Ok(RunDir { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<()> {
        let p = self.path(name);
        fs::write(&p, bytes).map_err(CliError::io(p))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    /// Writes `config.json` and `inputs.json` (content hashes of the config and every input).
    pub fn record<T: Serialize>(&self, config: &T, inputs: &[&Path]) -> Result<()> {
        self.write_json("config.json", config)?;
        let config_bytes = fs::read(self.path("config.json")).map_err(CliError::io(self.path("config.json")))?;
        let mut hashes = BTreeMap::new();
        for p in inputs {
            hash_input(p, &mut hashes)?;
        }
        self.write_json("inputs.json", &Inputs { config: blob_hash(&config_bytes), inputs: &hashes })
    }
}
