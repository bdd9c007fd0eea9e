//! Run manifests: `manifest.txt` in every output directory, written before
//! any computation, in the same `key = value` form `--config` reads.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crof_core::{CrofError, Result};

pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub out: PathBuf,
    /// Input paths and other settings, in write order.
    pub entries: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(command: &str, out: &Path) -> Self {
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp,
            out: out.to_path_buf(),
            entries: Vec::new(),
        }
    }

    pub fn with(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.entries.push((key.into(), value.to_string()));
        self
    }

    pub fn with_all(mut self, entries: impl IntoIterator<Item = (String, String)>) -> Self {
        self.entries.extend(entries);
        self
    }

    pub fn render(&self) -> String {
        let mut s = String::from("# crof run manifest\n");
        s.push_str(&format!("command = {}\n", self.command));
        s.push_str(&format!("version = {}\n", self.version));
        s.push_str(&format!("timestamp = {}\n", self.timestamp));
        s.push_str(&format!("out = {}\n", self.out.display()));
        for (k, v) in &self.entries {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    /// Creates the output directory and writes `manifest.txt` into it.
    pub fn write(&self) -> Result<PathBuf> {
        fs::create_dir_all(&self.out).map_err(|e| CrofError::storage(&self.out, e))?;
        let path = self.out.join(MANIFEST_FILE);
        fs::write(&path, self.render()).map_err(|e| CrofError::storage(&path, e))?;
        Ok(path)
    }
}
