//! Artifact emission. Every file carries the tool version and config hash.

use serde::Serialize;
use serde_json::json;
use std::fs;
use std::path::{Path, PathBuf};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub struct Emitter {
    dir: PathBuf,
    hash: String,
    written: Vec<PathBuf>,
}

impl Emitter {
    pub fn new(dir: &Path, hash: String) -> Result<Self, String> {
        fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
        Ok(Emitter { dir: dir.to_path_buf(), hash, written: Vec::new() })
    }

    pub fn provenance(&self) -> String {
        format!("motionq {VERSION} config {}", self.hash)
    }

    fn write(&mut self, name: &str, text: &str) -> Result<(), String> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
        self.written.push(path);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, command: &str, body: &T) -> Result<(), String> {
        let doc = json!({
            "tool": "motionq",
            "version": VERSION,
            "config_hash": self.hash,
            "command": command,
            "result": serde_json::to_value(body).map_err(|e| e.to_string())?,
        });
        let text = serde_json::to_string_pretty(&doc).map_err(|e| e.to_string())? + "\n";
        self.write(name, &text)
    }

    /// CSV with a provenance comment line, a header row and Display-formatted cells.
    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), String> {
        let mut text = format!("# {}\n{}\n", self.provenance(), header.join(","));
        for r in rows {
            text.push_str(&r.join(","));
            text.push('\n');
        }
        self.write(name, &text)
    }

    pub fn svg(&mut self, name: &str, text: &str) -> Result<(), String> {
        self.write(name, text)
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

/// Shortest round-trip decimal; "" for a missing value.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-4..1e6).contains(&a) || !a.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}
