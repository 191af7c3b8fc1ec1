//! `manifest.txt`: a `key = value` record of what a run did and produced.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    /// Serialized config, echoed under `config.`.
    pub config: String,
    pub summary: Vec<(String, String)>,
    /// Output files, relative to the run directory.
    pub files: Vec<String>,
    pub wall_clock_seconds: f64,
}

impl RunManifest {
    pub fn new(command: &str, config: String) -> Self {
        Self { command: command.into(), config, summary: Vec::new(), files: Vec::new(), wall_clock_seconds: 0.0 }
    }

    pub fn metric(&mut self, key: &str, value: f64) {
        self.summary.push((key.into(), format!("{value:.16e}")));
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.summary.push((key.into(), value.to_string()));
    }

    pub fn summary_value(&self, key: &str) -> Option<f64> {
        self.summary.iter().find(|(k, _)| k == key).and_then(|(_, v)| v.parse().ok())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "tool = sdl");
        let _ = writeln!(out, "version = {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(out, "command = {}", self.command);
        for line in self.config.lines().filter(|l| !l.trim().is_empty()) {
            let _ = writeln!(out, "config.{}", line.trim());
        }
        for (k, v) in &self.summary {
            let _ = writeln!(out, "summary.{k} = {v}");
        }
        let _ = writeln!(out, "files = {}", self.files.join(","));
        let _ = writeln!(out, "wall_clock_seconds = {:.3}", self.wall_clock_seconds);
        out
    }

    /// Writes `manifest.txt` into `dir`, refusing if a listed file is missing.
    pub fn write(&self, dir: &Path) -> io::Result<()> {
        if let Some(missing) = self.files.iter().find(|f| !dir.join(f).is_file()) {
            return Err(io::Error::new(io::ErrorKind::NotFound, format!("manifest lists missing file {missing}")));
        }
        fs::write(dir.join(MANIFEST_FILE), self.to_text())
    }
}

/// Reads any `key = value` file back into a map.
pub fn read_key_values(path: &Path) -> io::Result<BTreeMap<String, String>> {
    Ok(fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect())
}
