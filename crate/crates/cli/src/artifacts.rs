//! File plumbing: stdin/stdout fallbacks, digests and run manifests.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Provenance record written beside each output file as `<out>.manifest.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command_line: Vec<String>,
    pub seed: u64,
    pub threads: Option<usize>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub tool_version: String,
    pub timestamp_unix: u64,
}

pub fn digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn is_stdio(path: Option<&Path>) -> bool {
    path.is_none_or(|p| p.as_os_str() == "-")
}

/// Collects inputs and outputs of one invocation.
pub struct Session {
    seed: u64,
    threads: Option<usize>,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

impl Session {
    pub fn new(seed: u64, threads: Option<usize>) -> Self {
        Session {
            seed,
            threads,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn read(&mut self, path: Option<&Path>) -> Result<String> {
        let mut text = String::new();
        let name = if is_stdio(path) {
            std::io::stdin().read_to_string(&mut text).context("reading stdin")?;
            "-".to_string()
        } else {
            let p = path.expect("checked above");
            text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            p.display().to_string()
        };
        self.inputs.push(FileDigest {
            path: name,
            sha256: digest(text.as_bytes()),
        });
        Ok(text)
    }

    pub fn read_optional(&mut self, path: &Path) -> Result<Option<String>> {
        if path.exists() {
            self.read(Some(path)).map(Some)
        } else {
            Ok(None)
        }
    }

    /// Writes to `path`, or stdout when it is absent or `-`.
    pub fn write(&mut self, path: Option<&Path>, text: &str) -> Result<()> {
        if is_stdio(path) {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            return Ok(out.flush()?);
        }
        let p = path.expect("checked above");
        std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
        self.outputs.push(FileDigest {
            path: p.display().to_string(),
            sha256: digest(text.as_bytes()),
        });
        Ok(())
    }

    /// One manifest per file output, each listing every output of the run.
    pub fn finish(self) -> Result<()> {
        if self.outputs.is_empty() {
            return Ok(());
        }
        let manifest = RunManifest {
            command_line: std::env::args().collect(),
            seed: self.seed,
            threads: self.threads,
            inputs: self.inputs,
            outputs: self.outputs.clone(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        };
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        for out in &self.outputs {
            let path = sidecar(Path::new(&out.path), "manifest.json");
            std::fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    }
}

/// `<path>.<suffix>`
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}
