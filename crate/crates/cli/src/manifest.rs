//! Run manifests.
//!
//! Each successful run records what it read, with which settings, and the
//! digest of everything it wrote. Data outputs never contain timings, so
//! identical inputs reproduce them byte for byte; the wall time lives here.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Settings;
use crate::CliResult;

#[derive(Debug, Serialize)]
pub struct FileDigest {
  pub path: String,
  pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
  pub command: String,
  pub arguments: Vec<String>,
  pub inputs: Vec<FileDigest>,
  pub outputs: Vec<FileDigest>,
  pub config_hash: String,
  pub rng_seed: u64,
  pub versions: Versions,
  pub wall_time: f64,
}

#[derive(Debug, Serialize)]
pub struct Versions {
  pub ustvol: &'static str,
  pub cli: &'static str,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
  Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn digest_file(path: &Path) -> CliResult<FileDigest> {
  let bytes = std::fs::read(path)?;
  Ok(FileDigest { path: path.display().to_string(), sha256: sha256_hex(&bytes) })
}

/// Collects inputs and outputs during a run.
pub struct Recorder {
  command: String,
  started: Instant,
  inputs: Vec<PathBuf>,
  outputs: Vec<PathBuf>,
}

impl Recorder {
  pub fn new(command: &str) -> Self {
    Self { command: command.to_string(), started: Instant::now(), inputs: Vec::new(), outputs: Vec::new() }
  }

  pub fn input(&mut self, path: &Path) {
    self.inputs.push(path.to_path_buf());
  }

  pub fn output(&mut self, path: &Path) {
    self.outputs.push(path.to_path_buf());
  }

  /// Writes the manifest to `explicit`, next to the first output, or to
  /// `ustvol-manifest.json` in the working directory.
  pub fn finish(self, settings: &Settings, explicit: Option<&Path>) -> CliResult<PathBuf> {
    let path = match (explicit, self.outputs.first()) {
      (Some(p), _) => p.to_path_buf(),
      (None, Some(out)) => {
        let mut name = out.as_os_str().to_owned();
        name.push(".manifest.json");
        PathBuf::from(name)
      }
      (None, None) => PathBuf::from("ustvol-manifest.json"),
    };
    let manifest = RunManifest {
      command: self.command,
      arguments: std::env::args().skip(1).collect(),
      inputs: self.inputs.iter().map(|p| digest_file(p)).collect::<CliResult<_>>()?,
      outputs: self.outputs.iter().map(|p| digest_file(p)).collect::<CliResult<_>>()?,
      config_hash: sha256_hex(serde_json::to_string(settings)?.as_bytes()),
      rng_seed: settings.seed,
      versions: Versions { ustvol: ustvol::VERSION, cli: env!("CARGO_PKG_VERSION") },
      wall_time: self.started.elapsed().as_secs_f64(),
    };
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(path)
  }
}
