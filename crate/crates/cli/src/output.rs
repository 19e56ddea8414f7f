//! Output directory bookkeeping and the run manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};
use wcoreset::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Files written under one directory, each hashed. The directory is created
/// on the first write, so a run that fails validation leaves nothing behind.
pub struct OutDir {
    dir: PathBuf,
    artifacts: Vec<Artifact>,
}

impl OutDir {
    pub fn new(dir: &Path) -> Result<Self> {
        if dir.exists() && !dir.is_dir() {
            return Err(Error::Config(format!(
                "output path {} is not a directory",
                dir.display()
            )));
        }
        Ok(OutDir {
            dir: dir.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        let fail = |e: std::io::Error| {
            Error::Config(format!("cannot write {}: {e}", path.display()))
        };
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(fail)?;
        }
        std::fs::write(&path, bytes).map_err(fail)?;
        self.artifacts.push(Artifact {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    /// Writes `manifest.json` listing everything written before it.
    pub fn finish(mut self, mut manifest: Manifest) -> Result<()> {
        manifest.artifacts = std::mem::take(&mut self.artifacts);
        self.write_json("manifest.json", &manifest)
    }
}

/// What was run, on what, with which seeds, and what came out.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<Artifact>,
    pub artifacts: Vec<Artifact>,
    pub timings: BTreeMap<String, f64>,
    /// Run facts that are not configuration, e.g. rows read from a stream.
    pub stats: BTreeMap<String, serde_json::Value>,
    pub threads: usize,
}

impl Manifest {
    pub fn new(command: &'static str, argv: &[String], config: serde_json::Value) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            argv: argv.to_vec(),
            config,
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            artifacts: Vec::new(),
            timings: BTreeMap::new(),
            stats: BTreeMap::new(),
            threads: rayon::current_num_threads(),
        }
    }

    pub fn seed(&mut self, name: &str, seed: u64) {
        self.seeds.insert(name.into(), seed);
    }

    pub fn time(&mut self, name: &str, since: Instant) {
        self.timings.insert(name.into(), since.elapsed().as_secs_f64());
    }
}
