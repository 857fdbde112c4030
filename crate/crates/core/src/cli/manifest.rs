use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io::sha256_file;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(Self { path: path.to_path_buf(), sha256: sha256_file(path)? })
    }
}

/// Everything needed to reproduce a run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub version: String,
    pub seed: Option<u64>,
    /// True when no seed was given and one was drawn.
    pub seed_drawn: bool,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub config: serde_json::Value,
    pub duration_seconds: f64,
}

pub(crate) struct ManifestBuilder {
    subcommand: String,
    started: Instant,
    seed: Option<u64>,
    seed_drawn: bool,
    inputs: Vec<PathBuf>,
}

impl ManifestBuilder {
    pub fn new(subcommand: &str, inputs: Vec<PathBuf>) -> Self {
        Self { subcommand: subcommand.into(), started: Instant::now(), seed: None, seed_drawn: false, inputs }
    }

    pub fn add_input(&mut self, path: &Path) {
        if !self.inputs.iter().any(|p| p == path) {
            self.inputs.push(path.to_path_buf());
        }
    }

    /// Uses the given seed or draws and records one.
    pub fn seed(&mut self, given: Option<u64>) -> u64 {
        let s = given.unwrap_or_else(rand::random);
        self.seed = Some(s);
        self.seed_drawn = given.is_none();
        s
    }

    pub fn write(self, out: &Path, outputs: &[PathBuf], config: serde_json::Value) -> Result<()> {
        let manifest = RunManifest {
            subcommand: self.subcommand,
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.seed,
            seed_drawn: self.seed_drawn,
            inputs: self.inputs.iter().map(|p| FileDigest::of(p)).collect::<Result<_>>()?,
            outputs: outputs.iter().map(|p| FileDigest::of(p)).collect::<Result<_>>()?,
            config,
            duration_seconds: self.started.elapsed().as_secs_f64(),
        };
        std::fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }
}
