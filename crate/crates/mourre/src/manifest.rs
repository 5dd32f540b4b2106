//! Output files, their checksums and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_SCHEMA: &str = "mourre.manifest/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub file: String,
    pub stage: String,
    pub sha256: String,
    pub bytes: u64,
    /// CSV and JSON payloads are reproducible; plots are not part of the contract.
    pub reproducible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub mourre: String,
    pub mourre_core: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub command: String,
    pub config: String,
    pub config_sha256: String,
    pub seed: u64,
    pub versions: Versions,
    pub threads: Option<usize>,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<OutputRecord>,
}

impl RunManifest {
    pub fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let m: RunManifest = serde_json::from_str(&text)
            .map_err(|e| CliError::config("manifest", format!("{}: {e}", path.display())))?;
        if m.schema != MANIFEST_SCHEMA {
            return Err(CliError::config(
                "manifest.schema",
                format!("expected {MANIFEST_SCHEMA}, found {}", m.schema),
            ));
        }
        Ok(m)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes files under one directory and remembers what was written.
#[derive(Debug)]
pub struct OutputSink {
    dir: PathBuf,
    records: Vec<OutputRecord>,
}

impl OutputSink {
    pub fn create(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(OutputSink {
            dir: dir.to_path_buf(),
            records: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn records(&self) -> &[OutputRecord] {
        &self.records
    }

    fn write(&mut self, file: &str, stage: &str, bytes: &[u8], reproducible: bool) -> CliResult<()> {
        let path = self.dir.join(file);
        fs::write(&path, bytes).map_err(|source| CliError::Io { path, source })?;
        self.records.push(OutputRecord {
            file: file.to_string(),
            stage: stage.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
            reproducible,
        });
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, file: &str, stage: &str, value: &T) -> CliResult<()> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Other(e.to_string()))?;
        bytes.push(b'\n');
        self.write(file, stage, &bytes, true)
    }

    /// One compact JSON document per line.
    pub fn json_lines<T: Serialize>(&mut self, file: &str, stage: &str, values: &[T]) -> CliResult<()> {
        let mut bytes = Vec::new();
        for v in values {
            serde_json::to_writer(&mut bytes, v).map_err(|e| CliError::Other(e.to_string()))?;
            bytes.push(b'\n');
        }
        self.write(file, stage, &bytes, true)
    }

    pub fn csv<R: Serialize>(&mut self, file: &str, stage: &str, header: &[&str], rows: &[R]) -> CliResult<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        let err = |e: csv::Error| CliError::Other(e.to_string());
        w.write_record(header).map_err(err)?;
        for r in rows {
            w.serialize(r).map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Other(e.to_string()))?;
        self.write(file, stage, &bytes, true)
    }

    pub fn artifact(&mut self, file: &str, stage: &str, bytes: &[u8]) -> CliResult<()> {
        self.write(file, stage, bytes, false)
    }

    pub fn finish(self, mut manifest: RunManifest) -> CliResult<RunManifest> {
        manifest.outputs = self.records;
        let path = self.dir.join(MANIFEST_FILE);
        let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Other(e.to_string()))?;
        bytes.push(b'\n');
        fs::write(&path, bytes).map_err(|source| CliError::Io { path, source })?;
        Ok(manifest)
    }
}

/// Reproducible outputs whose checksums differ between two manifests.
pub fn compare(original: &RunManifest, rerun: &RunManifest) -> Vec<String> {
    let mut out = Vec::new();
    for rec in original.outputs.iter().filter(|r| r.reproducible) {
        match rerun.outputs.iter().find(|r| r.file == rec.file) {
            Some(r) if r.sha256 == rec.sha256 => {}
            Some(_) => out.push(format!("{}: checksum differs", rec.file)),
            None => out.push(format!("{}: missing from the rerun", rec.file)),
        }
    }
    for rec in rerun.outputs.iter().filter(|r| r.reproducible) {
        if !original.outputs.iter().any(|r| r.file == rec.file) {
            out.push(format!("{}: not in the original run", rec.file));
        }
    }
    out
}
