use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ExperimentError, Result};

/// 17 significant digits, `.` decimal point, independent of locale.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Git-style object hash: SHA-256 of `"blob <len>\0"` followed by the content.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex(&h.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        CsvTable { header: header.iter().map(|s| s.as_ref().to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }
}

/// One artifact referenced from a run manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Writes `bytes` to `dir/name`, creating `dir` if needed.
pub fn write_artifact(dir: &Path, name: &str, bytes: &[u8]) -> Result<OutputFile> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
    Ok(OutputFile { path: name.to_string(), bytes: bytes.len() as u64, sha256: sha256_hex(bytes) })
}

pub fn write_csv(dir: &Path, name: &str, table: &CsvTable) -> Result<OutputFile> {
    write_artifact(dir, name, &table.to_bytes())
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<OutputFile> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| ExperimentError::Serialize(e.to_string()))?;
    bytes.push(b'\n');
    write_artifact(dir, name, &bytes)
}

pub(crate) fn io_err(path: &Path, source: std::io::Error) -> ExperimentError {
    ExperimentError::Io { path: path.display().to_string(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    /// Resolved configuration, flags applied over the config file.
    pub config: BTreeMap<String, String>,
    /// Content hash of the canonical `key=value` rendering of `config`.
    pub config_hash: String,
    /// Content hash of the config file as read, if one was given.
    pub config_file_hash: Option<String>,
    pub seed: Option<u64>,
    pub jobs: usize,
    pub outputs: Vec<OutputFile>,
    pub created_unix: u64,
}

impl RunManifest {
    pub fn new(subcommand: &str, config: BTreeMap<String, String>, seed: Option<u64>, jobs: usize) -> Self {
        let canonical: String = config.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        RunManifest {
            tool: "effdim".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: subcommand.into(),
            config_hash: content_hash(canonical.as_bytes()),
            config,
            config_file_hash: None,
            seed,
            jobs,
            outputs: Vec::new(),
            created_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }
}
