//! Binary checkpoints: `u64` LE header length, a JSON header, then the
//! parameters as `f64` LE.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MlpSpec, NnError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub spec: MlpSpec,
    pub seed: u64,
    pub steps: usize,
    pub param_count: usize,
}

fn io_err(e: std::io::Error) -> NnError {
    NnError::Checkpoint(e.to_string())
}

pub fn write_checkpoint<W: Write>(mut w: W, header: &CheckpointHeader, params: &[f64]) -> Result<()> {
    if header.param_count != params.len() || header.spec.param_count() != params.len() {
        return Err(NnError::Checkpoint(format!(
            "header declares {} parameters, spec has {}, got {}",
            header.param_count,
            header.spec.param_count(),
            params.len()
        )));
    }
    let json = serde_json::to_vec(header).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    w.write_all(&(json.len() as u64).to_le_bytes()).map_err(io_err)?;
    w.write_all(&json).map_err(io_err)?;
    for p in params {
        w.write_all(&p.to_le_bytes()).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(CheckpointHeader, Vec<f64>)> {
    let mut len = [0u8; 8];
    r.read_exact(&mut len).map_err(io_err)?;
    let len = u64::from_le_bytes(len);
    if len > 1 << 24 {
        return Err(NnError::Checkpoint(format!("implausible header length {len}")));
    }
    let mut json = vec![0u8; len as usize];
    r.read_exact(&mut json).map_err(io_err)?;
    let header: CheckpointHeader =
        serde_json::from_slice(&json).map_err(|e| NnError::Checkpoint(format!("bad header: {e}")))?;
    if header.spec.param_count() != header.param_count {
        return Err(NnError::Checkpoint("header parameter count disagrees with spec".into()));
    }
    let mut params = Vec::with_capacity(header.param_count);
    let mut buf = [0u8; 8];
    for _ in 0..header.param_count {
        r.read_exact(&mut buf).map_err(io_err)?;
        params.push(f64::from_le_bytes(buf));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(io_err)? != 0 {
        return Err(NnError::Checkpoint("trailing bytes after parameters".into()));
    }
    Ok((header, params))
}

pub fn save_checkpoint(path: &Path, header: &CheckpointHeader, params: &[f64]) -> Result<()> {
    write_checkpoint(BufWriter::new(File::create(path).map_err(io_err)?), header, params)
}

pub fn load_checkpoint(path: &Path) -> Result<(CheckpointHeader, Vec<f64>)> {
    read_checkpoint(BufReader::new(File::open(path).map_err(io_err)?))
}
