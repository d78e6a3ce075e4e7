//! Optimized isometries on disk.
//!
//! `<stem>.bin` holds the magic `LRISOMv1`, then `version, m, n, p` as
//! little-endian `u32`, then `m` row-major `n x p` blocks of little-endian
//! `f64`. `<stem>.json` repeats the header with the run parameters and the
//! SHA-256 of the binary file.

use std::path::{Path, PathBuf};

use lindblad_riemann::{layer_schedule, IsometryVector, Mat, StiefelPoint};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;
use crate::output::{atomic_write, write_json};

pub const MAGIC: &[u8; 8] = b"LRISOMv1";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveHeader {
    pub version: u32,
    pub model: String,
    pub gamma: f64,
    pub tau: f64,
    pub n_tau: usize,
    pub sites: usize,
    pub local_dim: usize,
    pub rank: usize,
    pub m: usize,
    pub n: usize,
    pub p: usize,
    pub alpha0: f64,
    pub alpha1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub header: ArchiveHeader,
    pub data_file: String,
    pub sha256: String,
}

pub fn encode(xs: &IsometryVector) -> Vec<u8> {
    let (m, n, p) = (xs.m(), xs.n(), xs.p());
    let mut out = Vec::with_capacity(24 + 8 * m * n * p);
    out.extend_from_slice(MAGIC);
    for v in [VERSION, m as u32, n as u32, p as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for layer in xs.layers() {
        let x = layer.matrix();
        for i in 0..n {
            for j in 0..p {
                out.extend_from_slice(&x[(i, j)].to_le_bytes());
            }
        }
    }
    out
}

/// Layer matrices from the binary format.
pub fn decode(bytes: &[u8]) -> Result<Vec<Mat>, String> {
    if bytes.len() < 24 || &bytes[..8] != MAGIC {
        return Err("missing magic".into());
    }
    let word = |k: usize| u32::from_le_bytes(bytes[8 + 4 * k..12 + 4 * k].try_into().expect("4 bytes")) as usize;
    let (version, m, n, p) = (word(0), word(1), word(2), word(3));
    if version != VERSION as usize {
        return Err(format!("unsupported version {version}"));
    }
    let expected = 24 + 8 * m * n * p;
    if bytes.len() != expected {
        return Err(format!("{} bytes, expected {expected}", bytes.len()));
    }
    let mut values = bytes[24..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    Ok((0..m)
        .map(|_| Mat::from_row_iterator(n, p, values.by_ref().take(n * p)))
        .collect())
}

/// Writes `<stem>.bin` and `<stem>.json` into `dir`.
pub fn save(
    dir: &Path,
    stem: &str,
    header: &ArchiveHeader,
    xs: &IsometryVector,
) -> Result<(PathBuf, PathBuf), CliError> {
    let bytes = encode(xs);
    let bin = dir.join(format!("{stem}.bin"));
    let json = dir.join(format!("{stem}.json"));
    atomic_write(&bin, &bytes)?;
    let sidecar = Sidecar {
        header: header.clone(),
        data_file: format!("{stem}.bin"),
        sha256: hex::encode(Sha256::digest(&bytes)),
    };
    write_json(&json, &sidecar)?;
    Ok((bin, json))
}

/// Reads a sidecar and its data file, checking checksum and shapes.
pub fn load(sidecar_path: &Path) -> Result<(ArchiveHeader, IsometryVector), CliError> {
    let bad = |reason: String| CliError::Archive {
        path: sidecar_path.to_path_buf(),
        reason,
    };
    let text = std::fs::read_to_string(sidecar_path).map_err(|e| CliError::io(sidecar_path, e))?;
    let sidecar: Sidecar = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    let bin = sidecar_path.with_file_name(&sidecar.data_file);
    let bytes = std::fs::read(&bin).map_err(|e| CliError::io(&bin, e))?;
    if hex::encode(Sha256::digest(&bytes)) != sidecar.sha256 {
        return Err(bad("checksum mismatch".into()));
    }
    let mats = decode(&bytes).map_err(bad)?;
    let h = &sidecar.header;
    if mats.len() != h.m || mats.iter().any(|x| x.shape() != (h.n, h.p)) || h.m != 2 * h.n_tau + 1 {
        return Err(bad("header does not match the stored layers".into()));
    }
    let points = mats
        .into_iter()
        .map(StiefelPoint::new)
        .collect::<lindblad_riemann::Result<Vec<_>>>()?;
    let xs = IsometryVector::new(points, layer_schedule(h.n_tau)?)?;
    Ok((sidecar.header, xs))
}
