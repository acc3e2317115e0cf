//! Raw sample arrays with JSON sidecars, and loading matrices for the diagnostics commands.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::load_idx_images;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Metadata written next to every raw array as `<file>.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArraySidecar {
    pub kind: String,
    /// `[rows, cols]`; rows may be zero.
    pub shape: [usize; 2],
    /// Always `"f64-le"`: little-endian IEEE-754 doubles, row-major.
    pub dtype: String,
    pub seed: Option<u64>,
    pub checkpoint_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphas: Option<Vec<f64>>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// Writes `rows` (all of width `cols`) as raw doubles plus the sidecar.
pub fn write_array(path: &Path, rows: &[&Tensor], cols: usize, mut meta: ArraySidecar) -> Result<()> {
    let mut bytes = Vec::new();
    let mut n = 0;
    for t in rows {
        if t.cols() != cols {
            return Err(Error::shape("rows of differing width"));
        }
        n += t.rows();
        for v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    meta.shape = [n, cols];
    meta.dtype = "f64-le".into();
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::config(e.to_string()))?;
    fs::write(sidecar_path(path), json + "\n")?;
    Ok(())
}

/// Reads a raw array through its sidecar. Returns `None` for an empty array.
pub fn read_array(path: &Path) -> Result<(ArraySidecar, Option<Tensor>)> {
    let meta: ArraySidecar = serde_json::from_slice(&fs::read(sidecar_path(path))?)
        .map_err(|e| Error::format(0, format!("bad sidecar: {e}")))?;
    if meta.dtype != "f64-le" {
        return Err(Error::format(0, format!("unsupported dtype {}", meta.dtype)));
    }
    let bytes = fs::read(path)?;
    let [n, d] = meta.shape;
    if bytes.len() != n * d * 8 {
        return Err(Error::format(
            bytes.len() as u64,
            format!("expected {} bytes for shape {:?}", n * d * 8, meta.shape),
        ));
    }
    if n == 0 || d == 0 {
        return Ok((meta, None));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((meta, Some(Tensor::matrix(n, d, data)?)))
}

/// Loads a sample matrix: a raw array when `<path>.json` exists, otherwise an IDX image file.
pub fn load_matrix(path: &Path) -> Result<Tensor> {
    if sidecar_path(path).exists() {
        read_array(path)?
            .1
            .ok_or_else(|| Error::format(0, format!("{} is empty", path.display())))
    } else {
        load_idx_images(path)
    }
}
