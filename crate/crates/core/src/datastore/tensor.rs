use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, TribeError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorMeta {
    pub shape: Vec<usize>,
    pub dtype: String,
    pub order: String,
}

impl TensorMeta {
    pub fn f32(shape: &[usize]) -> Self {
        TensorMeta {
            shape: shape.to_vec(),
            dtype: "f32".to_string(),
            order: "row-major".to_string(),
        }
    }

    pub fn num_elements(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

/// Sidecar path for a tensor file: `x/name.f32` -> `x/name.meta.json`.
pub fn meta_path(path: &Path) -> PathBuf {
    let stem = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let base = stem.strip_suffix(".f32").unwrap_or(&stem);
    path.with_file_name(format!("{base}.meta.json"))
}

pub fn write_tensor(path: &Path, shape: &[usize], data: &[f32]) -> Result<()> {
    let expected: usize = shape.iter().product();
    if expected != data.len() {
        return Err(TribeError::Shape(format!(
            "{}: shape {:?} holds {} elements, got {}",
            path.display(),
            shape,
            expected,
            data.len()
        )));
    }
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| TribeError::io(dir, e))?;
        }
    }
    let file = fs::File::create(path).map_err(|e| TribeError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for v in data {
        out.write_all(&v.to_le_bytes())
            .map_err(|e| TribeError::io(path, e))?;
    }
    out.flush().map_err(|e| TribeError::io(path, e))?;

    let meta = meta_path(path);
    let text = serde_json::to_string_pretty(&TensorMeta::f32(shape))
        .map_err(|e| TribeError::json(&meta, e))?;
    fs::write(&meta, text).map_err(|e| TribeError::io(&meta, e))
}

pub fn read_meta(path: &Path) -> Result<TensorMeta> {
    let meta = meta_path(path);
    let text = fs::read_to_string(&meta).map_err(|e| TribeError::io(&meta, e))?;
    let parsed: TensorMeta = serde_json::from_str(&text).map_err(|e| TribeError::json(&meta, e))?;
    if parsed.dtype != "f32" || parsed.order != "row-major" {
        return Err(TribeError::Shape(format!(
            "{}: unsupported dtype/order {}/{}",
            meta.display(),
            parsed.dtype,
            parsed.order
        )));
    }
    Ok(parsed)
}

/// Size in bytes of the raw tensor file.
pub fn tensor_file_len(path: &Path) -> Result<u64> {
    fs::metadata(path)
        .map(|m| m.len())
        .map_err(|e| TribeError::io(path, e))
}

pub fn read_tensor(path: &Path) -> Result<TensorFile> {
    let meta = read_meta(path)?;
    let bytes = fs::read(path).map_err(|e| TribeError::io(path, e))?;
    let expected = meta.num_elements() * 4;
    if bytes.len() != expected {
        return Err(TribeError::Shape(format!(
            "{}: shape {:?} needs {} bytes, file has {}",
            path.display(),
            meta.shape,
            expected,
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(TensorFile {
        shape: meta.shape,
        data,
    })
}
