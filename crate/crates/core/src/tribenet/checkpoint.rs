use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{NetConfig, ParamSpec, Real, TribeNet};
use crate::error::{Result, TribeError};

const FORMAT: &str = "tribe-checkpoint-v1";

/// Sidecar describing a checkpoint blob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: String,
    pub config: NetConfig,
    pub dtype: String,
    pub order: String,
    pub blob: String,
    pub total: usize,
    pub params: Vec<ParamSpec>,
}

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    let name = stem
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "checkpoint".into());
    (
        stem.with_file_name(format!("{name}.json")),
        stem.with_file_name(format!("{name}.f32")),
    )
}

/// Writes `<stem>.json` and `<stem>.f32` (little-endian f32).
pub fn save_checkpoint<T: Real>(net: &TribeNet<T>, stem: &Path) -> Result<PathBuf> {
    let (json_path, blob_path) = paths(stem);
    if let Some(dir) = json_path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| TribeError::io(dir, e))?;
        }
    }
    let meta = CheckpointMeta {
        format: FORMAT.to_string(),
        config: net.config().clone(),
        dtype: "f32".into(),
        order: "row-major".into(),
        blob: blob_path
            .file_name()
            .unwrap()
            .to_string_lossy()
            .into_owned(),
        total: net.num_params(),
        params: net.layout().specs.clone(),
    };
    let mut bytes = Vec::with_capacity(net.num_params() * 4);
    for v in net.params() {
        bytes.extend_from_slice(&v.to_f32().unwrap().to_le_bytes());
    }
    fs::write(&blob_path, bytes).map_err(|e| TribeError::io(&blob_path, e))?;
    let text = serde_json::to_string_pretty(&meta).map_err(|e| TribeError::json(&json_path, e))?;
    fs::write(&json_path, text).map_err(|e| TribeError::io(&json_path, e))?;
    Ok(json_path)
}

/// Loads a checkpoint from its stem or from its `.json` sidecar path.
pub fn load_checkpoint(path: &Path) -> Result<TribeNet<f32>> {
    let stem = match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("f32") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let (json_path, _) = paths(&stem);
    let text = fs::read_to_string(&json_path).map_err(|e| TribeError::io(&json_path, e))?;
    let meta: CheckpointMeta =
        serde_json::from_str(&text).map_err(|e| TribeError::json(&json_path, e))?;
    if meta.format != FORMAT || meta.dtype != "f32" {
        return Err(TribeError::Checkpoint(format!(
            "{}: unsupported format {} / dtype {}",
            json_path.display(),
            meta.format,
            meta.dtype
        )));
    }
    let blob_path = json_path.with_file_name(&meta.blob);
    let bytes = fs::read(&blob_path).map_err(|e| TribeError::io(&blob_path, e))?;
    if bytes.len() != meta.total * 4 {
        return Err(TribeError::Checkpoint(format!(
            "{}: {} bytes for {} parameters",
            blob_path.display(),
            bytes.len(),
            meta.total
        )));
    }
    let params: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let net = TribeNet::from_params(&meta.config, params)?;
    if net.layout().specs != meta.params {
        return Err(TribeError::Checkpoint(format!(
            "{}: parameter registry does not match the architecture",
            json_path.display()
        )));
    }
    Ok(net)
}
