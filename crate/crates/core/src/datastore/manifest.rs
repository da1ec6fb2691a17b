use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use super::tensor::{read_meta, tensor_file_len};
use super::{DatasetManifest, SessionRecord, Split};
use crate::error::{Result, TribeError};

/// Parses and fully validates a manifest, including the tensor files it
/// references.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| TribeError::io(path, e))?;
    let mut manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| TribeError::json(path, e))?;
    manifest.root = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    validate_manifest(&manifest, true)?;
    Ok(manifest)
}

pub fn save_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest).map_err(|e| TribeError::json(path, e))?;
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| TribeError::io(dir, e))?;
        }
    }
    fs::write(path, text).map_err(|e| TribeError::io(path, e))
}

/// Checks every manifest invariant. With `check_files`, each referenced
/// tensor must exist and its sidecar shape must agree with both the manifest
/// and the byte length of the file.
pub fn validate_manifest(manifest: &DatasetManifest, check_files: bool) -> Result<()> {
    if manifest.modalities.is_empty() {
        return Err(TribeError::InvalidManifest("no modalities declared".into()));
    }
    let mut seen_modalities = HashSet::new();
    let frequency = manifest.modalities[0].frequency_hz;
    for m in &manifest.modalities {
        if !seen_modalities.insert(m.modality) {
            return Err(TribeError::InvalidManifest(format!(
                "modality {} declared twice",
                m.modality
            )));
        }
        if m.dim == 0 || m.num_layers == 0 {
            return Err(TribeError::InvalidManifest(format!(
                "modality {}: dim and num_layers must be positive",
                m.modality
            )));
        }
        if !(m.frequency_hz > 0.0) || m.frequency_hz != frequency {
            return Err(TribeError::InvalidManifest(format!(
                "modality {}: frequency {} Hz differs from {} Hz",
                m.modality, m.frequency_hz, frequency
            )));
        }
    }
    if manifest.bold.num_parcels == 0 || !(manifest.bold.tr_seconds > 0.0) {
        return Err(TribeError::InvalidManifest(
            "bold: num_parcels and tr_seconds must be positive".into(),
        ));
    }

    let mut subjects = HashSet::new();
    for s in &manifest.subjects {
        if !subjects.insert(s.as_str()) {
            return Err(TribeError::InvalidManifest(format!("duplicate subject id {s}")));
        }
    }

    let mut session_ids = HashSet::new();
    let mut video_split: BTreeMap<&str, (Split, &str)> = BTreeMap::new();
    for session in &manifest.sessions {
        if !session_ids.insert(session.session_id.as_str()) {
            return Err(TribeError::DuplicateSession(session.session_id.clone()));
        }
        if !subjects.contains(session.subject_id.as_str()) {
            return Err(TribeError::InvalidManifest(format!(
                "session {}: unknown subject {}",
                session.session_id, session.subject_id
            )));
        }
        match video_split.get(session.video_id.as_str()) {
            Some(&(split, _)) if split != session.split => {
                return Err(TribeError::SplitLeakage {
                    session: session.session_id.clone(),
                    video: session.video_id.clone(),
                    first: split.to_string(),
                    second: session.split.to_string(),
                });
            }
            Some(_) => {}
            None => {
                video_split.insert(&session.video_id, (session.split, &session.session_id));
            }
        }
        check_session(manifest, session, frequency, check_files)?;
    }
    Ok(())
}

fn check_session(
    manifest: &DatasetManifest,
    session: &SessionRecord,
    frequency: f64,
    check_files: bool,
) -> Result<()> {
    let id = &session.session_id;
    let mismatch = |detail: String| TribeError::ShapeMismatch {
        session: id.clone(),
        detail,
    };
    let min_steps = (session.num_trs as f64 * manifest.bold.tr_seconds * frequency - 1e-9).ceil()
        as usize;
    if session.num_feature_steps + 1 < min_steps {
        return Err(mismatch(format!(
            "{} feature steps cannot cover {} TRs (need at least {})",
            session.num_feature_steps,
            session.num_trs,
            min_steps.saturating_sub(1)
        )));
    }
    for m in &manifest.modalities {
        if !session.features.contains_key(&m.modality) {
            return Err(mismatch(format!("no feature file for modality {}", m.modality)));
        }
    }
    for (modality, rel) in &session.features {
        let meta = manifest.modality(*modality).ok_or_else(|| {
            mismatch(format!("feature file for undeclared modality {modality}"))
        })?;
        if check_files {
            let expected = [session.num_feature_steps, meta.num_layers, meta.dim];
            check_file(manifest, id, rel, &expected)?;
        }
    }
    if let (Some(rel), true) = (&session.bold, check_files) {
        let expected = [session.num_trs, manifest.bold.num_parcels];
        check_file(manifest, id, rel, &expected)?;
    }
    Ok(())
}

fn check_file(manifest: &DatasetManifest, session: &str, rel: &Path, expected: &[usize]) -> Result<()> {
    let path = manifest.resolve(rel);
    if !path.exists() {
        return Err(TribeError::MissingFile {
            session: session.to_string(),
            path,
        });
    }
    let meta = read_meta(&path).map_err(|e| TribeError::ShapeMismatch {
        session: session.to_string(),
        detail: e.to_string(),
    })?;
    if meta.shape != expected {
        return Err(TribeError::ShapeMismatch {
            session: session.to_string(),
            detail: format!(
                "{}: sidecar shape {:?}, manifest implies {:?}",
                rel.display(),
                meta.shape,
                expected
            ),
        });
    }
    let bytes = tensor_file_len(&path)?;
    let needed = meta.num_elements() as u64 * 4;
    if bytes != needed {
        return Err(TribeError::ShapeMismatch {
            session: session.to_string(),
            detail: format!(
                "{}: shape {:?} needs {} bytes, file has {}",
                rel.display(),
                meta.shape,
                needed,
                bytes
            ),
        });
    }
    Ok(())
}
