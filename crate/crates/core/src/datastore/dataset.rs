use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::{Array2, Array3};

use super::tensor::{read_tensor, write_tensor};
use super::zscore::zscore_columns;
use super::{save_manifest, BoldMeta, DatasetManifest, Modality, ModalityMeta, Split};
use crate::error::{Result, TribeError};

/// Layer-stacked embeddings of one modality over one stimulus.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSeries {
    /// `[T_feat, L_m, D_m]`
    pub data: Array3<f32>,
    pub meta: ModalityMeta,
    pub session_id: String,
}

/// Parcel responses of one session, `[T_tr, P]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoldSeries {
    pub data: Array2<f32>,
    pub meta: BoldMeta,
    pub session_id: String,
    pub subject_id: String,
}

/// A manifest together with every series it references, held in memory.
///
/// Sessions that share a feature file (the same stimulus seen by several
/// subjects) share one `EmbeddingSeries`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    /// Indexed like `manifest.sessions`.
    pub features: Vec<BTreeMap<Modality, Arc<EmbeddingSeries>>>,
    /// Indexed like `manifest.sessions`; z-scored per session.
    pub bold: Vec<Option<Arc<BoldSeries>>>,
}

impl Dataset {
    /// Loads every referenced tensor and z-scores each BOLD session.
    pub fn load(manifest: DatasetManifest) -> Result<Dataset> {
        let mut cache: HashMap<PathBuf, Arc<EmbeddingSeries>> = HashMap::new();
        let mut features = Vec::with_capacity(manifest.sessions.len());
        let mut bold = Vec::with_capacity(manifest.sessions.len());
        for session in &manifest.sessions {
            let mut per_modality = BTreeMap::new();
            for (&modality, rel) in &session.features {
                let path = manifest.resolve(rel);
                if let Some(series) = cache.get(&path) {
                    per_modality.insert(modality, series.clone());
                    continue;
                }
                let meta = manifest
                    .modality(modality)
                    .cloned()
                    .ok_or_else(|| TribeError::InvalidManifest(format!("undeclared modality {modality}")))?;
                let data = load_array3(&path, &session.session_id)?;
                let series = Arc::new(EmbeddingSeries {
                    data,
                    meta,
                    session_id: session.session_id.clone(),
                });
                cache.insert(path, series.clone());
                per_modality.insert(modality, series);
            }
            features.push(per_modality);

            let series = match &session.bold {
                Some(rel) => {
                    let path = manifest.resolve(rel);
                    let mut data = load_array2(&path, &session.session_id)?;
                    let constant = zscore_columns(&mut data)?;
                    if !constant.is_empty() {
                        log::warn!(
                            "session {}: {} constant parcel column(s) z-scored to zero",
                            session.session_id,
                            constant.len()
                        );
                    }
                    Some(Arc::new(BoldSeries {
                        data,
                        meta: manifest.bold,
                        session_id: session.session_id.clone(),
                        subject_id: session.subject_id.clone(),
                    }))
                }
                None => None,
            };
            bold.push(series);
        }
        Ok(Dataset {
            manifest,
            features,
            bold,
        })
    }

    pub fn load_path(path: &Path) -> Result<Dataset> {
        Dataset::load(super::load_manifest(path)?)
    }

    /// Writes every series at the paths named by the manifest (relative to
    /// `dir`) and then `dir/manifest.json`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let mut written = std::collections::HashSet::new();
        for (i, session) in self.manifest.sessions.iter().enumerate() {
            for (modality, rel) in &session.features {
                let path = dir.join(rel);
                if written.insert(path.clone()) {
                    let series = &self.features[i][modality];
                    let shape = series.data.shape().to_vec();
                    let data: Vec<f32> = series.data.iter().copied().collect();
                    write_tensor(&path, &shape, &data)?;
                }
            }
            if let (Some(rel), Some(series)) = (&session.bold, &self.bold[i]) {
                let shape = series.data.shape().to_vec();
                let data: Vec<f32> = series.data.iter().copied().collect();
                write_tensor(&dir.join(rel), &shape, &data)?;
            }
        }
        let path = dir.join("manifest.json");
        save_manifest(&self.manifest, &path)?;
        Ok(path)
    }

    pub fn session_indices(&self, split: Split) -> Vec<usize> {
        self.manifest
            .sessions
            .iter()
            .enumerate()
            .filter(|(_, s)| s.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    /// Same data, with split labels taken from `manifest` (which must list the
    /// same sessions in the same order).
    pub fn with_manifest(&self, manifest: DatasetManifest) -> Result<Dataset> {
        let same = manifest.sessions.len() == self.manifest.sessions.len()
            && manifest
                .sessions
                .iter()
                .zip(&self.manifest.sessions)
                .all(|(a, b)| a.session_id == b.session_id);
        if !same {
            return Err(TribeError::InvalidManifest(
                "replacement manifest lists different sessions".into(),
            ));
        }
        Ok(Dataset {
            manifest,
            features: self.features.clone(),
            bold: self.bold.clone(),
        })
    }
}

fn load_array3(path: &Path, session: &str) -> Result<Array3<f32>> {
    let t = read_tensor(path)?;
    check_finite(&t.data, path, session)?;
    match t.shape.as_slice() {
        &[a, b, c] => Array3::from_shape_vec((a, b, c), t.data)
            .map_err(|e| TribeError::Shape(e.to_string())),
        other => Err(TribeError::ShapeMismatch {
            session: session.to_string(),
            detail: format!("{}: expected rank-3 features, got {:?}", path.display(), other),
        }),
    }
}

fn load_array2(path: &Path, session: &str) -> Result<Array2<f32>> {
    let t = read_tensor(path)?;
    check_finite(&t.data, path, session)?;
    match t.shape.as_slice() {
        &[a, b] => {
            Array2::from_shape_vec((a, b), t.data).map_err(|e| TribeError::Shape(e.to_string()))
        }
        other => Err(TribeError::ShapeMismatch {
            session: session.to_string(),
            detail: format!("{}: expected rank-2 BOLD, got {:?}", path.display(), other),
        }),
    }
}

fn check_finite(data: &[f32], path: &Path, session: &str) -> Result<()> {
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(TribeError::ShapeMismatch {
            session: session.to_string(),
            detail: format!("{}: non-finite value at flat index {i}", path.display()),
        });
    }
    Ok(())
}
