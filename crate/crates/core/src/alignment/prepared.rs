use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use ndarray::Array2;

use super::{group_layers, LayerGroupSpec};
use crate::datastore::{Dataset, EmbeddingSeries, Modality, Split};
use crate::error::{Result, TribeError};

/// One session with layer-grouped features, ready for window extraction.
#[derive(Debug, Clone)]
pub struct PreparedSession {
    pub session_id: String,
    pub subject_index: usize,
    pub video_id: String,
    pub split: Split,
    pub num_trs: usize,
    /// `[T_feat, G_m]` per modality.
    pub features: BTreeMap<Modality, Arc<Array2<f32>>>,
    /// Z-scored `[T_tr, P]`.
    pub bold: Option<Arc<Array2<f32>>>,
}

/// A dataset whose features have been compressed with one layer-group spec.
#[derive(Debug, Clone)]
pub struct PreparedDataset {
    pub sessions: Vec<PreparedSession>,
    pub subjects: Vec<String>,
    pub num_parcels: usize,
    pub tr_seconds: f64,
    pub frequency_hz: f64,
    /// Grouped feature width per modality.
    pub input_dims: BTreeMap<Modality, usize>,
    pub layer_groups: LayerGroupSpec,
}

impl PreparedDataset {
    pub fn new(dataset: &Dataset, spec: &LayerGroupSpec) -> Result<PreparedDataset> {
        let manifest = &dataset.manifest;
        let mut input_dims = BTreeMap::new();
        for m in &manifest.modalities {
            input_dims.insert(m.modality, spec.output_dim(m.num_layers, m.dim)?);
        }
        let mut grouped: HashMap<*const EmbeddingSeries, Arc<Array2<f32>>> = HashMap::new();
        let mut sessions = Vec::with_capacity(manifest.sessions.len());
        for (i, record) in manifest.sessions.iter().enumerate() {
            let subject_index = manifest.subject_index(&record.subject_id).ok_or_else(|| {
                TribeError::InvalidManifest(format!(
                    "session {}: unknown subject {}",
                    record.session_id, record.subject_id
                ))
            })?;
            let mut features = BTreeMap::new();
            for (&modality, series) in &dataset.features[i] {
                let key = Arc::as_ptr(series);
                let g = match grouped.get(&key) {
                    Some(g) => g.clone(),
                    None => {
                        let g = Arc::new(group_layers(series.data.view(), spec)?);
                        grouped.insert(key, g.clone());
                        g
                    }
                };
                features.insert(modality, g);
            }
            sessions.push(PreparedSession {
                session_id: record.session_id.clone(),
                subject_index,
                video_id: record.video_id.clone(),
                split: record.split,
                num_trs: record.num_trs,
                features,
                bold: dataset.bold[i].as_ref().map(|b| Arc::new(b.data.clone())),
            });
        }
        Ok(PreparedDataset {
            sessions,
            subjects: manifest.subjects.clone(),
            num_parcels: manifest.bold.num_parcels,
            tr_seconds: manifest.bold.tr_seconds,
            frequency_hz: manifest.frequency_hz(),
            input_dims,
            layer_groups: spec.clone(),
        })
    }

    pub fn split(&self, split: Split) -> Vec<&PreparedSession> {
        self.sessions.iter().filter(|s| s.split == split).collect()
    }

    pub fn num_subjects(&self) -> usize {
        self.subjects.len()
    }

    /// Keeps only sessions accepted by `keep`.
    pub fn filtered(&self, keep: impl Fn(&PreparedSession) -> bool) -> PreparedDataset {
        PreparedDataset {
            sessions: self.sessions.iter().filter(|s| keep(s)).cloned().collect(),
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> PreparedDataset {
        PreparedDataset {
            sessions: Vec::new(),
            subjects: self.subjects.clone(),
            num_parcels: self.num_parcels,
            tr_seconds: self.tr_seconds,
            frequency_hz: self.frequency_hz,
            input_dims: self.input_dims.clone(),
            layer_groups: self.layer_groups.clone(),
        }
    }
}
