//! On-disk dataset: manifests, binary tensors, per-session z-scoring and
//! train/validation splits.
//!
//! A dataset directory holds a `manifest.json` and, for every tensor, a pair
//! of files `<name>.f32` (little-endian 32-bit floats, row-major) and
//! `<name>.meta.json` (`{"shape": [..], "dtype": "f32", "order": "row-major"}`).
//! Paths inside the manifest are relative to the manifest's directory.
//!
//! Each session's BOLD matrix is z-scored on its own statistics, including
//! validation sessions. No statistics are shared across sessions.

mod dataset;
mod manifest;
mod split;
mod tensor;
pub(crate) mod zscore;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use dataset::{BoldSeries, Dataset, EmbeddingSeries};
pub use manifest::{load_manifest, save_manifest, validate_manifest};
pub use split::make_split;
pub use tensor::{meta_path, read_tensor, tensor_file_len, write_tensor, TensorFile, TensorMeta};
pub use zscore::{zscore_session, ZScoreReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Audio,
    Video,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Text, Modality::Audio, Modality::Video];

    pub fn name(self) -> &'static str {
        match self {
            Modality::Text => "text",
            Modality::Audio => "audio",
            Modality::Video => "video",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Modality::Text => 0,
            Modality::Audio => 1,
            Modality::Video => 2,
        }
    }

    pub fn parse(s: &str) -> Option<Modality> {
        match s {
            "text" => Some(Modality::Text),
            "audio" => Some(Modality::Audio),
            "video" => Some(Modality::Video),
            _ => None,
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityMeta {
    #[serde(rename = "name")]
    pub modality: Modality,
    pub dim: usize,
    pub num_layers: usize,
    pub frequency_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoldMeta {
    pub num_parcels: usize,
    pub tr_seconds: f64,
}

impl Default for BoldMeta {
    fn default() -> Self {
        BoldMeta {
            num_parcels: 1000,
            tr_seconds: 1.49,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub subject_id: String,
    pub video_id: String,
    pub split: Split,
    pub features: BTreeMap<Modality, PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bold: Option<PathBuf>,
    pub num_trs: usize,
    pub num_feature_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub modalities: Vec<ModalityMeta>,
    pub bold: BoldMeta,
    pub subjects: Vec<String>,
    pub sessions: Vec<SessionRecord>,
    /// Directory that relative paths resolve against.
    #[serde(skip)]
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn modality(&self, modality: Modality) -> Option<&ModalityMeta> {
        self.modalities.iter().find(|m| m.modality == modality)
    }

    /// Common feature frequency. Validation guarantees all modalities agree.
    pub fn frequency_hz(&self) -> f64 {
        self.modalities.first().map(|m| m.frequency_hz).unwrap_or(2.0)
    }

    pub fn subject_index(&self, subject_id: &str) -> Option<usize> {
        self.subjects.iter().position(|s| s == subject_id)
    }

    pub fn sessions_in(&self, split: Split) -> impl Iterator<Item = &SessionRecord> {
        self.sessions.iter().filter(move |s| s.split == split)
    }

    pub fn resolve(&self, path: &std::path::Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.root.join(path)
        }
    }
}
