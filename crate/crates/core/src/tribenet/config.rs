use serde::{Deserialize, Serialize};

use crate::alignment::{LayerGroupSpec, PreparedDataset, WindowConfig};
use crate::datastore::Modality;
use crate::error::{Result, TribeError};

/// How per-modality projections are fused into one token per time step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    /// `[F, M·D]`
    Concatenate,
    /// `[F, D]`
    Average,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModalityInput {
    pub modality: Modality,
    /// Width of the layer-grouped feature fed to the projection.
    pub input_dim: usize,
}

/// Architecture choices that do not depend on the dataset. Combined with a
/// prepared dataset they yield a [`NetConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchConfig {
    pub proj_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub feedforward_mult: usize,
    pub modality_aggregation: Fusion,
    pub use_subject_embedding: bool,
    pub window: WindowConfig,
    pub layer_groups: LayerGroupSpec,
    /// Restricts the inputs; all dataset modalities when absent.
    pub modalities: Option<Vec<Modality>>,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            proj_dim: 1024,
            num_layers: 8,
            num_heads: 8,
            feedforward_mult: 4,
            modality_aggregation: Fusion::Concatenate,
            use_subject_embedding: true,
            window: WindowConfig::default(),
            layer_groups: LayerGroupSpec::default(),
            modalities: None,
        }
    }
}

impl ArchConfig {
    /// `data` must have been prepared with `self.layer_groups`.
    pub fn build(&self, data: &PreparedDataset) -> Result<NetConfig> {
        if data.layer_groups != self.layer_groups {
            return Err(TribeError::InvalidConfig(
                "dataset was prepared with different layer groups".into(),
            ));
        }
        let mut cfg = NetConfig::for_dataset(data, self.proj_dim, self.num_layers, self.num_heads, self.window);
        cfg.feedforward_mult = self.feedforward_mult;
        cfg.modality_aggregation = self.modality_aggregation;
        cfg.use_subject_embedding = self.use_subject_embedding;
        if let Some(keep) = &self.modalities {
            cfg = cfg.with_modalities(keep);
        }
        let cfg = cfg.with_derived_hidden();
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub proj_dim: usize,
    /// Transformer depth; 0 replaces the encoder with the identity.
    pub num_layers: usize,
    pub num_heads: usize,
    pub hidden_size: usize,
    pub feedforward_mult: usize,
    pub num_parcels: usize,
    pub num_subjects: usize,
    pub modality_aggregation: Fusion,
    pub use_subject_embedding: bool,
    pub window: WindowConfig,
    pub layer_groups: LayerGroupSpec,
    pub modalities: Vec<ModalityInput>,
}

impl NetConfig {
    /// Full-scale architecture for a given dataset (D = 1024, 8 layers,
    /// 8 heads, hidden 3072 under concatenation).
    pub fn base(data: &PreparedDataset) -> NetConfig {
        NetConfig::for_dataset(data, 1024, 8, 8, WindowConfig::default())
    }

    pub fn for_dataset(
        data: &PreparedDataset,
        proj_dim: usize,
        num_layers: usize,
        num_heads: usize,
        window: WindowConfig,
    ) -> NetConfig {
        let modalities = data
            .input_dims
            .iter()
            .map(|(&modality, &input_dim)| ModalityInput {
                modality,
                input_dim,
            })
            .collect();
        NetConfig {
            proj_dim,
            num_layers,
            num_heads,
            hidden_size: 0,
            feedforward_mult: 4,
            num_parcels: data.num_parcels,
            num_subjects: data.num_subjects(),
            modality_aggregation: Fusion::Concatenate,
            use_subject_embedding: true,
            window: WindowConfig {
                tr_seconds: data.tr_seconds,
                frequency_hz: data.frequency_hz,
                ..window
            },
            layer_groups: data.layer_groups.clone(),
            modalities,
        }
        .with_derived_hidden()
    }

    /// Sets `hidden_size` from the fusion mode and number of modalities.
    pub fn with_derived_hidden(mut self) -> NetConfig {
        self.hidden_size = match self.modality_aggregation {
            Fusion::Concatenate => self.proj_dim * self.modalities.len(),
            Fusion::Average => self.proj_dim,
        };
        self
    }

    /// Restricts the inputs to `keep`, preserving order.
    pub fn with_modalities(mut self, keep: &[Modality]) -> NetConfig {
        self.modalities.retain(|m| keep.contains(&m.modality));
        self.with_derived_hidden()
    }

    pub fn feature_steps(&self) -> usize {
        self.window.feature_steps()
    }

    pub fn ff_width(&self) -> usize {
        self.feedforward_mult * self.hidden_size
    }

    pub fn active_modalities(&self) -> Vec<Modality> {
        self.modalities.iter().map(|m| m.modality).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(TribeError::InvalidConfig(msg));
        if self.modalities.is_empty() {
            return bad("at least one modality is required".into());
        }
        for (i, m) in self.modalities.iter().enumerate() {
            if m.input_dim == 0 {
                return bad(format!("modality {} has zero input width", m.modality));
            }
            if self.modalities[..i].iter().any(|o| o.modality == m.modality) {
                return bad(format!("modality {} listed twice", m.modality));
            }
        }
        if self.proj_dim == 0 || self.num_parcels == 0 || self.num_subjects == 0 {
            return bad("proj_dim, num_parcels and num_subjects must be positive".into());
        }
        if self.num_layers > 0 {
            if self.num_heads == 0 || self.hidden_size % self.num_heads != 0 {
                return bad(format!(
                    "hidden size {} is not divisible by {} heads",
                    self.hidden_size, self.num_heads
                ));
            }
            if self.feedforward_mult == 0 {
                return bad("feedforward_mult must be positive".into());
            }
        }
        let expected = match self.modality_aggregation {
            Fusion::Concatenate => self.proj_dim * self.modalities.len(),
            Fusion::Average => self.proj_dim,
        };
        if self.hidden_size != expected {
            return bad(format!(
                "hidden size {} does not match {:?} fusion of {} x {}",
                self.hidden_size,
                self.modality_aggregation,
                self.modalities.len(),
                self.proj_dim
            ));
        }
        self.window.validate()?;
        self.layer_groups.validate()
    }
}

/// Closed-form parameter count.
pub fn count_params(config: &NetConfig) -> usize {
    let d = config.proj_dim;
    let h = config.hidden_size;
    let ff = config.ff_width();
    let s = config.num_subjects;
    let p = config.num_parcels;

    let projections: usize = config
        .modalities
        .iter()
        .map(|m| m.input_dim * d + d + 2 * d)
        .sum();
    let positional = config.feature_steps() * h;
    let subject = if config.use_subject_embedding { s * h } else { 0 };
    let per_block = 2 * h + 4 * (h * h + h) + 2 * h + (h * ff + ff) + (ff * h + h);
    let final_norm = if config.num_layers > 0 { 2 * h } else { 0 };
    let readout = s * (h * p + p);
    projections + positional + subject + config.num_layers * per_block + final_norm + readout
}
