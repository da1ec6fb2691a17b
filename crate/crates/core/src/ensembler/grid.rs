use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alignment::{LayerAggregation, LayerGroupMode, LayerGroupSpec};
use crate::error::{Result, TribeError};
use crate::trainer::{LossKind, TrainConfig};
use crate::tribenet::{ArchConfig, Fusion};

/// Values each axis may take. The first value of every axis is the base
/// configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Grid {
    pub loss: Vec<LossKind>,
    pub modality_dropout: Vec<f64>,
    pub layer_groups: Vec<Vec<f64>>,
    pub layer_mode: Vec<LayerGroupMode>,
    pub layer_aggregation: Vec<LayerAggregation>,
    pub modality_aggregation: Vec<Fusion>,
    pub use_subject_embedding: Vec<bool>,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            loss: LossKind::ALL.to_vec(),
            modality_dropout: vec![0.2, 0.0, 0.4],
            layer_groups: vec![
                vec![0.5, 0.75, 1.0],
                vec![0.0, 0.5, 1.0],
                vec![0.5, 1.0],
                vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
            ],
            layer_mode: vec![LayerGroupMode::GroupByIntervals, LayerGroupMode::SingleLayers],
            layer_aggregation: vec![LayerAggregation::Concatenate, LayerAggregation::Average],
            modality_aggregation: vec![Fusion::Concatenate, Fusion::Average],
            use_subject_embedding: vec![true, false],
        }
    }
}

impl Grid {
    /// Number of values per axis, in declaration order.
    pub fn axis_sizes(&self) -> [usize; 7] {
        [
            self.loss.len(),
            self.modality_dropout.len(),
            self.layer_groups.len(),
            self.layer_mode.len(),
            self.layer_aggregation.len(),
            self.modality_aggregation.len(),
            self.use_subject_embedding.len(),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.axis_sizes().contains(&0) {
            return Err(TribeError::InvalidConfig("every grid axis needs at least one value".into()));
        }
        Ok(())
    }

    /// Resolves per-axis indices into a draw.
    pub fn draw(&self, idx: [usize; 7]) -> GridDraw {
        GridDraw {
            indices: idx,
            loss: self.loss[idx[0]],
            modality_dropout: self.modality_dropout[idx[1]],
            layer_groups: self.layer_groups[idx[2]].clone(),
            layer_mode: self.layer_mode[idx[3]],
            layer_aggregation: self.layer_aggregation[idx[4]],
            modality_aggregation: self.modality_aggregation[idx[5]],
            use_subject_embedding: self.use_subject_embedding[idx[6]],
        }
    }
}

/// One point of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDraw {
    pub indices: [usize; 7],
    pub loss: LossKind,
    pub modality_dropout: f64,
    pub layer_groups: Vec<f64>,
    pub layer_mode: LayerGroupMode,
    pub layer_aggregation: LayerAggregation,
    pub modality_aggregation: Fusion,
    pub use_subject_embedding: bool,
}

impl GridDraw {
    /// Overrides the grid-controlled fields of the base configurations.
    pub fn apply(&self, arch: &ArchConfig, train: &TrainConfig, seed: u64) -> (ArchConfig, TrainConfig) {
        let arch = ArchConfig {
            modality_aggregation: self.modality_aggregation,
            use_subject_embedding: self.use_subject_embedding,
            layer_groups: LayerGroupSpec {
                anchors: self.layer_groups.clone(),
                mode: self.layer_mode,
                aggregation: self.layer_aggregation,
            },
            ..arch.clone()
        };
        let train = TrainConfig {
            loss: self.loss,
            modality_dropout_p: self.modality_dropout,
            seed,
            ..train.clone()
        };
        (arch, train)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub num_models: usize,
    pub temperature: f64,
    pub grid: Grid,
    pub seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            num_models: 8,
            temperature: 0.3,
            grid: Grid::default(),
            seed: 0,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_models == 0 {
            return Err(TribeError::InvalidConfig("num_models must be at least 1".into()));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(TribeError::InvalidConfig(format!(
                "temperature {} must be positive",
                self.temperature
            )));
        }
        self.grid.validate()
    }

    /// Training seed of member `i`.
    pub fn member_seed(&self, i: usize) -> u64 {
        self.seed.wrapping_mul(1_000_003).wrapping_add(i as u64)
    }
}

/// Member 0 is the base configuration; the others are independent uniform
/// draws over the grid, reproducible from `config.seed`.
pub fn sample_grid(config: &EnsembleConfig) -> Result<Vec<GridDraw>> {
    config.validate()?;
    let sizes = config.grid.axis_sizes();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut draws = vec![config.grid.draw([0; 7])];
    for _ in 1..config.num_models {
        let idx = sizes.map(|n| rng.random_range(0..n));
        draws.push(config.grid.draw(idx));
    }
    Ok(draws)
}
