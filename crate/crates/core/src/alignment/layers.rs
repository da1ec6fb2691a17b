use ndarray::{s, Array2, ArrayView3};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TribeError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerGroupMode {
    GroupByIntervals,
    SingleLayers,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerAggregation {
    Concatenate,
    Average,
}

/// How the hidden layers of a feature model are compressed.
///
/// Anchors are fractional depths. In `GroupByIntervals` mode, anchor `a_k`
/// closes the group of 1-based layers `(round(a_{k-1}·L), round(a_k·L)]`
/// (with `a_0 = 0`), and an anchor of exactly 0 stands for the first stored
/// layer (the embedding output) as a group of its own. In `SingleLayers` mode
/// each anchor selects the 0-based layer `round(a·(L-1))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayerGroupSpec {
    pub anchors: Vec<f64>,
    pub mode: LayerGroupMode,
    pub aggregation: LayerAggregation,
}

impl Default for LayerGroupSpec {
    fn default() -> Self {
        LayerGroupSpec {
            anchors: vec![0.5, 0.75, 1.0],
            mode: LayerGroupMode::GroupByIntervals,
            aggregation: LayerAggregation::Concatenate,
        }
    }
}

impl LayerGroupSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| {
            Err(TribeError::InvalidConfig(format!(
                "layer anchors {:?}: {msg}",
                self.anchors
            )))
        };
        if self.anchors.is_empty() {
            return bad("must not be empty");
        }
        if self.anchors.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return bad("must lie in [0, 1]");
        }
        if self.anchors.windows(2).any(|w| w[1] <= w[0]) {
            return bad("must be strictly ascending");
        }
        if self.mode == LayerGroupMode::GroupByIntervals && *self.anchors.last().unwrap() != 1.0 {
            return bad("interval grouping must end at 1");
        }
        Ok(())
    }

    /// 0-based layer indices making up each group.
    pub fn groups(&self, num_layers: usize) -> Result<Vec<Vec<usize>>> {
        self.validate()?;
        if num_layers == 0 {
            return Err(TribeError::InvalidConfig("num_layers must be positive".into()));
        }
        let round = |x: f64| x.round_ties_even() as usize;
        match self.mode {
            LayerGroupMode::SingleLayers => Ok(self
                .anchors
                .iter()
                .map(|&a| vec![round(a * (num_layers - 1) as f64)])
                .collect()),
            LayerGroupMode::GroupByIntervals => {
                let mut consumed = 0usize;
                let mut groups = Vec::with_capacity(self.anchors.len());
                for &a in &self.anchors {
                    let hi = if a == 0.0 { 1 } else { round(a * num_layers as f64) };
                    if hi <= consumed {
                        return Err(TribeError::EmptyLayerGroup {
                            anchors: self.anchors.clone(),
                            num_layers,
                        });
                    }
                    groups.push((consumed..hi).collect());
                    consumed = hi;
                }
                Ok(groups)
            }
        }
    }

    /// Width of the flattened per-step feature after grouping.
    pub fn output_dim(&self, num_layers: usize, dim: usize) -> Result<usize> {
        let groups = self.groups(num_layers)?;
        Ok(match self.aggregation {
            LayerAggregation::Concatenate => groups.len() * dim,
            LayerAggregation::Average => dim,
        })
    }
}

/// Averages layers within each group, then concatenates the groups into
/// `[T, groups·D]` or averages them into `[T, D]`.
pub fn group_layers(series: ArrayView3<f32>, spec: &LayerGroupSpec) -> Result<Array2<f32>> {
    let (steps, num_layers, dim) = series.dim();
    let groups = spec.groups(num_layers)?;
    let mut group_means = Vec::with_capacity(groups.len());
    for layers in &groups {
        let mut acc = Array2::<f32>::zeros((steps, dim));
        for &l in layers {
            acc += &series.slice(s![.., l, ..]);
        }
        acc /= layers.len() as f32;
        group_means.push(acc);
    }
    Ok(match spec.aggregation {
        LayerAggregation::Concatenate => {
            let mut out = Array2::<f32>::zeros((steps, groups.len() * dim));
            for (g, m) in group_means.iter().enumerate() {
                out.slice_mut(s![.., g * dim..(g + 1) * dim]).assign(m);
            }
            out
        }
        LayerAggregation::Average => {
            let mut out = Array2::<f32>::zeros((steps, dim));
            for m in &group_means {
                out += m;
            }
            out /= group_means.len() as f32;
            out
        }
    })
}
