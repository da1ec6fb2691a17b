use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::alignment::PreparedDataset;
use crate::datastore::{read_tensor, write_tensor, Split};
use crate::error::{Result, TribeError};
use crate::evaluator::{score_predictions, ScoreMeta, ScoreTable, SessionPrediction};

/// Per-parcel blending weights, `[M, P]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleWeights {
    pub weights: Array2<f64>,
    pub member_ids: Vec<String>,
    pub temperature: f64,
    /// Split the weights were fitted on.
    pub fit_split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct WeightsMeta {
    member_ids: Vec<String>,
    temperature: f64,
    fit_split: Split,
}

/// Column-wise softmax of `val_scores / temperature`. Non-finite scores get
/// zero weight; a parcel with no finite score is weighted uniformly.
pub fn fit_weights(val_scores: ArrayView2<f64>, temperature: f64) -> Result<Array2<f64>> {
    if !(temperature > 0.0) {
        return Err(TribeError::InvalidConfig(format!(
            "temperature {temperature} must be positive"
        )));
    }
    let (m, p) = val_scores.dim();
    if m == 0 {
        return Err(TribeError::Shape("no ensemble members".into()));
    }
    let mut w = Array2::<f64>::zeros((m, p));
    for (col, mut out) in val_scores.columns().into_iter().zip(w.columns_mut()) {
        let max = col
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            out.fill(1.0 / m as f64);
            continue;
        }
        let mut z = 0.0;
        for (o, &s) in out.iter_mut().zip(col) {
            *o = if s.is_finite() {
                ((s - max) / temperature).exp()
            } else {
                0.0
            };
            z += *o;
        }
        out.mapv_inplace(|v| v / z);
    }
    Ok(w)
}

impl EnsembleWeights {
    pub fn fit(member_ids: Vec<String>, val_scores: ArrayView2<f64>, temperature: f64, fit_split: Split) -> Result<Self> {
        if member_ids.len() != val_scores.nrows() {
            return Err(TribeError::Shape(format!(
                "{} member ids for {} score rows",
                member_ids.len(),
                val_scores.nrows()
            )));
        }
        Ok(EnsembleWeights {
            weights: fit_weights(val_scores, temperature)?,
            member_ids,
            temperature,
            fit_split,
        })
    }

    /// Writes `<stem>.f32` (standard tensor with sidecar) and `<stem>.json`.
    pub fn save(&self, stem: &std::path::Path) -> Result<()> {
        let blob = stem.with_extension("f32");
        let data: Vec<f32> = self.weights.iter().map(|&v| v as f32).collect();
        write_tensor(&blob, self.weights.shape(), &data)?;
        let meta = WeightsMeta {
            member_ids: self.member_ids.clone(),
            temperature: self.temperature,
            fit_split: self.fit_split,
        };
        crate::trainer::write_json(&stem.with_extension("json"), &meta)
    }

    pub fn load(stem: &std::path::Path) -> Result<Self> {
        let json = stem.with_extension("json");
        let text = std::fs::read_to_string(&json).map_err(|e| TribeError::io(&json, e))?;
        let meta: WeightsMeta = serde_json::from_str(&text).map_err(|e| TribeError::json(&json, e))?;
        let t = read_tensor(&stem.with_extension("f32"))?;
        if t.shape.len() != 2 || t.shape[0] != meta.member_ids.len() {
            return Err(TribeError::Shape(format!("weights tensor of shape {:?}", t.shape)));
        }
        let weights = Array2::from_shape_vec((t.shape[0], t.shape[1]), t.data)
            .map_err(|e| TribeError::Shape(e.to_string()))?
            .mapv(|v| v as f64);
        Ok(EnsembleWeights {
            weights,
            member_ids: meta.member_ids,
            temperature: meta.temperature,
            fit_split: meta.fit_split,
        })
    }
}

/// Per-parcel weighted sum of member predictions. Every member must predict
/// the same sessions in the same order.
pub fn blend_predictions(
    members: &[Vec<SessionPrediction>],
    weights: &EnsembleWeights,
) -> Result<Vec<SessionPrediction>> {
    if members.len() != weights.weights.nrows() || members.is_empty() {
        return Err(TribeError::Shape(format!(
            "{} members for {} weight rows",
            members.len(),
            weights.weights.nrows()
        )));
    }
    let mut out = Vec::with_capacity(members[0].len());
    for (i, first) in members[0].iter().enumerate() {
        let (t, p) = first.predictions.dim();
        if p != weights.weights.ncols() {
            return Err(TribeError::Shape(format!(
                "predictions over {p} parcels, weights over {}",
                weights.weights.ncols()
            )));
        }
        let mut acc = Array2::<f64>::zeros((t, p));
        for (m, member) in members.iter().enumerate() {
            let sp = member.get(i).filter(|sp| sp.session_id == first.session_id).ok_or_else(|| {
                TribeError::Shape(format!("member {m} does not predict session {}", first.session_id))
            })?;
            if sp.predictions.dim() != (t, p) {
                return Err(TribeError::Shape(format!("member {m} prediction shape differs")));
            }
            for ((r, c), v) in sp.predictions.indexed_iter() {
                acc[[r, c]] += weights.weights[[m, c]] * *v as f64;
            }
        }
        out.push(SessionPrediction {
            session_id: first.session_id.clone(),
            subject_index: first.subject_index,
            predictions: acc.mapv(|v| v as f32),
        });
    }
    Ok(out)
}

/// Blends member predictions on `eval_split` and scores them. Refuses to
/// evaluate on the split the weights were fitted on.
pub fn predict_ensemble(
    members: &[Vec<SessionPrediction>],
    weights: &EnsembleWeights,
    data: &PreparedDataset,
    eval_split: Split,
) -> Result<(Vec<SessionPrediction>, ScoreTable)> {
    if eval_split == weights.fit_split {
        return Err(TribeError::SplitOverlap(format!(
            "weights were fitted on {} and cannot be evaluated on it",
            eval_split
        )));
    }
    let blended = blend_predictions(members, weights)?;
    let table = score_predictions(
        &blended,
        data,
        ScoreMeta {
            run_id: "ensemble".into(),
            split: eval_split.to_string(),
            mask: "none".into(),
        },
    )?;
    Ok((blended, table))
}
