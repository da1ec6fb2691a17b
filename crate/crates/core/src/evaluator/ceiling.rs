use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::pearson::pearson_columns;
use super::scores::{finite_mean, ScoreTable};
use crate::alignment::PreparedDataset;
use crate::datastore::{BoldSeries, Split};
use crate::error::{Result, TribeError};

/// Per-parcel repeat reliability and the correlation ceiling it implies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseCeiling {
    pub rho_self: Vec<f64>,
    /// NaN where `rho_self <= 0` or undefined.
    pub rho_max: Vec<f64>,
}

impl NoiseCeiling {
    pub fn from_rho_self(rho_self: Vec<f64>) -> NoiseCeiling {
        let rho_max = rho_self.iter().map(|&r| rho_max(r)).collect();
        NoiseCeiling { rho_self, rho_max }
    }

    /// Parcels with an undefined ceiling.
    pub fn flagged(&self) -> Vec<usize> {
        (0..self.rho_max.len())
            .filter(|&p| !self.rho_max[p].is_finite())
            .collect()
    }

    pub fn num_parcels(&self) -> usize {
        self.rho_self.len()
    }

    pub fn mean_rho_self(&self) -> f64 {
        finite_mean(self.rho_self.iter().copied())
    }
}

/// `sqrt(2 / (1 + 1/rho_self))`, NaN for non-positive reliabilities.
pub fn rho_max(rho_self: f64) -> f64 {
    if rho_self > 0.0 && rho_self.is_finite() {
        (2.0 / (1.0 + 1.0 / rho_self)).sqrt()
    } else {
        f64::NAN
    }
}

/// Ceiling from two presentations of the same stimulus.
pub fn noise_ceiling(repeat_a: &BoldSeries, repeat_b: &BoldSeries) -> Result<NoiseCeiling> {
    noise_ceiling_repeats(&[repeat_a.data.view(), repeat_b.data.view()])
}

/// Mean per-parcel correlation over all unordered pairs of repeats.
pub fn noise_ceiling_repeats(repeats: &[ArrayView2<f32>]) -> Result<NoiseCeiling> {
    Ok(NoiseCeiling::from_rho_self(pairwise_rho_self(repeats)?))
}

fn pairwise_rho_self(repeats: &[ArrayView2<f32>]) -> Result<Vec<f64>> {
    if repeats.len() < 2 {
        return Err(TribeError::Shape("noise ceiling needs at least two repeats".into()));
    }
    let dim = repeats[0].dim();
    if let Some(r) = repeats.iter().find(|r| r.dim() != dim) {
        return Err(TribeError::Shape(format!(
            "repeats of shape {:?} and {:?}",
            dim,
            r.dim()
        )));
    }
    if dim.0 < 2 {
        return Err(TribeError::Shape("repeats need at least two TRs".into()));
    }
    let mut sums = vec![0.0; dim.1];
    let mut pairs = 0;
    for i in 0..repeats.len() {
        for j in i + 1..repeats.len() {
            for (p, s) in sums.iter_mut().enumerate() {
                *s += pearson_columns(repeats[i].column(p), repeats[j].column(p));
            }
            pairs += 1;
        }
    }
    Ok(sums.into_iter().map(|s| s / pairs as f64).collect())
}

/// Ceiling estimated from every (subject, video) with two or more sessions,
/// averaging reliabilities over those groups. `split` restricts the groups
/// considered.
pub fn dataset_noise_ceiling(data: &PreparedDataset, split: Option<Split>) -> Result<NoiseCeiling> {
    let mut groups: BTreeMap<(usize, &str), Vec<&Array2<f32>>> = BTreeMap::new();
    for s in &data.sessions {
        if split.is_some_and(|sp| sp != s.split) {
            continue;
        }
        if let Some(b) = &s.bold {
            groups.entry((s.subject_index, &s.video_id)).or_default().push(b);
        }
    }
    let mut total = vec![0.0; data.num_parcels];
    let mut count = vec![0usize; data.num_parcels];
    for reps in groups.values().filter(|r| r.len() >= 2) {
        let views: Vec<ArrayView2<f32>> = reps.iter().map(|b| b.view()).collect();
        for (p, r) in pairwise_rho_self(&views)?.into_iter().enumerate() {
            if r.is_finite() {
                total[p] += r;
                count[p] += 1;
            }
        }
    }
    if count.iter().all(|&c| c == 0) {
        return Err(TribeError::MissingTargets(
            "no repeated presentations available for a noise ceiling".into(),
        ));
    }
    let rho_self = total
        .iter()
        .zip(&count)
        .map(|(&t, &c)| if c == 0 { f64::NAN } else { t / c as f64 })
        .collect();
    Ok(NoiseCeiling::from_rho_self(rho_self))
}

/// Divides every score by its parcel's ceiling. Parcels with an undefined
/// ceiling become NaN and are counted in `excluded_parcels`.
pub fn normalized_scores(table: &ScoreTable, ceiling: &NoiseCeiling) -> Result<ScoreTable> {
    if ceiling.num_parcels() != table.num_parcels() {
        return Err(TribeError::Shape(format!(
            "ceiling over {} parcels for a table of {}",
            ceiling.num_parcels(),
            table.num_parcels()
        )));
    }
    let mut scores = table.scores.clone();
    for mut row in scores.rows_mut() {
        for (v, &m) in row.iter_mut().zip(&ceiling.rho_max) {
            *v = if m.is_finite() { *v / m } else { f64::NAN };
        }
    }
    let present: Vec<bool> = table
        .per_subject_mean
        .iter()
        .map(|m| !m.is_nan())
        .collect();
    let mut out = ScoreTable::from_scores(table.subjects.clone(), scores, &present, table.meta.clone());
    out.excluded_parcels = ceiling.flagged();
    out.nan_count = table.nan_count;
    Ok(out)
}
