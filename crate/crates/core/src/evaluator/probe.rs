use serde::{Deserialize, Serialize};

use super::scores::{evaluate_net, ScoreTable};
use crate::alignment::PreparedDataset;
use crate::datastore::{Modality, Split};
use crate::error::Result;
use crate::tribenet::{ModalityMask, TribeNet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub parcel: usize,
    /// Solo scores in text, audio, video order. NaN for modalities the
    /// network does not use.
    pub scores: [f64; 3],
    pub argmax: Option<Modality>,
    /// Solo scores minus their per-parcel minimum, clamped to `[0, 1]`.
    pub rgb: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct ProbeReport {
    pub rows: Vec<ProbeRow>,
    /// One table per modality the network uses, scored with every other
    /// modality masked.
    pub tables: Vec<(Modality, ScoreTable)>,
}

/// Argmax and RGB encoding of one parcel's solo scores.
pub fn probe_row(parcel: usize, scores: [f64; 3]) -> ProbeRow {
    let finite: Vec<(usize, f64)> = scores
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, s)| s.is_finite())
        .collect();
    let argmax = finite
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|&(i, _)| Modality::ALL[i]);
    let min = finite.iter().map(|&(_, s)| s).fold(f64::INFINITY, f64::min);
    let rgb = scores.map(|s| if s.is_finite() { (s - min).clamp(0.0, 1.0) } else { 0.0 });
    ProbeRow {
        parcel,
        scores,
        argmax,
        rgb,
    }
}

/// Scores the network with all modalities but one masked, for each
/// modality in turn, and assigns each parcel its best solo modality.
/// Parcel scores are averaged over subjects.
pub fn probe_modalities(net: &TribeNet<f32>, data: &PreparedDataset, split: Split) -> Result<ProbeReport> {
    let mut tables = Vec::new();
    let mut per_parcel = vec![[f64::NAN; 3]; data.num_parcels];
    for m in net.config().active_modalities() {
        let table = evaluate_net(net, data, split, &ModalityMask::only(m), "probe")?;
        for (p, s) in table.parcel_means().into_iter().enumerate() {
            per_parcel[p][m.index()] = s;
        }
        tables.push((m, table));
    }
    let rows = per_parcel
        .into_iter()
        .enumerate()
        .map(|(p, s)| probe_row(p, s))
        .collect();
    Ok(ProbeReport { rows, tables })
}
