use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::pearson::pearson_columns;
use crate::alignment::{extract_window, tile_starts, PreparedDataset, PreparedSession};
use crate::datastore::Split;
use crate::error::{Result, TribeError};
use crate::tribenet::{ModalityMask, TribeNet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMeta {
    pub run_id: String,
    pub split: String,
    pub mask: String,
}

/// Per-subject, per-parcel Pearson scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub subjects: Vec<String>,
    /// `[num_subjects, P]`; NaN for zero-variance parcels and for subjects
    /// absent from the scored split.
    pub scores: Array2<f64>,
    /// Mean over all finite entries.
    pub mean_score: f64,
    pub per_subject_mean: Vec<f64>,
    /// Entries excluded from the means because they are NaN, counted only
    /// for subjects present in the split.
    pub nan_count: usize,
    /// Parcels left out by normalization because their ceiling is undefined.
    pub excluded_parcels: Vec<usize>,
    pub meta: ScoreMeta,
}

impl ScoreTable {
    pub fn from_scores(subjects: Vec<String>, scores: Array2<f64>, present: &[bool], meta: ScoreMeta) -> ScoreTable {
        let per_subject_mean = scores.outer_iter().map(|row| finite_mean(row.iter().copied())).collect();
        let mean_score = finite_mean(scores.iter().copied());
        let nan_count = scores
            .outer_iter()
            .zip(present)
            .filter(|(_, &p)| p)
            .map(|(row, _)| row.iter().filter(|v| v.is_nan()).count())
            .sum();
        ScoreTable {
            subjects,
            scores,
            mean_score,
            per_subject_mean,
            nan_count,
            excluded_parcels: Vec::new(),
            meta,
        }
    }

    pub fn num_parcels(&self) -> usize {
        self.scores.ncols()
    }

    /// Per-parcel score averaged over the subjects that have one.
    pub fn parcel_means(&self) -> Vec<f64> {
        self.scores
            .axis_iter(Axis(1))
            .map(|col| finite_mean(col.iter().copied()))
            .collect()
    }
}

pub(crate) fn finite_mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values
        .filter(|v| v.is_finite())
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Full-session predictions `[num_trs, P]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionPrediction {
    pub session_id: String,
    pub subject_index: usize,
    pub predictions: Array2<f32>,
}

/// Predicts a whole session by tiling it with jitter-free windows.
pub fn predict_session(
    net: &TribeNet<f32>,
    session: &PreparedSession,
    mask: &ModalityMask,
) -> Result<SessionPrediction> {
    let cfg = net.config();
    let n = cfg.window.trs_per_window;
    let mut predictions = Array2::<f32>::zeros((session.num_trs, cfg.num_parcels));
    let mut covered = 0usize;
    for start in tile_starts(session.num_trs, n)? {
        let window = extract_window(session, &cfg.window, start, 0.0)?;
        let out = net.forward(&window, mask, false)?.output;
        let skip = covered.saturating_sub(start);
        predictions
            .slice_mut(s![start + skip..start + n, ..])
            .assign(&out.slice(s![skip.., ..]));
        covered = start + n;
    }
    Ok(SessionPrediction {
        session_id: session.session_id.clone(),
        subject_index: session.subject_index,
        predictions,
    })
}

pub fn predict_split(
    net: &TribeNet<f32>,
    data: &PreparedDataset,
    split: Split,
    mask: &ModalityMask,
) -> Result<Vec<SessionPrediction>> {
    let sessions = data.split(split);
    if sessions.is_empty() {
        return Err(TribeError::EmptySplit(split.to_string()));
    }
    sessions
        .into_iter()
        .map(|s| predict_session(net, s, mask))
        .collect()
}

/// Correlates predictions with the z-scored targets, concatenating all
/// sessions of a subject in the order given.
pub fn score_predictions(
    predictions: &[SessionPrediction],
    data: &PreparedDataset,
    meta: ScoreMeta,
) -> Result<ScoreTable> {
    let num_subjects = data.num_subjects();
    let p = data.num_parcels;
    let mut scores = Array2::<f64>::from_elem((num_subjects, p), f64::NAN);
    let mut present = vec![false; num_subjects];
    for subject in 0..num_subjects {
        let mine: Vec<&SessionPrediction> = predictions
            .iter()
            .filter(|sp| sp.subject_index == subject)
            .collect();
        if mine.is_empty() {
            continue;
        }
        present[subject] = true;
        let total: usize = mine.iter().map(|sp| sp.predictions.nrows()).sum();
        let mut pred = Array2::<f32>::zeros((total, p));
        let mut target = Array2::<f32>::zeros((total, p));
        let mut row = 0;
        for sp in mine {
            let session = data
                .sessions
                .iter()
                .find(|s| s.session_id == sp.session_id)
                .ok_or_else(|| TribeError::InvalidManifest(format!("unknown session {}", sp.session_id)))?;
            let bold = session
                .bold
                .as_ref()
                .ok_or_else(|| TribeError::MissingTargets(sp.session_id.clone()))?;
            let n = sp.predictions.nrows();
            if bold.dim() != sp.predictions.dim() {
                return Err(TribeError::Shape(format!(
                    "session {}: predictions {:?} vs targets {:?}",
                    sp.session_id,
                    sp.predictions.dim(),
                    bold.dim()
                )));
            }
            pred.slice_mut(s![row..row + n, ..]).assign(&sp.predictions);
            target.slice_mut(s![row..row + n, ..]).assign(&**bold);
            row += n;
        }
        for parcel in 0..p {
            scores[[subject, parcel]] = pearson_columns(pred.column(parcel), target.column(parcel));
        }
    }
    Ok(ScoreTable::from_scores(data.subjects.clone(), scores, &present, meta))
}

/// Predicts and scores one split.
pub fn evaluate_net(
    net: &TribeNet<f32>,
    data: &PreparedDataset,
    split: Split,
    mask: &ModalityMask,
    run_id: &str,
) -> Result<ScoreTable> {
    let preds = predict_split(net, data, split, mask)?;
    score_predictions(
        &preds,
        data,
        ScoreMeta {
            run_id: run_id.to_string(),
            split: split.to_string(),
            mask: mask.label(),
        },
    )
}
