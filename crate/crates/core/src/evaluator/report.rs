use std::path::Path;

use serde::Serialize;

use super::ablation::AblationReport;
use super::ceiling::NoiseCeiling;
use super::probe::ProbeReport;
use super::scores::ScoreTable;
use crate::error::{Result, TribeError};

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| TribeError::io(dir, e))?;
    }
    csv::Writer::from_path(path).map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> TribeError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => TribeError::io(path, io),
        other => TribeError::io(path, std::io::Error::other(format!("{other:?}"))),
    }
}

fn finish(path: &Path, mut w: csv::Writer<std::fs::File>) -> Result<()> {
    w.flush().map_err(|e| TribeError::io(path, e))
}

#[derive(Serialize)]
struct ScoreRow<'a> {
    parcel_id: usize,
    subject_id: &'a str,
    rho: f64,
    rho_max: f64,
    rho_norm: f64,
}

/// One row per (parcel, subject). Without a ceiling `rho_max` and
/// `rho_norm` are empty (NaN).
pub fn write_scores_csv(path: &Path, table: &ScoreTable, ceiling: Option<&NoiseCeiling>) -> Result<()> {
    let mut w = csv_writer(path)?;
    for (s, subject) in table.subjects.iter().enumerate() {
        if table.per_subject_mean[s].is_nan() {
            continue;
        }
        for p in 0..table.num_parcels() {
            let rho = table.scores[[s, p]];
            let rho_max = ceiling.map_or(f64::NAN, |c| c.rho_max[p]);
            w.serialize(ScoreRow {
                parcel_id: p,
                subject_id: subject,
                rho,
                rho_max,
                rho_norm: rho / rho_max,
            })
            .map_err(|e| csv_error(path, e))?;
        }
    }
    finish(path, w)
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct Distribution {
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub count: usize,
}

/// Summary statistics over the finite values. Quantiles interpolate
/// linearly between order statistics.
pub fn describe(values: impl IntoIterator<Item = f64>) -> Option<Distribution> {
    let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let q = |f: f64| {
        let pos = f * (v.len() - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    let (q1, q3) = (q(0.25), q(0.75));
    Some(Distribution {
        mean: v.iter().sum::<f64>() / v.len() as f64,
        median: q(0.5),
        q1,
        q3,
        iqr: q3 - q1,
        count: v.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct ScoreSummary {
    pub run_id: String,
    pub split: String,
    pub mask: String,
    pub mean_score: f64,
    pub per_subject_mean: Vec<f64>,
    pub nan_count: usize,
    pub raw: Option<Distribution>,
    pub normalized: Option<Distribution>,
    pub excluded_parcels: usize,
}

pub fn summarize(table: &ScoreTable, normalized: Option<&ScoreTable>) -> ScoreSummary {
    ScoreSummary {
        run_id: table.meta.run_id.clone(),
        split: table.meta.split.clone(),
        mask: table.meta.mask.clone(),
        mean_score: table.mean_score,
        per_subject_mean: table.per_subject_mean.clone(),
        nan_count: table.nan_count,
        raw: describe(table.parcel_means()),
        normalized: normalized.and_then(|n| describe(n.parcel_means())),
        excluded_parcels: normalized.map_or(0, |n| n.excluded_parcels.len()),
    }
}

#[derive(Serialize)]
struct ProbeCsvRow {
    parcel_id: usize,
    text: f64,
    audio: f64,
    video: f64,
    argmax: String,
    r: f64,
    g: f64,
    b: f64,
}

pub fn write_probe_csv(path: &Path, probe: &ProbeReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    for row in &probe.rows {
        w.serialize(ProbeCsvRow {
            parcel_id: row.parcel,
            text: row.scores[0],
            audio: row.scores[1],
            video: row.scores[2],
            argmax: row.argmax.map_or(String::new(), |m| m.name().to_string()),
            r: row.rgb[0],
            g: row.rgb[1],
            b: row.rgb[2],
        })
        .map_err(|e| csv_error(path, e))?;
    }
    finish(path, w)
}

pub fn write_ablation_csv(path: &Path, report: &AblationReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    for row in &report.rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    finish(path, w)
}

#[derive(Serialize)]
struct HistogramRow {
    bin_low: f64,
    bin_high: f64,
    count: usize,
}

/// Histogram of the finite values over `bins` equal-width bins on
/// `[low, high]`. Values outside the range land in the edge bins.
pub fn write_histogram_csv(path: &Path, values: &[f64], bins: usize, low: f64, high: f64) -> Result<()> {
    let bins = bins.max(1);
    let width = (high - low) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values.iter().filter(|v| v.is_finite()) {
        let i = ((v - low) / width).floor().clamp(0.0, (bins - 1) as f64) as usize;
        counts[i] += 1;
    }
    let mut w = csv_writer(path)?;
    for (i, &count) in counts.iter().enumerate() {
        w.serialize(HistogramRow {
            bin_low: low + i as f64 * width,
            bin_high: low + (i + 1) as f64 * width,
            count,
        })
        .map_err(|e| csv_error(path, e))?;
    }
    finish(path, w)
}
