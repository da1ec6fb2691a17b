//! Aggregates every `*scores.csv` below a directory into summary tables
//! and binned histograms.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tribe_core::evaluator::{describe, write_histogram_csv, Distribution};

use crate::error::{CliError, Result};
use crate::run::{find_files, RunDir};

#[derive(Debug, Deserialize)]
struct ScoreRow {
    parcel_id: usize,
    rho: f64,
    rho_norm: f64,
}

#[derive(Debug, Serialize)]
pub struct SourceReport {
    pub source: PathBuf,
    pub num_parcels: usize,
    /// Over parcels, of the subject-averaged Pearson score.
    pub raw: Option<Distribution>,
    pub normalized: Option<Distribution>,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub bins: usize,
    pub sources: Vec<SourceReport>,
}

fn nan_mean(values: &[f64]) -> f64 {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        f64::NAN
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    }
}

/// Per-parcel means over subjects of `rho` and `rho_norm`.
fn parcel_means(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let csv_err = |source| CliError::Csv {
        path: path.into(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut by_parcel: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for row in reader.deserialize() {
        let row: ScoreRow = row.map_err(csv_err)?;
        let entry = by_parcel.entry(row.parcel_id).or_default();
        entry.0.push(row.rho);
        entry.1.push(row.rho_norm);
    }
    Ok(by_parcel
        .values()
        .map(|(raw, norm)| (nan_mean(raw), nan_mean(norm)))
        .unzip())
}

fn label(rel: &Path) -> String {
    let stem = rel.with_extension("");
    let parts: Vec<String> = stem
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect();
    parts.join("_")
}

/// Histograms cover `[-1, 1]` for both raw and normalized scores; values
/// beyond the range fall into the edge bins.
pub fn report(dir: &Path, out: Option<PathBuf>, bins: usize) -> Result<()> {
    let out = out.unwrap_or_else(|| dir.join("report"));
    let sources = find_files(dir, &out, &|p| {
        p.file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.ends_with("scores.csv"))
    })?;
    if sources.is_empty() {
        return Err(CliError::Usage(format!("no score tables under {}", dir.display())));
    }
    let run = RunDir::create(&out, "report", None, None)?;
    let mut reports = Vec::with_capacity(sources.len());
    for path in &sources {
        let rel = path.strip_prefix(dir).unwrap_or(path).to_path_buf();
        let (raw, norm) = parcel_means(path)?;
        let name = label(&rel);
        write_histogram_csv(&run.path(format!("hist/{name}_raw.csv")), &raw, bins, -1.0, 1.0)?;
        let normalized = describe(norm.iter().copied());
        if normalized.is_some() {
            write_histogram_csv(&run.path(format!("hist/{name}_norm.csv")), &norm, bins, -1.0, 1.0)?;
        }
        reports.push(SourceReport {
            source: rel,
            num_parcels: raw.len(),
            raw: describe(raw.iter().copied()),
            normalized,
        });
    }
    for r in &reports {
        let show = |d: &Option<Distribution>| {
            d.as_ref().map_or("-".to_string(), |d| {
                format!("mean {:.4} median {:.4} iqr {:.4}", d.mean, d.median, d.iqr)
            })
        };
        println!("{}: raw {}; normalized {}", r.source.display(), show(&r.raw), show(&r.normalized));
    }
    run.write_json("summary.json", &Report { bins, sources: reports })?;
    run.finish()?;
    Ok(())
}
