use std::collections::HashMap;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{sample_grid, EnsembleConfig, GridDraw};
use super::weights::EnsembleWeights;
use crate::alignment::{LayerGroupSpec, PreparedDataset};
use crate::datastore::{Dataset, Split};
use crate::error::{Result, TribeError};
use crate::evaluator::{evaluate_net, predict_split, write_scores_csv, SessionPrediction};
use crate::trainer::{train, write_json, write_training_run, TrainConfig};
use crate::tribenet::{load_checkpoint, ArchConfig, ModalityMask};

/// One trained member. Paths are relative to the ensemble directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub id: String,
    pub seed: u64,
    pub draw: GridDraw,
    pub checkpoint: PathBuf,
    pub val_scores: PathBuf,
    pub val_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Registry {
    pub config: EnsembleConfig,
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub members: Vec<RegistryEntry>,
}

impl Registry {
    pub fn load(dir: &Path) -> Result<Registry> {
        read_json(&dir.join("registry.json"))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join("registry.json"), self)
    }

    /// Per-parcel validation scores, `[M, P]`; NaN where undefined.
    pub fn val_scores(&self, dir: &Path) -> Result<Array2<f64>> {
        let rows: Vec<Vec<Option<f64>>> = self
            .members
            .iter()
            .map(|m| read_json(&dir.join(&m.val_scores)))
            .collect::<Result<_>>()?;
        let p = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != p) {
            return Err(TribeError::Shape("members scored different parcel counts".into()));
        }
        Ok(Array2::from_shape_fn((rows.len(), p), |(m, j)| {
            rows[m][j].unwrap_or(f64::NAN)
        }))
    }

    pub fn fit(&self, dir: &Path) -> Result<EnsembleWeights> {
        let ids = self.members.iter().map(|m| m.id.clone()).collect();
        EnsembleWeights::fit(ids, self.val_scores(dir)?.view(), self.config.temperature, Split::Val)
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| TribeError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| TribeError::json(path, e))
}

pub fn member_id(i: usize) -> String {
    format!("m{i:03}")
}

/// Trains every member of the population that does not have a completed
/// record under `dir/members/<id>/member.json` yet, using up to `jobs`
/// threads, then writes `dir/registry.json`.
pub fn train_members(
    dataset: &Dataset,
    config: &EnsembleConfig,
    arch: &ArchConfig,
    train_config: &TrainConfig,
    dir: &Path,
    jobs: usize,
) -> Result<Registry> {
    let draws = sample_grid(config)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| TribeError::InvalidConfig(format!("thread pool: {e}")))?;
    let members = pool.install(|| {
        draws
            .par_iter()
            .enumerate()
            .map(|(i, draw)| train_member(dataset, config, arch, train_config, dir, i, draw))
            .collect::<Result<Vec<_>>>()
    })?;
    let registry = Registry {
        config: config.clone(),
        arch: arch.clone(),
        train: train_config.clone(),
        members,
    };
    registry.save(dir)?;
    Ok(registry)
}

fn train_member(
    dataset: &Dataset,
    config: &EnsembleConfig,
    arch: &ArchConfig,
    train_config: &TrainConfig,
    dir: &Path,
    i: usize,
    draw: &GridDraw,
) -> Result<RegistryEntry> {
    let id = member_id(i);
    let rel = PathBuf::from("members").join(&id);
    let member_dir = dir.join(&rel);
    let record = member_dir.join("member.json");
    if record.exists() {
        let entry: RegistryEntry = read_json(&record)?;
        if entry.draw == *draw && entry.seed == config.member_seed(i) {
            log::info!("member {id} already trained, skipping");
            return Ok(entry);
        }
    }
    let seed = config.member_seed(i);
    let (arch_i, train_i) = draw.apply(arch, train_config, seed);
    let data = PreparedDataset::new(dataset, &arch_i.layer_groups)?;
    let net_config = arch_i.build(&data)?;
    log::info!("training member {id}");
    let outcome = train(&data, &net_config, &train_i)?;
    write_training_run(&member_dir, &outcome, &train_i)?;
    let table = evaluate_net(outcome.shipped(), &data, Split::Val, &ModalityMask::none(), &id)?;
    write_scores_csv(&member_dir.join("val_scores.csv"), &table, None)?;
    let parcel: Vec<Option<f64>> = table
        .parcel_means()
        .into_iter()
        .map(|v| v.is_finite().then_some(v))
        .collect();
    write_json(&member_dir.join("val_parcel_scores.json"), &parcel)?;
    let entry = RegistryEntry {
        id,
        seed,
        draw: draw.clone(),
        checkpoint: rel.join("swa.json"),
        val_scores: rel.join("val_parcel_scores.json"),
        val_mean: table.mean_score,
    };
    write_json(&record, &entry)?;
    Ok(entry)
}

/// Predictions of every registered member on `split`, each with its own
/// layer grouping of the features.
pub fn member_predictions(
    registry: &Registry,
    dir: &Path,
    dataset: &Dataset,
    split: Split,
) -> Result<(Vec<Vec<SessionPrediction>>, PreparedDataset)> {
    let mut prepared: HashMap<String, PreparedDataset> = HashMap::new();
    let mut out = Vec::with_capacity(registry.members.len());
    for m in &registry.members {
        let net = load_checkpoint(&dir.join(&m.checkpoint))?;
        let spec: &LayerGroupSpec = &net.config().layer_groups;
        let key = serde_json::to_string(spec).expect("spec serializes");
        if !prepared.contains_key(&key) {
            prepared.insert(key.clone(), PreparedDataset::new(dataset, spec)?);
        }
        out.push(predict_split(&net, &prepared[&key], split, &ModalityMask::none())?);
    }
    let scoring = match prepared.into_values().next() {
        Some(p) => p,
        None => return Err(TribeError::InvalidConfig("registry has no members".into())),
    };
    Ok((out, scoring))
}
