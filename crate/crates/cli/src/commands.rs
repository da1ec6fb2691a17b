use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tribe_core::alignment::PreparedDataset;
use tribe_core::datastore::{Dataset, Modality, Split};
use tribe_core::ensembler::{
    member_predictions, predict_ensemble, train_members, EnsembleConfig, EnsembleWeights, Registry,
};
use tribe_core::evaluator::{
    dataset_noise_ceiling, evaluate_net, normalized_scores, probe_modalities, run_ablation,
    score_predictions, summarize, write_ablation_csv, write_probe_csv, write_scores_csv,
    AblationSpec, NoiseCeiling, ScoreMeta, ScoreSummary, ScoreTable,
};
use tribe_core::synthgen::{generate, write_synth, SynthConfig};
use tribe_core::trainer::{train, write_training_run, TrainConfig};
use tribe_core::tribenet::{load_checkpoint, ArchConfig, ModalityMask, TribeNet};

use crate::error::{CliError, Result};
use crate::run::{read_config, read_json, recorded_data, RunDir};

/// Contents of the `--config` file of `train`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainFile {
    pub arch: ArchConfig,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleFile {
    pub ensemble: EnsembleConfig,
    pub arch: ArchConfig,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationFile {
    pub ablation: AblationSpec,
    #[serde(default)]
    pub arch: ArchConfig,
    #[serde(default)]
    pub train: TrainConfig,
}

fn load_prepared(data: &Path, arch: &ArchConfig) -> Result<PreparedDataset> {
    let dataset = Dataset::load_path(data)?;
    Ok(PreparedDataset::new(&dataset, &arch.layer_groups)?)
}

fn load_for_net(data: &Path, net: &TribeNet<f32>) -> Result<PreparedDataset> {
    let dataset = Dataset::load_path(data)?;
    Ok(PreparedDataset::new(&dataset, &net.config().layer_groups)?)
}

fn data_path(given: Option<PathBuf>, run: &Path) -> Result<PathBuf> {
    match given {
        Some(p) => Ok(p),
        None => recorded_data(run),
    }
}

fn absolute(path: &Path) -> Result<PathBuf> {
    std::path::absolute(path).map_err(|e| CliError::io(path, e))
}

/// Keeps only `keep`; `None` leaves every modality on.
pub fn keep_only(keep: Option<Modality>) -> ModalityMask {
    keep.map_or_else(ModalityMask::none, ModalityMask::only)
}

fn mask_label(keep: Option<Modality>) -> &'static str {
    keep.map_or("none", Modality::name)
}

/// Ceiling from repeated presentations anywhere in the dataset, when there
/// are any.
fn try_ceiling(data: &PreparedDataset) -> Option<NoiseCeiling> {
    match dataset_noise_ceiling(data, None) {
        Ok(c) => Some(c),
        Err(e) => {
            log::info!("no noise ceiling: {e}");
            None
        }
    }
}

/// Writes `scores.csv` and `summary.json` for `table` into the run.
fn write_scores(run: &RunDir, table: &ScoreTable, data: &PreparedDataset) -> Result<ScoreSummary> {
    let ceiling = try_ceiling(data);
    let normalized = match &ceiling {
        Some(c) => Some(normalized_scores(table, c)?),
        None => None,
    };
    write_scores_csv(&run.path("scores.csv"), table, ceiling.as_ref())?;
    let summary = summarize(table, normalized.as_ref());
    run.write_json("summary.json", &summary)?;
    Ok(summary)
}

pub fn gen_synth(config: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut cfg: SynthConfig = read_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let run = RunDir::create(out, "gen-synth", None, Some(cfg.seed))?;
    let synth = generate(&cfg)?;
    let manifest = write_synth(out, &synth)?;
    let files = run.finish()?.files.len();
    println!("wrote {} ({} files)", manifest.display(), files);
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    best_val_pearson: f64,
    stopped_early: bool,
    total_steps: usize,
    epochs_run: usize,
    val_mean: Option<f64>,
}

pub fn train_cmd(data: &Path, config: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut cfg: TrainFile = read_config(config)?;
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    let prepared = load_prepared(data, &cfg.arch)?;
    let net_config = cfg.arch.build(&prepared)?;
    let run = RunDir::create(out, "train", Some(&absolute(data)?), Some(cfg.train.seed))?;
    run.write_json("config.json", &cfg)?;
    let outcome = train(&prepared, &net_config, &cfg.train)?;
    write_training_run(out, &outcome, &cfg.train)?;
    let val_mean = if prepared.split(Split::Val).is_empty() {
        None
    } else {
        let table = evaluate_net(outcome.shipped(), &prepared, Split::Val, &ModalityMask::none(), "train")?;
        write_scores_csv(&run.path("val_scores.csv"), &table, None)?;
        Some(table.mean_score)
    };
    run.write_json(
        "train_summary.json",
        &TrainSummary {
            best_val_pearson: outcome.best_val_pearson,
            stopped_early: outcome.stopped_early,
            total_steps: outcome.total_steps,
            epochs_run: outcome.log.len(),
            val_mean,
        },
    )?;
    run.finish()?;
    match val_mean {
        Some(v) => println!("trained {} epochs; val mean pearson {v:.4}", outcome.log.len()),
        None => println!("trained {} epochs", outcome.log.len()),
    }
    Ok(())
}

pub struct EvalArgs {
    pub run: PathBuf,
    pub data: Option<PathBuf>,
    pub split: Split,
    pub keep: Option<Modality>,
    pub checkpoint: String,
    pub out: Option<PathBuf>,
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let net = load_checkpoint(&args.run.join(&args.checkpoint))?;
    let data_file = data_path(args.data, &args.run)?;
    let data = load_for_net(&data_file, &net)?;
    let label = mask_label(args.keep);
    let out = args
        .out
        .unwrap_or_else(|| args.run.join(format!("eval_{}_{label}", args.split.name())));
    let run = RunDir::create(&out, "eval", Some(&absolute(&data_file)?), None)?;
    let table = evaluate_net(&net, &data, args.split, &keep_only(args.keep), &args.checkpoint)?;
    let summary = write_scores(&run, &table, &data)?;
    run.finish()?;
    println!(
        "{} split, mask {label}: mean pearson {:.4} over {} subjects",
        args.split.name(),
        summary.mean_score,
        table.subjects.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct MemberSummary {
    id: String,
    mean_score: f64,
}

pub fn ensemble_fit(data: &Path, config: Option<&Path>, out: &Path, seed: Option<u64>, jobs: usize) -> Result<()> {
    let mut cfg: EnsembleFile = read_config(config)?;
    if let Some(s) = seed {
        cfg.ensemble.seed = s;
    }
    let dataset = Dataset::load_path(data)?;
    let run = RunDir::create(out, "ensemble-fit", Some(&absolute(data)?), Some(cfg.ensemble.seed))?;
    run.write_json("config.json", &cfg)?;
    let registry = train_members(&dataset, &cfg.ensemble, &cfg.arch, &cfg.train, out, jobs.max(1))?;
    let weights = registry.fit(out)?;
    weights.save(&run.path("weights"))?;
    let members: Vec<MemberSummary> = registry
        .members
        .iter()
        .map(|m| MemberSummary {
            id: m.id.clone(),
            mean_score: m.val_mean,
        })
        .collect();
    run.write_json("members_summary.json", &members)?;
    run.finish()?;
    println!("trained {} members; weights fitted on val", members.len());
    Ok(())
}

#[derive(Serialize)]
struct EnsembleSummary {
    ensemble: ScoreSummary,
    members: Vec<MemberSummary>,
    best_member: String,
    best_member_mean: f64,
}

pub fn ensemble_predict(run_dir: &Path, data: Option<PathBuf>, split: Split, out: Option<PathBuf>) -> Result<()> {
    let registry = Registry::load(run_dir)?;
    let weights = EnsembleWeights::load(&run_dir.join("weights"))?;
    let data_file = data_path(data, run_dir)?;
    let dataset = Dataset::load_path(&data_file)?;
    let out = out.unwrap_or_else(|| run_dir.join(format!("predict_{}", split.name())));
    let run = RunDir::create(&out, "ensemble-predict", Some(&absolute(&data_file)?), None)?;
    let (preds, prepared) = member_predictions(&registry, run_dir, &dataset, split)?;
    let (_, table) = predict_ensemble(&preds, &weights, &prepared, split)?;
    let mut members = Vec::with_capacity(preds.len());
    for (entry, p) in registry.members.iter().zip(&preds) {
        let meta = ScoreMeta {
            run_id: entry.id.clone(),
            split: split.name().into(),
            mask: "none".into(),
        };
        members.push(MemberSummary {
            id: entry.id.clone(),
            mean_score: score_predictions(p, &prepared, meta)?.mean_score,
        });
    }
    let best = members
        .iter()
        .max_by(|a, b| a.mean_score.total_cmp(&b.mean_score))
        .expect("registry has members");
    let summary = write_scores(&run, &table, &prepared)?;
    println!(
        "ensemble of {} on {}: mean pearson {:.4} (best member {} {:.4})",
        members.len(),
        split.name(),
        summary.mean_score,
        best.id,
        best.mean_score
    );
    let report = EnsembleSummary {
        best_member: best.id.clone(),
        best_member_mean: best.mean_score,
        ensemble: summary,
        members,
    };
    run.write_json("ensemble_summary.json", &report)?;
    run.finish()?;
    Ok(())
}

#[derive(Serialize)]
struct ProbeSummary {
    argmax_counts: Vec<(String, usize)>,
    undecided: usize,
    modality_means: Vec<(String, f64)>,
}

pub fn probe(run_dir: &Path, data: Option<PathBuf>, split: Split, checkpoint: &str, out: Option<PathBuf>) -> Result<()> {
    let net = load_checkpoint(&run_dir.join(checkpoint))?;
    let data_file = data_path(data, run_dir)?;
    let prepared = load_for_net(&data_file, &net)?;
    let out = out.unwrap_or_else(|| run_dir.join(format!("probe_{}", split.name())));
    let run = RunDir::create(&out, "probe", Some(&absolute(&data_file)?), None)?;
    let report = probe_modalities(&net, &prepared, split)?;
    write_probe_csv(&run.path("probe.csv"), &report)?;
    let argmax_counts = Modality::ALL
        .iter()
        .map(|&m| {
            let n = report.rows.iter().filter(|r| r.argmax == Some(m)).count();
            (m.name().to_string(), n)
        })
        .collect();
    let summary = ProbeSummary {
        argmax_counts,
        undecided: report.rows.iter().filter(|r| r.argmax.is_none()).count(),
        modality_means: report
            .tables
            .iter()
            .map(|(m, t)| (m.name().to_string(), t.mean_score))
            .collect(),
    };
    run.write_json("probe_summary.json", &summary)?;
    run.finish()?;
    println!("probed {} parcels on {}", report.rows.len(), split.name());
    Ok(())
}

pub fn ablate(data: &Path, config: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut cfg: AblationFile = read_json(config)?;
    if let Some(s) = seed {
        cfg.ablation.seeds = vec![s];
    }
    let prepared = load_prepared(data, &cfg.arch)?;
    let net_config = cfg.arch.build(&prepared)?;
    let run = RunDir::create(out, "ablate", Some(&absolute(data)?), seed)?;
    run.write_json("config.json", &cfg)?;
    let report = run_ablation(&cfg.ablation, &prepared, &net_config, &cfg.train)?;
    write_ablation_csv(&run.path("ablation.csv"), &report)?;
    run.write_json("ablation.json", &report)?;
    run.finish()?;
    for c in &report.summary {
        println!("{:<24} {:.4}", c.condition, c.mean_score);
    }
    Ok(())
}
