use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{s, Array3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{compute_loss, lr_at, sample_mask_for, AdamW, SwaAccumulator, TrainConfig};
use crate::alignment::{extract_window, tile_starts, AlignedWindow, PreparedDataset};
use crate::datastore::Split;
use crate::error::{Result, TribeError};
use crate::evaluator::evaluate_net;
use crate::tribenet::{save_checkpoint, ModalityMask, NetConfig, TribeNet};

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub step: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_pearson: f64,
    pub swa_active: bool,
}

/// Mutable optimization state carried across epochs.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub step: usize,
    pub optimizer: AdamW<f32>,
    pub swa: SwaAccumulator,
    pub best_val_score: f64,
    pub epochs_since_best: usize,
    pub rng: ChaCha8Rng,
}

/// Passed to the observer after every epoch.
#[derive(Debug)]
pub struct EpochEnd<'a> {
    pub log: &'a EpochLog,
    pub params: &'a [f32],
    pub swa_count: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub final_net: TribeNet<f32>,
    pub swa_net: Option<TribeNet<f32>>,
    pub log: Vec<EpochLog>,
    pub best_val_pearson: f64,
    pub stopped_early: bool,
    pub total_steps: usize,
}

impl TrainOutcome {
    /// The weights meant for use: the SWA average when available.
    pub fn shipped(&self) -> &TribeNet<f32> {
        self.swa_net.as_ref().unwrap_or(&self.final_net)
    }

    pub fn log_jsonl(&self) -> String {
        self.log
            .iter()
            .map(|l| serde_json::to_string(l).expect("log serializes") + "\n")
            .collect()
    }
}

pub fn train(data: &PreparedDataset, net_config: &NetConfig, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_observed(data, net_config, cfg, |_| {})
}

/// [`train`] with a callback invoked at the end of every epoch.
pub fn train_observed(
    data: &PreparedDataset,
    net_config: &NetConfig,
    cfg: &TrainConfig,
    mut observer: impl FnMut(&EpochEnd),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    net_config.validate()?;
    let train_sessions: Vec<usize> = session_positions(data, Split::Train);
    if train_sessions.is_empty() {
        return Err(TribeError::EmptySplit("train".into()));
    }
    if session_positions(data, Split::Val).is_empty() {
        return Err(TribeError::EmptySplit("val".into()));
    }
    let window = &net_config.window;
    let mut slots = Vec::new();
    for &si in &train_sessions {
        let session = &data.sessions[si];
        if session.bold.is_none() {
            return Err(TribeError::MissingTargets(session.session_id.clone()));
        }
        for start in tile_starts(session.num_trs, window.trs_per_window)? {
            slots.push((si, start));
        }
    }
    let batches_per_epoch = slots.len().div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * batches_per_epoch;
    let active = net_config.active_modalities();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = TribeNet::<f32>::init(net_config, &mut rng)?;
    let mut state = TrainState {
        step: 0,
        optimizer: AdamW::new(net.num_params(), cfg.weight_decay),
        swa: SwaAccumulator::new(),
        best_val_score: f64::NEG_INFINITY,
        epochs_since_best: 0,
        rng,
    };
    let mut log = Vec::new();
    let mut stopped_early = false;
    let mut swa_net = None;
    for epoch in 1..=cfg.epochs {
        slots.shuffle(&mut state.rng);
        let mut loss_sum = 0.0;
        let mut lr = 0.0;
        for (bi, batch) in slots.chunks(cfg.batch_size).enumerate() {
            let mut windows = Vec::with_capacity(batch.len());
            for &(si, start) in batch {
                let jitter = if window.jitter_s > 0.0 {
                    state.rng.random_range(-window.jitter_s..=window.jitter_s)
                } else {
                    0.0
                };
                let mask = sample_mask_for(cfg.modality_dropout_p, &active, &mut state.rng);
                windows.push((extract_window(&data.sessions[si], window, start, jitter)?, mask));
            }
            lr = lr_at(state.step, total_steps, cfg);
            let (loss, grads) = batch_gradient(&net, &windows, cfg)?;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(TribeError::NonFiniteLoss {
                    epoch,
                    step: state.step,
                    detail: format!(
                        "batch {bi} loss {loss}, lr {lr}, sessions {:?}",
                        windows.iter().map(|(w, _)| w.session_id.as_str()).collect::<Vec<_>>()
                    ),
                });
            }
            state.optimizer.step(net.params_mut(), &grads, lr)?;
            loss_sum += loss;
            state.step += 1;
        }
        let swa_active = epoch >= cfg.swa_start_epoch;
        if swa_active {
            state.swa.fold(net.params());
            let mean = state.swa.mean().expect("folded at least once");
            swa_net = Some(TribeNet::from_params(net_config, mean)?);
        }
        let val_net = swa_net.as_ref().unwrap_or(&net);
        let val = evaluate_net(val_net, data, Split::Val, &ModalityMask::none(), "train")?.mean_score;
        let entry = EpochLog {
            epoch,
            step: state.step,
            lr,
            train_loss: loss_sum / batches_per_epoch as f64,
            val_pearson: val,
            swa_active,
        };
        log::info!(
            "epoch {epoch}: loss {:.5} val {:.4}{}",
            entry.train_loss,
            val,
            if swa_active { " (swa)" } else { "" }
        );
        observer(&EpochEnd {
            log: &entry,
            params: net.params(),
            swa_count: state.swa.count(),
        });
        log.push(entry);
        if val > state.best_val_score {
            state.best_val_score = val;
            state.epochs_since_best = 0;
        } else {
            state.epochs_since_best += 1;
            if state.epochs_since_best >= cfg.early_stop_patience {
                stopped_early = epoch < cfg.epochs;
                break;
            }
        }
    }
    Ok(TrainOutcome {
        final_net: net,
        swa_net,
        log,
        best_val_pearson: state.best_val_score,
        stopped_early,
        total_steps,
    })
}

fn session_positions(data: &PreparedDataset, split: Split) -> Vec<usize> {
    (0..data.sessions.len())
        .filter(|&i| data.sessions[i].split == split)
        .collect()
}

/// Mean batch loss and the summed gradient. Windows are processed in
/// parallel; the reduction runs in batch order so results do not depend on
/// the thread count.
fn batch_gradient(
    net: &TribeNet<f32>,
    windows: &[(AlignedWindow, ModalityMask)],
    cfg: &TrainConfig,
) -> Result<(f64, Vec<f32>)> {
    let outputs = windows
        .par_iter()
        .map(|(w, mask)| net.forward(w, mask, true))
        .collect::<Result<Vec<_>>>()?;
    let (n, p) = outputs[0].output.dim();
    let b = outputs.len();
    let mut pred = Array3::<f32>::zeros((b, n, p));
    let mut target = Array3::<f32>::zeros((b, n, p));
    for (i, (out, (w, _))) in outputs.iter().zip(windows).enumerate() {
        pred.slice_mut(s![i, .., ..]).assign(&out.output);
        let t = w
            .targets
            .as_ref()
            .ok_or_else(|| TribeError::MissingTargets(w.session_id.clone()))?;
        target.slice_mut(s![i, .., ..]).assign(t);
    }
    let (loss, d_pred) = compute_loss(pred.view(), target.view(), cfg.loss)?;
    let per_window = outputs
        .par_iter()
        .enumerate()
        .map(|(i, out)| {
            let mut g = vec![0.0f32; net.num_params()];
            net.backward(out, d_pred.slice(s![i, .., ..]), &mut g)?;
            Ok(g)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut grads = vec![0.0f32; net.num_params()];
    for g in per_window {
        for (a, v) in grads.iter_mut().zip(g) {
            *a += v;
        }
    }
    Ok((loss, grads))
}

/// Writes configs, the JSON-lines log and the final and SWA checkpoints
/// into `dir`. Returns the paths written.
pub fn write_training_run(
    dir: &Path,
    outcome: &TrainOutcome,
    train_config: &TrainConfig,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| TribeError::io(dir, e))?;
    let mut written = Vec::new();
    let net_cfg_path = dir.join("net_config.json");
    write_json(&net_cfg_path, outcome.final_net.config())?;
    written.push(net_cfg_path);
    let train_cfg_path = dir.join("train_config.json");
    write_json(&train_cfg_path, train_config)?;
    written.push(train_cfg_path);
    let log_path = dir.join("log.jsonl");
    let mut f = fs::File::create(&log_path).map_err(|e| TribeError::io(&log_path, e))?;
    f.write_all(outcome.log_jsonl().as_bytes())
        .map_err(|e| TribeError::io(&log_path, e))?;
    written.push(log_path);
    let final_stem = dir.join("final");
    written.extend(checkpoint_files(save_checkpoint(&outcome.final_net, &final_stem)?));
    let swa_stem = dir.join("swa");
    written.extend(checkpoint_files(save_checkpoint(outcome.shipped(), &swa_stem)?));
    Ok(written)
}

fn checkpoint_files(json: PathBuf) -> [PathBuf; 2] {
    let blob = json.with_extension("f32");
    [json, blob]
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| TribeError::json(path, e))?;
    fs::write(path, text + "\n").map_err(|e| TribeError::io(path, e))
}
