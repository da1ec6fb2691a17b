use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::scores::evaluate_net;
use crate::alignment::PreparedDataset;
use crate::datastore::{Modality, Split};
use crate::error::{Result, TribeError};
use crate::trainer::{train, TrainConfig};
use crate::tribenet::{ModalityMask, NetConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationSuite {
    ModalitySubsets,
    SingleSubject,
    NoTransformer,
    SessionsScaling,
}

impl AblationSuite {
    pub fn parse(s: &str) -> Option<AblationSuite> {
        match s {
            "modality_subsets" => Some(AblationSuite::ModalitySubsets),
            "single_subject" => Some(AblationSuite::SingleSubject),
            "no_transformer" => Some(AblationSuite::NoTransformer),
            "sessions_scaling" => Some(AblationSuite::SessionsScaling),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSpec {
    pub suite: AblationSuite,
    pub seeds: Vec<u64>,
    /// Training videos per subject for the scaling suite.
    #[serde(default = "default_session_counts")]
    pub session_counts: Vec<usize>,
    #[serde(default = "default_eval_split")]
    pub eval_split: Split,
}

fn default_session_counts() -> Vec<usize> {
    vec![2, 4, 8, 16]
}

fn default_eval_split() -> Split {
    Split::Val
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub condition: String,
    pub seed: u64,
    pub subject_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: String,
    /// Mean over seeds of the mean score across subjects and parcels.
    pub mean_score: f64,
    pub per_seed: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub suite: AblationSuite,
    pub rows: Vec<AblationRow>,
    pub summary: Vec<ConditionSummary>,
}

impl AblationReport {
    pub fn mean_of(&self, condition: &str) -> Option<f64> {
        self.summary
            .iter()
            .find(|c| c.condition == condition)
            .map(|c| c.mean_score)
    }
}

/// Non-empty subsets of `modalities`, smallest first.
pub fn modality_subsets(modalities: &[Modality]) -> Vec<Vec<Modality>> {
    let n = modalities.len();
    let mut subsets: Vec<Vec<Modality>> = (1..1u32 << n)
        .map(|bits| {
            (0..n)
                .filter(|i| bits & (1 << i) != 0)
                .map(|i| modalities[i])
                .collect()
        })
        .collect();
    subsets.sort_by_key(|s| s.len());
    subsets
}

pub fn subset_label(modalities: &[Modality]) -> String {
    modalities.iter().map(|m| m.name()).collect::<Vec<_>>().join("+")
}

struct Condition {
    name: String,
    net: NetConfig,
    data: PreparedDataset,
    /// Trains one model per subject.
    per_subject: bool,
}

/// Trains and scores every condition of `spec.suite` for every seed.
pub fn run_ablation(
    spec: &AblationSpec,
    data: &PreparedDataset,
    net_config: &NetConfig,
    train_config: &TrainConfig,
) -> Result<AblationReport> {
    if spec.seeds.is_empty() {
        return Err(TribeError::InvalidConfig("ablation needs at least one seed".into()));
    }
    let conditions = build_conditions(spec, data, net_config)?;
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for cond in &conditions {
        let mut per_seed = Vec::new();
        for &seed in &spec.seeds {
            let cfg = TrainConfig {
                seed,
                ..train_config.clone()
            };
            let mut scores = Vec::new();
            let subjects: Vec<Option<usize>> = if cond.per_subject {
                (0..data.num_subjects()).map(Some).collect()
            } else {
                vec![None]
            };
            for subject in subjects {
                let run_data = match subject {
                    Some(s) => cond.data.filtered(|x| x.subject_index == s),
                    None => cond.data.clone(),
                };
                log::info!("ablation {} seed {seed} subject {subject:?}", cond.name);
                let outcome = train(&run_data, &cond.net, &cfg)?;
                let table = evaluate_net(
                    outcome.shipped(),
                    &run_data,
                    spec.eval_split,
                    &ModalityMask::none(),
                    &cond.name,
                )?;
                for (i, m) in table.per_subject_mean.iter().enumerate() {
                    if subject.is_none_or(|s| s == i) && !m.is_nan() {
                        rows.push(AblationRow {
                            condition: cond.name.clone(),
                            seed,
                            subject_id: data.subjects[i].clone(),
                            score: *m,
                        });
                        scores.push(*m);
                    }
                }
            }
            per_seed.push(scores.iter().sum::<f64>() / scores.len().max(1) as f64);
        }
        summary.push(ConditionSummary {
            condition: cond.name.clone(),
            mean_score: per_seed.iter().sum::<f64>() / per_seed.len() as f64,
            per_seed,
        });
    }
    Ok(AblationReport {
        suite: spec.suite,
        rows,
        summary,
    })
}

fn build_conditions(spec: &AblationSpec, data: &PreparedDataset, base: &NetConfig) -> Result<Vec<Condition>> {
    let plain = |name: &str, net: NetConfig, data: PreparedDataset| Condition {
        name: name.to_string(),
        net,
        data,
        per_subject: false,
    };
    Ok(match spec.suite {
        AblationSuite::ModalitySubsets => modality_subsets(&base.active_modalities())
            .into_iter()
            .map(|subset| plain(&subset_label(&subset), base.clone().with_modalities(&subset), data.clone()))
            .collect(),
        AblationSuite::SingleSubject => vec![
            plain("multi_subject", base.clone(), data.clone()),
            Condition {
                per_subject: true,
                ..plain("single_subject", base.clone(), data.clone())
            },
        ],
        AblationSuite::NoTransformer => {
            let identity = NetConfig {
                num_layers: 0,
                ..base.clone()
            };
            vec![
                plain("full", base.clone(), data.clone()),
                plain("no_transformer", identity, data.clone()),
            ]
        }
        AblationSuite::SessionsScaling => {
            let videos: BTreeSet<&str> = data
                .split(Split::Train)
                .iter()
                .map(|s| s.video_id.as_str())
                .collect();
            let videos: Vec<&str> = videos.into_iter().collect();
            let mut out = Vec::new();
            for &k in &spec.session_counts {
                if k == 0 || k > videos.len() {
                    return Err(TribeError::InvalidConfig(format!(
                        "cannot train on {k} sessions, {} training videos available",
                        videos.len()
                    )));
                }
                let keep: BTreeSet<String> = videos[..k].iter().map(|v| v.to_string()).collect();
                let subset = data.filtered(|s| s.split != Split::Train || keep.contains(&s.video_id));
                out.push(plain(&format!("sessions_{k}"), base.clone(), subset));
            }
            out
        }
    })
}
