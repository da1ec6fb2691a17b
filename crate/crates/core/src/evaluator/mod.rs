//! Scoring: per-parcel Pearson, noise ceilings, normalized scores, modality
//! probing and the ablation harness.

mod ablation;
mod ceiling;
mod pearson;
mod probe;
mod report;
mod scores;

pub use ablation::{
    modality_subsets, run_ablation, subset_label, AblationReport, AblationRow, AblationSpec,
    AblationSuite, ConditionSummary,
};
pub use ceiling::{
    dataset_noise_ceiling, noise_ceiling, noise_ceiling_repeats, normalized_scores, rho_max,
    NoiseCeiling,
};
pub use pearson::pearson;
pub use probe::{probe_modalities, probe_row, ProbeReport, ProbeRow};
pub use report::{
    describe, summarize, write_ablation_csv, write_histogram_csv, write_probe_csv,
    write_scores_csv, Distribution, ScoreSummary,
};
pub use scores::{
    evaluate_net, predict_session, predict_split, score_predictions, ScoreMeta, ScoreTable,
    SessionPrediction,
};
