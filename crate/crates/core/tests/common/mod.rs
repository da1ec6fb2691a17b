#![allow(dead_code)]

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tribe_core::alignment::{LayerGroupSpec, WindowConfig};
use tribe_core::datastore::Modality;
use tribe_core::tribenet::{Fusion, ModalityInput, NetConfig, TribeNet};

/// Hidden 24, 2 layers, N = 3 TRs over 8 feature steps.
pub fn tiny_config() -> NetConfig {
    NetConfig {
        proj_dim: 8,
        num_layers: 2,
        num_heads: 2,
        hidden_size: 24,
        feedforward_mult: 2,
        num_parcels: 4,
        num_subjects: 2,
        modality_aggregation: Fusion::Concatenate,
        use_subject_embedding: true,
        window: WindowConfig {
            trs_per_window: 3,
            tr_seconds: 4.0 / 3.0,
            frequency_hz: 2.0,
            jitter_s: 0.0,
        },
        layer_groups: LayerGroupSpec::default(),
        modalities: vec![
            ModalityInput { modality: Modality::Text, input_dim: 3 },
            ModalityInput { modality: Modality::Audio, input_dim: 2 },
            ModalityInput { modality: Modality::Video, input_dim: 4 },
        ],
    }
}

pub fn random_inputs(cfg: &NetConfig, seed: u64) -> BTreeMap<Modality, Array2<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    cfg.modalities
        .iter()
        .map(|m| {
            let x = Array2::from_shape_fn((cfg.feature_steps(), m.input_dim), |_| {
                rng.random_range(-1.0f32..1.0)
            });
            (m.modality, x)
        })
        .collect()
}

/// Network with every parameter drawn at random, so no gradient is
/// trivially zero.
pub fn random_net(cfg: &NetConfig, seed: u64) -> TribeNet<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = TribeNet::<f64>::init(cfg, &mut rng).unwrap();
    for v in net.params_mut() {
        *v = rng.random_range(-0.6..0.6);
    }
    net
}

/// Small synthetic dataset: 2 subjects, 3 videos (the last one held out),
/// 30 TRs, 8 parcels.
pub fn tiny_synth(noise_std: f64, seed: u64) -> tribe_core::synthgen::SynthConfig {
    use tribe_core::synthgen::{SynthConfig, TeacherSpec};
    SynthConfig {
        teacher: TeacherSpec {
            num_parcels: 8,
            noise_std,
            ..TeacherSpec::default()
        },
        num_subjects: 2,
        num_sessions: 3,
        session_trs: 30,
        val_videos: 1,
        seed,
        ..SynthConfig::default()
    }
}

pub fn prepare(
    synth: &tribe_core::synthgen::SynthConfig,
) -> (tribe_core::synthgen::SynthOutput, tribe_core::alignment::PreparedDataset) {
    let out = tribe_core::synthgen::generate(synth).unwrap();
    let data =
        tribe_core::alignment::PreparedDataset::new(&out.dataset, &LayerGroupSpec::default()).unwrap();
    (out, data)
}

/// One layer, two heads, D = 8, windows of `n` TRs.
pub fn small_arch(n: usize, jitter_s: f64) -> tribe_core::tribenet::ArchConfig {
    tribe_core::tribenet::ArchConfig {
        proj_dim: 8,
        num_layers: 1,
        num_heads: 2,
        feedforward_mult: 2,
        window: WindowConfig {
            trs_per_window: n,
            jitter_s,
            ..WindowConfig::default()
        },
        ..Default::default()
    }
}
