mod common;

use std::sync::Arc;

use approx::assert_abs_diff_eq;
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tribe_core::datastore::{Modality, Split};
use tribe_core::trainer::*;
use tribe_core::TribeError;

#[test]
fn dropout_matches_exact_enumeration() {
    let p = 0.2;
    // Enumerate the 8 raw outcomes, then apply the uniform unmasking rule to
    // the all-masked one.
    let mut exact = [0.0f64; 8];
    for bits in 0..8usize {
        let prob: f64 = (0..3)
            .map(|i| if bits & (1 << i) != 0 { p } else { 1.0 - p })
            .product();
        if bits == 7 {
            for i in 0..3 {
                exact[7 & !(1 << i)] += prob / 3.0;
            }
        } else {
            exact[bits] += prob;
        }
    }
    let rate: Vec<f64> = (0..3)
        .map(|i| (0..8).filter(|b| b & (1 << i) != 0).map(|b| exact[b]).sum())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let draws = 1_000_000;
    let mut counts = [0usize; 8];
    for _ in 0..draws {
        let m = sample_modality_mask(p, &mut rng);
        let bits = Modality::ALL
            .iter()
            .enumerate()
            .filter(|(_, &md)| m.is_masked(md))
            .fold(0usize, |acc, (i, _)| acc | (1 << i));
        counts[bits] += 1;
    }
    assert_eq!(counts[7], 0);
    for (b, &c) in counts.iter().enumerate() {
        let q = exact[b];
        let sigma = (q * (1.0 - q) / draws as f64).sqrt();
        let got = c as f64 / draws as f64;
        assert!((got - q).abs() <= 4.0 * sigma + 1e-12, "outcome {b}: {got} vs {q}");
    }
    for (i, &r) in rate.iter().enumerate() {
        let got = (0..8).filter(|b| b & (1 << i) != 0).map(|b| counts[b]).sum::<usize>() as f64
            / draws as f64;
        assert!((0.192..=0.2).contains(&r));
        assert!((got - r).abs() < 0.002, "modality {i}: {got} vs {r}");
    }
}

#[test]
fn dropout_edge_probabilities() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..10_000 {
        let m = sample_modality_mask(0.0, &mut rng);
        assert!(Modality::ALL.iter().all(|&md| !m.is_masked(md)));
        let m = sample_modality_mask(0.99, &mut rng);
        assert!(Modality::ALL.iter().any(|&md| !m.is_masked(md)));
    }
    // Restricted to two modalities the third is never touched.
    for _ in 0..1000 {
        let m = sample_mask_for(0.9, &[Modality::Text, Modality::Video], &mut rng);
        assert!(!m.is_masked(Modality::Audio));
        assert!(!(m.is_masked(Modality::Text) && m.is_masked(Modality::Video)));
    }
}

fn finite_difference_check(kind: LossKind) {
    let mut rng = ChaCha8Rng::seed_from_u64(kind as u64 + 10);
    let pred = Array3::from_shape_fn((2, 5, 3), |_| rng.random_range(-2.0..2.0));
    let target = Array3::from_shape_fn((2, 5, 3), |_| rng.random_range(-2.0..2.0));
    let (_, grad) = compute_loss(pred.view(), target.view(), kind).unwrap();
    let eps = 1e-6;
    for idx in ndarray::indices(pred.dim()) {
        let mut plus = pred.clone();
        plus[idx] += eps;
        let mut minus = pred.clone();
        minus[idx] -= eps;
        let lp = compute_loss(plus.view(), target.view(), kind).unwrap().0;
        let lm = compute_loss(minus.view(), target.view(), kind).unwrap().0;
        let fd = (lp - lm) / (2.0 * eps);
        assert!((fd - grad[idx]).abs() < 1e-7, "{kind:?} {idx:?}: {} vs {fd}", grad[idx]);
    }
}

#[test]
fn loss_gradients_match_finite_differences() {
    for kind in LossKind::ALL {
        finite_difference_check(kind);
    }
}

#[test]
fn mse_is_mean_over_all_elements() {
    let pred = Array3::from_shape_vec((1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let target = Array3::<f64>::zeros((1, 2, 2));
    let (l, _) = compute_loss(pred.view(), target.view(), LossKind::Mse).unwrap();
    assert_eq!(l, 7.5);
    assert!(compute_loss(pred.view(), Array3::<f64>::zeros((1, 2, 3)).view(), LossKind::Mse).is_err());
}

#[test]
fn schedule_boundaries() {
    let cfg = TrainConfig::default();
    for total in [10, 37, 1000] {
        let warm = warmup_steps(total, cfg.warmup_fraction);
        assert_eq!(lr_at(0, total, &cfg), 0.0);
        assert_abs_diff_eq!(lr_at(warm, total, &cfg), cfg.lr_peak, epsilon = 1e-18);
        assert!(lr_at(total - 1, total, &cfg) < cfg.lr_peak * 0.01);
    }
    assert_eq!(warmup_steps(5, 0.1), 1);
    // Hand evaluation of the cosine at a quarter of the decay.
    let cfg = TrainConfig {
        lr_peak: 2.0,
        warmup_fraction: 0.0,
        ..TrainConfig::default()
    };
    assert_abs_diff_eq!(lr_at(25, 101, &cfg), 1.0 + std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
}

#[test]
fn adamw_matches_reference() {
    let (lr, wd, b1, b2, eps) = (0.05, 0.1, 0.9, 0.999, 1e-8);
    let mut opt = AdamW::<f64>::new(3, wd);
    let mut params = vec![1.0, -2.0, 0.5];
    let mut reference = params.clone();
    let mut m = [0.0; 3];
    let mut v = [0.0; 3];
    for t in 1..=20 {
        let grads: Vec<f64> = params.iter().map(|p| 2.0 * p - 0.3).collect();
        opt.step(&mut params, &grads, lr).unwrap();
        for i in 0..3 {
            let g = 2.0 * reference[i] - 0.3;
            reference[i] -= lr * wd * reference[i];
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            let mh = m[i] / (1.0 - b1.powi(t));
            let vh = v[i] / (1.0 - b2.powi(t));
            reference[i] -= lr * mh / (vh.sqrt() + eps);
        }
        for i in 0..3 {
            assert!((params[i] - reference[i]).abs() < 1e-12);
        }
    }
    assert_eq!(opt.steps_taken(), 20);
}

fn tiny_train(epochs: usize, swa_start: usize, p: f64) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 4,
        lr_peak: 3e-3,
        swa_start_epoch: swa_start,
        early_stop_patience: epochs,
        modality_dropout_p: p,
        seed: 5,
        ..TrainConfig::default()
    }
}

#[test]
fn swa_is_mean_of_epoch_snapshots() {
    let (_, data) = common::prepare(&common::tiny_synth(0.5, 1));
    let net_cfg = common::small_arch(10, 2.0).build(&data).unwrap();
    let cfg = tiny_train(5, 3, 0.2);
    let mut snapshots: Vec<Vec<f32>> = Vec::new();
    let mut counts = Vec::new();
    let out = train_observed(&data, &net_cfg, &cfg, |e| {
        snapshots.push(e.params.to_vec());
        counts.push(e.swa_count);
    })
    .unwrap();
    assert_eq!(counts, vec![0, 0, 1, 2, 3]);
    let swa = out.swa_net.as_ref().unwrap().params();
    for (i, &w) in swa.iter().enumerate() {
        let mean = snapshots[2..].iter().map(|s| s[i] as f64).sum::<f64>() / 3.0;
        assert!((w as f64 - mean).abs() < 1e-6);
    }
    assert_eq!(out.final_net.params(), &snapshots[4][..]);
    assert!(out.log.iter().map(|l| l.swa_active).eq([false, false, true, true, true]));
}

#[test]
fn swa_from_last_epoch_equals_final_weights() {
    let (_, data) = common::prepare(&common::tiny_synth(0.5, 1));
    let net_cfg = common::small_arch(10, 2.0).build(&data).unwrap();
    let out = train(&data, &net_cfg, &tiny_train(3, 3, 0.2)).unwrap();
    assert_eq!(out.swa_net.unwrap().params(), out.final_net.params());
}

#[test]
fn same_seed_is_bit_identical_and_seed_matters() {
    let (_, data) = common::prepare(&common::tiny_synth(0.5, 1));
    let net_cfg = common::small_arch(10, 2.0).build(&data).unwrap();
    let cfg = tiny_train(3, 2, 0.2);
    let a = train(&data, &net_cfg, &cfg).unwrap();
    let b = train(&data, &net_cfg, &cfg).unwrap();
    assert_eq!(a.final_net.params(), b.final_net.params());
    assert_eq!(a.log_jsonl(), b.log_jsonl());
    let c = train(&data, &net_cfg, &TrainConfig { seed: 6, ..cfg }).unwrap();
    assert_ne!(a.final_net.params(), c.final_net.params());
}

#[test]
fn deterministic_pipeline_without_dropout_or_jitter() {
    let (_, data) = common::prepare(&common::tiny_synth(0.5, 1));
    let net_cfg = common::small_arch(10, 0.0).build(&data).unwrap();
    let cfg = tiny_train(2, 2, 0.0);
    let a = train(&data, &net_cfg, &cfg).unwrap();
    let b = train(&data, &net_cfg, &cfg).unwrap();
    assert_eq!(a.swa_net.unwrap().params(), b.swa_net.unwrap().params());
}

#[test]
fn log_lines_carry_the_documented_fields() {
    let (_, data) = common::prepare(&common::tiny_synth(0.5, 1));
    let net_cfg = common::small_arch(10, 2.0).build(&data).unwrap();
    let cfg = tiny_train(2, 2, 0.2);
    let out = train(&data, &net_cfg, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = write_training_run(dir.path(), &out, &cfg).unwrap();
    assert!(files.iter().all(|f| f.exists()));
    let text = std::fs::read_to_string(dir.path().join("log.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    for key in ["epoch", "step", "lr", "train_loss", "val_pearson", "swa_active"] {
        assert!(lines[0].get(key).is_some(), "missing {key}");
    }
    let swa = tribe_core::tribenet::load_checkpoint(&dir.path().join("swa")).unwrap();
    assert_eq!(swa.params(), out.shipped().params());
}

#[test]
fn nan_targets_abort_with_diagnostics() {
    let (_, mut data) = common::prepare(&common::tiny_synth(0.5, 1));
    let s = data.sessions.iter_mut().find(|s| s.split == Split::Train).unwrap();
    let mut bold = (**s.bold.as_ref().unwrap()).clone();
    bold.fill(f32::NAN);
    s.bold = Some(Arc::new(bold));
    let net_cfg = common::small_arch(10, 0.0).build(&data).unwrap();
    match train(&data, &net_cfg, &tiny_train(1, 1, 0.0)) {
        Err(TribeError::NonFiniteLoss { epoch, .. }) => assert_eq!(epoch, 1),
        other => panic!("expected a non-finite loss error, got {:?}", other.map(|o| o.log)),
    }
}

#[test]
fn empty_validation_split_is_rejected() {
    let (_, data) = common::prepare(&common::tiny_synth(0.5, 1));
    let only_train = data.filtered(|s| s.split == Split::Train);
    let net_cfg = common::small_arch(10, 0.0).build(&data).unwrap();
    assert!(matches!(
        train(&only_train, &net_cfg, &tiny_train(1, 1, 0.0)),
        Err(TribeError::EmptySplit(s)) if s == "val"
    ));
}

#[test]
fn invalid_train_configs_are_rejected() {
    let ok = TrainConfig::default();
    assert!(ok.validate().is_ok());
    for bad in [
        TrainConfig { modality_dropout_p: 1.0, ..ok.clone() },
        TrainConfig { swa_start_epoch: 0, ..ok.clone() },
        TrainConfig { swa_start_epoch: 16, ..ok.clone() },
        TrainConfig { batch_size: 0, ..ok.clone() },
    ] {
        assert!(bad.validate().is_err());
    }
}

#[test]
fn learns_the_synthetic_teacher() {
    use tribe_core::evaluator::dataset_noise_ceiling;
    use tribe_core::synthgen::{SynthConfig, TeacherSpec};
    let synth = SynthConfig {
        teacher: TeacherSpec {
            noise_std: 0.5,
            interaction_strength: 0.0,
            ..TeacherSpec::default()
        },
        session_trs: 300,
        repeated_videos: 1,
        seed: 2,
        ..SynthConfig::default()
    };
    let (_, data) = common::prepare(&synth);
    let arch = tribe_core::tribenet::ArchConfig {
        proj_dim: 16,
        num_heads: 4,
        ..common::small_arch(20, 2.0)
    };
    let net_cfg = arch.build(&data).unwrap();
    let cfg = TrainConfig {
        epochs: 20,
        batch_size: 8,
        lr_peak: 3e-3,
        swa_start_epoch: 15,
        early_stop_patience: 20,
        ..TrainConfig::default()
    };
    let out = train(&data, &net_cfg, &cfg).unwrap();
    let val: Vec<f64> = out.log.iter().map(|l| l.val_pearson).collect();
    assert!(val[..4].windows(2).all(|w| w[1] > w[0]), "{val:?}");
    let ceiling = dataset_noise_ceiling(&data, Some(Split::Val)).unwrap();
    let mean_max = ceiling.rho_max.iter().sum::<f64>() / ceiling.rho_max.len() as f64;
    let last = *val.last().unwrap();
    assert!(last > 0.7 * mean_max, "final {last} vs ceiling {mean_max}");
}
