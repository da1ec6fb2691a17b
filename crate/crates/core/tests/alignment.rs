use std::collections::BTreeMap;
use std::sync::Arc;

use ndarray::{Array2, Array3};
use proptest::prelude::*;
use tribe_core::alignment::*;
use tribe_core::datastore::{Modality, Split};

fn word(onset_s: f64, duration_s: f64, value: f32) -> TimedWordEmbedding {
    TimedWordEmbedding {
        word: "w".into(),
        onset_s,
        duration_s,
        embedding: Array2::from_elem((2, 3), value),
    }
}

/// Bins touched by `[onset, onset + duration)`, by brute force over bins.
fn touched(onset: f64, duration: f64, f: f64, steps: usize) -> usize {
    let duration = if duration > 0.0 { duration } else { 1e-3 };
    (0..steps)
        .filter(|&b| {
            let (lo, hi) = (b as f64 / f, (b + 1) as f64 / f);
            onset < hi && onset + duration > lo
        })
        .count()
}

proptest! {
    #[test]
    fn binning_conserves_mass(
        words in proptest::collection::vec((0.0f64..30.0, 0.0f64..2.0, -3.0f32..3.0), 0..20),
        steps in 1usize..60,
    ) {
        let f = 2.0;
        let list: Vec<TimedWordEmbedding> = words.iter().map(|&(o, d, v)| word(o, d, v)).collect();
        let (binned, report) = bin_words(&list, f, steps, 2, 3).unwrap();
        let expected: f64 = words
            .iter()
            .map(|&(o, d, v)| touched(o, d, f, steps) as f64 * v as f64)
            .sum();
        let got: f64 = binned.iter().map(|&v| v as f64).sum::<f64>() / 6.0;
        prop_assert!((got - expected).abs() < 1e-3 * (1.0 + expected.abs()));
        let dropped = words.iter().filter(|&&(o, d, _)| touched(o, d, f, steps) == 0).count();
        prop_assert_eq!(report.dropped, dropped);
    }

    #[test]
    fn interval_groups_partition_layers(
        mut anchors in proptest::collection::vec(0.05f64..1.0, 0..4),
        num_layers in 1usize..40,
    ) {
        anchors.sort_by(f64::total_cmp);
        anchors.dedup();
        anchors.push(1.0);
        let spec = LayerGroupSpec { anchors, ..LayerGroupSpec::default() };
        if let Ok(groups) = spec.groups(num_layers) {
            let flat: Vec<usize> = groups.concat();
            prop_assert_eq!(flat, (0..num_layers).collect::<Vec<_>>());
            prop_assert!(groups.iter().all(|g| !g.is_empty()));
        }
    }

    #[test]
    fn resampling_stays_within_input_range(
        values in proptest::collection::vec(-5.0f32..5.0, 60..200),
        ratio in 2.0f64..40.0,
    ) {
        let t = values.len();
        let series = Array3::from_shape_vec((t, 1, 1), values.clone()).unwrap();
        let out = resample_audio(series.view(), ratio * 2.0, 2.0).unwrap();
        prop_assert_eq!(out.dim().0, (t as f64 / ratio).floor() as usize);
        let lo = values.iter().copied().fold(f32::INFINITY, f32::min);
        let hi = values.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        prop_assert!(out.iter().all(|&v| v >= lo - 1e-4 && v <= hi + 1e-4));
    }
}

#[test]
fn integer_ratio_resampling_is_block_mean() {
    let t = 100;
    let series = Array3::from_shape_fn((t, 2, 1), |(i, l, _)| (i * (l + 1)) as f32);
    let out = resample_audio(series.view(), 50.0, 2.0).unwrap();
    assert_eq!(out.dim(), (4, 2, 1));
    for j in 0..4 {
        let mean = (25 * j..25 * (j + 1)).map(|i| i as f32).sum::<f32>() / 25.0;
        assert!((out[[j, 0, 0]] - mean).abs() < 1e-4);
        assert!((out[[j, 1, 0]] - 2.0 * mean).abs() < 1e-4);
    }
}

fn session(num_trs: usize, steps: usize) -> PreparedSession {
    let mut features = BTreeMap::new();
    features.insert(
        Modality::Audio,
        Arc::new(Array2::from_shape_fn((steps, 2), |(t, c)| (t * 10 + c) as f32)),
    );
    PreparedSession {
        session_id: "s".into(),
        subject_index: 0,
        video_id: "v".into(),
        split: Split::Train,
        num_trs,
        features,
        bold: Some(Arc::new(Array2::from_shape_fn((num_trs, 3), |(t, p)| (t * 3 + p) as f32))),
    }
}

#[test]
fn tiled_windows_cover_every_tr() {
    let cfg = WindowConfig {
        trs_per_window: 7,
        jitter_s: 0.0,
        ..WindowConfig::default()
    };
    let s = session(30, (30.0f64 * 1.49 * 2.0).ceil() as usize);
    let starts = tile_starts(30, 7).unwrap();
    assert_eq!(starts, vec![0, 7, 14, 21, 23]);
    let mut covered = vec![false; 30];
    for &st in &starts {
        let w = extract_window(&s, &cfg, st, 0.0).unwrap();
        assert_eq!(w.inputs[&Modality::Audio].nrows(), cfg.feature_steps());
        let targets = w.targets.unwrap();
        assert_eq!(targets[[0, 0]], (st * 3) as f32);
        covered[st..st + 7].iter_mut().for_each(|c| *c = true);
    }
    assert!(covered.iter().all(|&c| c));
}

#[test]
fn window_past_feature_end_is_padded() {
    let cfg = WindowConfig {
        trs_per_window: 5,
        jitter_s: 4.0,
        ..WindowConfig::default()
    };
    let steps = (20.0f64 * 1.49 * 2.0).ceil() as usize;
    let s = session(20, steps);
    let w = extract_window(&s, &cfg, 15, 3.0).unwrap();
    let first = cfg.feature_start(15, 3.0);
    let expect_pad = (first + cfg.feature_steps() as i64 - steps as i64).max(0) as usize;
    assert!(expect_pad > 0);
    assert_eq!(w.padded_steps(), expect_pad);
    let x = &w.inputs[&Modality::Audio];
    assert!(x.row(x.nrows() - 1).iter().all(|&v| v == 0.0));
    assert_eq!(x[[0, 0]], (first * 10) as f32);
}
