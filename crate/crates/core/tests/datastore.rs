use std::path::{Path, PathBuf};

use proptest::prelude::*;
use tribe_core::datastore::*;
use tribe_core::synthgen::{generate, write_synth, SynthConfig, TeacherSpec};
use tribe_core::TribeError;

fn small_synth(subjects: usize, videos: usize) -> SynthConfig {
    SynthConfig {
        teacher: TeacherSpec {
            num_parcels: 6,
            ..TeacherSpec::default()
        },
        num_subjects: subjects,
        num_sessions: videos,
        session_trs: 12,
        val_videos: 1,
        ..SynthConfig::default()
    }
}

fn written(subjects: usize, videos: usize) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let out = generate(&small_synth(subjects, videos)).unwrap();
    let path = write_synth(dir.path(), &out).unwrap();
    (dir, path)
}

fn edit_manifest(path: &Path, edit: impl FnOnce(&mut DatasetManifest)) {
    let mut m = load_manifest(path).unwrap();
    edit(&mut m);
    save_manifest(&m, path).unwrap();
}

#[test]
fn consistent_holdout_loads_18_train_2_val() {
    let (_dir, path) = written(2, 10);
    let m = load_manifest(&path).unwrap();
    assert_eq!(m.sessions_in(Split::Train).count(), 18);
    assert_eq!(m.sessions_in(Split::Val).count(), 2);
    let data = Dataset::load(m).unwrap();
    for b in data.bold.iter().flatten() {
        for col in b.data.columns() {
            let n = col.len() as f64;
            let mean = col.iter().map(|&v| v as f64).sum::<f64>() / n;
            let var = col.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-5);
            assert!((var.sqrt() - 1.0).abs() < 1e-4);
        }
    }
}

#[test]
fn video_val_for_one_subject_only_is_leakage() {
    let (_dir, path) = written(2, 10);
    edit_manifest(&path, |m| {
        let s = m
            .sessions
            .iter_mut()
            .find(|s| s.subject_id == "sub-01" && s.video_id == "v03")
            .unwrap();
        s.split = Split::Val;
    });
    match load_manifest(&path) {
        Err(TribeError::SplitLeakage { video, .. }) => assert_eq!(video, "v03"),
        other => panic!("expected split leakage, got {other:?}"),
    }
}

#[test]
fn duplicate_session_ids_are_rejected() {
    let (_dir, path) = written(1, 3);
    edit_manifest(&path, |m| {
        let dup = m.sessions[0].clone();
        m.sessions.push(dup);
    });
    assert!(matches!(load_manifest(&path), Err(TribeError::DuplicateSession(id)) if id == "sub-01_v00"));
}

#[test]
fn missing_file_names_the_session() {
    let (dir, path) = written(1, 3);
    std::fs::remove_file(dir.path().join("bold/sub-01_v01.f32")).unwrap();
    match load_manifest(&path) {
        Err(TribeError::MissingFile { session, .. }) => assert_eq!(session, "sub-01_v01"),
        other => panic!("expected missing file, got {other:?}"),
    }
}

#[test]
fn declared_trs_must_match_bold_shape() {
    let (_dir, path) = written(1, 3);
    edit_manifest(&path, |m| m.sessions[1].num_trs = 13);
    match load_manifest(&path) {
        Err(TribeError::ShapeMismatch { session, .. }) => assert_eq!(session, "sub-01_v01"),
        other => panic!("expected shape mismatch, got {other:?}"),
    }
}

#[test]
fn truncated_feature_file_is_a_shape_mismatch() {
    let (dir, path) = written(1, 3);
    let f = dir.path().join("features/v00/audio.f32");
    let bytes = std::fs::read(&f).unwrap();
    std::fs::write(&f, &bytes[..bytes.len() - 4]).unwrap();
    assert!(matches!(load_manifest(&path), Err(TribeError::ShapeMismatch { .. })));
}

#[test]
fn feature_tensor_100x3x8_is_9600_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.f32");
    let data: Vec<f32> = (0..2400).map(|i| i as f32).collect();
    write_tensor(&path, &[100, 3, 8], &data).unwrap();
    assert_eq!(tensor_file_len(&path).unwrap(), 9600);
    let t = read_tensor(&path).unwrap();
    assert_eq!(t.shape, vec![100, 3, 8]);
    assert_eq!(t.data, data);
}

#[test]
fn too_few_feature_steps_is_rejected() {
    let (_dir, path) = written(1, 3);
    let mut m = load_manifest(&path).unwrap();
    // 12 TRs of 1.49 s at 2 Hz need at least 35 declared steps.
    m.sessions[0].num_feature_steps = 34;
    assert!(validate_manifest(&m, false).is_err());
    m.sessions[0].num_feature_steps = 35;
    assert!(validate_manifest(&m, false).is_ok());
}

#[test]
fn ten_videos_four_subjects_hold_out_one_video() {
    let out = generate(&small_synth(4, 10)).unwrap();
    let m = make_split(&out.dataset.manifest, 0.1, 7).unwrap();
    let val: Vec<&SessionRecord> = m.sessions_in(Split::Val).collect();
    assert_eq!(val.len(), 4);
    assert!(val.iter().all(|s| s.video_id == val[0].video_id));
    validate_manifest(&m, false).unwrap();
}

#[test]
fn half_of_two_videos_holds_out_one() {
    let out = generate(&small_synth(1, 2)).unwrap();
    let m = make_split(&out.dataset.manifest, 0.5, 0).unwrap();
    assert_eq!(m.sessions_in(Split::Val).count(), 1);
    assert_eq!(m.sessions_in(Split::Train).count(), 1);
}

#[test]
fn split_is_deterministic_and_validated() {
    let out = generate(&small_synth(2, 10)).unwrap();
    let a = make_split(&out.dataset.manifest, 0.3, 11).unwrap();
    let b = make_split(&out.dataset.manifest, 0.3, 11).unwrap();
    assert_eq!(a, b);
    assert!(make_split(&out.dataset.manifest, 0.0, 1).is_err());
    assert!(make_split(&out.dataset.manifest, 1.0, 1).is_err());
    let one = generate(&SynthConfig {
        num_sessions: 2,
        ..small_synth(1, 2)
    })
    .unwrap();
    let mut single = one.dataset.manifest.clone();
    single.sessions.truncate(1);
    assert!(make_split(&single, 0.5, 0).is_err());
}

#[test]
fn constant_parcel_z_scores_to_zero() {
    let bold = BoldSeries {
        data: ndarray::array![[5.0, 1.0], [5.0, 2.0], [5.0, 3.0]],
        meta: BoldMeta::default(),
        session_id: "s".into(),
        subject_id: "a".into(),
    };
    let (z, report) = zscore_session(&bold).unwrap();
    assert_eq!(report.constant_parcels, vec![0]);
    assert!(z.data.column(0).iter().all(|&v| v == 0.0));
    assert!((z.data[[0, 1]] + 1.2247449).abs() < 1e-6);
}

proptest! {
    #[test]
    fn tensor_round_trip(shape in proptest::collection::vec(1usize..5, 1..4), seed in any::<u32>()) {
        let n: usize = shape.iter().product();
        let data: Vec<f32> = (0..n).map(|i| (i as f32 * 0.37 + seed as f32).sin()).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.f32");
        write_tensor(&path, &shape, &data).unwrap();
        let t = read_tensor(&path).unwrap();
        prop_assert_eq!(t.shape, shape);
        prop_assert_eq!(t.data, data);
    }

    #[test]
    fn zscore_is_idempotent(values in proptest::collection::vec(-100.0f32..100.0, 4..40)) {
        let rows = values.len() / 2;
        let data = ndarray::Array2::from_shape_vec((rows, 2), values[..rows * 2].to_vec()).unwrap();
        let bold = BoldSeries { data, meta: BoldMeta::default(), session_id: "s".into(), subject_id: "a".into() };
        let (once, _) = zscore_session(&bold).unwrap();
        let (twice, _) = zscore_session(&once).unwrap();
        for (a, b) in once.data.iter().zip(twice.data.iter()) {
            prop_assert!((a - b).abs() < 1e-5);
        }
    }
}
