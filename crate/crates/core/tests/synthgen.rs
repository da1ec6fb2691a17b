mod common;

use tribe_core::alignment::{LayerGroupSpec, PreparedDataset};
use tribe_core::datastore::{validate_manifest, Dataset, Modality, Split};
use tribe_core::evaluator::dataset_noise_ceiling;
use tribe_core::synthgen::*;

fn ceiling_config(noise_std: f64, seed: u64) -> SynthConfig {
    SynthConfig {
        teacher: TeacherSpec {
            num_parcels: 48,
            noise_std,
            ..TeacherSpec::default()
        },
        num_subjects: 2,
        num_sessions: 5,
        session_trs: 240,
        val_videos: 1,
        repeated_videos: 4,
        seed,
        ..SynthConfig::default()
    }
}

fn mean_rho_self(cfg: &SynthConfig) -> f64 {
    let (_, data) = common::prepare(cfg);
    dataset_noise_ceiling(&data, None).unwrap().mean_rho_self()
}

#[test]
fn generated_manifest_is_valid_and_split() {
    let mut cfg = common::tiny_synth(1.0, 0);
    cfg.num_sessions = 5;
    cfg.test_videos = 1;
    cfg.repeated_videos = 1;
    let out = generate(&cfg).unwrap();
    let m = &out.dataset.manifest;
    validate_manifest(m, false).unwrap();
    // 5 videos plus one repeat, for each of 2 subjects.
    assert_eq!(m.sessions.len(), 12);
    assert_eq!(m.sessions_in(Split::Val).count(), 4);
    assert_eq!(m.sessions_in(Split::Test).count(), 2);
    assert!(m.sessions.iter().any(|s| s.session_id.ends_with("_rep1")));
    let expected_steps = (30.0f64 * 1.49 * 2.0).ceil() as usize;
    assert!(m.sessions.iter().all(|s| s.num_feature_steps == expected_steps));
    for (session, bold) in m.sessions.iter().zip(&out.dataset.bold) {
        let bold = bold.as_ref().unwrap();
        assert_eq!(bold.data.dim(), (session.num_trs, 8));
        for col in bold.data.columns() {
            let mean = col.mean().unwrap();
            assert!(mean.abs() < 1e-4, "session is z-scored");
        }
    }
}

#[test]
fn generation_is_deterministic() {
    let cfg = common::tiny_synth(1.0, 9);
    let a = generate(&cfg).unwrap();
    let b = generate(&cfg).unwrap();
    assert_eq!(a.teacher, b.teacher);
    assert_eq!(a.dataset.bold, b.dataset.bold);
    let c = generate(&common::tiny_synth(1.0, 10)).unwrap();
    assert_ne!(a.dataset.bold, c.dataset.bold);
}

#[test]
fn drivers_follow_the_default_cycle() {
    let spec = TeacherSpec::default();
    let d = spec.drivers();
    assert_eq!(d[0], Driver::single(Modality::Text));
    assert_eq!(d[4], Driver::pair(Modality::Text, Modality::Video));
    assert_eq!(d[6], d[0]);
    assert_eq!(d[5].label(), "audio+video");
    let out = generate(&common::tiny_synth(1.0, 0)).unwrap();
    for r in &out.teacher.readouts {
        assert_eq!(r.interaction.is_some(), r.driver.modalities().len() == 2);
    }
}

#[test]
fn hrf_peaks_near_five_seconds_and_undershoots() {
    let hrf = Hrf::default();
    let peak = hrf.peak_time();
    assert!((4.0..6.0).contains(&peak), "{peak}");
    assert!(hrf.at(peak) > hrf.at(peak - 1.0) && hrf.at(peak) > hrf.at(peak + 1.0));
    assert!(hrf.at(15.0) < 0.0);
    assert_eq!(hrf.at(-1.0), 0.0);
}

#[test]
fn written_dataset_loads_back_identically() {
    let dir = tempfile::tempdir().unwrap();
    let out = generate(&common::tiny_synth(1.0, 2)).unwrap();
    let manifest = write_synth(dir.path(), &out).unwrap();
    assert!(dir.path().join("teacher.json").exists());
    let back = Dataset::load_path(&manifest).unwrap();
    assert_eq!(back.manifest.sessions, out.dataset.manifest.sessions);
    for (a, b) in back.bold.iter().zip(&out.dataset.bold) {
        let (a, b) = (a.as_ref().unwrap(), b.as_ref().unwrap());
        for (x, y) in a.data.iter().zip(b.data.iter()) {
            assert!((x - y).abs() < 1e-5);
        }
    }
    for (a, b) in back.features.iter().zip(&out.dataset.features) {
        for m in Modality::ALL {
            assert_eq!(a[&m].data, b[&m].data);
        }
    }
    PreparedDataset::new(&back, &LayerGroupSpec::default()).unwrap();
}

#[test]
fn unit_noise_gives_half_self_correlation() {
    let cfg = ceiling_config(1.0, 5);
    assert_eq!(cfg.teacher.expected_rho_self(0), 0.5);
    let rho = mean_rho_self(&cfg);
    assert!((rho - 0.5).abs() < 0.05, "{rho}");
}

#[test]
fn doubling_noise_lowers_self_correlation() {
    let low = mean_rho_self(&ceiling_config(1.0, 6));
    let high = mean_rho_self(&ceiling_config(2.0, 6));
    assert!(high < low, "{high} vs {low}");
    assert!((high - 0.2).abs() < 0.05, "{high}");
}
