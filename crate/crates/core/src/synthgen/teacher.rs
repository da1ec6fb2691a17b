use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::{s, Array1, Array2, Array3, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Driver, SynthConfig, TeacherSpec};
use crate::datastore::zscore::zscore_columns;
use crate::datastore::{
    BoldMeta, BoldSeries, Dataset, DatasetManifest, EmbeddingSeries, Modality, ModalityMeta,
    SessionRecord, Split,
};
use crate::error::{Result, TribeError};
use crate::trainer::write_json;

/// Readout of one parcel. `linear[s][i]` weights the latents of the i-th
/// driver modality for subject `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParcelReadout {
    pub driver: Driver,
    pub linear: Vec<Vec<Vec<f64>>>,
    /// Projections whose product forms the interaction term of a pair.
    pub interaction: Option<(Vec<f64>, Vec<f64>)>,
}

/// Ground truth behind a synthetic dataset. Only tests and reports read it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherRecord {
    pub config: SynthConfig,
    pub readouts: Vec<ParcelReadout>,
    /// Factor that brings each `[subject][parcel]` signal to unit variance.
    pub signal_scale: Vec<Vec<f64>>,
}

impl TeacherRecord {
    pub fn drivers(&self) -> Vec<Driver> {
        self.readouts.iter().map(|r| r.driver).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub dataset: Dataset,
    pub teacher: TeacherRecord,
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize, std: f64) -> Vec<f64> {
    let dist = Normal::new(0.0, std).expect("finite std");
    (0..n).map(|_| dist.sample(rng)).collect()
}

fn normal_array(rng: &mut ChaCha8Rng, shape: (usize, usize), std: f64) -> Array2<f64> {
    Array2::from_shape_vec(shape, normal_vec(rng, shape.0 * shape.1, std)).expect("shape")
}

/// Unit-variance Gaussian noise smoothed along time with a Gaussian kernel of
/// `sigma` steps.
fn smooth_latents(rng: &mut ChaCha8Rng, steps: usize, dim: usize, sigma: f64) -> Array2<f64> {
    let radius = (3.0 * sigma).ceil() as usize;
    let raw = normal_array(rng, (steps + 2 * radius, dim), 1.0);
    let mut out = if radius == 0 {
        raw
    } else {
        let kernel: Vec<f64> = (0..=2 * radius)
            .map(|i| {
                let x = i as f64 - radius as f64;
                (-0.5 * x * x / (sigma * sigma)).exp()
            })
            .collect();
        let mut out = Array2::<f64>::zeros((steps, dim));
        for t in 0..steps {
            for (i, &k) in kernel.iter().enumerate() {
                out.row_mut(t).scaled_add(k, &raw.row(t + i));
            }
        }
        out
    };
    for mut col in out.columns_mut() {
        let mean = col.mean().unwrap_or(0.0);
        let std = col.std(0.0).max(1e-12);
        col.mapv_inplace(|v| (v - mean) / std);
    }
    out
}

/// Causal moving average over `window` steps.
fn causal_average(x: &Array2<f64>, window: usize) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros(x.raw_dim());
    for t in 0..x.nrows() {
        let lo = (t + 1).saturating_sub(window);
        let mean = x.slice(s![lo..=t, ..]).mean_axis(Axis(0)).expect("non-empty");
        out.row_mut(t).assign(&mean);
    }
    out
}

/// Generates a synthetic dataset and its teacher record.
pub fn generate(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let spec = &config.teacher;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let f = spec.frequency_hz;
    let tr = spec.tr_seconds;
    let num_trs = config.session_trs;
    let feat_steps = (num_trs as f64 * tr * f).ceil() as usize;
    let num_parcels = spec.num_parcels;
    let subjects: Vec<String> = (0..config.num_subjects)
        .map(|s| format!("sub-{:02}", s + 1))
        .collect();

    // Per modality and layer: latent -> feature maps.
    let feature_maps: BTreeMap<Modality, Vec<Array2<f64>>> = spec
        .modalities
        .iter()
        .map(|m| {
            let std = 1.0 / (m.latent_dim as f64).sqrt();
            let maps = (0..m.num_layers)
                .map(|_| normal_array(&mut rng, (m.latent_dim, m.dim), std))
                .collect();
            (m.modality, maps)
        })
        .collect();

    let readouts: Vec<ParcelReadout> = spec
        .drivers()
        .into_iter()
        .map(|driver| {
            let mods = driver.modalities();
            let shared: Vec<Vec<f64>> = mods
                .iter()
                .map(|&m| {
                    let k = spec.modality(m).expect("validated").latent_dim;
                    normal_vec(&mut rng, k, 1.0 / (k as f64).sqrt())
                })
                .collect();
            let linear = (0..config.num_subjects)
                .map(|_| {
                    shared
                        .iter()
                        .map(|w| {
                            let k = w.len();
                            let dev = normal_vec(&mut rng, k, 1.0 / (k as f64).sqrt());
                            w.iter()
                                .zip(dev)
                                .map(|(a, d)| a + spec.subject_variability * d)
                                .collect()
                        })
                        .collect()
                })
                .collect();
            let interaction = match driver {
                Driver::Pair { first, second } => {
                    let ka = spec.modality(first).expect("validated").latent_dim;
                    let kb = spec.modality(second).expect("validated").latent_dim;
                    Some((
                        normal_vec(&mut rng, ka, 1.0 / (ka as f64).sqrt()),
                        normal_vec(&mut rng, kb, 1.0 / (kb as f64).sqrt()),
                    ))
                }
                Driver::Single { .. } => None,
            };
            ParcelReadout {
                driver,
                linear,
                interaction,
            }
        })
        .collect();

    // HRF weights: TR k sees feature step j at lag k*tr - j/f.
    let hrf_taps: Vec<Vec<(usize, f64)>> = (0..num_trs)
        .map(|k| {
            let t = k as f64 * tr;
            (0..feat_steps)
                .filter_map(|j| {
                    let w = spec.hrf.at(t - j as f64 / f) / f;
                    (w != 0.0).then_some((j, w))
                })
                .collect()
        })
        .collect();

    let memory_steps = (spec.context_memory_s * f).round() as usize;
    let mut video_features = Vec::with_capacity(config.num_sessions);
    let mut clean: Vec<Vec<Array2<f64>>> = vec![Vec::new(); config.num_subjects];
    for _ in 0..config.num_sessions {
        let latents: BTreeMap<Modality, Array2<f64>> = spec
            .modalities
            .iter()
            .map(|m| {
                (
                    m.modality,
                    smooth_latents(&mut rng, feat_steps, m.latent_dim, m.smoothness_s * f),
                )
            })
            .collect();
        let mut features = BTreeMap::new();
        for m in &spec.modalities {
            let z = &latents[&m.modality];
            let mut data = Array3::<f32>::zeros((feat_steps, m.num_layers, m.dim));
            for (l, map) in feature_maps[&m.modality].iter().enumerate() {
                let mut layer = z.dot(map);
                if spec.feature_noise_std > 0.0 {
                    layer += &normal_array(&mut rng, layer.dim(), spec.feature_noise_std);
                }
                data.slice_mut(s![.., l, ..]).assign(&layer.mapv(|x| x as f32));
            }
            features.insert(m.modality, data);
        }
        video_features.push(features);

        let drive_latents: BTreeMap<Modality, Array2<f64>> = latents
            .into_iter()
            .map(|(m, z)| {
                if m == Modality::Text && memory_steps > 1 {
                    (m, causal_average(&z, memory_steps))
                } else {
                    (m, z)
                }
            })
            .collect();
        for (s, subject_clean) in clean.iter_mut().enumerate() {
            let mut drive = Array2::<f64>::zeros((feat_steps, num_parcels));
            for (p, r) in readouts.iter().enumerate() {
                let mods = r.driver.modalities();
                let mut col = Array1::<f64>::zeros(feat_steps);
                for (i, m) in mods.iter().enumerate() {
                    col += &drive_latents[m].dot(&Array1::from(r.linear[s][i].clone()));
                }
                if let Some((ua, ub)) = &r.interaction {
                    let a = drive_latents[&mods[0]].dot(&Array1::from(ua.clone()));
                    let b = drive_latents[&mods[1]].dot(&Array1::from(ub.clone()));
                    col.scaled_add(spec.interaction_strength, &(a * b));
                }
                drive.column_mut(p).assign(&col);
            }
            let mut bold = Array2::<f64>::zeros((num_trs, num_parcels));
            for (k, taps) in hrf_taps.iter().enumerate() {
                let mut row = bold.row_mut(k);
                for &(j, w) in taps {
                    row.scaled_add(w, &drive.row(j));
                }
            }
            subject_clean.push(bold);
        }
    }

    let signal_scale: Vec<Vec<f64>> = clean
        .iter()
        .map(|videos| {
            let all = ndarray::concatenate(
                Axis(0),
                &videos.iter().map(|b| b.view()).collect::<Vec<_>>(),
            )
            .expect("equal widths");
            all.columns()
                .into_iter()
                .map(|c| {
                    let std = c.std(0.0);
                    if std > 1e-12 {
                        1.0 / std
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();

    let split_of = |v: usize| {
        if v >= config.num_sessions - config.val_videos {
            Split::Val
        } else if v >= config.num_sessions - config.val_videos - config.test_videos {
            Split::Test
        } else {
            Split::Train
        }
    };
    let modalities: Vec<ModalityMeta> = spec
        .modalities
        .iter()
        .map(|m| ModalityMeta {
            modality: m.modality,
            dim: m.dim,
            num_layers: m.num_layers,
            frequency_hz: f,
        })
        .collect();
    let bold_meta = BoldMeta {
        num_parcels,
        tr_seconds: tr,
    };
    let shared_features: Vec<BTreeMap<Modality, Arc<EmbeddingSeries>>> = video_features
        .into_iter()
        .enumerate()
        .map(|(v, feats)| {
            feats
                .into_iter()
                .map(|(m, data)| {
                    let meta = modalities.iter().find(|x| x.modality == m).cloned().expect("declared");
                    let series = EmbeddingSeries {
                        data,
                        meta,
                        session_id: format!("v{v:02}"),
                    };
                    (m, Arc::new(series))
                })
                .collect()
        })
        .collect();

    let mut sessions = Vec::new();
    let mut features = Vec::new();
    let mut bold = Vec::new();
    let noise = StandardNormal;
    for (s, subject) in subjects.iter().enumerate() {
        for v in 0..config.num_sessions {
            let repeats = if v >= config.num_sessions - config.repeated_videos { 2 } else { 1 };
            for rep in 0..repeats {
                let video_id = format!("v{v:02}");
                let session_id = if rep == 0 {
                    format!("{subject}_{video_id}")
                } else {
                    format!("{subject}_{video_id}_rep{rep}")
                };
                let mut data = Array2::<f32>::zeros((num_trs, num_parcels));
                for ((k, p), out) in data.indexed_iter_mut() {
                    let e: f64 = noise.sample(&mut rng);
                    *out = (clean[s][v][[k, p]] * signal_scale[s][p] + spec.noise_for(p) * e) as f32;
                }
                zscore_columns(&mut data)?;
                sessions.push(SessionRecord {
                    session_id: session_id.clone(),
                    subject_id: subject.clone(),
                    video_id: video_id.clone(),
                    split: split_of(v),
                    features: spec
                        .modalities
                        .iter()
                        .map(|m| {
                            (
                                m.modality,
                                PathBuf::from(format!("features/{video_id}/{}.f32", m.modality)),
                            )
                        })
                        .collect(),
                    bold: Some(PathBuf::from(format!("bold/{session_id}.f32"))),
                    num_trs,
                    num_feature_steps: feat_steps,
                });
                features.push(shared_features[v].clone());
                bold.push(Some(Arc::new(BoldSeries {
                    data,
                    meta: bold_meta,
                    session_id,
                    subject_id: subject.clone(),
                })));
            }
        }
    }
    let manifest = DatasetManifest {
        modalities,
        bold: bold_meta,
        subjects,
        sessions,
        root: PathBuf::new(),
    };
    crate::datastore::validate_manifest(&manifest, false)?;
    Ok(SynthOutput {
        dataset: Dataset {
            manifest,
            features,
            bold,
        },
        teacher: TeacherRecord {
            config: config.clone(),
            readouts,
            signal_scale,
        },
    })
}

/// Writes the dataset, `teacher.json` and `synth_config.json` into `dir`.
/// Returns the manifest path.
pub fn write_synth(dir: &Path, out: &SynthOutput) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| TribeError::io(dir, e))?;
    let manifest = out.dataset.write(dir)?;
    write_json(&dir.join("teacher.json"), &out.teacher)?;
    write_json(&dir.join("synth_config.json"), &out.teacher.config)?;
    Ok(manifest)
}

impl TeacherSpec {
    /// Expected inter-repeat correlation of parcel `p` given unit signal
    /// variance: `1 / (1 + sigma^2)`.
    pub fn expected_rho_self(&self, parcel: usize) -> f64 {
        let n = self.noise_for(parcel);
        1.0 / (1.0 + n * n)
    }
}
