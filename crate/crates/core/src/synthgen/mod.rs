//! Synthetic datasets with a known stimulus-to-BOLD teacher.
//!
//! Each video gets smooth Gaussian latents per modality. Features are random
//! linear maps of the latents, one per layer. Every parcel is driven by one
//! modality or by a pair of modalities (linear terms plus a product
//! interaction), read out with subject-specific weights, convolved with a
//! double-gamma HRF, scaled to unit signal variance and corrupted with white
//! noise.

mod hrf;
mod teacher;

pub use hrf::Hrf;
pub use teacher::{generate, write_synth, ParcelReadout, SynthOutput, TeacherRecord};

use serde::{Deserialize, Serialize};

use crate::datastore::Modality;
use crate::error::{Result, TribeError};

/// What drives a parcel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Driver {
    Single { modality: Modality },
    Pair { first: Modality, second: Modality },
}

impl Driver {
    pub fn single(modality: Modality) -> Driver {
        Driver::Single { modality }
    }

    pub fn pair(first: Modality, second: Modality) -> Driver {
        Driver::Pair { first, second }
    }

    pub fn modalities(&self) -> Vec<Modality> {
        match *self {
            Driver::Single { modality } => vec![modality],
            Driver::Pair { first, second } => vec![first, second],
        }
    }

    pub fn label(&self) -> String {
        self.modalities()
            .iter()
            .map(|m| m.name())
            .collect::<Vec<_>>()
            .join("+")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthModality {
    pub modality: Modality,
    pub latent_dim: usize,
    /// Feature width `D_m`.
    pub dim: usize,
    pub num_layers: usize,
    /// Standard deviation of the Gaussian smoothing kernel, in seconds.
    pub smoothness_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TeacherSpec {
    pub num_parcels: usize,
    pub tr_seconds: f64,
    pub frequency_hz: f64,
    pub modalities: Vec<SynthModality>,
    /// Parcel `p` gets `driver_cycle[p % len]` unless `parcels_by_driver`
    /// is given.
    pub driver_cycle: Vec<Driver>,
    pub parcels_by_driver: Option<Vec<Driver>>,
    /// Weight of the product term of pair-driven parcels.
    pub interaction_strength: f64,
    /// Scale of the subject-specific deviation of the readout weights.
    pub subject_variability: f64,
    pub hrf: Hrf,
    /// Noise standard deviation relative to the unit-variance signal.
    pub noise_std: f64,
    pub noise_std_per_parcel: Option<Vec<f64>>,
    /// Text drives parcels through a causal moving average of this length.
    pub context_memory_s: f64,
    /// White noise added to the features themselves.
    pub feature_noise_std: f64,
}

impl Default for TeacherSpec {
    fn default() -> Self {
        let modality = |modality, dim| SynthModality {
            modality,
            latent_dim: 4,
            dim,
            num_layers: 8,
            smoothness_s: 2.0,
        };
        use Modality::*;
        TeacherSpec {
            num_parcels: 60,
            tr_seconds: 1.49,
            frequency_hz: 2.0,
            modalities: vec![modality(Text, 8), modality(Audio, 6), modality(Video, 10)],
            driver_cycle: vec![
                Driver::single(Text),
                Driver::single(Audio),
                Driver::single(Video),
                Driver::pair(Text, Audio),
                Driver::pair(Text, Video),
                Driver::pair(Audio, Video),
            ],
            parcels_by_driver: None,
            interaction_strength: 1.0,
            subject_variability: 0.3,
            hrf: Hrf::default(),
            noise_std: 1.0,
            noise_std_per_parcel: None,
            context_memory_s: 0.0,
            feature_noise_std: 0.0,
        }
    }
}

impl TeacherSpec {
    pub fn drivers(&self) -> Vec<Driver> {
        match &self.parcels_by_driver {
            Some(d) => d.clone(),
            None => (0..self.num_parcels)
                .map(|p| self.driver_cycle[p % self.driver_cycle.len()])
                .collect(),
        }
    }

    pub fn noise_for(&self, parcel: usize) -> f64 {
        self.noise_std_per_parcel
            .as_ref()
            .map_or(self.noise_std, |v| v[parcel])
    }

    pub fn modality(&self, m: Modality) -> Option<&SynthModality> {
        self.modalities.iter().find(|s| s.modality == m)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(TribeError::InvalidConfig(msg));
        if self.num_parcels == 0 || self.modalities.is_empty() {
            return bad("teacher needs parcels and at least one modality".into());
        }
        if !(self.tr_seconds > 0.0 && self.frequency_hz > 0.0) {
            return bad("tr_seconds and frequency_hz must be positive".into());
        }
        for m in &self.modalities {
            if m.latent_dim == 0 || m.dim == 0 || m.num_layers == 0 || m.smoothness_s < 0.0 {
                return bad(format!("invalid settings for modality {}", m.modality));
            }
        }
        match &self.parcels_by_driver {
            Some(d) if d.len() != self.num_parcels => {
                return bad(format!(
                    "parcels_by_driver lists {} parcels, expected {}",
                    d.len(),
                    self.num_parcels
                ))
            }
            None if self.driver_cycle.is_empty() => return bad("driver_cycle is empty".into()),
            _ => {}
        }
        for d in self.drivers() {
            for m in d.modalities() {
                if self.modality(m).is_none() {
                    return bad(format!("driver {} uses undeclared modality {m}", d.label()));
                }
            }
            if let Driver::Pair { first, second } = d {
                if first == second {
                    return bad("a pair driver needs two distinct modalities".into());
                }
            }
        }
        if let Some(n) = &self.noise_std_per_parcel {
            if n.len() != self.num_parcels {
                return bad("noise_std_per_parcel length differs from num_parcels".into());
            }
        }
        let noise_ok = |v: f64| v >= 0.0 && v.is_finite();
        if !noise_ok(self.noise_std)
            || !self.noise_std_per_parcel.iter().flatten().all(|&v| noise_ok(v))
            || self.context_memory_s < 0.0
            || self.feature_noise_std < 0.0
        {
            return bad("noise levels and context memory must be non-negative".into());
        }
        self.hrf.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub teacher: TeacherSpec,
    pub num_subjects: usize,
    /// Distinct videos; every subject watches each of them once.
    pub num_sessions: usize,
    pub session_trs: usize,
    /// The last `val_videos` videos go to validation, the `test_videos`
    /// before them to test.
    pub val_videos: usize,
    pub test_videos: usize,
    /// The last `repeated_videos` videos are shown a second time with
    /// independent noise.
    pub repeated_videos: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            teacher: TeacherSpec::default(),
            num_subjects: 2,
            num_sessions: 8,
            session_trs: 120,
            val_videos: 1,
            test_videos: 0,
            repeated_videos: 0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        self.teacher.validate()?;
        let bad = |msg: String| Err(TribeError::InvalidConfig(msg));
        if self.num_subjects == 0 || self.session_trs < 2 {
            return bad("need at least one subject and two TRs per session".into());
        }
        if self.val_videos + self.test_videos >= self.num_sessions {
            return bad(format!(
                "{} val and {} test videos leave no training video out of {}",
                self.val_videos, self.test_videos, self.num_sessions
            ));
        }
        if self.repeated_videos > self.num_sessions {
            return bad("more repeated videos than videos".into());
        }
        Ok(())
    }
}
