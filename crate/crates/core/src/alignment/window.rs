use std::collections::BTreeMap;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use super::{round_steps, PreparedSession};
use crate::datastore::Modality;
use crate::error::{Result, TribeError};

/// Geometry of a training/inference window: `N` TRs of duration
/// `T = N·TR`, covering `round(T·f)` feature steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    pub trs_per_window: usize,
    pub tr_seconds: f64,
    pub frequency_hz: f64,
    /// Maximum absolute jitter, in seconds, applied to the feature slice.
    pub jitter_s: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            trs_per_window: 100,
            tr_seconds: 1.49,
            frequency_hz: 2.0,
            jitter_s: 10.0,
        }
    }
}

impl WindowConfig {
    pub fn duration_s(&self) -> f64 {
        self.trs_per_window as f64 * self.tr_seconds
    }

    pub fn feature_steps(&self) -> usize {
        round_steps(self.duration_s() * self.frequency_hz) as usize
    }

    /// First feature step of the window starting at `start_tr`.
    pub fn feature_start(&self, start_tr: usize, jitter_s: f64) -> i64 {
        round_steps((start_tr as f64 * self.tr_seconds + jitter_s) * self.frequency_hz)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trs_per_window == 0
            || !(self.tr_seconds > 0.0)
            || !(self.frequency_hz > 0.0)
            || !(self.jitter_s >= 0.0)
        {
            return Err(TribeError::InvalidConfig(format!("bad window config {self:?}")));
        }
        if self.feature_steps() < self.trs_per_window {
            return Err(TribeError::InvalidConfig(format!(
                "window of {} feature steps cannot be pooled to {} TRs",
                self.feature_steps(),
                self.trs_per_window
            )));
        }
        Ok(())
    }
}

/// Model-ready slice of one session.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedWindow {
    /// Grouped features per modality, `[round(T·f), G_m]`.
    pub inputs: BTreeMap<Modality, Array2<f32>>,
    /// `[N, P]`, absent for stimulus-only sessions.
    pub targets: Option<Array2<f32>>,
    pub subject_index: usize,
    pub session_id: String,
    pub start_tr: usize,
    /// True for feature steps that fell outside the session and were zeroed.
    pub padding_mask: Vec<bool>,
}

impl AlignedWindow {
    pub fn padded_steps(&self) -> usize {
        self.padding_mask.iter().filter(|&&p| p).count()
    }

    pub fn feature_steps(&self) -> usize {
        self.padding_mask.len()
    }
}

/// Window start TRs tiling a session with stride `n`. When `n` does not
/// divide `num_trs`, a final window is aligned to the session end.
pub fn tile_starts(num_trs: usize, n: usize) -> Result<Vec<usize>> {
    if n == 0 || num_trs < n {
        return Err(TribeError::InvalidConfig(format!(
            "cannot tile {num_trs} TRs with windows of {n}"
        )));
    }
    let mut starts: Vec<usize> = (0..=num_trs - n).step_by(n).collect();
    let last = *starts.last().unwrap();
    if last + n < num_trs {
        starts.push(num_trs - n);
    }
    Ok(starts)
}

/// Cuts the window starting at `start_tr`. Jitter moves the feature slice
/// only; targets always cover TRs `[start_tr, start_tr + N)`.
pub fn extract_window(
    session: &PreparedSession,
    config: &WindowConfig,
    start_tr: usize,
    jitter_s: f64,
) -> Result<AlignedWindow> {
    let n = config.trs_per_window;
    if start_tr + n > session.num_trs {
        return Err(TribeError::WindowOutOfBounds {
            session: session.session_id.clone(),
            start: start_tr,
            end: start_tr + n,
            num_trs: session.num_trs,
        });
    }
    if jitter_s.abs() > config.jitter_s + 1e-12 {
        return Err(TribeError::InvalidConfig(format!(
            "jitter {jitter_s} s exceeds the configured bound {} s",
            config.jitter_s
        )));
    }
    let steps = config.feature_steps();
    let first = config.feature_start(start_tr, jitter_s);

    let mut padding_mask = vec![false; steps];
    let mut inputs = BTreeMap::new();
    for (&modality, series) in &session.features {
        let available = series.nrows() as i64;
        let mut out = Array2::<f32>::zeros((steps, series.ncols()));
        let lo = first.max(0);
        let hi = (first + steps as i64).min(available);
        if hi > lo {
            let dst_lo = (lo - first) as usize;
            let dst_hi = (hi - first) as usize;
            out.slice_mut(s![dst_lo..dst_hi, ..])
                .assign(&series.slice(s![lo as usize..hi as usize, ..]));
        }
        for (k, pad) in padding_mask.iter_mut().enumerate() {
            let src = first + k as i64;
            if src < 0 || src >= available {
                *pad = true;
            }
        }
        inputs.insert(modality, out);
    }
    let targets = session
        .bold
        .as_ref()
        .map(|b| b.slice(s![start_tr..start_tr + n, ..]).to_owned());
    Ok(AlignedWindow {
        inputs,
        targets,
        subject_index: session.subject_index,
        session_id: session.session_id.clone(),
        start_tr,
        padding_mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastore::Split;
    use std::sync::Arc;

    fn session(num_trs: usize, steps: usize) -> PreparedSession {
        let feats = Array2::from_shape_fn((steps, 2), |(t, d)| (t * 2 + d) as f32);
        let bold = Array2::from_shape_fn((num_trs, 3), |(t, p)| (t * 3 + p) as f32);
        let mut features = BTreeMap::new();
        features.insert(Modality::Audio, Arc::new(feats));
        PreparedSession {
            session_id: "s".into(),
            subject_index: 0,
            video_id: "v".into(),
            split: Split::Train,
            num_trs,
            features,
            bold: Some(Arc::new(bold)),
        }
    }

    #[test]
    fn hundred_tr_window_spans_298_steps() {
        let cfg = WindowConfig::default();
        assert_eq!(cfg.feature_steps(), 298);
        let sess = session(120, 358);
        let w = extract_window(&sess, &cfg, 0, 0.0).unwrap();
        let x = &w.inputs[&Modality::Audio];
        assert_eq!(x.nrows(), 298);
        assert_eq!(x[[0, 0]], 0.0);
        assert_eq!(x[[297, 0]], 594.0);
        assert_eq!(w.targets.as_ref().unwrap().nrows(), 100);
        assert_eq!(w.padded_steps(), 0);
    }

    #[test]
    fn positive_jitter_shifts_features_only() {
        let cfg = WindowConfig::default();
        let sess = session(120, 358);
        let w = extract_window(&sess, &cfg, 0, 1.0).unwrap();
        // feature steps [2, 300)
        assert_eq!(w.inputs[&Modality::Audio][[0, 0]], 4.0);
        assert_eq!(w.inputs[&Modality::Audio][[297, 0]], 598.0);
        assert_eq!(w.targets.as_ref().unwrap()[[0, 0]], 0.0);
    }

    #[test]
    fn negative_jitter_at_start_is_zero_padded() {
        let cfg = WindowConfig::default();
        let sess = session(120, 358);
        let w = extract_window(&sess, &cfg, 0, -1.0).unwrap();
        assert_eq!(w.padded_steps(), 2);
        assert!(w.padding_mask[0] && w.padding_mask[1] && !w.padding_mask[2]);
        assert_eq!(w.inputs[&Modality::Audio][[1, 0]], 0.0);
        assert_eq!(w.inputs[&Modality::Audio][[2, 0]], 0.0);
        assert_eq!(w.inputs[&Modality::Audio][[3, 0]], 2.0);
    }

    #[test]
    fn window_past_session_end_is_an_error() {
        let cfg = WindowConfig::default();
        let sess = session(120, 358);
        assert!(matches!(
            extract_window(&sess, &cfg, 30, 0.0),
            Err(TribeError::WindowOutOfBounds { .. })
        ));
    }

    #[test]
    fn tiling_adds_an_end_aligned_tail() {
        assert_eq!(tile_starts(300, 100).unwrap(), vec![0, 100, 200]);
        assert_eq!(tile_starts(250, 100).unwrap(), vec![0, 100, 150]);
        assert!(tile_starts(50, 100).is_err());
    }
}
