use ndarray::{Array2, Array3};

use crate::error::{Result, TribeError};

/// Words of zero duration are widened to this so they land in one bin.
const MIN_WORD_DURATION_S: f64 = 1e-3;

/// One contextualized word embedding, `[L_m, D_text]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedWordEmbedding {
    pub word: String,
    pub onset_s: f64,
    pub duration_s: f64,
    pub embedding: Array2<f32>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BinReport {
    /// Words lying entirely outside `[0, num_steps / f)`.
    pub dropped: usize,
}

/// Sums each word's embedding into every bin its interval
/// `[onset, onset + duration)` intersects.
pub fn bin_words(
    words: &[TimedWordEmbedding],
    frequency_hz: f64,
    num_steps: usize,
    num_layers: usize,
    dim: usize,
) -> Result<(Array3<f32>, BinReport)> {
    if num_steps == 0 || !(frequency_hz > 0.0) {
        return Err(TribeError::InvalidConfig(
            "bin_words needs num_steps >= 1 and a positive frequency".into(),
        ));
    }
    let mut out = Array3::<f32>::zeros((num_steps, num_layers, dim));
    let mut report = BinReport::default();
    for w in words {
        if !w.onset_s.is_finite() || w.embedding.iter().any(|v| v.is_nan()) {
            return Err(TribeError::InvalidConfig(format!(
                "word {:?}: non-finite onset or NaN embedding",
                w.word
            )));
        }
        if w.embedding.dim() != (num_layers, dim) {
            return Err(TribeError::Shape(format!(
                "word {:?}: embedding {:?}, expected ({num_layers}, {dim})",
                w.word,
                w.embedding.dim()
            )));
        }
        let duration = if w.duration_s > 0.0 {
            w.duration_s
        } else {
            MIN_WORD_DURATION_S
        };
        let first = (w.onset_s * frequency_hz).floor();
        let end = ((w.onset_s + duration) * frequency_hz).ceil();
        let first = first.max(0.0) as i64;
        let end = end.min(num_steps as f64) as i64;
        if end <= first {
            report.dropped += 1;
            continue;
        }
        for b in first as usize..end as usize {
            let mut slot = out.index_axis_mut(ndarray::Axis(0), b);
            slot += &w.embedding;
        }
    }
    Ok((out, report))
}
