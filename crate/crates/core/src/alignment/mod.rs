//! Temporal and layer-dimension alignment of stimulus features.
//!
//! Features live on a fixed-frequency grid (2 Hz by default) that starts at
//! t = 0 together with the TR grid. Bin `b` covers `[b/f, (b+1)/f)`.
//!
//! Rounding to integer steps uses round-half-to-even throughout, so
//! `round(0.5 * 9) == 4`.

mod diagnostics;
mod layers;
mod prepared;
mod resample;
mod text;
mod window;

pub use diagnostics::{Diagnostic, Diagnostics};
pub use layers::{group_layers, LayerAggregation, LayerGroupMode, LayerGroupSpec};
pub use prepared::{PreparedDataset, PreparedSession};
pub use resample::resample_audio;
pub use text::{bin_words, BinReport, TimedWordEmbedding};
pub use window::{extract_window, tile_starts, AlignedWindow, WindowConfig};

/// Round half to even, as an integer step count.
pub fn round_steps(x: f64) -> i64 {
    x.round_ties_even() as i64
}
