//! The encoder network with exact reverse-mode gradients.
//!
//! Parameters live in one flat vector described by a [`ParamLayout`]; the
//! optimizer, weight averaging, checkpoints and gradient checks all work on
//! that vector directly. The network is generic over the float type so the
//! same code trains in `f32` and is gradient-checked in `f64`.

mod checkpoint;
mod config;
mod model;
mod ops;
mod params;

use ndarray::NdFloat;
use num_traits::FromPrimitive;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use config::{count_params, ArchConfig, Fusion, ModalityInput, NetConfig};
pub use model::{ForwardCache, ForwardOutput, ModalityMask, TribeNet};
pub use ops::{adaptive_avg_pool, pool_segments};
pub use params::{ParamId, ParamLayout, ParamSpec};

pub trait Real: NdFloat + FromPrimitive + std::iter::Sum + Default {}

impl<T: NdFloat + FromPrimitive + std::iter::Sum + Default> Real for T {}
