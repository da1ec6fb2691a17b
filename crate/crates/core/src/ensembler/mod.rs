//! Population training over a hyperparameter grid and per-parcel softmax
//! blending of member predictions.

mod grid;
mod members;
mod weights;

pub use grid::{sample_grid, EnsembleConfig, Grid, GridDraw};
pub use members::{member_id, member_predictions, train_members, Registry, RegistryEntry};
pub use weights::{blend_predictions, fit_weights, predict_ensemble, EnsembleWeights};
