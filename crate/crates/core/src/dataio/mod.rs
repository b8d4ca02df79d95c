//! Feature ingestion, whitening, synthetic data and model snapshots.

mod features;
pub mod snapshot;
pub mod synth;
mod whiten;

pub use features::{load_features, save_owfs, save_text, FeatureSet, OWFS_MAGIC, OWFS_VERSION};
pub use snapshot::{load_snapshot, save_snapshot};
pub use synth::{synth_components, synth_gaussians, BlobSpec, Component, Preset, RingSpec};
pub use whiten::{whiten, WhitenStats, STD_FLOOR};
