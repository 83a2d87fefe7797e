//! Evaluation toolkit for frozen checkpoints: feature extraction, linear
//! probing, masked reconstruction, feature statistics, 2-D embeddings,
//! and compute accounting. Everything here reads parameters without
//! mutating them, so calls may run concurrently with each other.

pub mod cost;
pub mod embed2d;
pub mod features;
pub mod probe;
pub mod reconstruct;
pub mod render;
pub mod stats;

pub use cost::{cost_account, measure_step_times, CostReport, RoleCost};
pub use embed2d::{embed_2d, silhouette, Embedding2D};
pub use features::{attention_maps, extract_features, FeatureMatrix};
pub use probe::{linear_probe, median_probe_accuracy, ProbeOutcome};
pub use reconstruct::{mean_masked_mse, reconstruct, Reconstruction};
pub use render::{attention_to_image, hstack, save_png};
pub use stats::{feature_stats, FeatureStats, Histogram};
