//! Benchmark-only crate: shared fixtures for the criterion benches.

use tripatch_core::config::{BackboneConfig, HeadConfig, TrainConfig};

/// The default desk-scale configuration with a smaller dataset, a shape the
/// benches can train against in milliseconds per step.
pub fn desk_config() -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.data.num_images = 32;
    cfg.trainer.batch_size = 8;
    cfg.trainer.epochs = 1;
    cfg.validate().expect("bench config is valid");
    cfg
}

/// A mid-sized backbone where sparse-versus-dense differences are visible
/// but single iterations stay under a second.
pub fn wide_backbone() -> BackboneConfig {
    BackboneConfig {
        image_size: 112,
        patch_size: 8,
        ..BackboneConfig::default()
    }
}

pub fn small_head() -> HeadConfig {
    HeadConfig { prototypes: 16, hidden: 16, bottleneck: 8 }
}
