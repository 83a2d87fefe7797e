//! Run configuration: a nested, fully-defaulted tree that loads from TOML,
//! accepts `key.path=value` overrides, rejects unknown keys, and hashes to a
//! stable identifier stored alongside checkpoints.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::views::MaskRatios;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub data: DataConfig,
    pub augment: AugmentConfig,
    pub backbone: BackboneConfig,
    pub head: HeadConfig,
    pub masks: MaskRatios,
    pub trainer: TrainerConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    /// Procedurally generated class-labelled images.
    Synthetic,
    /// Image files on disk listed by a manifest.
    Folder,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub source: DataSource,
    /// Number of images the synthetic generator produces.
    pub num_images: usize,
    pub num_classes: usize,
    /// Seed for the synthetic generator (independent of the trainer seed).
    pub seed: u64,
    /// Folder source: directory that manifest paths are resolved against.
    pub root: Option<PathBuf>,
    /// Folder source: manifest file; defaults to `<root>/manifest.tsv`.
    pub manifest: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source: DataSource::Synthetic,
            num_images: 256,
            num_classes: 4,
            seed: 0,
            root: None,
            manifest: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    /// Area fraction range for the random resized crop.
    pub crop_scale_min: f64,
    pub crop_scale_max: f64,
    /// Aspect ratio range for the random resized crop.
    pub aspect_min: f64,
    pub aspect_max: f64,
    pub hflip_prob: f64,
    pub vflip_prob: f64,
    /// Color jitter strengths; factor ranges are [1-x, 1+x].
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    /// Hue shift range as a fraction of the hue circle: [-hue, hue].
    pub hue: f64,
    pub grayscale_prob: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            crop_scale_min: 0.4,
            crop_scale_max: 1.0,
            aspect_min: 0.75,
            aspect_max: 4.0 / 3.0,
            hflip_prob: 0.5,
            vflip_prob: 0.5,
            brightness: 0.4,
            contrast: 0.4,
            saturation: 0.4,
            hue: 0.1,
            grayscale_prob: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackboneConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub depth: usize,
    pub embed_dim: usize,
    pub heads: usize,
    pub mlp_ratio: f64,
    /// Residual branch drop probability for the student at train time.
    pub drop_path_rate: f64,
    /// Encoder layer at which mask tokens join the student sequence.
    /// Defaults to depth / 2.
    pub inject_layer: Option<usize>,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            image_size: 64,
            patch_size: 8,
            depth: 4,
            embed_dim: 64,
            heads: 4,
            mlp_ratio: 4.0,
            drop_path_rate: 0.1,
            inject_layer: None,
        }
    }
}

impl BackboneConfig {
    /// Patches per image side.
    pub fn grid(&self) -> usize {
        self.image_size / self.patch_size
    }

    /// Total patch count N.
    pub fn num_patches(&self) -> usize {
        self.grid() * self.grid()
    }

    /// Flattened pixel dimension of one patch (3 channels).
    pub fn patch_dim(&self) -> usize {
        3 * self.patch_size * self.patch_size
    }

    pub fn inject(&self) -> usize {
        self.inject_layer.unwrap_or(self.depth / 2)
    }

    pub fn mlp_hidden(&self) -> usize {
        (self.embed_dim as f64 * self.mlp_ratio).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || self.image_size == 0 {
            return Err(Error::config("image_size and patch_size must be positive"));
        }
        if self.image_size % self.patch_size != 0 {
            return Err(Error::config(format!(
                "image_size {} is not divisible by patch_size {}",
                self.image_size, self.patch_size
            )));
        }
        if self.depth == 0 {
            return Err(Error::config("depth must be at least 1"));
        }
        if self.embed_dim == 0 || self.heads == 0 || self.embed_dim % self.heads != 0 {
            return Err(Error::config(format!(
                "embed_dim {} must be a positive multiple of heads {}",
                self.embed_dim, self.heads
            )));
        }
        if self.mlp_ratio <= 0.0 || self.mlp_hidden() == 0 {
            return Err(Error::config("mlp_ratio must be positive"));
        }
        if !(0.0..1.0).contains(&self.drop_path_rate) {
            return Err(Error::config("drop_path_rate must lie in [0, 1)"));
        }
        if let Some(inject) = self.inject_layer {
            if inject > self.depth {
                return Err(Error::config(format!(
                    "inject_layer {} exceeds depth {}",
                    inject, self.depth
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeadConfig {
    /// Number of prototype logits K produced by the projector.
    pub prototypes: usize,
    pub hidden: usize,
    /// Width of the unit-normalized bottleneck before the prototype layer.
    pub bottleneck: usize,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig { prototypes: 256, hidden: 128, bottleneck: 64 }
    }
}

impl HeadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.prototypes < 2 {
            return Err(Error::config("prototypes must be at least 2"));
        }
        if self.hidden == 0 || self.bottleneck == 0 {
            return Err(Error::config("head widths must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Peak learning rate reached at the end of linear warmup, after which
    /// a cosine decays it to final_lr.
    pub base_lr: f64,
    pub final_lr: f64,
    pub warmup_epochs: f64,
    /// Weight decay rises from start to end on a cosine over the whole run.
    pub weight_decay_start: f64,
    pub weight_decay_end: f64,
    /// Teacher EMA momentum rises from start to end on a cosine.
    pub ema_momentum_start: f64,
    pub ema_momentum_end: f64,
    pub student_temp: f64,
    /// Teacher temperature warms up linearly from start to max, then stays.
    pub teacher_temp_start: f64,
    pub teacher_temp_max: f64,
    pub teacher_temp_warmup_epochs: f64,
    pub center_momentum: f64,
    /// Weight w on the masked-pixel reconstruction term.
    pub pixel_loss_weight: f64,
    /// When false, the reconstruction term updates only the predictor.
    pub mse_through_encoder: bool,
    /// Toggle: both views share one spatial transform.
    pub spatial_alignment: bool,
    /// Toggle: views are reduced to disjoint patch subsets with mask tokens.
    pub disjoint_masks: bool,
    /// Toggle: masked-pixel reconstruction term.
    pub pixel_prediction: bool,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    /// Save a checkpoint every this many steps; 0 saves only the final one.
    pub checkpoint_every: usize,
    pub log_every: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            epochs: 125,
            batch_size: 32,
            base_lr: 1e-3,
            final_lr: 1e-5,
            warmup_epochs: 12.0,
            weight_decay_start: 0.04,
            weight_decay_end: 0.4,
            ema_momentum_start: 0.992,
            ema_momentum_end: 1.0,
            student_temp: 0.1,
            teacher_temp_start: 0.04,
            teacher_temp_max: 0.07,
            teacher_temp_warmup_epochs: 19.0,
            center_momentum: 0.9,
            pixel_loss_weight: 1.0,
            mse_through_encoder: true,
            spatial_alignment: true,
            disjoint_masks: true,
            pixel_prediction: true,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            checkpoint_every: 0,
            log_every: 1,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("epochs and batch_size must be positive"));
        }
        if self.base_lr < 0.0 || self.final_lr < 0.0 {
            return Err(Error::config("learning rates must be non-negative"));
        }
        if self.warmup_epochs < 0.0 || self.teacher_temp_warmup_epochs < 0.0 {
            return Err(Error::config("warmup lengths must be non-negative"));
        }
        if self.student_temp <= 0.0
            || self.teacher_temp_start <= 0.0
            || self.teacher_temp_max <= 0.0
        {
            return Err(Error::config("temperatures must be positive"));
        }
        for (name, v) in [
            ("ema_momentum_start", self.ema_momentum_start),
            ("ema_momentum_end", self.ema_momentum_end),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("{name} must lie in [0, 1]")));
            }
        }
        if !(0.0..1.0).contains(&self.center_momentum) {
            return Err(Error::config("center_momentum must lie in [0, 1)"));
        }
        if self.pixel_loss_weight < 0.0 {
            return Err(Error::config("pixel_loss_weight must be non-negative"));
        }
        if self.pixel_prediction && !self.disjoint_masks {
            return Err(Error::config(
                "pixel_prediction requires disjoint_masks: without mask tokens there is nothing to reconstruct",
            ));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::config("adam betas must lie in [0, 1)"));
        }
        if self.adam_eps <= 0.0 {
            return Err(Error::config("adam_eps must be positive"));
        }
        if self.log_every == 0 {
            return Err(Error::config("log_every must be at least 1"));
        }
        Ok(())
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        self.head.validate()?;
        self.trainer.validate()?;
        self.masks.validate()?;
        if self.trainer.disjoint_masks {
            // Part sizes must be realizable on this patch grid.
            self.masks.part_sizes(self.backbone.num_patches())?;
        }
        let a = &self.augment;
        if !(a.crop_scale_min > 0.0 && a.crop_scale_min <= a.crop_scale_max && a.crop_scale_max <= 1.0) {
            return Err(Error::config("crop scale range must satisfy 0 < min <= max <= 1"));
        }
        if !(a.aspect_min > 0.0 && a.aspect_min <= a.aspect_max) {
            return Err(Error::config("aspect range must satisfy 0 < min <= max"));
        }
        for (name, p) in [
            ("hflip_prob", a.hflip_prob),
            ("vflip_prob", a.vflip_prob),
            ("grayscale_prob", a.grayscale_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("{name} must lie in [0, 1]")));
            }
        }
        if a.brightness < 0.0 || a.contrast < 0.0 || a.saturation < 0.0 {
            return Err(Error::config("jitter strengths must be non-negative"));
        }
        if a.brightness >= 1.0 || a.contrast >= 1.0 || a.saturation >= 1.0 {
            return Err(Error::config("jitter strengths above 1 would allow negative factors"));
        }
        if !(0.0..=0.5).contains(&a.hue) {
            return Err(Error::config("hue must lie in [0, 0.5]"));
        }
        if self.data.num_images == 0 || self.data.num_classes == 0 {
            return Err(Error::config("num_images and num_classes must be positive"));
        }
        if self.data.source == DataSource::Folder && self.data.root.is_none() {
            return Err(Error::config("folder source requires data.root"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Stable hex identifier of the resolved configuration.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Loads a config from an optional TOML file, applies `key.path=value`
/// overrides in order, then validates. With no file, overrides apply on top
/// of the defaults.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<TrainConfig> {
    let mut value: toml::Value = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::ingest(p, format!("cannot read config: {e}")))?;
            text.parse().map_err(|e| Error::config(format!("{}: {e}", p.display())))?
        }
        None => toml::Value::Table(toml::Table::new()),
    };
    for spec in overrides {
        apply_override(&mut value, spec)?;
    }
    // Missing sections fall back to defaults here; unknown keys are rejected.
    let mut config: TrainConfig =
        value.try_into().map_err(|e| Error::config(e.to_string()))?;
    if let Some(p) = path {
        resolve_data_paths(&mut config, p);
    }
    config.validate()?;
    Ok(config)
}

/// Interprets relative dataset paths in a config file as relative to the
/// file's own directory.
fn resolve_data_paths(config: &mut TrainConfig, config_path: &Path) {
    let base = config_path.parent().unwrap_or(Path::new("."));
    if let Some(root) = &config.data.root {
        if root.is_relative() {
            config.data.root = Some(base.join(root));
        }
    }
}

/// Applies one `key.path=value` override to a TOML tree. The value side is
/// parsed as a TOML scalar when possible and falls back to a string, so
/// `trainer.seed=7` and `data.source=folder` both do what they look like.
pub fn apply_override(root: &mut toml::Value, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override `{spec}` is not of the form key=value")))?;
    let path = path.trim();
    if path.is_empty() {
        return Err(Error::config(format!("override `{spec}` has an empty key")));
    }
    let value = parse_scalar(raw.trim());
    let segments: Vec<&str> = path.split('.').collect();
    let mut node = root;
    for seg in &segments[..segments.len() - 1] {
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::config(format!("override `{path}`: `{seg}` is not a table")))?;
        node = table
            .entry(seg.to_string())
            .or_insert(toml::Value::Table(toml::Table::new()));
    }
    let last = segments[segments.len() - 1];
    let table = node
        .as_table_mut()
        .ok_or_else(|| Error::config(format!("override `{path}`: parent is not a table")))?;
    table.insert(last.to_string(), value);
    Ok(())
}

fn parse_scalar(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key v present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn toml_round_trip() {
        let config = TrainConfig::default();
        let text = config.to_toml();
        let back: TrainConfig = toml::from_str(&text).unwrap();
        assert_eq!(config, back);
    }

    #[test]
    fn overrides_apply_in_order() {
        let config = load_config(
            None,
            &["trainer.seed=7".into(), "trainer.seed=9".into(), "backbone.depth=2".into()],
        )
        .unwrap();
        assert_eq!(config.trainer.seed, 9);
        assert_eq!(config.backbone.depth, 2);
    }

    #[test]
    fn string_overrides_parse_bare_words() {
        let mut value = toml::Value::Table(toml::Table::new());
        apply_override(&mut value, "data.source=synthetic").unwrap();
        let config: TrainConfig = value.try_into().unwrap();
        assert_eq!(config.data.source, DataSource::Synthetic);
    }

    #[test]
    fn unknown_key_rejected() {
        let err = load_config(None, &["trainer.sead=7".into()]).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        let err = load_config(None, &["warp.factor=9".into()]).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn pixel_prediction_requires_disjoint_masks() {
        let err = load_config(
            None,
            &["trainer.disjoint_masks=false".into(), "trainer.pixel_prediction=true".into()],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        // Dense self-distillation alone is a valid configuration.
        load_config(
            None,
            &["trainer.disjoint_masks=false".into(), "trainer.pixel_prediction=false".into()],
        )
        .unwrap();
    }

    #[test]
    fn indivisible_patch_size_rejected() {
        let err = load_config(None, &["backbone.patch_size=7".into()]).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = TrainConfig::default();
        let b = TrainConfig::default();
        assert_eq!(a.hash(), b.hash());
        let c = load_config(None, &["trainer.seed=1".into()]).unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn inject_layer_defaults_to_mid_depth() {
        let config = TrainConfig::default();
        assert_eq!(config.backbone.inject(), config.backbone.depth / 2);
        let config = load_config(None, &["backbone.inject_layer=0".into()]).unwrap();
        assert_eq!(config.backbone.inject(), 0);
        let err = load_config(None, &["backbone.inject_layer=9".into()]).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }
}
