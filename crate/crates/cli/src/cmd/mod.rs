//! Subcommand implementations. Each `run` returns the library error type;
//! `main` maps it to the exit-code classes.

pub mod ablate;
pub mod bench;
pub mod pretrain;
pub mod probe;
pub mod synth;
pub mod visualize;

use std::path::PathBuf;

use clap::ValueEnum;
use tripatch_core::config::{apply_override, load_config};
use tripatch_core::{Error, Result, TrainConfig};

/// Flags shared by every subcommand.
#[derive(Debug)]
pub struct Common {
    pub config: Option<PathBuf>,
    pub set: Vec<String>,
    pub out: Option<PathBuf>,
    pub out_root: Option<PathBuf>,
}

impl Common {
    /// Loads `--config` (or the defaults) with `--set` overrides applied.
    pub fn load(&self) -> Result<TrainConfig> {
        load_config(self.config.as_deref(), &self.set)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Grid {
    /// Component toggles: aligned spatial views, disjoint masks, pixel
    /// prediction — four combinations
    Toggles,
    /// Patch sizes 16, 14, 8 at a 112-pixel input
    Patch,
    /// The four mask-ratio rows (s/l/t percents)
    Ratios,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Arm {
    /// The slow moving-average network (the one evaluated as the backbone)
    Teacher,
    /// The directly optimized network
    Student,
}

impl Arm {
    pub fn name(self) -> &'static str {
        match self {
            Arm::Teacher => "teacher",
            Arm::Student => "student",
        }
    }
}

/// Applies `--set` overrides on top of an already-resolved config — used by
/// the commands that read their configuration out of a checkpoint.
pub fn config_with_sets(base: &TrainConfig, sets: &[String]) -> Result<TrainConfig> {
    if sets.is_empty() {
        return Ok(base.clone());
    }
    let mut value: toml::Value = base
        .to_toml()
        .parse()
        .map_err(|e| Error::contract(format!("stored config failed to re-parse: {e}")))?;
    for spec in sets {
        apply_override(&mut value, spec)?;
    }
    let cfg: TrainConfig = value.try_into().map_err(|e| Error::config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// The checkpoint-reading commands take their configuration from the
/// checkpoint itself; a `--config` file would silently lose to it, so the
/// combination is rejected outright.
pub fn reject_config_flag(common: &Common, subcommand: &str) -> Result<()> {
    if common.config.is_some() {
        return Err(Error::config(format!(
            "{subcommand} reads its configuration from the checkpoint; use --set to adjust single keys"
        )));
    }
    Ok(())
}
