//! `tripatch` — one binary for the whole artifact: synthetic data
//! generation, self-supervised pre-training, ablation grids, linear
//! probing, visualization, and cost accounting.
//!
//! Exit codes: 0 success, 1 usage error, 2 configuration error,
//! 3 runtime/numerical error, 4 I/O error.

mod cmd;
mod outdir;
mod table;

use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use tripatch_core::TrainConfig;

use cmd::{Arm, Common, Grid};

#[derive(Debug, Parser)]
#[command(
    name = "tripatch",
    version,
    about = "Self-distillation plus masked pixel reconstruction over disjoint patch masks",
    subcommand_required = true,
    arg_required_else_help = true
)]
struct Cli {
    /// TOML config file; defaults apply for any key the file omits
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Config override `key.path=value`; repeatable, applied in order
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Exact output directory for this run (created if missing); without
    /// it, a timestamped directory is created under the output root
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Root for timestamped run directories; defaults to $TRIPATCH_OUT_ROOT,
    /// then ./runs
    #[arg(long, global = true, value_name = "DIR")]
    out_root: Option<PathBuf>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Generate the labelled synthetic dataset as PNG files plus a manifest
    SynthData,

    /// Run self-supervised pre-training (deterministic; exactly resumable)
    Pretrain {
        /// Checkpoint directory to resume from (same config required)
        #[arg(long, value_name = "DIR")]
        resume: Option<PathBuf>,
    },

    /// Run one ablation grid end to end and emit a comparison table
    Ablate {
        /// Which grid: component toggles, patch sizes, or mask ratios
        #[arg(long, value_enum)]
        grid: Grid,

        /// Run the grid's rows on parallel threads instead of sequentially
        #[arg(long)]
        parallel: bool,

        /// Probe split seeds behind the accuracy column (median is reported)
        #[arg(long, default_value_t = 3, value_name = "N")]
        probe_seeds: u64,

        /// Labelled fraction used to fit the probe
        #[arg(long, default_value_t = 0.2, value_name = "FRACTION")]
        train_ratio: f64,
    },

    /// Fit a linear probe on frozen features from a checkpoint
    Probe {
        /// Checkpoint directory (as written by pretrain)
        #[arg(long, value_name = "DIR")]
        checkpoint: PathBuf,

        /// Labelled fraction used to fit the probe
        #[arg(long, default_value_t = 0.2, value_name = "FRACTION")]
        train_ratio: f64,

        /// Number of probe split seeds (median is reported)
        #[arg(long, default_value_t = 3, value_name = "N")]
        seeds: u64,

        /// Which network provides the frozen features
        #[arg(long, value_enum, default_value_t = Arm::Teacher)]
        arm: Arm,

        /// Also probe a freshly initialized network and report the gap
        #[arg(long)]
        baseline: bool,
    },

    /// Render attention maps, reconstructions, feature histograms, and a
    /// 2-D embedding from a checkpoint
    Visualize {
        /// Checkpoint directory (as written by pretrain)
        #[arg(long, value_name = "DIR")]
        checkpoint: PathBuf,

        /// Number of images to render (spread across the dataset)
        #[arg(long, default_value_t = 4, value_name = "N")]
        images: usize,

        /// Fraction of patches hidden before reconstruction
        #[arg(long, default_value_t = 0.7, value_name = "FRACTION")]
        mask_fraction: f64,
    },

    /// Account for sparse-versus-dense compute, in closed form and by timing
    Bench {
        /// Also time real encoder passes (slower)
        #[arg(long)]
        empirical: bool,

        /// Batch size for the timed passes
        #[arg(long, default_value_t = 4, value_name = "N")]
        batch: usize,

        /// Timed repetitions (one extra warmup pass runs unmeasured)
        #[arg(long, default_value_t = 3, value_name = "N")]
        reps: usize,
    },
}

/// Every config key with its default, shown at the end of `--help`.
fn config_reference() -> String {
    let mut out = String::from(
        "Configuration keys and their defaults (load a file with --config, \
         override single keys with --set KEY=VALUE):\n\n",
    );
    for line in TrainConfig::default().to_toml().lines() {
        out.push_str("  ");
        out.push_str(line);
        out.push('\n');
    }
    out.push_str("\n  Optional keys with computed defaults:\n");
    out.push_str("  data.root              folder-dataset directory (required when data.source = \"folder\")\n");
    out.push_str("  data.manifest          dataset manifest file; defaults to <data.root>/manifest.tsv\n");
    out.push_str("  backbone.inject_layer  encoder layer where hidden-slot tokens join; defaults to depth / 2\n");
    out
}

fn main() {
    let command = Cli::command().after_help(config_reference());
    let matches = match command.try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            std::process::exit(1);
        }
    };

    let common = Common {
        config: cli.config,
        set: cli.set,
        out: cli.out,
        out_root: cli.out_root,
    };
    let result = match cli.command {
        Cmd::SynthData => cmd::synth::run(&common),
        Cmd::Pretrain { resume } => cmd::pretrain::run(&common, resume.as_deref()),
        Cmd::Ablate { grid, parallel, probe_seeds, train_ratio } => {
            cmd::ablate::run(&common, grid, parallel, probe_seeds, train_ratio)
        }
        Cmd::Probe { checkpoint, train_ratio, seeds, arm, baseline } => {
            cmd::probe::run(&common, &checkpoint, train_ratio, seeds, arm, baseline)
        }
        Cmd::Visualize { checkpoint, images, mask_fraction } => {
            cmd::visualize::run(&common, &checkpoint, images, mask_fraction)
        }
        Cmd::Bench { empirical, batch, reps } => {
            cmd::bench::run(&common, empirical, batch, reps)
        }
    };
    if let Err(e) = result {
        // Expected failures surface as one diagnostic line, never a panic.
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
