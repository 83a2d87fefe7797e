//! `pretrain`: the full training loop with progress lines, a metrics log,
//! periodic checkpoints, and exact resume.

use std::path::Path;
use std::time::Instant;

use tripatch_core::data::load_dataset;
use tripatch_core::trainer::pretrain;
use tripatch_core::{Error, Result};

use crate::cmd::Common;
use crate::outdir::{run_dir, snapshot_config};

pub fn run(common: &Common, resume: Option<&Path>) -> Result<()> {
    let cfg = common.load()?;

    // Step count up front, for progress display only; the loop derives the
    // same number internally.
    let dataset_len = load_dataset(&cfg.data, cfg.backbone.image_size)?.len();
    let steps_per_epoch = dataset_len / cfg.trainer.batch_size;
    if steps_per_epoch == 0 {
        return Err(Error::config(format!(
            "dataset of {dataset_len} images cannot fill one batch of {}",
            cfg.trainer.batch_size
        )));
    }
    let total = (steps_per_epoch * cfg.trainer.epochs) as u64;

    let dir = run_dir(common.out.as_deref(), common.out_root.as_deref(), "pretrain")?;
    snapshot_config(&dir, &cfg)?;
    println!("run directory: {}", dir.display());
    if let Some(from) = resume {
        println!("resuming from {}", from.display());
    }

    let print_every = (total / 25).max(1);
    let start = Instant::now();
    let outcome = pretrain(&cfg, &dir, resume, |step, stats| {
        if (step + 1) % print_every == 0 || step + 1 == total {
            println!(
                "step {:>6}/{total}  l_cls {:.4}  l_mse {:.4}  teacher_entropy {:.3}",
                step + 1,
                stats.l_cls,
                stats.l_mse,
                stats.teacher_entropy
            );
        }
    })?;

    println!(
        "done: step {} reached in {:.1}s",
        outcome.state.step,
        start.elapsed().as_secs_f64()
    );
    println!("metrics: {}", outcome.metrics_path.display());
    println!("final checkpoint: {}", outcome.final_checkpoint.display());
    Ok(())
}
