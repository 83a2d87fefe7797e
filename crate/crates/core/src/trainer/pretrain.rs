//! The full pre-training loop: epochs of shuffled fixed-size batches,
//! scheduled step values, a metrics log, periodic checkpoints, and exact
//! resume from any saved step.

use std::path::{Path, PathBuf};

use crate::config::TrainConfig;
use crate::data::{batches, load_dataset};
use crate::error::{Error, Result};
use crate::trainer::checkpoint::{load_checkpoint, save_checkpoint};
use crate::trainer::metrics::{MetricsRow, MetricsWriter};
use crate::trainer::schedule::Schedule;
use crate::trainer::step::{train_step, StepStats, StepValues, TrainState};

#[derive(Debug)]
pub struct PretrainOutcome {
    pub state: TrainState<f32>,
    pub metrics_path: PathBuf,
    pub final_checkpoint: PathBuf,
}

/// Runs pre-training to completion inside `out_dir`, optionally resuming
/// from an earlier checkpoint of the same config. `on_step` observes every
/// executed step (resumed runs skip already-completed steps entirely).
///
/// Because batches, augmentations, masks, and drop decisions are all keyed
/// by (seed, purpose, step), a resumed run replays the exact step sequence
/// a fresh run would have produced.
pub fn pretrain(
    cfg: &TrainConfig,
    out_dir: &Path,
    resume: Option<&Path>,
    mut on_step: impl FnMut(u64, &StepStats),
) -> Result<PretrainOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Error::ingest(out_dir, format!("cannot create output dir: {e}")))?;

    let dataset = load_dataset(&cfg.data, cfg.backbone.image_size)?;
    let tr = &cfg.trainer;
    let steps_per_epoch = dataset.len() / tr.batch_size;
    if steps_per_epoch == 0 {
        return Err(Error::config(format!(
            "dataset of {} images cannot fill one batch of {}",
            dataset.len(),
            tr.batch_size
        )));
    }
    let sched = Schedule::new(tr, steps_per_epoch);
    let total_steps = sched.total_steps() as u64;

    let metrics_path = out_dir.join("metrics.ndjson");
    let (mut state, mut metrics) = match resume {
        Some(dir) => {
            let (state, saved_cfg) = load_checkpoint(dir)?;
            if saved_cfg.hash() != cfg.hash() {
                return Err(Error::config(
                    "resume checkpoint was written under a different config",
                ));
            }
            if state.step > total_steps {
                return Err(Error::config(format!(
                    "checkpoint is at step {} but this run ends at {total_steps}",
                    state.step
                )));
            }
            (state, MetricsWriter::append(&metrics_path)?)
        }
        None => (TrainState::<f32>::init(cfg), MetricsWriter::create(&metrics_path)?),
    };

    for epoch in 0..tr.epochs as u64 {
        // Skip whole epochs that a resumed state has already completed.
        if (epoch + 1) * steps_per_epoch as u64 <= state.step {
            continue;
        }
        for (i, batch) in batches(dataset.len(), tr.batch_size, tr.seed, epoch)
            .into_iter()
            .enumerate()
        {
            let step = epoch * steps_per_epoch as u64 + i as u64;
            if step < state.step {
                continue;
            }
            let vals = StepValues::at(&sched, step as usize);
            let stats = train_step(&mut state, cfg, &dataset, &batch, &vals)?;
            on_step(step, &stats);

            if tr.log_every > 0 && (step + 1) % tr.log_every as u64 == 0 {
                metrics.write(&MetricsRow {
                    step,
                    lr: vals.lr,
                    wd: vals.weight_decay,
                    ema_m: vals.ema_momentum,
                    tpt_t: vals.teacher_temp,
                    l_cls: stats.l_cls,
                    l_mse: stats.l_mse,
                    teacher_entropy: stats.teacher_entropy,
                    teacher_std: stats.teacher_std,
                })?;
            }
            if tr.checkpoint_every > 0
                && state.step % tr.checkpoint_every as u64 == 0
                && state.step < total_steps
            {
                let dir = out_dir.join(format!("checkpoint-{:06}", state.step));
                save_checkpoint(&dir, &state, cfg)?;
            }
        }
    }

    let final_checkpoint = out_dir.join("checkpoint-final");
    save_checkpoint(&final_checkpoint, &state, cfg)?;
    Ok(PretrainOutcome { state, metrics_path, final_checkpoint })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{BackboneConfig, HeadConfig};
    use crate::trainer::metrics::read_metrics;

    fn tiny_config() -> TrainConfig {
        let mut cfg = TrainConfig::default();
        cfg.backbone = BackboneConfig {
            image_size: 16,
            patch_size: 8,
            depth: 2,
            embed_dim: 8,
            heads: 2,
            drop_path_rate: 0.1,
            ..BackboneConfig::default()
        };
        cfg.head = HeadConfig { prototypes: 8, hidden: 8, bottleneck: 4 };
        cfg.trainer.batch_size = 4;
        cfg.trainer.epochs = 4;
        cfg.trainer.log_every = 1;
        cfg.trainer.checkpoint_every = 0;
        cfg.data.num_images = 8;
        cfg.data.num_classes = 2;
        cfg.validate().unwrap();
        cfg
    }

    fn assert_params_equal(a: &TrainState<f32>, b: &TrainState<f32>) {
        for ((name, va), (_, vb)) in a.student.views().iter().zip(b.student.views()) {
            assert_eq!(va, &vb, "student.{name}");
        }
        for ((name, va), (_, vb)) in a.teacher.views().iter().zip(b.teacher.views()) {
            assert_eq!(va, &vb, "teacher.{name}");
        }
        assert_eq!(a.center, b.center);
        assert_eq!(a.step, b.step);
        assert_eq!(a.opt.t, b.opt.t);
    }

    #[test]
    fn run_logs_every_step_and_saves_a_final_checkpoint() {
        let cfg = tiny_config();
        let out = tempfile::tempdir().unwrap();
        let mut seen = 0u64;
        let outcome = pretrain(&cfg, out.path(), None, |step, stats| {
            assert_eq!(step, seen);
            assert!(stats.l_cls.is_finite());
            seen += 1;
        })
        .unwrap();
        // 8 images / batch 4 = 2 steps per epoch, 4 epochs.
        assert_eq!(seen, 8);
        assert_eq!(outcome.state.step, 8);
        let rows = read_metrics(&outcome.metrics_path).unwrap();
        assert_eq!(rows.len(), 8);
        assert_eq!(rows[0].step, 0);
        assert_eq!(rows[7].step, 7);
        assert!(outcome.final_checkpoint.join("params.bin").exists());
    }

    #[test]
    fn resume_matches_an_uninterrupted_run_bitwise() {
        let cfg = tiny_config();

        let full_out = tempfile::tempdir().unwrap();
        let full = pretrain(&cfg, full_out.path(), None, |_, _| {}).unwrap();

        // Same schedule, interrupted after epoch 2 of 4.
        let mut half_cfg = cfg.clone();
        half_cfg.trainer.checkpoint_every = 4;
        let half_out = tempfile::tempdir().unwrap();
        pretrain(&half_cfg, half_out.path(), None, |_, _| {}).unwrap();
        let mid = half_out.path().join("checkpoint-000004");
        assert!(mid.join("params.bin").exists());

        let resumed_out = tempfile::tempdir().unwrap();
        let resumed = pretrain(&half_cfg, resumed_out.path(), Some(&mid), |step, _| {
            assert!(step >= 4, "resume must not replay finished steps");
        })
        .unwrap();

        // The checkpoint cadence does not affect the arithmetic, so the
        // resumed run must land exactly on the uninterrupted result.
        assert_params_equal(&full.state, &resumed.state);
    }

    #[test]
    fn resume_rejects_a_different_config() {
        let cfg = tiny_config();
        let out = tempfile::tempdir().unwrap();
        let outcome = pretrain(&cfg, out.path(), None, |_, _| {}).unwrap();

        let mut other = cfg.clone();
        other.trainer.seed = 99;
        let out2 = tempfile::tempdir().unwrap();
        let err = pretrain(&other, out2.path(), Some(&outcome.final_checkpoint), |_, _| {})
            .unwrap_err();
        assert!(err.to_string().contains("different config"), "{err}");
    }
}
