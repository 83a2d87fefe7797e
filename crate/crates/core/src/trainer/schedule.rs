//! Per-step scalar schedules for the optimizer and the teacher.
//!
//! Learning rate warms up linearly from zero, then follows a half-cosine to
//! its final value. Weight decay and the teacher momentum follow half-cosines
//! across the whole run (both increase: decay tightens, the teacher slows).
//! The teacher temperature warms up linearly to its maximum and stays there.
//! All schedules are pure functions of the step index, so a resumed run
//! replays the exact same values.

use std::f64::consts::PI;

use crate::config::TrainerConfig;

#[derive(Clone, Debug)]
pub struct Schedule {
    total_steps: usize,
    warmup_steps: f64,
    base_lr: f64,
    final_lr: f64,
    wd_start: f64,
    wd_end: f64,
    ema_start: f64,
    ema_end: f64,
    tpt_start: f64,
    tpt_max: f64,
    tpt_warmup_steps: f64,
    student_temp: f64,
    center_momentum: f64,
}

/// Value at `t` of a half cosine over `[0, n)` running from `start` toward
/// (never quite reaching) `end`.
fn half_cosine(t: f64, n: f64, start: f64, end: f64) -> f64 {
    let n = n.max(1.0);
    end + (start - end) * 0.5 * (1.0 + (PI * t / n).cos())
}

impl Schedule {
    pub fn new(cfg: &TrainerConfig, steps_per_epoch: usize) -> Self {
        let spe = steps_per_epoch as f64;
        Self {
            total_steps: cfg.epochs * steps_per_epoch,
            warmup_steps: cfg.warmup_epochs * spe,
            base_lr: cfg.base_lr,
            final_lr: cfg.final_lr,
            wd_start: cfg.weight_decay_start,
            wd_end: cfg.weight_decay_end,
            ema_start: cfg.ema_momentum_start,
            ema_end: cfg.ema_momentum_end,
            tpt_start: cfg.teacher_temp_start,
            tpt_max: cfg.teacher_temp_max,
            tpt_warmup_steps: cfg.teacher_temp_warmup_epochs * spe,
            student_temp: cfg.student_temp,
            center_momentum: cfg.center_momentum,
        }
    }

    pub fn total_steps(&self) -> usize {
        self.total_steps
    }

    pub fn lr(&self, step: usize) -> f64 {
        let t = step as f64;
        if t < self.warmup_steps {
            return self.base_lr * t / self.warmup_steps;
        }
        let post = (self.total_steps as f64 - self.warmup_steps).max(1.0);
        half_cosine(t - self.warmup_steps, post, self.base_lr, self.final_lr)
    }

    pub fn weight_decay(&self, step: usize) -> f64 {
        half_cosine(step as f64, self.total_steps as f64, self.wd_start, self.wd_end)
    }

    pub fn ema_momentum(&self, step: usize) -> f64 {
        half_cosine(step as f64, self.total_steps as f64, self.ema_start, self.ema_end)
    }

    pub fn teacher_temp(&self, step: usize) -> f64 {
        let t = step as f64;
        if self.tpt_warmup_steps > 0.0 && t < self.tpt_warmup_steps {
            self.tpt_start + (self.tpt_max - self.tpt_start) * t / self.tpt_warmup_steps
        } else {
            self.tpt_max
        }
    }

    pub fn student_temp(&self) -> f64 {
        self.student_temp
    }

    pub fn center_momentum(&self) -> f64 {
        self.center_momentum
    }
}
