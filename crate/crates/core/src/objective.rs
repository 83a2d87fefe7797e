//! Training objectives and the slow-moving state they maintain.
//!
//! Two terms drive pretraining: a prototype-distillation loss between the
//! sharpened teacher distribution and the student distribution over cls
//! logits, and a weighted mean squared error between predicted and actual
//! pixels of the masked patches. The teacher side also maintains a running
//! center over its logits (subtracted before sharpening, which pushes away
//! from single-prototype collapse) and is itself an exponential moving
//! average of the student.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::model::params::ModelParams;
use crate::scalar::Scalar;

pub struct ClsLoss<F> {
    pub loss: F,
    /// Gradient with respect to the student logits, `[B, K]`.
    pub dlogits: Array2<F>,
    /// Centered, sharpened teacher distribution, `[B, K]`. Detached: nothing
    /// propagates back through the teacher.
    pub teacher_probs: Array2<F>,
}

/// Cross-entropy from the teacher distribution to the student distribution,
/// averaged over the batch.
///
/// Teacher logits are centered then sharpened at `teacher_temp`; student
/// logits are tempered at `student_temp`. The gradient is the classic
/// `(P_s - P_t) / (temp * B)`.
pub fn cls_loss<F: Scalar>(
    student_logits: &ArrayView2<F>,
    teacher_logits: &ArrayView2<F>,
    center: &ArrayView1<F>,
    student_temp: f64,
    teacher_temp: f64,
) -> Result<ClsLoss<F>> {
    let (batch, k) = student_logits.dim();
    if teacher_logits.dim() != (batch, k) || center.len() != k {
        return Err(Error::contract(format!(
            "logit shapes differ: student {:?}, teacher {:?}, center {}",
            student_logits.dim(),
            teacher_logits.dim(),
            center.len()
        )));
    }
    if batch == 0 {
        return Err(Error::contract("distillation loss over an empty batch"));
    }
    let ts = F::from_f64(student_temp);
    let tt = F::from_f64(teacher_temp);

    let mut centered = teacher_logits.to_owned();
    centered -= center;
    centered.mapv_inplace(|v| v / tt);
    let teacher_probs = crate::model::nn::softmax_rows(&centered.view());

    // Log-softmax of the tempered student logits, max-shifted for stability.
    let scaled = student_logits.mapv(|v| v / ts);
    let mut log_probs = scaled.clone();
    for mut row in log_probs.rows_mut() {
        let max = row.iter().cloned().fold(F::neg_infinity(), F::max);
        let lse = row.iter().map(|&v| (v - max).exp()).sum::<F>().ln() + max;
        row.mapv_inplace(|v| v - lse);
    }

    let mut loss = F::zero();
    for b in 0..batch {
        for j in 0..k {
            loss -= teacher_probs[[b, j]] * log_probs[[b, j]];
        }
    }
    let inv_b = F::from_f64(1.0 / batch as f64);
    loss *= inv_b;

    let student_probs = crate::model::nn::softmax_rows(&scaled.view());
    let mut dlogits = &student_probs - &teacher_probs;
    dlogits.mapv_inplace(|v| v * inv_b / ts);

    Ok(ClsLoss { loss, dlogits, teacher_probs })
}

pub struct MseLoss<F> {
    pub loss: F,
    /// Gradient with respect to the predictions, `[L, patch_dim]`.
    pub dpred: Array2<F>,
}

/// Weighted mean squared error over every predicted pixel value.
pub fn mse_loss<F: Scalar>(
    pred: &ArrayView2<F>,
    target: &ArrayView2<F>,
    weight: f64,
) -> Result<MseLoss<F>> {
    if pred.dim() != target.dim() {
        return Err(Error::contract(format!(
            "prediction shape {:?} does not match target shape {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    let count = pred.len();
    if count == 0 {
        return Ok(MseLoss { loss: F::zero(), dpred: pred.to_owned() });
    }
    let w = F::from_f64(weight);
    let diff = pred - target;
    let loss = diff.iter().map(|&d| d * d).sum::<F>() / F::from_f64(count as f64) * w;
    let scale = F::from_f64(2.0 * weight / count as f64);
    let dpred = diff.mapv(|d| d * scale);
    Ok(MseLoss { loss, dpred })
}

/// Moves the center toward the batch mean of the raw teacher logits:
/// `c <- momentum * c + (1 - momentum) * mean_b(logits)`.
pub fn update_center<F: Scalar>(
    center: &mut Array1<F>,
    teacher_logits: &ArrayView2<F>,
    momentum: f64,
) {
    let m = F::from_f64(momentum);
    let mean = teacher_logits.sum_axis(Axis(0)) / F::from_f64(teacher_logits.nrows() as f64);
    center.zip_mut_with(&mean, |c, &b| *c = m * *c + (F::one() - m) * b);
}

/// Moves every teacher tensor toward the student:
/// `t <- momentum * t + (1 - momentum) * s`.
pub fn ema_update<F: Scalar>(
    teacher: &mut ModelParams<F>,
    student: &ModelParams<F>,
    momentum: f64,
) -> Result<()> {
    let m = F::from_f64(momentum);
    let s_views = student.views();
    let mut t_views = teacher.views_mut();
    if s_views.len() != t_views.len() {
        return Err(Error::contract("student and teacher have different tensor listings"));
    }
    for ((s_name, s), (t_name, t)) in s_views.iter().zip(t_views.iter_mut()) {
        if s_name != t_name || s.shape() != t.shape() {
            return Err(Error::contract(format!(
                "tensor mismatch between networks: {s_name} vs {t_name}"
            )));
        }
        t.zip_mut_with(s, |tv, &sv| *tv = m * *tv + (F::one() - m) * sv);
    }
    Ok(())
}

/// Collapse diagnostics from the teacher distribution.
///
/// Returns the entropy of the batch-mean distribution (drops toward zero when
/// every sample lands on the same prototype) and the mean over prototypes of
/// the per-prototype standard deviation across the batch (drops toward zero
/// when the distribution stops depending on the input).
pub fn teacher_stats<F: Scalar>(teacher_probs: &ArrayView2<F>) -> (f64, f64) {
    let (batch, k) = teacher_probs.dim();
    if batch == 0 || k == 0 {
        return (0.0, 0.0);
    }
    let mean = teacher_probs.sum_axis(Axis(0)) / F::from_f64(batch as f64);
    let entropy = -mean
        .iter()
        .map(|&p| {
            let p = Scalar::to_f64(p);
            if p > 0.0 { p * p.ln() } else { 0.0 }
        })
        .sum::<f64>();
    let mut std_sum = 0.0;
    for j in 0..k {
        let col = teacher_probs.column(j);
        let mu = col.iter().map(|&v| Scalar::to_f64(v)).sum::<f64>() / batch as f64;
        let var = col.iter().map(|&v| (Scalar::to_f64(v) - mu).powi(2)).sum::<f64>()
            / batch as f64;
        std_sum += var.sqrt();
    }
    (entropy, std_sum / k as f64)
}
