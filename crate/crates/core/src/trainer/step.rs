//! One optimization step: build views, run both networks, apply both loss
//! terms, update the student, then the slow-moving teacher state.
//!
//! The order within a step is fixed: forward passes, losses against the
//! center as of the previous step, backprop, optimizer update, teacher
//! moving average, center update. Every random draw comes from a stream
//! keyed by (seed, purpose, step, slot), so a step can be replayed exactly
//! from scratch or after a resume.

use ndarray::{s, Array1, Array2};

use crate::config::TrainConfig;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::backbone::{encode_student, encode_student_backward, encode_tokens, sample_drop_plan};
use crate::model::heads::{projector_backward, projector_forward};
use crate::model::nn::{linear_backward, linear_forward};
use crate::model::params::ModelParams;
use crate::objective::{cls_loss, ema_update, mse_loss, teacher_stats, update_center};
use crate::rng::{purpose, stream};
use crate::scalar::Scalar;
use crate::trainer::optimizer::AdamW;
use crate::trainer::schedule::Schedule;
use crate::views::assemble::{assemble_student, assemble_student_backward, assemble_teacher, StudentAssembly};
use crate::views::augment::{apply_spatial, make_view_pair};
use crate::views::patches::patchify;
use crate::views::trimask::{sample_trimask, TriMask};

#[derive(Clone, Debug)]
pub struct TrainState<F> {
    pub student: ModelParams<F>,
    pub teacher: ModelParams<F>,
    /// Running mean of raw teacher logits, subtracted before sharpening.
    pub center: Array1<F>,
    pub opt: AdamW<F>,
    /// Completed steps.
    pub step: u64,
}

impl<F: Scalar> TrainState<F> {
    pub fn init(cfg: &TrainConfig) -> Self {
        let seed = cfg.trainer.seed;
        let student = ModelParams::init(
            &cfg.backbone,
            &cfg.head,
            &mut stream(seed, purpose::INIT_STUDENT, 0, 0),
        );
        // The teacher starts as an exact copy of the student. Per-sample
        // distillation targets are then already consistent at step zero, and
        // the two networks separate only through EMA lag, asymmetric views,
        // and temperatures. Starting the teacher from an independent draw
        // instead makes its per-sample outputs unlearnable noise: the
        // student's fastest improvement is the batch-constant distribution,
        // the EMA copies that back, and both networks settle on uniform
        // outputs (observed as teacher_std -> 0 with l_cls pinned at ln K).
        let teacher = student.clone();
        let center = Array1::zeros(cfg.head.prototypes);
        let opt = AdamW::new(
            &student,
            cfg.trainer.adam_beta1,
            cfg.trainer.adam_beta2,
            cfg.trainer.adam_eps,
        );
        Self { student, teacher, center, opt, step: 0 }
    }
}

/// Schedule values pinned for one step.
#[derive(Clone, Copy, Debug)]
pub struct StepValues {
    pub lr: f64,
    pub weight_decay: f64,
    pub ema_momentum: f64,
    pub teacher_temp: f64,
}

impl StepValues {
    pub fn at(sched: &Schedule, step: usize) -> Self {
        Self {
            lr: sched.lr(step),
            weight_decay: sched.weight_decay(step),
            ema_momentum: sched.ema_momentum(step),
            teacher_temp: sched.teacher_temp(step),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct StepStats {
    pub l_cls: f64,
    pub l_mse: f64,
    pub teacher_entropy: f64,
    pub teacher_std: f64,
}

fn to_f<F: Scalar>(img: &ndarray::Array3<f32>) -> ndarray::Array3<F> {
    img.mapv(|v| F::from_f64(v as f64))
}

/// Everything one step computes before any state changes: losses, student
/// gradients, and the raw teacher logits the center update will consume.
#[derive(Clone, Debug)]
pub struct StepGrads<F> {
    pub stats: StepStats,
    pub grads: ModelParams<F>,
    pub teacher_logits: Array2<F>,
}

/// Forward passes, losses, and the full student gradient for one batch at
/// the state's current step counter, leaving the state untouched.
///
/// [`train_step`] is this plus the parameter updates; the split exists so
/// the analytic gradient can be compared against finite differences of
/// `stats.l_cls + stats.l_mse` through the very code path training uses.
/// All randomness (augmentations, masks, drop decisions) is keyed by
/// `(seed, purpose, state.step, slot)`, so repeated calls on the same state
/// see identical views and produce identical values.
pub fn step_grads<F: Scalar>(
    state: &TrainState<F>,
    cfg: &TrainConfig,
    dataset: &Dataset,
    batch: &[usize],
    vals: &StepValues,
) -> Result<StepGrads<F>> {
    let bb = &cfg.backbone;
    let tr = &cfg.trainer;
    let b = batch.len();
    if b == 0 {
        return Err(Error::contract("training step needs a non-empty batch"));
    }
    let n = bb.num_patches();
    let dim = bb.embed_dim;
    let pd = bb.patch_dim();
    let step = state.step;

    // Per-sample views, masks, and token sequences.
    let mut masks: Vec<TriMask> = Vec::with_capacity(b);
    let mut raw_patches: Vec<Array2<F>> = Vec::with_capacity(b);
    let mut assemblies: Vec<StudentAssembly<F>> = Vec::with_capacity(b);
    let mut teacher_seqs: Vec<Array2<F>> = Vec::with_capacity(b);

    for (slot, &idx) in batch.iter().enumerate() {
        let image = &dataset.images[idx];
        let mut aug_rng = stream(tr.seed, purpose::AUGMENT, step, slot as u64);
        let pair = make_view_pair(
            &image.view(),
            bb.image_size,
            &cfg.augment,
            tr.spatial_alignment,
            &mut aug_rng,
        );
        // Reconstruction targets are the student view before color
        // distortion: same crop and flips, original colors.
        let target_img = apply_spatial(&image.view(), pair.spatial.student());

        let s_patch = patchify(&to_f::<F>(&pair.student_view).view(), bb.patch_size);
        let t_patch = patchify(&to_f::<F>(&pair.teacher_view).view(), bb.patch_size);
        let tgt_patch = patchify(&to_f::<F>(&target_img).view(), bb.patch_size);

        // Without disjoint masks both networks see every patch (the dense
        // two-view baseline); the partition sampler is not consulted.
        let mask = if tr.disjoint_masks {
            let mut mask_rng = stream(tr.seed, purpose::TRIMASK, step, slot as u64);
            sample_trimask(n, &cfg.masks, &mut mask_rng)?
        } else {
            TriMask::dense(n)
        };

        let s_emb = linear_forward(&state.student.patch_embed, &s_patch.view());
        let t_emb = linear_forward(&state.teacher.patch_embed, &t_patch.view());

        assemblies.push(assemble_student(
            &s_emb.view(),
            &tgt_patch.view(),
            &mask,
            &state.student.cls_token.view(),
            &state.student.mask_token.view(),
            &state.student.pos_embed.view(),
        )?);
        teacher_seqs.push(assemble_teacher(
            &t_emb.view(),
            &mask,
            &state.teacher.cls_token.view(),
            &state.teacher.pos_embed.view(),
        )?);
        masks.push(mask);
        raw_patches.push(s_patch);
    }

    // Sequence lengths are uniform across the batch because part sizes
    // depend only on the patch count and the ratios.
    let t_s = assemblies[0].tokens.nrows();
    let visible = assemblies[0].visible;
    let l_count = t_s - visible;
    let t_t = teacher_seqs[0].nrows();

    let mut s_tokens = Array2::<F>::zeros((b * t_s, dim));
    let mut targets = Array2::<F>::zeros((b * l_count, pd));
    let mut t_tokens = Array2::<F>::zeros((b * t_t, dim));
    for i in 0..b {
        s_tokens
            .slice_mut(s![i * t_s..(i + 1) * t_s, ..])
            .assign(&assemblies[i].tokens);
        targets
            .slice_mut(s![i * l_count..(i + 1) * l_count, ..])
            .assign(&assemblies[i].targets);
        t_tokens
            .slice_mut(s![i * t_t..(i + 1) * t_t, ..])
            .assign(&teacher_seqs[i]);
    }

    // Teacher forward, fully detached.
    let (t_out, _) = encode_tokens(&state.teacher, &t_tokens.view(), b, bb.heads)?;
    let mut t_cls = Array2::<F>::zeros((b, dim));
    for i in 0..b {
        t_cls.row_mut(i).assign(&t_out.row(i * t_t));
    }
    let (teacher_logits, _) = projector_forward(&state.teacher.projector, &t_cls.view());

    // Student forward.
    let mut drop_rng = stream(tr.seed, purpose::DROP_PATH, step, 0);
    let plan = sample_drop_plan::<F>(bb.drop_path_rate, bb.depth, b, &mut drop_rng);
    let (s_out, s_cache) =
        encode_student(&state.student, &s_tokens.view(), b, visible, bb.heads, bb.inject(), &plan)?;
    let mut s_cls = Array2::<F>::zeros((b, dim));
    for i in 0..b {
        s_cls.row_mut(i).assign(&s_out.row(i * t_s));
    }
    let (student_logits, proj_cache) = projector_forward(&state.student.projector, &s_cls.view());

    // Losses use the center accumulated through the previous step.
    let cls = cls_loss(
        &student_logits.view(),
        &teacher_logits.view(),
        &state.center.view(),
        tr.student_temp,
        vals.teacher_temp,
    )?;

    let pixel = if tr.pixel_prediction && l_count > 0 {
        let mut mask_out = Array2::<F>::zeros((b * l_count, dim));
        for i in 0..b {
            mask_out
                .slice_mut(s![i * l_count..(i + 1) * l_count, ..])
                .assign(&s_out.slice(s![i * t_s + visible..(i + 1) * t_s, ..]));
        }
        let pred = linear_forward(&state.student.predictor, &mask_out.view());
        let mse = mse_loss(&pred.view(), &targets.view(), tr.pixel_loss_weight)?;
        Some((mask_out, mse))
    } else {
        None
    };

    let l_cls = Scalar::to_f64(cls.loss);
    let l_mse = pixel.as_ref().map_or(0.0, |(_, m)| Scalar::to_f64(m.loss));
    if !l_cls.is_finite() || !l_mse.is_finite() {
        return Err(Error::numerical(format!(
            "non-finite losses at step {step}: cls {l_cls}, pixel {l_mse}"
        )));
    }

    // Backward.
    let mut grads = state.student.zeros_like();
    let d_cls_emb = projector_backward(
        &state.student.projector,
        &proj_cache,
        &cls.dlogits.view(),
        &mut grads.projector,
    );
    let mut dy = Array2::<F>::zeros((b * t_s, dim));
    for i in 0..b {
        dy.row_mut(i * t_s).assign(&d_cls_emb.row(i));
    }
    if let Some((mask_out, mse)) = &pixel {
        let d_mask_out = linear_backward(
            &state.student.predictor,
            &mask_out.view(),
            &mse.dpred.view(),
            &mut grads.predictor,
        );
        // Optionally stop the pixel gradient at the predictor input.
        if tr.mse_through_encoder {
            for i in 0..b {
                dy.slice_mut(s![i * t_s + visible..(i + 1) * t_s, ..])
                    .assign(&d_mask_out.slice(s![i * l_count..(i + 1) * l_count, ..]));
            }
        }
    }

    let d_tokens = encode_student_backward(&state.student, &s_cache, &dy.view(), bb.heads, &mut grads);

    for i in 0..b {
        let d_slice = d_tokens.slice(s![i * t_s..(i + 1) * t_s, ..]);
        let d_patches = assemble_student_backward(
            &d_slice,
            &masks[i],
            &mut grads.cls_token,
            &mut grads.mask_token,
            &mut grads.pos_embed,
        );
        let s_cnt = masks[i].s_idx.len();
        let mut x_s = Array2::<F>::zeros((s_cnt, pd));
        for (slot, &j) in masks[i].s_idx.iter().enumerate() {
            x_s.row_mut(slot).assign(&raw_patches[i].row(j));
        }
        linear_backward(
            &state.student.patch_embed,
            &x_s.view(),
            &d_patches.view(),
            &mut grads.patch_embed,
        );
    }

    let (teacher_entropy, teacher_std) = teacher_stats(&cls.teacher_probs.view());
    Ok(StepGrads {
        stats: StepStats { l_cls, l_mse, teacher_entropy, teacher_std },
        grads,
        teacher_logits,
    })
}

/// One full training step: compute gradients, then apply the updates in
/// pinned order — optimizer, teacher EMA, center — and advance the counter.
/// The losses are measured against the center as it stood before this step.
pub fn train_step<F: Scalar>(
    state: &mut TrainState<F>,
    cfg: &TrainConfig,
    dataset: &Dataset,
    batch: &[usize],
    vals: &StepValues,
) -> Result<StepStats> {
    let StepGrads { stats, grads, teacher_logits } =
        step_grads(state, cfg, dataset, batch, vals)?;
    state.opt.step(&mut state.student, &grads, vals.lr, vals.weight_decay)?;
    ema_update(&mut state.teacher, &state.student, vals.ema_momentum)?;
    update_center(&mut state.center, &teacher_logits.view(), cfg.trainer.center_momentum);
    state.step += 1;
    Ok(stats)
}
