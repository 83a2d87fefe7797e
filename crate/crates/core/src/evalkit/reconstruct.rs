//! Masked-patch reconstruction probes: hide a chosen fraction of an image,
//! run the student path, paint the predicted pixels back into the hidden
//! slots, and score the hidden region.

use ndarray::{s, Array2, Array3, ArrayView3};

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::model::backbone::{encode_student, sample_drop_plan};
use crate::model::nn::linear_forward;
use crate::model::params::ModelParams;
use crate::rng::{purpose, stream};
use crate::views::assemble::assemble_student;
use crate::views::patches::{patchify, unpatchify};
use crate::views::trimask::TriMask;

#[derive(Clone, Debug)]
pub struct Reconstruction {
    /// The input with hidden patches filled mid-gray.
    pub masked_input: Array3<f32>,
    /// The input with hidden patches replaced by the network's predictions.
    pub predicted: Array3<f32>,
    /// The untouched input.
    pub target: Array3<f32>,
    /// Mean squared error over hidden pixels only. Zero when nothing is hidden.
    pub masked_mse: f64,
    pub mask: TriMask,
}

impl Reconstruction {
    /// Side-by-side panel in the order masked | predicted | target.
    pub fn triptych(&self) -> Array3<f32> {
        let (h, w, c) = self.target.dim();
        let mut out = Array3::<f32>::zeros((h, 3 * w, c));
        out.slice_mut(s![.., 0..w, ..]).assign(&self.masked_input);
        out.slice_mut(s![.., w..2 * w, ..]).assign(&self.predicted);
        out.slice_mut(s![.., 2 * w.., ..]).assign(&self.target);
        out
    }
}

/// Hides `l_fraction` of the patches (selected by the eval stream for
/// (seed, slot)), reconstructs them through the student path, and reports
/// the hidden-region error. The inference mask has no teacher part: every
/// non-hidden patch stays visible to the student.
pub fn reconstruct(
    params: &ModelParams<f32>,
    cfg: &TrainConfig,
    image: &ArrayView3<f32>,
    l_fraction: f64,
    seed: u64,
    slot: u64,
) -> Result<Reconstruction> {
    if !cfg.trainer.pixel_prediction {
        return Err(Error::contract(
            "these parameters were trained without pixel prediction; nothing maps mask tokens to pixels",
        ));
    }
    let bb = &cfg.backbone;
    if image.shape() != [bb.image_size, bb.image_size, 3] {
        return Err(Error::contract(format!(
            "reconstruction input must be [{0}, {0}, 3], got {1:?}",
            bb.image_size,
            image.shape()
        )));
    }
    let n = bb.num_patches();
    let mut rng = stream(seed, purpose::EVAL, slot, 0);
    let mask = TriMask::for_reconstruction(n, l_fraction, &mut rng)?;

    let patches = patchify(image, bb.patch_size);
    let embedded = linear_forward(&params.patch_embed, &patches.view());
    let assembly = assemble_student(
        &embedded.view(),
        &patches.view(),
        &mask,
        &params.cls_token.view(),
        &params.mask_token.view(),
        &params.pos_embed.view(),
    )?;
    let t_s = assembly.tokens.nrows();
    let l_count = t_s - assembly.visible;

    let mut predicted_patches = patches.clone();
    let mut masked_mse = 0.0;
    if l_count > 0 {
        let plan = sample_drop_plan::<f32>(0.0, bb.depth, 1, &mut rng);
        let (out, _) = encode_student(
            params,
            &assembly.tokens.view(),
            1,
            assembly.visible,
            bb.heads,
            bb.inject(),
            &plan,
        )?;
        let mask_rows = out.slice(s![assembly.visible..t_s, ..]);
        let pred: Array2<f32> = linear_forward(&params.predictor, &mask_rows);
        let mut se = 0.0f64;
        for (row, &patch_idx) in mask.l_idx.iter().enumerate() {
            for j in 0..bb.patch_dim() {
                let d = (pred[[row, j]] - patches[[patch_idx, j]]) as f64;
                se += d * d;
            }
            predicted_patches.row_mut(patch_idx).assign(&pred.row(row));
        }
        masked_mse = se / (l_count * bb.patch_dim()) as f64;
        if !masked_mse.is_finite() {
            return Err(Error::numerical("reconstruction produced a non-finite error"));
        }
    }

    let mut masked_patches = patches.clone();
    for &patch_idx in &mask.l_idx {
        masked_patches.row_mut(patch_idx).fill(0.5);
    }

    Ok(Reconstruction {
        masked_input: unpatchify(&masked_patches.view(), bb.patch_size, bb.grid()),
        predicted: unpatchify(&predicted_patches.view(), bb.patch_size, bb.grid()),
        target: image.to_owned(),
        masked_mse,
        mask,
    })
}

/// Mean hidden-region error of `params` over a set of images at one masking
/// level; the paired comparison used to show training actually helps.
pub fn mean_masked_mse(
    params: &ModelParams<f32>,
    cfg: &TrainConfig,
    images: &[ndarray::Array3<f32>],
    l_fraction: f64,
    seed: u64,
) -> Result<f64> {
    if images.is_empty() {
        return Err(Error::contract("need at least one image to score"));
    }
    let mut total = 0.0;
    for (i, img) in images.iter().enumerate() {
        total += reconstruct(params, cfg, &img.view(), l_fraction, seed, i as u64)?.masked_mse;
    }
    Ok(total / images.len() as f64)
}
