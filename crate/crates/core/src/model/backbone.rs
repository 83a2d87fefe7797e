//! Transformer encoder with optional midway mask-row injection.
//!
//! The student runs in two phases: blocks `[0, inject)` see only the visible
//! rows of each sample (cls + unmasked patches), then the precomputed mask
//! rows (mask token + position) are appended and blocks `[inject, depth)` run
//! on the full sequence. With `inject == depth` the mask rows pass through
//! unchanged; with `inject == 0` every block sees the full sequence. There is
//! no trailing normalization layer, so block outputs are the embeddings.
//!
//! The teacher and the eval paths use [`encode_tokens`], which runs every
//! block on a dense sequence with no branch dropping.

use ndarray::{Array2, Array3, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::block::{
    block_backward, block_forward, sample_branch_keep, BlockCache, BranchKeep,
};
use crate::model::nn::{all_finite, linear_forward};
use crate::model::params::ModelParams;
use crate::scalar::Scalar;

/// Per-block keep masks for one step; `None` entries disable dropping.
pub type DropPlan<F> = Vec<Option<BranchKeep<F>>>;

/// Keep masks for every block, or all-`None` when the rate is zero.
pub fn sample_drop_plan<F: Scalar>(
    rate: f64,
    depth: usize,
    batch: usize,
    rng: &mut impl Rng,
) -> DropPlan<F> {
    (0..depth)
        .map(|_| (rate > 0.0).then(|| sample_branch_keep(rate, batch, rng)))
        .collect()
}

/// Dense input sequence for one sample: cls plus every embedded patch, with
/// positions added. `patches` are raw pixels `[N, patch_dim]`.
pub fn embed_full<F: Scalar>(p: &ModelParams<F>, patches: &ArrayView2<F>) -> Array2<F> {
    let n = patches.nrows();
    let dim = p.cls_token.len();
    let embedded = linear_forward(&p.patch_embed, patches);
    let mut tokens = Array2::zeros((n + 1, dim));
    {
        let mut row = tokens.row_mut(0);
        row.assign(&p.cls_token);
        row += &p.pos_embed.row(0);
    }
    for i in 0..n {
        let mut row = tokens.row_mut(i + 1);
        row.assign(&embedded.row(i));
        row += &p.pos_embed.row(i + 1);
    }
    tokens
}

pub struct StudentCache<F> {
    phase_a: Vec<BlockCache<F>>,
    phase_b: Vec<BlockCache<F>>,
    /// Rows per sample in the full sequence.
    tokens: usize,
    /// Rows per sample that exist before injection (cls + unmasked patches).
    visible: usize,
    batch: usize,
}

impl<F: Scalar> StudentCache<F> {
    /// Attention probabilities of the last block, `[B * heads, T, T]`.
    pub fn last_attention(&self) -> Option<&Array3<F>> {
        self.phase_b
            .last()
            .or(self.phase_a.last())
            .map(|c| c.attention_probs())
    }
}

/// Runs the two-phase student encoder.
///
/// `tokens` is the batch-stacked assembled sequence `[B * T, D]` where each
/// sample contributes `visible` rows followed by its mask rows. Returns the
/// full-sequence output `[B * T, D]`.
pub fn encode_student<F: Scalar>(
    p: &ModelParams<F>,
    tokens: &ArrayView2<F>,
    batch: usize,
    visible: usize,
    heads: usize,
    inject: usize,
    drop: &DropPlan<F>,
) -> Result<(Array2<F>, StudentCache<F>)> {
    let depth = p.blocks.len();
    let rows = tokens.nrows();
    if batch == 0 || rows % batch != 0 {
        return Err(Error::contract(format!(
            "token rows {rows} not divisible by batch {batch}"
        )));
    }
    let t = rows / batch;
    if visible == 0 || visible > t {
        return Err(Error::contract(format!(
            "visible rows {visible} out of range for sequence length {t}"
        )));
    }
    if inject > depth || drop.len() != depth {
        return Err(Error::contract(format!(
            "inject layer {inject} / drop plan {} incompatible with depth {depth}",
            drop.len()
        )));
    }

    // Phase A: visible rows only.
    let mut x = Array2::zeros((batch * visible, p.cls_token.len()));
    for b in 0..batch {
        x.slice_mut(ndarray::s![b * visible..(b + 1) * visible, ..])
            .assign(&tokens.slice(ndarray::s![b * t..b * t + visible, ..]));
    }
    let mut phase_a = Vec::with_capacity(inject);
    for (i, block) in p.blocks[..inject].iter().enumerate() {
        let (y, cache) = block_forward(block, &x.view(), batch, heads, drop[i].as_ref());
        check_block_output(&y, i)?;
        x = y;
        phase_a.push(cache);
    }

    // Splice the mask rows back in after their positions in each sample.
    let mut full = tokens.to_owned();
    for b in 0..batch {
        full.slice_mut(ndarray::s![b * t..b * t + visible, ..])
            .assign(&x.slice(ndarray::s![b * visible..(b + 1) * visible, ..]));
    }

    let mut phase_b = Vec::with_capacity(depth - inject);
    for (i, block) in p.blocks[inject..].iter().enumerate() {
        let layer = inject + i;
        let (y, cache) = block_forward(block, &full.view(), batch, heads, drop[layer].as_ref());
        check_block_output(&y, layer)?;
        full = y;
        phase_b.push(cache);
    }

    Ok((full, StudentCache { phase_a, phase_b, tokens: t, visible, batch }))
}

/// Backward through both phases; returns d(assembled tokens) `[B * T, D]`.
pub fn encode_student_backward<F: Scalar>(
    p: &ModelParams<F>,
    cache: &StudentCache<F>,
    dy: &ArrayView2<F>,
    heads: usize,
    grads: &mut ModelParams<F>,
) -> Array2<F> {
    let (batch, t, visible) = (cache.batch, cache.tokens, cache.visible);
    let inject = cache.phase_a.len();

    let mut d_full = dy.to_owned();
    for (i, bc) in cache.phase_b.iter().enumerate().rev() {
        let layer = inject + i;
        d_full = block_backward(
            &p.blocks[layer],
            bc,
            &d_full.view(),
            batch,
            heads,
            &mut grads.blocks[layer],
        );
    }

    // Mask-row gradients flow straight to the assembled input; visible rows
    // continue through phase A.
    let mut d_tokens = d_full.clone();
    let mut d_vis = Array2::zeros((batch * visible, dy.ncols()));
    for b in 0..batch {
        d_vis
            .slice_mut(ndarray::s![b * visible..(b + 1) * visible, ..])
            .assign(&d_full.slice(ndarray::s![b * t..b * t + visible, ..]));
    }
    for (i, bc) in cache.phase_a.iter().enumerate().rev() {
        d_vis = block_backward(&p.blocks[i], bc, &d_vis.view(), batch, heads, &mut grads.blocks[i]);
    }
    for b in 0..batch {
        d_tokens
            .slice_mut(ndarray::s![b * t..b * t + visible, ..])
            .assign(&d_vis.slice(ndarray::s![b * visible..(b + 1) * visible, ..]));
    }
    d_tokens
}

/// Runs every block densely (teacher and eval path). No branch dropping.
pub fn encode_tokens<F: Scalar>(
    p: &ModelParams<F>,
    tokens: &ArrayView2<F>,
    batch: usize,
    heads: usize,
) -> Result<(Array2<F>, Vec<BlockCache<F>>)> {
    let mut x = tokens.to_owned();
    let mut caches = Vec::with_capacity(p.blocks.len());
    for (i, block) in p.blocks.iter().enumerate() {
        let (y, cache) = block_forward(block, &x.view(), batch, heads, None);
        check_block_output(&y, i)?;
        x = y;
        caches.push(cache);
    }
    Ok((x, caches))
}

/// Attention paid by the cls token to each patch token in one block,
/// `[batch, heads, T - 1]`. Rows of the underlying distribution include the
/// cls self-weight, so entries sum to at most one.
pub fn cls_attention<F: Scalar>(cache: &BlockCache<F>, batch: usize, heads: usize) -> Array3<F> {
    let probs = cache.attention_probs();
    let t = probs.shape()[1];
    let mut out = Array3::zeros((batch, heads, t - 1));
    for b in 0..batch {
        for h in 0..heads {
            let row = probs.index_axis(Axis(0), b * heads + h);
            for j in 1..t {
                out[[b, h, j - 1]] = row[[0, j]];
            }
        }
    }
    out
}

fn check_block_output<F: Scalar>(y: &Array2<F>, layer: usize) -> Result<()> {
    if all_finite(&y.view()) {
        Ok(())
    } else {
        Err(Error::numerical(format!(
            "block {layer} produced non-finite activations"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{BackboneConfig, HeadConfig};
    use crate::rng::{purpose, stream};

    fn tiny() -> (BackboneConfig, HeadConfig) {
        let backbone = BackboneConfig {
            image_size: 16,
            patch_size: 8,
            depth: 2,
            embed_dim: 6,
            heads: 2,
            drop_path_rate: 0.0,
            ..BackboneConfig::default()
        };
        let head = HeadConfig { prototypes: 4, hidden: 8, bottleneck: 4 };
        (backbone, head)
    }

    fn model(seed: u64) -> ModelParams<f64> {
        let (backbone, head) = tiny();
        ModelParams::init(&backbone, &head, &mut stream(seed, purpose::INIT_STUDENT, 0, 0))
    }

    fn tokens(rows: usize, dim: usize, tag: u64) -> Array2<f64> {
        let mut rng = stream(tag, purpose::EVAL, rows as u64, dim as u64);
        Array2::from_shape_simple_fn((rows, dim), || rng.random::<f64>() * 0.8 - 0.4)
    }

    #[test]
    fn injection_at_depth_passes_mask_rows_through() {
        let p = model(3);
        let (batch, t, visible) = (2, 5, 3);
        let x = tokens(batch * t, 6, 11);
        let drop = sample_drop_plan(0.0, 2, batch, &mut stream(0, purpose::DROP_PATH, 0, 0));
        let (y, _) = encode_student(&p, &x.view(), batch, visible, 2, 2, &drop).unwrap();
        for b in 0..batch {
            for r in visible..t {
                for c in 0..6 {
                    assert_eq!(y[[b * t + r, c]], x[[b * t + r, c]]);
                }
            }
        }
    }

    #[test]
    fn visible_rows_ignore_mask_rows_before_injection() {
        // With inject == depth the visible outputs must not depend on what
        // sits in the mask rows at all.
        let p = model(3);
        let (batch, t, visible) = (2, 5, 3);
        let a = tokens(batch * t, 6, 12);
        let mut b_in = a.clone();
        for b in 0..batch {
            for r in visible..t {
                for c in 0..6 {
                    b_in[[b * t + r, c]] += 7.0;
                }
            }
        }
        let drop = sample_drop_plan(0.0, 2, batch, &mut stream(0, purpose::DROP_PATH, 0, 0));
        let (ya, _) = encode_student(&p, &a.view(), batch, visible, 2, 2, &drop).unwrap();
        let (yb, _) = encode_student(&p, &b_in.view(), batch, visible, 2, 2, &drop).unwrap();
        for b in 0..batch {
            for r in 0..visible {
                for c in 0..6 {
                    assert_eq!(ya[[b * t + r, c]], yb[[b * t + r, c]]);
                }
            }
        }
    }

    #[test]
    fn inject_zero_matches_dense_encoder() {
        let p = model(4);
        let (batch, t) = (2, 4);
        let x = tokens(batch * t, 6, 13);
        let drop = sample_drop_plan(0.0, 2, batch, &mut stream(0, purpose::DROP_PATH, 0, 0));
        let (sparse, _) = encode_student(&p, &x.view(), batch, t, 2, 0, &drop).unwrap();
        let (dense, _) = encode_tokens(&p, &x.view(), batch, 2).unwrap();
        assert_eq!(sparse, dense);
    }

    #[test]
    fn student_backward_matches_finite_differences() {
        let p = model(5);
        let (batch, t, visible, heads, inject) = (2, 5, 3, 2, 1);
        let x = tokens(batch * t, 6, 14);
        let drop: DropPlan<f64> =
            sample_drop_plan(0.25, 2, batch, &mut stream(1, purpose::DROP_PATH, 0, 0));

        let loss = |x: &Array2<f64>| -> f64 {
            let (y, _) = encode_student(&p, &x.view(), batch, visible, heads, inject, &drop).unwrap();
            y.iter().map(|v| v * v).sum()
        };
        let (y, cache) = encode_student(&p, &x.view(), batch, visible, heads, inject, &drop).unwrap();
        let dy = y.mapv(|v| 2.0 * v);
        let mut grads = p.zeros_like();
        let dx = encode_student_backward(&p, &cache, &dy.view(), heads, &mut grads);

        let h = 1e-5;
        for idx in 0..x.len() {
            let mut plus = x.clone();
            let mut minus = x.clone();
            plus.as_slice_mut().unwrap()[idx] += h;
            minus.as_slice_mut().unwrap()[idx] -= h;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let a = dx.as_slice().unwrap()[idx];
            let denom = a.abs().max(numeric.abs()).max(1e-6);
            assert!(((a - numeric) / denom).abs() < 1e-5, "index {idx}: {a} vs {numeric}");
        }
    }

    #[test]
    fn embed_full_adds_positions_to_every_row() {
        let p = model(6);
        let patches = tokens(4, 3 * 8 * 8, 15);
        let seq = embed_full(&p, &patches.view());
        assert_eq!(seq.dim(), (5, 6));
        let cls: Vec<f64> = (0..6).map(|c| p.cls_token[c] + p.pos_embed[[0, c]]).collect();
        for c in 0..6 {
            assert!((seq[[0, c]] - cls[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn cls_attention_extracts_first_row() {
        let p = model(7);
        let (batch, t, heads) = (2, 4, 2);
        let x = tokens(batch * t, 6, 16);
        let (_, caches) = encode_tokens(&p, &x.view(), batch, heads).unwrap();
        let att = cls_attention(caches.last().unwrap(), batch, heads);
        assert_eq!(att.dim(), (batch, heads, t - 1));
        for b in 0..batch {
            for h in 0..heads {
                let sum: f64 = (0..t - 1).map(|j| att[[b, h, j]]).sum();
                assert!(sum > 0.0 && sum <= 1.0 + 1e-9);
            }
        }
    }

    #[test]
    fn non_finite_activations_are_reported_with_layer() {
        let p = model(8);
        let mut x = tokens(4, 6, 17);
        x[[0, 0]] = f64::NAN;
        let err = encode_tokens(&p, &x.view(), 1, 2).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)), "got {err:?}");
    }
}
