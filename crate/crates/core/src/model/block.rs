//! Pre-norm transformer block with per-sample residual branch dropping.

use ndarray::{s, Array1, Array2, ArrayView2};
use rand::Rng;

use crate::model::attention::{
    attention_backward, attention_forward, AttentionCache, AttentionParams,
};
use crate::model::nn::{
    gelu, gelu_backward, layernorm_backward, layernorm_forward, linear_backward, linear_forward,
    LayerNormCache, LayerNormParams, LinearParams,
};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct BlockParams<F> {
    pub norm1: LayerNormParams<F>,
    pub attn: AttentionParams<F>,
    pub norm2: LayerNormParams<F>,
    pub fc1: LinearParams<F>,
    pub fc2: LinearParams<F>,
}

impl<F: Scalar> BlockParams<F> {
    pub fn zeros(dim: usize, hidden: usize) -> Self {
        BlockParams {
            norm1: LayerNormParams::zeros(dim),
            attn: AttentionParams::zeros(dim),
            norm2: LayerNormParams::zeros(dim),
            fc1: LinearParams::zeros(hidden, dim),
            fc2: LinearParams::zeros(dim, hidden),
        }
    }

    pub fn init(dim: usize, hidden: usize, std: f64, rng: &mut impl Rng) -> Self {
        BlockParams {
            norm1: LayerNormParams::identity(dim),
            attn: AttentionParams::init(dim, std, rng),
            norm2: LayerNormParams::identity(dim),
            fc1: LinearParams::init(hidden, dim, std, rng),
            fc2: LinearParams::init(dim, hidden, std, rng),
        }
    }
}

/// Keep factors for the two residual branches of one block: 0 drops the
/// branch for that sample, 1/(1-rate) keeps it scaled.
pub type BranchKeep<F> = [Array1<F>; 2];

pub fn sample_branch_keep<F: Scalar>(
    rate: f64,
    batch: usize,
    rng: &mut impl Rng,
) -> BranchKeep<F> {
    [draw_keep(rate, batch, rng), draw_keep(rate, batch, rng)]
}

fn draw_keep<F: Scalar>(rate: f64, batch: usize, rng: &mut impl Rng) -> Array1<F> {
    let inv = F::from_f64(1.0 / (1.0 - rate));
    let mut keep = Array1::zeros(batch);
    for slot in keep.iter_mut() {
        if rng.random::<f64>() >= rate {
            *slot = inv;
        }
    }
    keep
}

#[derive(Clone, Debug)]
pub struct BlockCache<F> {
    ln1: LayerNormCache<F>,
    n1: Array2<F>,
    attn: AttentionCache<F>,
    ln2: LayerNormCache<F>,
    n2: Array2<F>,
    h: Array2<F>,
    g: Array2<F>,
    keep: Option<BranchKeep<F>>,
}

impl<F: Scalar> BlockCache<F> {
    pub fn attention_probs(&self) -> &ndarray::Array3<F> {
        &self.attn.probs
    }
}

fn scale_branch<F: Scalar>(branch: &mut Array2<F>, keep: &Array1<F>, batch: usize) {
    let t = branch.nrows() / batch;
    for b in 0..batch {
        let factor = keep[b];
        branch.slice_mut(s![b * t..(b + 1) * t, ..]).mapv_inplace(|v| v * factor);
    }
}

pub fn block_forward<F: Scalar>(
    p: &BlockParams<F>,
    x: &ArrayView2<F>,
    batch: usize,
    heads: usize,
    keep: Option<&BranchKeep<F>>,
) -> (Array2<F>, BlockCache<F>) {
    let (n1, ln1) = layernorm_forward(&p.norm1, x);
    let (mut a, attn) = attention_forward(&p.attn, &n1.view(), batch, heads);
    if let Some(k) = keep {
        scale_branch(&mut a, &k[0], batch);
    }
    let x1 = x + &a;

    let (n2, ln2) = layernorm_forward(&p.norm2, &x1.view());
    let h = linear_forward(&p.fc1, &n2.view());
    let g = gelu(&h.view());
    let mut m = linear_forward(&p.fc2, &g.view());
    if let Some(k) = keep {
        scale_branch(&mut m, &k[1], batch);
    }
    let out = &x1 + &m;

    (out, BlockCache { ln1, n1, attn, ln2, n2, h, g, keep: keep.cloned() })
}

pub fn block_backward<F: Scalar>(
    p: &BlockParams<F>,
    cache: &BlockCache<F>,
    dout: &ArrayView2<F>,
    batch: usize,
    heads: usize,
    grads: &mut BlockParams<F>,
) -> Array2<F> {
    // MLP branch.
    let mut dm = dout.to_owned();
    if let Some(k) = &cache.keep {
        scale_branch(&mut dm, &k[1], batch);
    }
    let dg = linear_backward(&p.fc2, &cache.g.view(), &dm.view(), &mut grads.fc2);
    let dh = gelu_backward(&cache.h.view(), &dg.view());
    let dn2 = linear_backward(&p.fc1, &cache.n2.view(), &dh.view(), &mut grads.fc1);
    let dx1_branch = layernorm_backward(&p.norm2, &cache.ln2, &dn2.view(), &mut grads.norm2);
    let dx1 = dout + &dx1_branch;

    // Attention branch.
    let mut da = dx1.clone();
    if let Some(k) = &cache.keep {
        scale_branch(&mut da, &k[0], batch);
    }
    let dn1 = attention_backward(
        &p.attn,
        &cache.n1.view(),
        &cache.attn,
        &da.view(),
        batch,
        heads,
        &mut grads.attn,
    );
    let dx_branch = layernorm_backward(&p.norm1, &cache.ln1, &dn1.view(), &mut grads.norm1);
    dx1 + &dx_branch
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{purpose, stream};

    fn rand_matrix(rows: usize, cols: usize, tag: u64) -> Array2<f64> {
        let mut rng = stream(tag, purpose::EVAL, rows as u64, cols as u64);
        Array2::from_shape_simple_fn((rows, cols), || rng.random::<f64>() * 0.8 - 0.4)
    }

    fn block(dim: usize, hidden: usize) -> BlockParams<f64> {
        let mut rng = stream(31, purpose::EVAL, dim as u64, hidden as u64);
        BlockParams::init(dim, hidden, 0.2, &mut rng)
    }

    #[test]
    fn block_backward_matches_finite_differences() {
        let (batch, t, dim, heads, hidden) = (2, 3, 6, 2, 10);
        let p = block(dim, hidden);
        let x = rand_matrix(batch * t, dim, 32);
        let keep: BranchKeep<f64> =
            [ndarray::arr1(&[1.25, 0.0]), ndarray::arr1(&[0.0, 1.25])];

        let loss = |x: &Array2<f64>| -> f64 {
            let (y, _) = block_forward(&p, &x.view(), batch, heads, Some(&keep));
            y.iter().map(|v| v * v).sum()
        };
        let (y, cache) = block_forward(&p, &x.view(), batch, heads, Some(&keep));
        let dy = y.mapv(|v| 2.0 * v);
        let mut grads = BlockParams::zeros(dim, hidden);
        let dx = block_backward(&p, &cache, &dy.view(), batch, heads, &mut grads);

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
    fn dropped_branches_scale_kept_samples() {
        let (batch, t, dim, heads, hidden) = (2, 3, 6, 2, 10);
        let p = block(dim, hidden);
        let x = rand_matrix(batch * t, dim, 33);
        // Drop both branches for sample 1: its rows must pass through.
        // Sample 0 keeps only the attention branch so its contribution scales
        // linearly with the keep factor (the MLP branch would not).
        let keep: BranchKeep<f64> = [ndarray::arr1(&[1.25, 0.0]), ndarray::arr1(&[0.0, 0.0])];
        let (y, _) = block_forward(&p, &x.view(), batch, heads, Some(&keep));
        for r in t..2 * t {
            for c in 0..dim {
                assert_eq!(y[[r, c]], x[[r, c]], "row {r} must be identity");
            }
        }
        // Keep factor scales the branch contribution of sample 0.
        let keep_plain: BranchKeep<f64> = [ndarray::arr1(&[1.0, 0.0]), ndarray::arr1(&[0.0, 0.0])];
        let (y_plain, _) = block_forward(&p, &x.view(), batch, heads, Some(&keep_plain));
        for r in 0..t {
            for c in 0..dim {
                let scaled = (y[[r, c]] - x[[r, c]]) / 1.25;
                let plain = y_plain[[r, c]] - x[[r, c]];
                assert!((scaled - plain).abs() < 1e-12);
            }
        }
    }
}
