//! Multi-head self-attention over concatenated per-sample sequences.

use ndarray::{s, Array2, Array3, ArrayView2};
use rand::Rng;

use crate::model::nn::{
    linear_backward, linear_forward, softmax_rows, softmax_rows_backward, LinearParams,
};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct AttentionParams<F> {
    /// [3D, D] fused query/key/value projection.
    pub qkv: LinearParams<F>,
    /// [D, D] output projection.
    pub proj: LinearParams<F>,
}

impl<F: Scalar> AttentionParams<F> {
    pub fn zeros(dim: usize) -> Self {
        AttentionParams {
            qkv: LinearParams::zeros(3 * dim, dim),
            proj: LinearParams::zeros(dim, dim),
        }
    }

    pub fn init(dim: usize, std: f64, rng: &mut impl Rng) -> Self {
        AttentionParams {
            qkv: LinearParams::init(3 * dim, dim, std, rng),
            proj: LinearParams::init(dim, dim, std, rng),
        }
    }
}

#[derive(Clone, Debug)]
pub struct AttentionCache<F> {
    /// [(B T), 3D] fused projections of the input.
    pub qkv: Array2<F>,
    /// [B * heads, T, T] softmax attention rows.
    pub probs: Array3<F>,
    /// [(B T), D] concatenated per-head context, input to proj.
    pub ctx: Array2<F>,
}

/// x is [(B T), D] with sample sequences concatenated; T = rows / batch.
pub fn attention_forward<F: Scalar>(
    p: &AttentionParams<F>,
    x: &ArrayView2<F>,
    batch: usize,
    heads: usize,
) -> (Array2<F>, AttentionCache<F>) {
    let (rows, dim) = x.dim();
    assert!(rows % batch == 0, "rows divisible by batch");
    let t = rows / batch;
    let dh = dim / heads;
    let scale = F::from_f64(1.0 / (dh as f64).sqrt());

    let qkv = linear_forward(&p.qkv, x);
    let mut probs = Array3::<F>::zeros((batch * heads, t, t));
    let mut ctx = Array2::<F>::zeros((rows, dim));
    for b in 0..batch {
        let row0 = b * t;
        for h in 0..heads {
            let c0 = h * dh;
            let q = qkv.slice(s![row0..row0 + t, c0..c0 + dh]);
            let k = qkv.slice(s![row0..row0 + t, dim + c0..dim + c0 + dh]);
            let v = qkv.slice(s![row0..row0 + t, 2 * dim + c0..2 * dim + c0 + dh]);
            let scores = q.dot(&k.t()).mapv(|s| s * scale);
            let att = softmax_rows(&scores.view());
            let out = att.dot(&v);
            ctx.slice_mut(s![row0..row0 + t, c0..c0 + dh]).assign(&out);
            probs.slice_mut(s![b * heads + h, .., ..]).assign(&att);
        }
    }
    let y = linear_forward(&p.proj, &ctx.view());
    (y, AttentionCache { qkv, probs, ctx })
}

pub fn attention_backward<F: Scalar>(
    p: &AttentionParams<F>,
    x: &ArrayView2<F>,
    cache: &AttentionCache<F>,
    dy: &ArrayView2<F>,
    batch: usize,
    heads: usize,
    grads: &mut AttentionParams<F>,
) -> Array2<F> {
    let (rows, dim) = x.dim();
    let t = rows / batch;
    let dh = dim / heads;
    let scale = F::from_f64(1.0 / (dh as f64).sqrt());

    let dctx = linear_backward(&p.proj, &cache.ctx.view(), dy, &mut grads.proj);
    let mut dqkv = Array2::<F>::zeros((rows, 3 * dim));
    for b in 0..batch {
        let row0 = b * t;
        for h in 0..heads {
            let c0 = h * dh;
            let q = cache.qkv.slice(s![row0..row0 + t, c0..c0 + dh]);
            let k = cache.qkv.slice(s![row0..row0 + t, dim + c0..dim + c0 + dh]);
            let v = cache.qkv.slice(s![row0..row0 + t, 2 * dim + c0..2 * dim + c0 + dh]);
            let att = cache.probs.slice(s![b * heads + h, .., ..]);
            let dout = dctx.slice(s![row0..row0 + t, c0..c0 + dh]);

            let dv = att.t().dot(&dout);
            let datt = dout.dot(&v.t());
            let dscores = softmax_rows_backward(&att, &datt.view()).mapv(|g| g * scale);
            let dq = dscores.dot(&k);
            let dk = dscores.t().dot(&q);

            dqkv.slice_mut(s![row0..row0 + t, c0..c0 + dh]).assign(&dq);
            dqkv.slice_mut(s![row0..row0 + t, dim + c0..dim + c0 + dh]).assign(&dk);
            dqkv.slice_mut(s![row0..row0 + t, 2 * dim + c0..2 * dim + c0 + dh]).assign(&dv);
        }
    }
    linear_backward(&p.qkv, x, &dqkv.view(), &mut grads.qkv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{purpose, stream};

    fn rand_matrix(rows: usize, cols: usize, tag: u64) -> Array2<f64> {
        let mut rng = stream(tag, purpose::EVAL, rows as u64, cols as u64);
        Array2::from_shape_simple_fn((rows, cols), || rng.random::<f64>() * 0.8 - 0.4)
    }

    fn params(dim: usize) -> AttentionParams<f64> {
        AttentionParams {
            qkv: LinearParams { w: rand_matrix(3 * dim, dim, 21), b: rand_matrix(1, 3 * dim, 22).row(0).to_owned() },
            proj: LinearParams { w: rand_matrix(dim, dim, 23), b: rand_matrix(1, dim, 24).row(0).to_owned() },
        }
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let (batch, t, dim, heads) = (2, 5, 8, 2);
        let p = params(dim);
        let x = rand_matrix(batch * t, dim, 25);
        let (_, cache) = attention_forward(&p, &x.view(), batch, heads);
        for bh in 0..batch * heads {
            for r in 0..t {
                let sum: f64 = cache.probs.slice(s![bh, r, ..]).sum();
                assert!((sum - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn attention_backward_matches_finite_differences() {
        let (batch, t, dim, heads) = (2, 4, 6, 2);
        let p = params(dim);
        let x = rand_matrix(batch * t, dim, 26);
        let loss = |x: &Array2<f64>| -> f64 {
            let (y, _) = attention_forward(&p, &x.view(), batch, heads);
            y.iter().map(|v| v * v).sum()
        };
        let (y, cache) = attention_forward(&p, &x.view(), batch, heads);
        let dy = y.mapv(|v| 2.0 * v);
        let mut grads = AttentionParams::zeros(dim);
        let dx = attention_backward(&p, &x.view(), &cache, &dy.view(), batch, heads, &mut grads);

        let h = 1e-5;
        for idx in 0..x.len() {
            let mut plus = x.clone();
            let mut minus = x.clone();
            plus.as_slice_mut().unwrap()[idx] += h;
            minus.as_slice_mut().unwrap()[idx] -= h;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let a = dx.as_slice().unwrap()[idx];
            let denom = a.abs().max(numeric.abs()).max(1e-6);
            assert!(
                ((a - numeric) / denom).abs() < 1e-5,
                "input grad {idx}: {a} vs {numeric}"
            );
        }

        // Spot-check parameter gradients through the fused projection.
        let mut p2 = params(dim);
        let h = 1e-6;
        p2.qkv.w[[3, 2]] += h;
        let plus = {
            let (y, _) = attention_forward(&p2, &x.view(), batch, heads);
            y.iter().map(|v| v * v).sum::<f64>()
        };
        p2.qkv.w[[3, 2]] -= 2.0 * h;
        let minus = {
            let (y, _) = attention_forward(&p2, &x.view(), batch, heads);
            y.iter().map(|v| v * v).sum::<f64>()
        };
        let numeric = (plus - minus) / (2.0 * h);
        assert!((grads.qkv.w[[3, 2]] - numeric).abs() / numeric.abs().max(1e-9) < 1e-4);
    }
}
