//! Layer primitives with explicit forward and backward passes. Token tensors
//! are [rows, dim] matrices; a batch of sequences is stored with samples
//! concatenated along the row axis. Backward functions accumulate parameter
//! gradients into a mirror parameter struct and return the input gradient.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use crate::scalar::Scalar;

pub const LAYERNORM_EPS: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct LinearParams<F> {
    /// [out, in]; y = x w^T + b.
    pub w: Array2<F>,
    pub b: Array1<F>,
}

impl<F: Scalar> LinearParams<F> {
    pub fn zeros(out: usize, input: usize) -> Self {
        LinearParams { w: Array2::zeros((out, input)), b: Array1::zeros(out) }
    }

    pub fn init(out: usize, input: usize, std: f64, rng: &mut impl Rng) -> Self {
        LinearParams { w: trunc_normal2((out, input), std, rng), b: Array1::zeros(out) }
    }
}

pub fn linear_forward<F: Scalar>(p: &LinearParams<F>, x: &ArrayView2<F>) -> Array2<F> {
    let mut y = x.dot(&p.w.t());
    y += &p.b;
    y
}

/// Accumulates dw += dy^T x and db += sum(dy), returns dx = dy w.
pub fn linear_backward<F: Scalar>(
    p: &LinearParams<F>,
    x: &ArrayView2<F>,
    dy: &ArrayView2<F>,
    grads: &mut LinearParams<F>,
) -> Array2<F> {
    grads.w += &dy.t().dot(x);
    grads.b += &dy.sum_axis(Axis(0));
    dy.dot(&p.w)
}

#[derive(Clone, Debug)]
pub struct LayerNormParams<F> {
    pub gamma: Array1<F>,
    pub beta: Array1<F>,
}

impl<F: Scalar> LayerNormParams<F> {
    pub fn identity(dim: usize) -> Self {
        LayerNormParams { gamma: Array1::ones(dim), beta: Array1::zeros(dim) }
    }

    pub fn zeros(dim: usize) -> Self {
        LayerNormParams { gamma: Array1::zeros(dim), beta: Array1::zeros(dim) }
    }
}

#[derive(Clone, Debug)]
pub struct LayerNormCache<F> {
    /// Normalized rows before the affine map.
    pub xhat: Array2<F>,
    pub inv_std: Array1<F>,
}

pub fn layernorm_forward<F: Scalar>(
    p: &LayerNormParams<F>,
    x: &ArrayView2<F>,
) -> (Array2<F>, LayerNormCache<F>) {
    let (rows, dim) = x.dim();
    let eps = F::from_f64(LAYERNORM_EPS);
    let denom = F::from_f64(dim as f64);
    let mut xhat = Array2::<F>::zeros((rows, dim));
    let mut inv_std = Array1::<F>::zeros(rows);
    let mut y = Array2::<F>::zeros((rows, dim));
    for r in 0..rows {
        let row = x.row(r);
        let mean = row.sum() / denom;
        let mut var = F::zero();
        for &v in row.iter() {
            let d = v - mean;
            var += d * d;
        }
        var = var / denom;
        let istd = (var + eps).sqrt().recip();
        inv_std[r] = istd;
        for c in 0..dim {
            let h = (row[c] - mean) * istd;
            xhat[[r, c]] = h;
            y[[r, c]] = h * p.gamma[c] + p.beta[c];
        }
    }
    (y, LayerNormCache { xhat, inv_std })
}

pub fn layernorm_backward<F: Scalar>(
    p: &LayerNormParams<F>,
    cache: &LayerNormCache<F>,
    dy: &ArrayView2<F>,
    grads: &mut LayerNormParams<F>,
) -> Array2<F> {
    let (rows, dim) = dy.dim();
    let denom = F::from_f64(dim as f64);
    let mut dx = Array2::<F>::zeros((rows, dim));
    for r in 0..rows {
        let mut sum_g = F::zero();
        let mut sum_gx = F::zero();
        for c in 0..dim {
            let g = dy[[r, c]] * p.gamma[c];
            sum_g += g;
            sum_gx += g * cache.xhat[[r, c]];
            grads.gamma[c] += dy[[r, c]] * cache.xhat[[r, c]];
            grads.beta[c] += dy[[r, c]];
        }
        let mean_g = sum_g / denom;
        let mean_gx = sum_gx / denom;
        let istd = cache.inv_std[r];
        for c in 0..dim {
            let g = dy[[r, c]] * p.gamma[c];
            dx[[r, c]] = (g - mean_g - cache.xhat[[r, c]] * mean_gx) * istd;
        }
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

pub fn gelu<F: Scalar>(x: &ArrayView2<F>) -> Array2<F> {
    let c = F::from_f64(GELU_C);
    let a = F::from_f64(GELU_A);
    let half = F::from_f64(0.5);
    x.mapv(|v| {
        let t = (c * (v + a * v * v * v)).tanh();
        half * v * (F::one() + t)
    })
}

pub fn gelu_backward<F: Scalar>(x: &ArrayView2<F>, dy: &ArrayView2<F>) -> Array2<F> {
    let c = F::from_f64(GELU_C);
    let a = F::from_f64(GELU_A);
    let half = F::from_f64(0.5);
    let three = F::from_f64(3.0);
    let mut dx = x.to_owned();
    dx.zip_mut_with(dy, |v, &g| {
        let u = c * (*v + a * *v * *v * *v);
        let t = u.tanh();
        let du = c * (F::one() + three * a * *v * *v);
        let d = half * (F::one() + t) + half * *v * (F::one() - t * t) * du;
        *v = d * g;
    });
    dx
}

/// Numerically stable row softmax.
pub fn softmax_rows<F: Scalar>(x: &ArrayView2<F>) -> Array2<F> {
    let (rows, cols) = x.dim();
    let mut y = Array2::<F>::zeros((rows, cols));
    for r in 0..rows {
        let row = x.row(r);
        let mut max = row[0];
        for &v in row.iter() {
            if v > max {
                max = v;
            }
        }
        let mut sum = F::zero();
        for c in 0..cols {
            let e = (row[c] - max).exp();
            y[[r, c]] = e;
            sum += e;
        }
        let inv = sum.recip();
        for c in 0..cols {
            y[[r, c]] *= inv;
        }
    }
    y
}

/// Backward of row softmax given probabilities p: dx = p * (dp - sum(dp * p)).
pub fn softmax_rows_backward<F: Scalar>(p: &ArrayView2<F>, dp: &ArrayView2<F>) -> Array2<F> {
    let (rows, cols) = p.dim();
    let mut dx = Array2::<F>::zeros((rows, cols));
    for r in 0..rows {
        let mut dot = F::zero();
        for c in 0..cols {
            dot += dp[[r, c]] * p[[r, c]];
        }
        for c in 0..cols {
            dx[[r, c]] = p[[r, c]] * (dp[[r, c]] - dot);
        }
    }
    dx
}

/// Normalizes each row to unit L2 norm; returns the normalized rows and the
/// inverse norms needed for the backward pass.
pub fn l2_normalize_rows<F: Scalar>(x: &ArrayView2<F>) -> (Array2<F>, Array1<F>) {
    let (rows, _) = x.dim();
    let eps = F::from_f64(1e-12);
    let mut y = x.to_owned();
    let mut inv_norms = Array1::<F>::zeros(rows);
    for r in 0..rows {
        let norm = x.row(r).iter().map(|&v| v * v).sum::<F>().sqrt();
        let inv = (norm + eps).recip();
        inv_norms[r] = inv;
        for v in y.row_mut(r).iter_mut() {
            *v *= inv;
        }
    }
    (y, inv_norms)
}

/// Backward of row normalization: dx = (dy - (dy . xhat) xhat) / ||x||.
pub fn l2_normalize_rows_backward<F: Scalar>(
    xhat: &ArrayView2<F>,
    inv_norms: &ArrayView1<F>,
    dy: &ArrayView2<F>,
) -> Array2<F> {
    let (rows, cols) = xhat.dim();
    let mut dx = Array2::<F>::zeros((rows, cols));
    for r in 0..rows {
        let mut dot = F::zero();
        for c in 0..cols {
            dot += dy[[r, c]] * xhat[[r, c]];
        }
        for c in 0..cols {
            dx[[r, c]] = (dy[[r, c]] - dot * xhat[[r, c]]) * inv_norms[r];
        }
    }
    dx
}

/// Normal(0, std) entries clamped to two standard deviations.
pub fn trunc_normal2<F: Scalar>(
    shape: (usize, usize),
    std: f64,
    rng: &mut impl Rng,
) -> Array2<F> {
    Array2::from_shape_simple_fn(shape, || F::from_f64(draw_trunc(std, rng)))
}

pub fn trunc_normal1<F: Scalar>(len: usize, std: f64, rng: &mut impl Rng) -> Array1<F> {
    Array1::from_shape_simple_fn(len, || F::from_f64(draw_trunc(std, rng)))
}

fn draw_trunc(std: f64, rng: &mut impl Rng) -> f64 {
    let z: f64 = rng.sample(rand_distr::StandardNormal);
    z.clamp(-2.0, 2.0) * std
}

pub fn all_finite<F: Scalar>(x: &ArrayView2<F>) -> bool {
    x.iter().all(|v| v.is_finite())
}
