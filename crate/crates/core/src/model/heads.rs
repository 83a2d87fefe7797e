//! Projection head shared by both networks.
//!
//! A three-layer MLP maps the cls embedding into a bottleneck that is
//! L2-normalized, then a prototype layer scores it against K normalized
//! direction vectors: `logits[b, k] = xhat_b . dirhat_k`. Logits are plain
//! cosines with no learnable gain: the temperatures applied downstream set
//! the effective sharpness, and the absence of a scale parameter means the
//! networks cannot silence their own outputs — collapsing every score to
//! zero would require making the bottleneck equidistant from all K
//! directions at once, so the distillation signal cannot be turned off by a
//! single coordinate.

use ndarray::{Array1, Array2, ArrayView2};

use crate::model::nn::{
    gelu, gelu_backward, l2_normalize_rows, l2_normalize_rows_backward, linear_backward,
    linear_forward,
};
use crate::model::params::ProjectorParams;
use crate::scalar::Scalar;

pub struct ProjectorCache<F> {
    /// Input cls embeddings `[B, D]`.
    pub input: Array2<F>,
    pub a1: Array2<F>,
    pub z1: Array2<F>,
    pub a2: Array2<F>,
    pub z2: Array2<F>,
    /// Normalized bottleneck `[B, bottleneck]`.
    pub xhat: Array2<F>,
    pub inv_x: Array1<F>,
    /// Normalized prototype directions `[K, bottleneck]`.
    pub vhat: Array2<F>,
    pub inv_v: Array1<F>,
}

pub fn projector_forward<F: Scalar>(
    p: &ProjectorParams<F>,
    h: &ArrayView2<F>,
) -> (Array2<F>, ProjectorCache<F>) {
    let a1 = linear_forward(&p.fc1, h);
    let z1 = gelu(&a1.view());
    let a2 = linear_forward(&p.fc2, &z1.view());
    let z2 = gelu(&a2.view());
    let z3 = linear_forward(&p.fc3, &z2.view());
    let (xhat, inv_x) = l2_normalize_rows(&z3.view());
    let (vhat, inv_v) = l2_normalize_rows(&p.proto_dir.view());
    let logits = xhat.dot(&vhat.t());
    let cache = ProjectorCache {
        input: h.to_owned(),
        a1,
        z1,
        a2,
        z2,
        xhat,
        inv_x,
        vhat,
        inv_v,
    };
    (logits, cache)
}

/// Accumulates parameter gradients and returns d(input) `[B, D]`.
pub fn projector_backward<F: Scalar>(
    p: &ProjectorParams<F>,
    cache: &ProjectorCache<F>,
    dlogits: &ArrayView2<F>,
    grads: &mut ProjectorParams<F>,
) -> Array2<F> {
    let dxhat = dlogits.dot(&cache.vhat);
    let dvhat = dlogits.t().dot(&cache.xhat);
    let dz3 = l2_normalize_rows_backward(&cache.xhat.view(), &cache.inv_x.view(), &dxhat.view());
    let ddir =
        l2_normalize_rows_backward(&cache.vhat.view(), &cache.inv_v.view(), &dvhat.view());
    grads.proto_dir += &ddir;
    let dz2 = linear_backward(&p.fc3, &cache.z2.view(), &dz3.view(), &mut grads.fc3);
    let da2 = gelu_backward(&cache.a2.view(), &dz2.view());
    let dz1 = linear_backward(&p.fc2, &cache.z1.view(), &da2.view(), &mut grads.fc2);
    let da1 = gelu_backward(&cache.a1.view(), &dz1.view());
    linear_backward(&p.fc1, &cache.input.view(), &da1.view(), &mut grads.fc1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{purpose, stream};
    use ndarray::Array2;
    use rand::Rng;

    // O(1) weights keep the bottleneck norm away from zero, so the normalize
    // layer stays well conditioned for finite differences.
    fn projector() -> ProjectorParams<f64> {
        let mut rng = stream(41, purpose::EVAL, 0, 0);
        let mut draw2 = |rows: usize, cols: usize| {
            Array2::from_shape_simple_fn((rows, cols), || rng.random::<f64>() * 0.8 - 0.4)
        };
        let fc1w = draw2(7, 5);
        let fc2w = draw2(7, 7);
        let fc3w = draw2(4, 7);
        let proto_dir = draw2(6, 4);
        let b1 = draw2(1, 7);
        let b2 = draw2(1, 7);
        let b3 = draw2(1, 4);
        ProjectorParams {
            fc1: crate::model::nn::LinearParams { w: fc1w, b: b1.row(0).to_owned() },
            fc2: crate::model::nn::LinearParams { w: fc2w, b: b2.row(0).to_owned() },
            fc3: crate::model::nn::LinearParams { w: fc3w, b: b3.row(0).to_owned() },
            proto_dir,
        }
    }

    fn input(rows: usize, cols: usize) -> Array2<f64> {
        let mut rng = stream(42, purpose::EVAL, rows as u64, cols as u64);
        Array2::from_shape_simple_fn((rows, cols), || rng.random::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn logits_are_cosines_bounded_by_one() {
        let p = projector();
        let h = input(3, 5);
        let (logits, cache) = projector_forward(&p, &h.view());
        assert!(logits.iter().all(|c| c.abs() <= 1.0 + 1e-9));
        // Every row of the bottleneck and every direction is unit length, so
        // the logits are exactly the cosines between them.
        for b in 0..3 {
            let n: f64 = cache.xhat.row(b).iter().map(|v| v * v).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
        for k in 0..6 {
            let n: f64 = cache.vhat.row(k).iter().map(|v| v * v).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn direction_length_does_not_change_logits() {
        let mut p = projector();
        let h = input(3, 5);
        let (logits, _) = projector_forward(&p, &h.view());
        let mut row = p.proto_dir.row_mut(2);
        row *= 10.0;
        let (rescaled, _) = projector_forward(&p, &h.view());
        for (a, b) in logits.iter().zip(rescaled.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn direction_gradient_is_orthogonal_to_direction() {
        let p = projector();
        let h = input(3, 5);
        let (logits, cache) = projector_forward(&p, &h.view());
        let dlogits = logits.mapv(|v| 2.0 * v);
        let mut grads = ProjectorParams::zeros(5, 7, 4, 6);
        projector_backward(&p, &cache, &dlogits.view(), &mut grads);
        for k in 0..6 {
            let dot: f64 = grads
                .proto_dir
                .row(k)
                .iter()
                .zip(cache.vhat.row(k).iter())
                .map(|(a, b)| a * b)
                .sum();
            assert!(dot.abs() < 1e-9, "row {k}: {dot}");
        }
    }

    #[test]
    fn projector_backward_matches_finite_differences() {
        let p = projector();
        let h = input(3, 5);
        let loss = |p: &ProjectorParams<f64>, h: &Array2<f64>| -> f64 {
            let (logits, _) = projector_forward(p, &h.view());
            logits.iter().map(|v| v * v).sum()
        };
        let (logits, cache) = projector_forward(&p, &h.view());
        let dlogits = logits.mapv(|v| 2.0 * v);
        let mut grads = ProjectorParams::zeros(5, 7, 4, 6);
        let dh = projector_backward(&p, &cache, &dlogits.view(), &mut grads);

        let tol = 1e-5;
        let step = 1e-5;
        for idx in 0..h.len() {
            let mut plus = h.clone();
            let mut minus = h.clone();
            plus.as_slice_mut().unwrap()[idx] += step;
            minus.as_slice_mut().unwrap()[idx] -= step;
            let numeric = (loss(&p, &plus) - loss(&p, &minus)) / (2.0 * step);
            let a = dh.as_slice().unwrap()[idx];
            let denom = a.abs().max(numeric.abs()).max(1e-6);
            assert!(((a - numeric) / denom).abs() < tol, "input {idx}: {a} vs {numeric}");
        }

        // Spot-check one slot in every parameter tensor.
        let checks: Vec<(&str, Box<dyn Fn(&mut ProjectorParams<f64>) -> &mut f64>, f64)> = vec![
            (
                "fc1.w",
                Box::new(|p: &mut ProjectorParams<f64>| &mut p.fc1.w[[2, 1]]),
                grads.fc1.w[[2, 1]],
            ),
            (
                "fc2.b",
                Box::new(|p: &mut ProjectorParams<f64>| &mut p.fc2.b[3]),
                grads.fc2.b[3],
            ),
            (
                "fc3.w",
                Box::new(|p: &mut ProjectorParams<f64>| &mut p.fc3.w[[1, 2]]),
                grads.fc3.w[[1, 2]],
            ),
            (
                "proto_dir",
                Box::new(|p: &mut ProjectorParams<f64>| &mut p.proto_dir[[2, 3]]),
                grads.proto_dir[[2, 3]],
            ),
        ];
        for (name, slot, analytic) in checks {
            let mut plus = p.clone();
            *slot(&mut plus) += step;
            let mut minus = p.clone();
            *slot(&mut minus) -= step;
            let numeric = (loss(&plus, &h) - loss(&minus, &h)) / (2.0 * step);
            let denom = analytic.abs().max(numeric.abs()).max(1e-6);
            assert!(
                ((analytic - numeric) / denom).abs() < tol,
                "{name}: {analytic} vs {numeric}"
            );
        }
    }
}
