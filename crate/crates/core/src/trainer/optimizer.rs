//! Adam with decoupled weight decay over the named parameter listing.
//!
//! Decay only touches tensors of rank two or higher: weight matrices, the
//! positional table, and the prototype directions. Norm gains, biases, and
//! the special tokens are left undecayed, matching common transformer
//! practice.

use crate::error::{Error, Result};
use crate::model::params::ModelParams;
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct AdamW<F> {
    m: ModelParams<F>,
    v: ModelParams<F>,
    beta1: f64,
    beta2: f64,
    eps: f64,
    /// Completed update count; drives bias correction.
    pub t: u64,
}

impl<F: Scalar> AdamW<F> {
    pub fn new(like: &ModelParams<F>, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self { m: like.zeros_like(), v: like.zeros_like(), beta1, beta2, eps, t: 0 }
    }

    pub fn step(
        &mut self,
        params: &mut ModelParams<F>,
        grads: &ModelParams<F>,
        lr: f64,
        weight_decay: f64,
    ) -> Result<()> {
        self.t += 1;
        let b1 = F::from_f64(self.beta1);
        let b2 = F::from_f64(self.beta2);
        let one = F::one();
        let eps = F::from_f64(self.eps);
        let bc1 = F::from_f64(1.0 - self.beta1.powi(self.t as i32));
        let bc2 = F::from_f64(1.0 - self.beta2.powi(self.t as i32));
        let lr_f = F::from_f64(lr);

        let g_views = grads.views();
        let mut p_views = params.views_mut();
        let mut m_views = self.m.views_mut();
        let mut v_views = self.v.views_mut();
        if g_views.len() != p_views.len() {
            return Err(Error::contract("gradient listing differs from parameter listing"));
        }
        for i in 0..g_views.len() {
            let (g_name, g) = &g_views[i];
            let (p_name, p) = &mut p_views[i];
            if g_name != p_name || g.shape() != p.shape() {
                return Err(Error::contract(format!(
                    "gradient tensor {g_name} does not match parameter {p_name}"
                )));
            }
            let decay = if p.ndim() >= 2 { F::from_f64(weight_decay) } else { F::zero() };
            let (_, m) = &mut m_views[i];
            let (_, v) = &mut v_views[i];
            for (((pv, &gv), mv), vv) in
                p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut())
            {
                *mv = b1 * *mv + (one - b1) * gv;
                *vv = b2 * *vv + (one - b2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv -= lr_f * (m_hat / (v_hat.sqrt() + eps) + decay * *pv);
            }
        }
        Ok(())
    }

    /// Moment tensors in listing order, for checkpoints.
    pub fn moments(&self) -> (&ModelParams<F>, &ModelParams<F>) {
        (&self.m, &self.v)
    }

    pub fn moments_mut(&mut self) -> (&mut ModelParams<F>, &mut ModelParams<F>) {
        (&mut self.m, &mut self.v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{BackboneConfig, HeadConfig};
    use crate::rng::{purpose, stream};

    fn small() -> (BackboneConfig, HeadConfig) {
        let backbone = BackboneConfig {
            image_size: 16,
            patch_size: 8,
            depth: 1,
            embed_dim: 4,
            heads: 2,
            ..BackboneConfig::default()
        };
        let head = HeadConfig { prototypes: 4, hidden: 6, bottleneck: 3 };
        (backbone, head)
    }

    fn model(seed: u64) -> ModelParams<f64> {
        let (backbone, head) = small();
        ModelParams::init(&backbone, &head, &mut stream(seed, purpose::INIT_STUDENT, 0, 0))
    }

    #[test]
    fn drives_a_quadratic_to_its_minimum() {
        let mut p = model(1);
        let target = 3.0;
        let mut opt = AdamW::new(&p, 0.9, 0.999, 1e-8);
        for _ in 0..400 {
            let mut grads = p.zeros_like();
            grads
                .cls_token
                .zip_mut_with(&p.cls_token, |g, &x| *g = 2.0 * (x - target));
            opt.step(&mut p, &grads, 0.05, 0.0).unwrap();
        }
        for &x in p.cls_token.iter() {
            assert!((x - target).abs() < 1e-3, "{x}");
        }
    }

    #[test]
    fn first_step_moves_by_roughly_lr_times_sign() {
        let mut p = model(2);
        let before = p.cls_token.clone();
        let mut grads = p.zeros_like();
        grads.cls_token.fill(0.7);
        let mut opt = AdamW::new(&p, 0.9, 0.999, 1e-8);
        opt.step(&mut p, &grads, 0.01, 0.0).unwrap();
        for (a, b) in p.cls_token.iter().zip(before.iter()) {
            assert!((a - (b - 0.01)).abs() < 1e-6);
        }
    }

    #[test]
    fn decay_touches_only_matrices() {
        let mut p = model(3);
        let before = p.clone();
        let grads = p.zeros_like();
        let mut opt = AdamW::new(&p, 0.9, 0.999, 1e-8);
        opt.step(&mut p, &grads, 0.1, 0.5).unwrap();
        for ((name, after), (_, orig)) in p.views().iter().zip(before.views()) {
            if after.ndim() >= 2 {
                for (a, o) in after.iter().zip(orig.iter()) {
                    assert!((a - o * 0.95).abs() < 1e-12, "{name}");
                }
            } else {
                assert_eq!(after, &orig, "{name} must not decay");
            }
        }
    }

    #[test]
    fn structure_mismatch_is_rejected() {
        let mut p = model(4);
        let (backbone, head) = small();
        let deeper = BackboneConfig { depth: 2, ..backbone };
        let grads = ModelParams::<f64>::zeros(&deeper, &head);
        let mut opt = AdamW::new(&p, 0.9, 0.999, 1e-8);
        assert!(opt.step(&mut p, &grads, 0.1, 0.0).is_err());
    }
}
