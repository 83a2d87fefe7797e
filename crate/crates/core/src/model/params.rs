//! Full parameter set for one network (student or teacher copy).
//!
//! Every tensor is reachable through [`ModelParams::views`] /
//! [`ModelParams::views_mut`], which list `(name, array)` pairs in a fixed
//! order. The optimizer, the momentum copy, checkpoints, and gradient checks
//! all walk that listing instead of knowing the struct layout, so the order
//! and the names are a compatibility contract: changing either invalidates
//! saved checkpoints.

use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD};
use rand::Rng;

use crate::config::{BackboneConfig, HeadConfig};
use crate::model::block::BlockParams;
use crate::model::nn::{trunc_normal1, trunc_normal2, LinearParams};
use crate::scalar::Scalar;

/// Standard deviation of the truncated normal used for all weight init.
pub const INIT_STD: f64 = 0.02;

/// Projection head: three-layer MLP into a normalized bottleneck, followed by
/// a prototype layer whose rows are direction vectors with per-row gains.
#[derive(Clone, Debug)]
pub struct ProjectorParams<F> {
    pub fc1: LinearParams<F>,
    pub fc2: LinearParams<F>,
    pub fc3: LinearParams<F>,
    /// One unnormalized direction vector per prototype, `[K, bottleneck]`.
    pub proto_dir: Array2<F>,
    /// Per-prototype gain applied after direction normalization, `[K]`.
    pub proto_scale: Array1<F>,
}

impl<F: Scalar> ProjectorParams<F> {
    pub fn zeros(dim: usize, hidden: usize, bottleneck: usize, prototypes: usize) -> Self {
        Self {
            fc1: LinearParams::zeros(hidden, dim),
            fc2: LinearParams::zeros(hidden, hidden),
            fc3: LinearParams::zeros(bottleneck, hidden),
            proto_dir: Array2::zeros((prototypes, bottleneck)),
            proto_scale: Array1::zeros(prototypes),
        }
    }

    pub fn init(
        dim: usize,
        hidden: usize,
        bottleneck: usize,
        prototypes: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            fc1: LinearParams::init(hidden, dim, INIT_STD, rng),
            fc2: LinearParams::init(hidden, hidden, INIT_STD, rng),
            fc3: LinearParams::init(bottleneck, hidden, INIT_STD, rng),
            proto_dir: trunc_normal2((prototypes, bottleneck), INIT_STD, rng),
            // Gains start small so the initial logits are weak: the first
            // sharpened teacher distributions then sit near uniform instead
            // of inheriting a large random per-prototype bias that the
            // center has not yet absorbed. The gains are learned and grow
            // as the prototypes become meaningful.
            proto_scale: Array1::from_elem(prototypes, F::from_f64(0.1)),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ModelParams<F> {
    /// Patch pixels to embeddings, `[D, 3 * patch * patch]`.
    pub patch_embed: LinearParams<F>,
    pub cls_token: Array1<F>,
    /// Shared embedding substituted for every masked patch.
    pub mask_token: Array1<F>,
    /// Learned positions for cls + every grid slot, `[N + 1, D]`.
    pub pos_embed: Array2<F>,
    pub blocks: Vec<BlockParams<F>>,
    pub projector: ProjectorParams<F>,
    /// Masked-patch embeddings back to pixels, `[3 * patch * patch, D]`.
    pub predictor: LinearParams<F>,
}

impl<F: Scalar> ModelParams<F> {
    /// Fresh random parameters. Draws happen in listing order, so one seed
    /// pins every tensor.
    pub fn init(backbone: &BackboneConfig, head: &HeadConfig, rng: &mut impl Rng) -> Self {
        let dim = backbone.embed_dim;
        let patch_dim = backbone.patch_dim();
        let tokens = backbone.num_patches() + 1;
        Self {
            patch_embed: LinearParams::init(dim, patch_dim, INIT_STD, rng),
            cls_token: trunc_normal1(dim, INIT_STD, rng),
            mask_token: trunc_normal1(dim, INIT_STD, rng),
            pos_embed: trunc_normal2((tokens, dim), INIT_STD, rng),
            blocks: (0..backbone.depth)
                .map(|_| BlockParams::init(dim, backbone.mlp_hidden(), INIT_STD, rng))
                .collect(),
            projector: ProjectorParams::init(
                dim,
                head.hidden,
                head.bottleneck,
                head.prototypes,
                rng,
            ),
            predictor: LinearParams::init(patch_dim, dim, INIT_STD, rng),
        }
    }

    /// All-zero parameters with the same shapes; the gradient container.
    pub fn zeros(backbone: &BackboneConfig, head: &HeadConfig) -> Self {
        let dim = backbone.embed_dim;
        let patch_dim = backbone.patch_dim();
        let tokens = backbone.num_patches() + 1;
        Self {
            patch_embed: LinearParams::zeros(dim, patch_dim),
            cls_token: Array1::zeros(dim),
            mask_token: Array1::zeros(dim),
            pos_embed: Array2::zeros((tokens, dim)),
            blocks: (0..backbone.depth)
                .map(|_| BlockParams::zeros(dim, backbone.mlp_hidden()))
                .collect(),
            projector: ProjectorParams::zeros(dim, head.hidden, head.bottleneck, head.prototypes),
            predictor: LinearParams::zeros(patch_dim, dim),
        }
    }

    /// Zero tensors with this model's exact shapes.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for (_, mut v) in out.views_mut() {
            v.fill(F::zero());
        }
        out
    }

    pub fn set_zero(&mut self) {
        for (_, mut v) in self.views_mut() {
            v.fill(F::zero());
        }
    }

    /// Named read views over every tensor, in the fixed listing order.
    pub fn views(&self) -> Vec<(String, ArrayViewD<'_, F>)> {
        let mut out = Vec::new();
        push(&mut out, "patch_embed", &self.patch_embed);
        out.push(("cls_token".into(), self.cls_token.view().into_dyn()));
        out.push(("mask_token".into(), self.mask_token.view().into_dyn()));
        out.push(("pos_embed".into(), self.pos_embed.view().into_dyn()));
        for (i, b) in self.blocks.iter().enumerate() {
            let p = format!("blocks.{i}");
            out.push((format!("{p}.norm1.gamma"), b.norm1.gamma.view().into_dyn()));
            out.push((format!("{p}.norm1.beta"), b.norm1.beta.view().into_dyn()));
            push(&mut out, &format!("{p}.attn.qkv"), &b.attn.qkv);
            push(&mut out, &format!("{p}.attn.proj"), &b.attn.proj);
            out.push((format!("{p}.norm2.gamma"), b.norm2.gamma.view().into_dyn()));
            out.push((format!("{p}.norm2.beta"), b.norm2.beta.view().into_dyn()));
            push(&mut out, &format!("{p}.fc1"), &b.fc1);
            push(&mut out, &format!("{p}.fc2"), &b.fc2);
        }
        push(&mut out, "projector.fc1", &self.projector.fc1);
        push(&mut out, "projector.fc2", &self.projector.fc2);
        push(&mut out, "projector.fc3", &self.projector.fc3);
        out.push(("projector.proto_dir".into(), self.projector.proto_dir.view().into_dyn()));
        out.push(("projector.proto_scale".into(), self.projector.proto_scale.view().into_dyn()));
        push(&mut out, "predictor", &self.predictor);
        out
    }

    /// Named write views, in the same order as [`Self::views`].
    pub fn views_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, F>)> {
        let mut out = Vec::new();
        push_mut(&mut out, "patch_embed", &mut self.patch_embed);
        out.push(("cls_token".into(), self.cls_token.view_mut().into_dyn()));
        out.push(("mask_token".into(), self.mask_token.view_mut().into_dyn()));
        out.push(("pos_embed".into(), self.pos_embed.view_mut().into_dyn()));
        for (i, b) in self.blocks.iter_mut().enumerate() {
            let p = format!("blocks.{i}");
            out.push((format!("{p}.norm1.gamma"), b.norm1.gamma.view_mut().into_dyn()));
            out.push((format!("{p}.norm1.beta"), b.norm1.beta.view_mut().into_dyn()));
            push_mut(&mut out, &format!("{p}.attn.qkv"), &mut b.attn.qkv);
            push_mut(&mut out, &format!("{p}.attn.proj"), &mut b.attn.proj);
            out.push((format!("{p}.norm2.gamma"), b.norm2.gamma.view_mut().into_dyn()));
            out.push((format!("{p}.norm2.beta"), b.norm2.beta.view_mut().into_dyn()));
            push_mut(&mut out, &format!("{p}.fc1"), &mut b.fc1);
            push_mut(&mut out, &format!("{p}.fc2"), &mut b.fc2);
        }
        push_mut(&mut out, "projector.fc1", &mut self.projector.fc1);
        push_mut(&mut out, "projector.fc2", &mut self.projector.fc2);
        push_mut(&mut out, "projector.fc3", &mut self.projector.fc3);
        out.push((
            "projector.proto_dir".into(),
            self.projector.proto_dir.view_mut().into_dyn(),
        ));
        out.push((
            "projector.proto_scale".into(),
            self.projector.proto_scale.view_mut().into_dyn(),
        ));
        push_mut(&mut out, "predictor", &mut self.predictor);
        out
    }

    /// `(name, shape)` for every tensor; checkpoints compare this before
    /// loading raw bytes.
    pub fn signature(&self) -> Vec<(String, Vec<usize>)> {
        self.views()
            .into_iter()
            .map(|(name, v)| (name, v.shape().to_vec()))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.views().iter().map(|(_, v)| v.len()).sum()
    }
}

fn push<'a, F: Scalar>(
    out: &mut Vec<(String, ArrayViewD<'a, F>)>,
    name: &str,
    p: &'a LinearParams<F>,
) {
    out.push((format!("{name}.w"), p.w.view().into_dyn()));
    out.push((format!("{name}.b"), p.b.view().into_dyn()));
}

fn push_mut<'a, F: Scalar>(
    out: &mut Vec<(String, ArrayViewMutD<'a, F>)>,
    name: &str,
    p: &'a mut LinearParams<F>,
) {
    out.push((format!("{name}.w"), p.w.view_mut().into_dyn()));
    out.push((format!("{name}.b"), p.b.view_mut().into_dyn()));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{purpose, stream};

    fn small() -> (BackboneConfig, HeadConfig) {
        let backbone = BackboneConfig {
            image_size: 32,
            patch_size: 8,
            depth: 2,
            embed_dim: 8,
            heads: 2,
            ..BackboneConfig::default()
        };
        let head = HeadConfig { prototypes: 8, hidden: 12, bottleneck: 6 };
        (backbone, head)
    }

    #[test]
    fn views_and_views_mut_list_the_same_tensors() {
        let (backbone, head) = small();
        let mut rng = stream(7, purpose::INIT_STUDENT, 0, 0);
        let mut p = ModelParams::<f32>::init(&backbone, &head, &mut rng);
        let ro: Vec<(String, Vec<usize>)> = p.signature();
        let rw: Vec<(String, Vec<usize>)> = p
            .views_mut()
            .into_iter()
            .map(|(name, v)| (name, v.shape().to_vec()))
            .collect();
        assert_eq!(ro, rw);
        // 5 top-level + 12 per block + 8 projector + 2 predictor.
        assert_eq!(ro.len(), 5 + 12 * backbone.depth + 8 + 2);
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let (backbone, head) = small();
        let a = ModelParams::<f32>::init(&backbone, &head, &mut stream(7, purpose::INIT_STUDENT, 0, 0));
        let b = ModelParams::<f32>::init(&backbone, &head, &mut stream(7, purpose::INIT_STUDENT, 0, 0));
        let c = ModelParams::<f32>::init(&backbone, &head, &mut stream(8, purpose::INIT_STUDENT, 0, 0));
        for ((_, va), (_, vb)) in a.views().into_iter().zip(b.views()) {
            assert_eq!(va, vb);
        }
        let differs = a
            .views()
            .into_iter()
            .zip(c.views())
            .any(|((_, va), (_, vc))| va != vc);
        assert!(differs, "different seeds must give different weights");
    }

    #[test]
    fn zeros_like_matches_shapes_and_is_zero() {
        let (backbone, head) = small();
        let mut rng = stream(9, purpose::INIT_STUDENT, 0, 0);
        let p = ModelParams::<f64>::init(&backbone, &head, &mut rng);
        let g = p.zeros_like();
        assert_eq!(p.signature(), g.signature());
        assert!(g.views().iter().all(|(_, v)| v.iter().all(|&x| x == 0.0)));
        let z = ModelParams::<f64>::zeros(&backbone, &head);
        assert_eq!(p.signature(), z.signature());
    }

    #[test]
    fn prototype_gains_start_small_and_uniform() {
        let (backbone, head) = small();
        let mut rng = stream(7, purpose::INIT_STUDENT, 0, 0);
        let p = ModelParams::<f32>::init(&backbone, &head, &mut rng);
        assert!(p.projector.proto_scale.iter().all(|&g| g == 0.1));
        assert_eq!(p.num_params(), p.views().iter().map(|(_, v)| v.len()).sum::<usize>());
    }
}
