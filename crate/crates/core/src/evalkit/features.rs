//! Frozen-feature extraction: dense, unmasked forward passes over a whole
//! dataset, returning one cls feature row per image.

use ndarray::{s, Array2, Array3};

use crate::config::BackboneConfig;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::backbone::{cls_attention, encode_tokens, embed_full};
use crate::model::params::ModelParams;
use crate::views::patches::patchify;

/// Per-image features from a frozen network, with the labels that came with
/// the dataset and a note of which parameters produced them.
#[derive(Clone, Debug)]
pub struct FeatureMatrix {
    /// One row per image, `embed_dim` columns.
    pub rows: Array2<f32>,
    pub labels: Option<Vec<usize>>,
    pub num_classes: usize,
    /// Identity of the producing parameters (checkpoint path, "random-init", ...).
    pub source: String,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }
}

fn check_compat(params: &ModelParams<f32>, bb: &BackboneConfig, dataset: &Dataset) -> Result<()> {
    if dataset.image_size != bb.image_size {
        return Err(Error::contract(format!(
            "dataset images are {}px but the backbone expects {}px",
            dataset.image_size, bb.image_size
        )));
    }
    if params.patch_embed.w.nrows() != bb.embed_dim
        || params.patch_embed.w.ncols() != bb.patch_dim()
        || params.pos_embed.nrows() != bb.num_patches() + 1
    {
        return Err(Error::contract(
            "parameter shapes do not match the backbone config",
        ));
    }
    Ok(())
}

/// Runs every image through the network with all patches visible and
/// returns the cls output rows. Used for probing, embedding, and feature
/// statistics; pass the teacher parameters to measure the slow network and
/// the student parameters to measure the fast one.
pub fn extract_features(
    params: &ModelParams<f32>,
    bb: &BackboneConfig,
    dataset: &Dataset,
    source: &str,
) -> Result<FeatureMatrix> {
    check_compat(params, bb, dataset)?;
    let n_tokens = bb.num_patches() + 1;
    let dim = bb.embed_dim;
    let mut rows = Array2::<f32>::zeros((dataset.len(), dim));

    const CHUNK: usize = 32;
    let mut start = 0;
    while start < dataset.len() {
        let count = CHUNK.min(dataset.len() - start);
        let mut tokens = Array2::<f32>::zeros((count * n_tokens, dim));
        for i in 0..count {
            let patches = patchify(&dataset.images[start + i].view(), bb.patch_size);
            let full = embed_full(params, &patches.view());
            tokens
                .slice_mut(s![i * n_tokens..(i + 1) * n_tokens, ..])
                .assign(&full);
        }
        let (out, _) = encode_tokens(params, &tokens.view(), count, bb.heads)?;
        for i in 0..count {
            rows.row_mut(start + i).assign(&out.row(i * n_tokens));
        }
        start += count;
    }

    Ok(FeatureMatrix {
        rows,
        labels: Some(dataset.labels.clone()),
        num_classes: dataset.num_classes,
        source: source.to_string(),
    })
}

/// Attention paid by the cls token to every patch in the final block, as one
/// `grid x grid` heat map per head.
pub fn attention_maps(
    params: &ModelParams<f32>,
    bb: &BackboneConfig,
    image: &ndarray::ArrayView3<f32>,
) -> Result<Array3<f32>> {
    if image.shape() != [bb.image_size, bb.image_size, 3] {
        return Err(Error::contract(format!(
            "attention map input must be [{0}, {0}, 3], got {1:?}",
            bb.image_size,
            image.shape()
        )));
    }
    let patches = patchify(image, bb.patch_size);
    let full = embed_full(params, &patches.view());
    let (_, caches) = encode_tokens(params, &full.view(), 1, bb.heads)?;
    let last = caches.last().expect("depth is at least 1");
    let att = cls_attention(last, 1, bb.heads);
    let grid = bb.grid();
    let mut maps = Array3::<f32>::zeros((bb.heads, grid, grid));
    for h in 0..bb.heads {
        for j in 0..bb.num_patches() {
            maps[[h, j / grid, j % grid]] = att[[0, h, j]];
        }
    }
    Ok(maps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{HeadConfig, TrainConfig};
    use crate::data::generate_synthetic;
    use crate::objective::ema_update;
    use crate::rng::{purpose, stream};
    use crate::trainer::step::TrainState;

    fn tiny() -> (TrainConfig, Dataset) {
        let mut cfg = TrainConfig::default();
        cfg.backbone.image_size = 16;
        cfg.backbone.patch_size = 8;
        cfg.backbone.depth = 2;
        cfg.backbone.embed_dim = 8;
        cfg.backbone.heads = 2;
        cfg.head = HeadConfig { prototypes: 8, hidden: 8, bottleneck: 4 };
        cfg.data.num_images = 10;
        cfg.validate().unwrap();
        let data = generate_synthetic(10, 16, 2, 0);
        (cfg, data)
    }

    #[test]
    fn one_row_per_image() {
        let (cfg, data) = tiny();
        let params = ModelParams::<f32>::init(
            &cfg.backbone,
            &cfg.head,
            &mut stream(0, purpose::INIT_STUDENT, 0, 0),
        );
        let feats = extract_features(&params, &cfg.backbone, &data, "random-init").unwrap();
        assert_eq!(feats.rows.nrows(), 10);
        assert_eq!(feats.rows.ncols(), 8);
        assert!(feats.rows.iter().all(|v| v.is_finite()));
        assert_eq!(feats.labels.as_ref().unwrap().len(), 10);
    }

    #[test]
    fn teacher_and_student_agree_after_a_full_copy() {
        let (cfg, data) = tiny();
        let mut state = TrainState::<f32>::init(&cfg);
        // Momentum zero makes the slow network an exact copy of the fast one.
        ema_update(&mut state.teacher, &state.student, 0.0).unwrap();
        let s = extract_features(&state.student, &cfg.backbone, &data, "student").unwrap();
        let t = extract_features(&state.teacher, &cfg.backbone, &data, "teacher").unwrap();
        assert_eq!(s.rows, t.rows);
    }

    #[test]
    fn size_mismatch_is_a_contract_error() {
        let (cfg, _) = tiny();
        let params = ModelParams::<f32>::init(
            &cfg.backbone,
            &cfg.head,
            &mut stream(0, purpose::INIT_STUDENT, 0, 0),
        );
        let wrong = generate_synthetic(4, 32, 2, 0);
        let err = extract_features(&params, &cfg.backbone, &wrong, "x").unwrap_err();
        assert!(err.to_string().contains("16px"), "{err}");
    }

    #[test]
    fn attention_maps_are_distributions_over_patches() {
        let (cfg, data) = tiny();
        let params = ModelParams::<f32>::init(
            &cfg.backbone,
            &cfg.head,
            &mut stream(0, purpose::INIT_STUDENT, 0, 0),
        );
        let maps = attention_maps(&params, &cfg.backbone, &data.images[0].view()).unwrap();
        assert_eq!(maps.shape(), [2, 2, 2]);
        for h in 0..2 {
            let sum: f32 = maps.slice(s![h, .., ..]).iter().sum();
            // The cls self-weight is excluded, so patch weights sum to < 1.
            assert!(sum > 0.0 && sum < 1.0, "head {h} sums to {sum}");
        }
    }
}
