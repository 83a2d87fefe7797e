//! Token and FLOP accounting for the sparse-input claim: processing two
//! partial views costs roughly half the linear work and a quarter of the
//! attention work of processing two full views, plus an empirical timing
//! mode that measures real encoder passes.
//!
//! FLOP model: multiply-accumulates count as two floating-point operations.
//! The linear term covers QKV projections, the attention output projection,
//! and the MLP; the attention term covers score and attention-value
//! products. Projector-head costs are reported separately and excluded from
//! both terms.

use std::time::Instant;

use ndarray::Array2;

use crate::config::{BackboneConfig, HeadConfig};
use crate::error::Result;
use crate::model::backbone::{encode_student, encode_student_backward, encode_tokens, sample_drop_plan};
use crate::model::params::ModelParams;
use crate::rng::{purpose, stream};
use crate::views::trimask::MaskRatios;

#[derive(Clone, Debug)]
pub struct RoleCost {
    pub role: String,
    /// Total tokens processed per step (all views combined).
    pub tokens: usize,
    pub attn_flops: f64,
    pub linear_flops: f64,
    /// Transient activation elements alive at the widest point of one view.
    pub peak_activation_elements: f64,
}

#[derive(Clone, Debug)]
pub struct CostReport {
    pub student: RoleCost,
    pub teacher: RoleCost,
    pub dense: RoleCost,
    /// dense / (student + teacher), linear term.
    pub linear_ratio: f64,
    /// dense / (student + teacher), attention term.
    pub attn_ratio: f64,
    /// Projector cost for one cls row, when a head config was supplied.
    pub head_flops_per_view: Option<f64>,
    pub step_time_sparse_s: Option<f64>,
    pub step_time_dense_s: Option<f64>,
}

impl CostReport {
    /// Comma-separated table with a one-line header, one row per role.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("role,tokens,attn_flops,linear_flops,peak_activation_elements\n");
        for r in [&self.student, &self.teacher, &self.dense] {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.role, r.tokens, r.attn_flops, r.linear_flops, r.peak_activation_elements
            ));
        }
        out
    }
}

fn view_cost(role: &str, views: &[usize], bb: &BackboneConfig) -> RoleCost {
    let d = bb.embed_dim as f64;
    let h = bb.mlp_hidden() as f64;
    let depth = bb.depth as f64;
    let mut attn = 0.0;
    let mut linear = 0.0;
    let mut peak = 0.0f64;
    for &tokens in views {
        let t = tokens as f64;
        // Per layer MACs: scores T^2 D + attention-value T^2 D;
        // QKV 3 T D^2 + output projection T D^2 + MLP 2 T D H.
        attn += depth * 2.0 * t * t * d * 2.0;
        linear += depth * (4.0 * t * d * d + 2.0 * t * d * h) * 2.0;
        peak = peak.max(t * d + (bb.heads as f64 * t * t).max(t * h));
    }
    RoleCost {
        role: role.to_string(),
        tokens: views.iter().sum(),
        attn_flops: attn,
        linear_flops: linear,
        peak_activation_elements: peak,
    }
}

/// Closed-form accounting at one configuration. The sparse side is the real
/// training layout: the student sees its visible and hidden-slot tokens plus
/// cls, the teacher sees its own part plus cls. The dense baseline processes
/// two full views of all patches plus cls.
pub fn cost_account(
    bb: &BackboneConfig,
    ratios: &MaskRatios,
    head: Option<&HeadConfig>,
) -> Result<CostReport> {
    bb.validate()?;
    let n = bb.num_patches();
    let (s, l, t) = ratios.part_sizes(n)?;
    let student = view_cost("student", &[s + l + 1], bb);
    let teacher = view_cost("teacher", &[t + 1], bb);
    let dense = view_cost("dense-baseline", &[n + 1, n + 1], bb);

    let linear_ratio = dense.linear_flops / (student.linear_flops + teacher.linear_flops);
    let attn_ratio = dense.attn_flops / (student.attn_flops + teacher.attn_flops);
    let head_flops_per_view = head.map(|hc| {
        let d = bb.embed_dim as f64;
        let hh = hc.hidden as f64;
        let bk = hc.bottleneck as f64;
        let k = hc.prototypes as f64;
        2.0 * (d * hh + hh * hh + hh * bk + bk * k)
    });

    Ok(CostReport {
        student,
        teacher,
        dense,
        linear_ratio,
        attn_ratio,
        head_flops_per_view,
        step_time_sparse_s: None,
        step_time_dense_s: None,
    })
}

fn random_tokens(rows: usize, dim: usize, seed: u64) -> Array2<f32> {
    let mut rng = stream(seed, purpose::EVAL, 71, 0);
    Array2::from_shape_simple_fn((rows, dim), || {
        use rand::Rng;
        rng.random::<f32>() - 0.5
    })
}

/// Times the encoder work one training step performs — student forward and
/// backward plus teacher forward — under the sparse layout and under two
/// dense views. Returns mean seconds per step as (sparse, dense), after one
/// unmeasured warmup pass each.
pub fn measure_step_times(
    bb: &BackboneConfig,
    ratios: &MaskRatios,
    batch: usize,
    reps: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    bb.validate()?;
    let n = bb.num_patches();
    let (s, l, t) = ratios.part_sizes(n)?;
    let head = HeadConfig { prototypes: 8, hidden: 8, bottleneck: 8 };
    let params =
        ModelParams::<f32>::init(bb, &head, &mut stream(seed, purpose::INIT_STUDENT, 0, 0));

    let run = |student_tokens: usize, visible: usize, teacher_tokens: usize| -> Result<f64> {
        let x_s = random_tokens(batch * student_tokens, bb.embed_dim, seed);
        let x_t = random_tokens(batch * teacher_tokens, bb.embed_dim, seed + 1);
        let dy = random_tokens(batch * student_tokens, bb.embed_dim, seed + 2);
        let plan = sample_drop_plan::<f32>(0.0, bb.depth, batch, &mut stream(seed, purpose::EVAL, 72, 0));
        let mut elapsed = 0.0;
        for rep in 0..reps + 1 {
            let start = Instant::now();
            let (_, _) = encode_tokens(&params, &x_t.view(), batch, bb.heads)?;
            let (_, cache) = encode_student(
                &params,
                &x_s.view(),
                batch,
                visible,
                bb.heads,
                bb.inject(),
                &plan,
            )?;
            let mut grads = params.zeros_like();
            let _ = encode_student_backward(&params, &cache, &dy.view(), bb.heads, &mut grads);
            if rep > 0 {
                elapsed += start.elapsed().as_secs_f64();
            }
        }
        Ok(elapsed / reps as f64)
    };

    let sparse = run(s + l + 1, s + 1, t + 1)?;
    let dense = run(n + 1, n + 1, n + 1)?;
    Ok((sparse, dense))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(image: usize, patch: usize) -> BackboneConfig {
        BackboneConfig {
            image_size: image,
            patch_size: patch,
            ..BackboneConfig::default()
        }
    }

    #[test]
    fn token_counts_follow_the_size_law() {
        // Two partial views always sum to N + 2 tokens.
        for (image, patch) in [(32usize, 8usize), (64, 8), (112, 8), (256, 8)] {
            let bb = bb(image, patch);
            let n = bb.num_patches();
            for ratios in [
                MaskRatios::new(0.3, 0.2, 0.5).unwrap(),
                MaskRatios::new(0.2, 0.2, 0.6).unwrap(),
                MaskRatios::new(0.45, 0.1, 0.45).unwrap(),
            ] {
                let report = cost_account(&bb, &ratios, None).unwrap();
                assert_eq!(report.student.tokens + report.teacher.tokens, n + 2);
                assert_eq!(report.dense.tokens, 2 * (n + 1));
            }
        }
    }

    #[test]
    fn grid_of_196_patches_gives_two_99_token_views() {
        // 112px at patch 8 = 196 patches; the standard ratios split them
        // into two equal 99-token views against 197 + 197 dense.
        let bb = bb(112, 8);
        let ratios = MaskRatios::new(0.3, 0.2, 0.5).unwrap();
        let report = cost_account(&bb, &ratios, None).unwrap();
        assert_eq!(report.student.tokens, 99);
        assert_eq!(report.teacher.tokens, 99);
        let expected = 394.0 / 198.0;
        assert!(
            (report.linear_ratio - expected).abs() < 1e-9,
            "{} vs {expected}",
            report.linear_ratio
        );
    }

    #[test]
    fn large_grid_ratios_match_the_closed_forms() {
        // 256px at patch 8 = 1024 patches.
        let bb = bb(256, 8);
        let ratios = MaskRatios::new(0.3, 0.2, 0.5).unwrap();
        let report = cost_account(&bb, &ratios, None).unwrap();
        assert!((report.linear_ratio - 2050.0 / 1026.0).abs() < 1e-9);
        let expected_attn = 2.0 * 1025.0f64.powi(2) / (2.0 * 513.0f64.powi(2));
        assert!((report.attn_ratio - expected_attn).abs() < 1e-9);
        assert!((report.linear_ratio - 1.99).abs() < 0.01);
        assert!((report.attn_ratio - 3.99).abs() < 0.02);
    }

    #[test]
    fn head_cost_appears_only_when_asked() {
        let bb = bb(32, 8);
        let ratios = MaskRatios::new(0.3, 0.2, 0.5).unwrap();
        assert!(cost_account(&bb, &ratios, None).unwrap().head_flops_per_view.is_none());
        let head = HeadConfig { prototypes: 16, hidden: 8, bottleneck: 4 };
        let got = cost_account(&bb, &ratios, Some(&head)).unwrap().head_flops_per_view.unwrap();
        let expected = 2.0 * ((64 * 8) + (8 * 8) + (8 * 4) + (4 * 16)) as f64;
        assert_eq!(got, expected);
    }

    #[test]
    fn csv_lists_all_three_roles() {
        let bb = bb(32, 8);
        let ratios = MaskRatios::new(0.3, 0.2, 0.5).unwrap();
        let csv = cost_account(&bb, &ratios, None).unwrap().to_csv();
        let lines: Vec<&str> = csv.trim_end().lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("student,"));
        assert!(lines[3].starts_with("dense-baseline,"));
    }

    #[test]
    fn timing_smoke_runs_and_is_positive() {
        let mut small = bb(16, 8);
        small.depth = 2;
        small.embed_dim = 8;
        small.heads = 2;
        let ratios = MaskRatios::new(0.3, 0.2, 0.5).unwrap();
        let (sparse, dense) = measure_step_times(&small, &ratios, 2, 1, 0).unwrap();
        assert!(sparse > 0.0 && dense > 0.0);
    }
}
