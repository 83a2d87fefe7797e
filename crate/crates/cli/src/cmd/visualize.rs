//! `visualize`: qualitative views of a checkpoint — cls attention heat maps,
//! masked-reconstruction triptychs, the fast/slow feature comparison
//! histograms, and a labelled 2-D embedding of the features.

use std::path::Path;

use ndarray::Axis;
use tripatch_core::data::load_dataset;
use tripatch_core::evalkit::{
    attention_maps, attention_to_image, embed_2d, extract_features, feature_stats, hstack,
    reconstruct, save_png, silhouette,
};
use tripatch_core::trainer::load_checkpoint;
use tripatch_core::{Error, Result};

use crate::cmd::{config_with_sets, reject_config_flag, Common};
use crate::outdir::{run_dir, snapshot_config};

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)
        .map_err(|e| Error::ingest(path, format!("cannot write: {e}")))
}

pub fn run(
    common: &Common,
    checkpoint: &Path,
    images: usize,
    mask_fraction: f64,
) -> Result<()> {
    reject_config_flag(common, "visualize")?;
    if images == 0 {
        return Err(Error::config("--images must be at least 1"));
    }
    let (state, ckpt_cfg) = load_checkpoint(checkpoint)?;
    let cfg = config_with_sets(&ckpt_cfg, &common.set)?;
    let dataset = load_dataset(&cfg.data, cfg.backbone.image_size)?;
    if dataset.is_empty() {
        return Err(Error::contract("the dataset holds no images to render"));
    }

    let dir = run_dir(common.out.as_deref(), common.out_root.as_deref(), "visualize")?;
    snapshot_config(&dir, &cfg)?;

    // Upscaling each grid cell by the patch size makes the heat maps the
    // same height as the input, so one page holds the image and every head.
    let count = images.min(dataset.len());
    let upscale = cfg.backbone.patch_size;
    for i in 0..count {
        let idx = i * dataset.len() / count;
        let image = &dataset.images[idx];

        let maps = attention_maps(&state.teacher, &cfg.backbone, &image.view())?;
        let head_panels: Vec<_> = (0..cfg.backbone.heads)
            .map(|h| attention_to_image(&maps.index_axis(Axis(0), h), upscale))
            .collect();
        let mut panels = vec![image.view()];
        panels.extend(head_panels.iter().map(|p| p.view()));
        let page = hstack(&panels)?;
        let path = dir.join(format!("attention-{idx:03}.png"));
        save_png(&page.view(), &path)?;
        println!("attention page (input + {} heads): {}", cfg.backbone.heads, path.display());

        if cfg.trainer.pixel_prediction {
            let rec = reconstruct(
                &state.student,
                &cfg,
                &image.view(),
                mask_fraction,
                cfg.trainer.seed,
                idx as u64,
            )?;
            let path = dir.join(format!("reconstruction-{idx:03}.png"));
            save_png(&rec.triptych().view(), &path)?;
            println!(
                "reconstruction (masked | predicted | target), hidden-region mse {:.5}: {}",
                rec.masked_mse,
                path.display()
            );
        }
    }
    if !cfg.trainer.pixel_prediction {
        println!(
            "skipping reconstructions: this checkpoint was trained without pixel prediction"
        );
    }

    // Fast/slow feature comparison and value histograms.
    let fast = extract_features(&state.student, &cfg.backbone, &dataset, "student")?;
    let slow = extract_features(&state.teacher, &cfg.backbone, &dataset, "teacher")?;
    let stats = feature_stats(&fast, &slow)?;
    write_text(&dir.join("feature-diff-hist.csv"), &stats.diff_hist.to_csv())?;
    write_text(&dir.join("feature-value-hist.csv"), &stats.value_hist.to_csv())?;
    println!(
        "features: mean |student - teacher| {:.4}, teacher value std {:.4}, peak bin fraction {:.3}",
        stats.mean_abs_diff, stats.value_std, stats.value_max_bin_fraction
    );

    // 2-D embedding of the teacher features, one labelled point per image.
    let emb = embed_2d(&slow)?;
    let mut csv = String::from("x,y,label\n");
    for (row, &label) in emb.coords.rows().into_iter().zip(&dataset.labels) {
        csv.push_str(&format!("{},{},{label}\n", row[0], row[1]));
    }
    write_text(&dir.join("embedding.csv"), &csv)?;
    print!(
        "embedding: explained variance {:.3} + {:.3}",
        emb.explained[0], emb.explained[1]
    );
    if emb.degenerate {
        print!(" (degenerate: features carry no variance)");
    }
    // A silhouette needs two classes present; single-class datasets still
    // get everything else.
    match silhouette(&emb.coords, &dataset.labels) {
        Ok(s) => println!(", silhouette {s:.3}"),
        Err(e) => println!(" (no silhouette: {e})"),
    }
    println!("artifacts: {}", dir.display());
    Ok(())
}
