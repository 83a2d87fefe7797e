//! `synth-data`: materialize the procedural dataset as files, so folder
//! loading, manifests, and resizing are exercisable end to end.

use tripatch_core::data::{generate_synthetic, write_image_folder};
use tripatch_core::Result;

use crate::cmd::Common;
use crate::outdir::{run_dir, snapshot_config};

pub fn run(common: &Common) -> Result<()> {
    let cfg = common.load()?;
    let dataset = generate_synthetic(
        cfg.data.num_images,
        cfg.backbone.image_size,
        cfg.data.num_classes,
        cfg.data.seed,
    );
    let dir = run_dir(common.out.as_deref(), common.out_root.as_deref(), "synth-data")?;
    snapshot_config(&dir, &cfg)?;
    let img_dir = dir.join("images");
    write_image_folder(&dataset, &img_dir)?;
    println!(
        "wrote {} images ({} classes, {}px) to {}",
        dataset.len(),
        dataset.num_classes,
        dataset.image_size,
        img_dir.display()
    );
    println!(
        "train on it with: --set data.source=folder --set data.root={}",
        img_dir.display()
    );
    Ok(())
}
