//! `probe`: frozen-feature linear evaluation of a checkpoint, optionally
//! against a freshly initialized network of the same shape.

use std::path::Path;

use tripatch_core::data::load_dataset;
use tripatch_core::evalkit::{extract_features, linear_probe, FeatureMatrix};
use tripatch_core::trainer::{load_checkpoint, TrainState};
use tripatch_core::{Error, Result, TrainConfig};

use crate::cmd::{config_with_sets, reject_config_flag, Arm, Common};
use crate::outdir::{run_dir, snapshot_config};
use crate::table;

fn probe_rows(
    features: &FeatureMatrix,
    train_ratio: f64,
    seeds: u64,
    rows: &mut Vec<Vec<String>>,
) -> Result<f64> {
    let mut accs = Vec::new();
    for seed in 0..seeds {
        let outcome = linear_probe(features, train_ratio, seed)?;
        rows.push(vec![
            features.source.clone(),
            seed.to_string(),
            format!("{}", outcome.train_size),
            format!("{}", outcome.test_size),
            format!("{:.4}", outcome.accuracy),
        ]);
        accs.push(outcome.accuracy);
    }
    accs.sort_by(|a, b| a.partial_cmp(b).expect("accuracies are finite"));
    Ok(accs[accs.len() / 2])
}

pub fn run(
    common: &Common,
    checkpoint: &Path,
    train_ratio: f64,
    seeds: u64,
    arm: Arm,
    baseline: bool,
) -> Result<()> {
    reject_config_flag(common, "probe")?;
    if seeds == 0 {
        return Err(Error::config("--seeds must be at least 1"));
    }
    let (state, ckpt_cfg) = load_checkpoint(checkpoint)?;
    let cfg: TrainConfig = config_with_sets(&ckpt_cfg, &common.set)?;
    let dataset = load_dataset(&cfg.data, cfg.backbone.image_size)?;

    let dir = run_dir(common.out.as_deref(), common.out_root.as_deref(), "probe")?;
    snapshot_config(&dir, &cfg)?;

    let params = match arm {
        Arm::Teacher => &state.teacher,
        Arm::Student => &state.student,
    };
    let source = format!("checkpoint:{}", arm.name());
    let features = extract_features(params, &cfg.backbone, &dataset, &source)?;

    let headers = ["source", "seed", "train_size", "test_size", "accuracy"];
    let mut rows = Vec::new();
    let median = probe_rows(&features, train_ratio, seeds, &mut rows)?;
    println!(
        "{} features, train fraction {train_ratio}: median accuracy {:.4} over {seeds} split seeds",
        source, median
    );

    if baseline {
        let init = TrainState::<f32>::init(&cfg);
        let init_params = match arm {
            Arm::Teacher => &init.teacher,
            Arm::Student => &init.student,
        };
        let init_source = format!("random-init:{}", arm.name());
        let init_features =
            extract_features(init_params, &cfg.backbone, &dataset, &init_source)?;
        let init_median = probe_rows(&init_features, train_ratio, seeds, &mut rows)?;
        println!(
            "{} features: median accuracy {:.4}; gap {:+.1} points",
            init_source,
            init_median,
            (median - init_median) * 100.0
        );
    }

    print!("{}", table::render(&headers, &rows));
    let csv_path = dir.join("probe.csv");
    std::fs::write(&csv_path, table::to_csv(&headers, &rows))
        .map_err(|e| Error::ingest(&csv_path, format!("cannot write probe table: {e}")))?;
    println!("table: {}", csv_path.display());
    Ok(())
}
