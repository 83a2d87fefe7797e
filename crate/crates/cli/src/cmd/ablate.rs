//! `ablate`: run one configuration grid end to end — every row is a full
//! pre-training run followed by a frozen-feature probe — and emit a
//! comparison table with the grid's config columns plus the accuracy.

use std::path::Path;
use std::time::Instant;

use tripatch_core::config::load_config;
use tripatch_core::data::load_dataset;
use tripatch_core::evalkit::{extract_features, median_probe_accuracy};
use tripatch_core::trainer::pretrain;
use tripatch_core::{Error, Result, TrainConfig};

use crate::cmd::{Common, Grid};
use crate::outdir::{run_dir, snapshot_config};
use crate::table;

struct RowSpec {
    /// Directory-safe row name.
    label: String,
    /// Overrides this row appends after the user's own `--set` flags.
    sets: Vec<String>,
}

fn grid_name(grid: Grid) -> &'static str {
    match grid {
        Grid::Toggles => "toggles",
        Grid::Patch => "patch",
        Grid::Ratios => "ratios",
    }
}

fn grid_note(grid: Grid) -> &'static str {
    match grid {
        Grid::Toggles => {
            "sa = aligned spatial views, dm = disjoint masks, pp = pixel prediction"
        }
        Grid::Patch => "input side pinned to 112px, the size every tested patch size divides",
        Grid::Ratios => "s/l/t percents of the patch grid",
    }
}

fn grid_headers(grid: Grid) -> Vec<&'static str> {
    match grid {
        Grid::Toggles => vec!["method", "ibot", "sa", "dm", "pp", "oa"],
        Grid::Patch => vec!["method", "arch", "patch_size", "oa"],
        Grid::Ratios => vec!["method", "s_ratio", "l_ratio", "t_ratio", "oa"],
    }
}

fn grid_rows(grid: Grid) -> Vec<RowSpec> {
    let toggle_row = |label: &str, sa: bool, dm: bool, pp: bool| RowSpec {
        label: label.to_string(),
        sets: vec![
            format!("trainer.spatial_alignment={sa}"),
            format!("trainer.disjoint_masks={dm}"),
            format!("trainer.pixel_prediction={pp}"),
        ],
    };
    match grid {
        Grid::Toggles => vec![
            toggle_row("sa", true, false, false),
            toggle_row("sa-dm", true, true, false),
            toggle_row("dm-pp", false, true, true),
            toggle_row("sa-dm-pp", true, true, true),
        ],
        Grid::Patch => [16usize, 14, 8]
            .iter()
            .map(|&p| RowSpec {
                label: format!("patch{p}"),
                sets: vec![
                    "backbone.image_size=112".to_string(),
                    format!("backbone.patch_size={p}"),
                ],
            })
            .collect(),
        Grid::Ratios => [(30u32, 20u32, 50u32), (20, 30, 50), (20, 20, 60), (30, 10, 60)]
            .iter()
            .map(|&(s, l, t)| RowSpec {
                label: format!("s{s}-l{l}-t{t}"),
                sets: vec![
                    format!("masks.s_ratio={}", s as f64 / 100.0),
                    format!("masks.l_ratio={}", l as f64 / 100.0),
                    format!("masks.t_ratio={}", t as f64 / 100.0),
                ],
            })
            .collect(),
    }
}

/// The config-column cells for one resolved row, read back from the config
/// itself so the table always reflects what actually ran.
fn row_cells(grid: Grid, cfg: &TrainConfig) -> Vec<String> {
    let yn = |b: bool| if b { "yes".to_string() } else { "no".to_string() };
    match grid {
        Grid::Toggles => vec![
            "tripatch".to_string(),
            // Patch-level alignment between views is impossible here: the
            // two networks never see the same patch, so there is no such
            // component to switch on.
            "no".to_string(),
            yn(cfg.trainer.spatial_alignment),
            yn(cfg.trainer.disjoint_masks),
            yn(cfg.trainer.pixel_prediction),
        ],
        Grid::Patch => vec![
            "tripatch".to_string(),
            format!("vit-d{}-w{}", cfg.backbone.depth, cfg.backbone.embed_dim),
            cfg.backbone.patch_size.to_string(),
        ],
        Grid::Ratios => vec![
            "tripatch".to_string(),
            format!("{}", (cfg.masks.s_ratio * 100.0).round() as i64),
            format!("{}", (cfg.masks.l_ratio * 100.0).round() as i64),
            format!("{}", (cfg.masks.t_ratio * 100.0).round() as i64),
        ],
    }
}

/// One grid row end to end: pre-train into `row_dir`, then probe the
/// teacher's frozen features. Returns the median probe accuracy.
fn run_row(
    cfg: &TrainConfig,
    row_dir: &Path,
    train_ratio: f64,
    probe_seeds: u64,
    label: &str,
) -> Result<f64> {
    std::fs::create_dir_all(row_dir)
        .map_err(|e| Error::ingest(row_dir, format!("cannot create row dir: {e}")))?;
    snapshot_config(row_dir, cfg)?;
    let start = Instant::now();
    let outcome = pretrain(cfg, row_dir, None, |_, _| {})?;
    let dataset = load_dataset(&cfg.data, cfg.backbone.image_size)?;
    let features = extract_features(&outcome.state.teacher, &cfg.backbone, &dataset, label)?;
    let seeds: Vec<u64> = (0..probe_seeds).collect();
    let oa = median_probe_accuracy(&features, train_ratio, &seeds)?;
    println!(
        "row {label}: {} steps, oa {:.1}%, {:.1}s",
        outcome.state.step,
        oa * 100.0,
        start.elapsed().as_secs_f64()
    );
    Ok(oa)
}

pub fn run(
    common: &Common,
    grid: Grid,
    parallel: bool,
    probe_seeds: u64,
    train_ratio: f64,
) -> Result<()> {
    if probe_seeds == 0 {
        return Err(Error::config("--probe-seeds must be at least 1"));
    }
    if !(0.0..1.0).contains(&train_ratio) || train_ratio == 0.0 {
        return Err(Error::config(format!("--train-ratio {train_ratio} must lie in (0, 1)")));
    }
    let specs = grid_rows(grid);

    // Resolve every row's config first, so a bad key fails before any
    // multi-minute training begins.
    let mut cfgs: Vec<TrainConfig> = Vec::with_capacity(specs.len());
    for row in &specs {
        let mut sets = common.set.clone();
        sets.extend(row.sets.iter().cloned());
        cfgs.push(load_config(common.config.as_deref(), &sets)?);
    }

    let dir = run_dir(
        common.out.as_deref(),
        common.out_root.as_deref(),
        &format!("ablate-{}", grid_name(grid)),
    )?;
    println!(
        "{} grid: {} runs ({}) into {}",
        grid_name(grid),
        specs.len(),
        if parallel { "parallel" } else { "sequential" },
        dir.display()
    );
    println!("{}", grid_note(grid));

    let results: Vec<Result<f64>> = if parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = specs
                .iter()
                .zip(&cfgs)
                .map(|(row, cfg)| {
                    let row_dir = dir.join("rows").join(&row.label);
                    let label = row.label.as_str();
                    scope.spawn(move || run_row(cfg, &row_dir, train_ratio, probe_seeds, label))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("row thread panicked")).collect()
        })
    } else {
        specs
            .iter()
            .zip(&cfgs)
            .map(|(row, cfg)| {
                let row_dir = dir.join("rows").join(&row.label);
                run_row(cfg, &row_dir, train_ratio, probe_seeds, &row.label)
            })
            .collect()
    };

    let headers = grid_headers(grid);
    let mut rows = Vec::with_capacity(specs.len());
    for ((row, cfg), result) in specs.iter().zip(&cfgs).zip(results) {
        let oa = match result {
            Ok(oa) => oa,
            Err(e) => {
                eprintln!("row {} failed", row.label);
                return Err(e);
            }
        };
        let mut cells = row_cells(grid, cfg);
        cells.push(format!("{:.1}", oa * 100.0));
        rows.push(cells);
    }

    println!(
        "oa = median overall accuracy (%) of a linear probe on frozen teacher features, \
         train fraction {train_ratio}, {probe_seeds} split seeds"
    );
    print!("{}", table::render(&headers, &rows));
    let csv_path = dir.join("table.csv");
    std::fs::write(&csv_path, table::to_csv(&headers, &rows))
        .map_err(|e| Error::ingest(&csv_path, format!("cannot write table: {e}")))?;
    println!("table: {}", csv_path.display());
    Ok(())
}
