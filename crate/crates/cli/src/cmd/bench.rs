//! `bench`: closed-form compute accounting for the sparse two-network
//! layout against the dense two-view baseline, plus optional wall-clock
//! timing of real encoder passes.

use tripatch_core::evalkit::{cost_account, measure_step_times};
use tripatch_core::{Error, Result};

use crate::cmd::Common;
use crate::outdir::{run_dir, snapshot_config};
use crate::table;

pub fn run(common: &Common, empirical: bool, batch: usize, reps: usize) -> Result<()> {
    let cfg = common.load()?;
    if empirical && (batch == 0 || reps == 0) {
        return Err(Error::config("--batch and --reps must be at least 1"));
    }
    let report = cost_account(&cfg.backbone, &cfg.masks, Some(&cfg.head))?;

    let dir = run_dir(common.out.as_deref(), common.out_root.as_deref(), "bench")?;
    snapshot_config(&dir, &cfg)?;

    let headers = ["role", "tokens", "attn_flops", "linear_flops", "peak_activation_elements"];
    let rows: Vec<Vec<String>> = [&report.student, &report.teacher, &report.dense]
        .iter()
        .map(|r| {
            vec![
                r.role.clone(),
                r.tokens.to_string(),
                format!("{:.3e}", r.attn_flops),
                format!("{:.3e}", r.linear_flops),
                format!("{:.3e}", r.peak_activation_elements),
            ]
        })
        .collect();
    print!("{}", table::render(&headers, &rows));
    println!(
        "dense / sparse flop ratios: linear {:.4}, attention {:.4}",
        report.linear_ratio, report.attn_ratio
    );
    if let Some(h) = report.head_flops_per_view {
        println!("projection head: {h:.3e} flops per cls row");
    }

    let mut ratios = String::from("metric,value\n");
    ratios.push_str(&format!("linear_ratio,{}\n", report.linear_ratio));
    ratios.push_str(&format!("attn_ratio,{}\n", report.attn_ratio));
    if let Some(h) = report.head_flops_per_view {
        ratios.push_str(&format!("head_flops_per_view,{h}\n"));
    }

    if empirical {
        let (sparse_s, dense_s) =
            measure_step_times(&cfg.backbone, &cfg.masks, batch, reps, cfg.trainer.seed)?;
        println!(
            "measured encoder step: sparse {:.4}s, dense {:.4}s, dense/sparse {:.2}",
            sparse_s,
            dense_s,
            dense_s / sparse_s
        );
        ratios.push_str(&format!("step_time_sparse_s,{sparse_s}\n"));
        ratios.push_str(&format!("step_time_dense_s,{dense_s}\n"));
        ratios.push_str(&format!("step_time_ratio,{}\n", dense_s / sparse_s));
    }

    let cost_path = dir.join("cost.csv");
    std::fs::write(&cost_path, report.to_csv())
        .map_err(|e| Error::ingest(&cost_path, format!("cannot write cost table: {e}")))?;
    let ratio_path = dir.join("ratios.csv");
    std::fs::write(&ratio_path, ratios)
        .map_err(|e| Error::ingest(&ratio_path, format!("cannot write ratio table: {e}")))?;
    println!("tables: {} and {}", cost_path.display(), ratio_path.display());
    Ok(())
}
