//! Checkpoint directory format, version 1.
//!
//! A checkpoint is a directory of four files:
//!   - `meta.json`    — format version, completed steps, seed, optimizer
//!                      step count, and the hash of the config snapshot;
//!   - `config.toml`  — the full resolved configuration;
//!   - `index.json`   — one entry per stored array: name, shape, element
//!                      offset, and element count, in storage order;
//!   - `params.bin`   — every array back to back as little-endian f32.
//!
//! Stored arrays are the student and teacher parameter listings (prefixed
//! `student.` / `teacher.`), the logit center (`center`), and both AdamW
//! moment listings (`adam_m.` / `adam_v.`). Loading rebuilds arrays by
//! name, so a checkpoint is valid only for a config with the exact same
//! parameter listing.

use std::fs;
use std::path::Path;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::model::params::ModelParams;
use crate::trainer::optimizer::AdamW;
use crate::trainer::step::TrainState;

const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Meta {
    format_version: u32,
    step: u64,
    seed: u64,
    adam_t: u64,
    config_hash: String,
}

#[derive(Serialize, Deserialize)]
struct IndexEntry {
    name: String,
    shape: Vec<usize>,
    /// Offset into `params.bin`, counted in f32 elements.
    offset: usize,
    /// Element count; always the product of `shape`.
    len: usize,
}

/// Flattens every stored array of `state` into (name, shape, values) rows
/// in the fixed storage order.
fn collect(state: &TrainState<f32>) -> Vec<(String, Vec<usize>, Vec<f32>)> {
    fn push_params(rows: &mut Vec<(String, Vec<usize>, Vec<f32>)>, prefix: &str, p: &ModelParams<f32>) {
        for (name, view) in p.views() {
            rows.push((
                format!("{prefix}.{name}"),
                view.shape().to_vec(),
                view.iter().copied().collect(),
            ));
        }
    }
    let mut rows = Vec::new();
    push_params(&mut rows, "student", &state.student);
    push_params(&mut rows, "teacher", &state.teacher);
    rows.push((
        "center".to_string(),
        vec![state.center.len()],
        state.center.to_vec(),
    ));
    let (m, v) = state.opt.moments();
    push_params(&mut rows, "adam_m", m);
    push_params(&mut rows, "adam_v", v);
    rows
}

pub fn save_checkpoint(dir: &Path, state: &TrainState<f32>, cfg: &TrainConfig) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::checkpoint(format!("cannot create {}: {e}", dir.display())))?;
    let write = |name: &str, bytes: &[u8]| -> Result<()> {
        fs::write(dir.join(name), bytes)
            .map_err(|e| Error::checkpoint(format!("cannot write {name}: {e}")))
    };

    let rows = collect(state);
    let mut index = Vec::with_capacity(rows.len());
    let mut blob: Vec<u8> = Vec::new();
    let mut offset = 0usize;
    for (name, shape, values) in &rows {
        index.push(IndexEntry {
            name: name.clone(),
            shape: shape.clone(),
            offset,
            len: values.len(),
        });
        offset += values.len();
        for v in values {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }

    let meta = Meta {
        format_version: FORMAT_VERSION,
        step: state.step,
        seed: cfg.trainer.seed,
        adam_t: state.opt.t,
        config_hash: cfg.hash(),
    };
    write("meta.json", serde_json::to_vec_pretty(&meta).expect("meta serializes").as_slice())?;
    write("config.toml", cfg.to_toml().as_bytes())?;
    write(
        "index.json",
        serde_json::to_vec_pretty(&index).expect("index serializes").as_slice(),
    )?;
    write("params.bin", &blob)?;
    Ok(())
}

/// Restores a training state bit for bit. The config snapshot travels with
/// the checkpoint and is returned alongside the state.
pub fn load_checkpoint(dir: &Path) -> Result<(TrainState<f32>, TrainConfig)> {
    let read = |name: &str| -> Result<Vec<u8>> {
        fs::read(dir.join(name))
            .map_err(|e| Error::checkpoint(format!("cannot read {}/{name}: {e}", dir.display())))
    };

    let meta: Meta = serde_json::from_slice(&read("meta.json")?)
        .map_err(|e| Error::checkpoint(format!("meta.json: {e}")))?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::checkpoint(format!(
            "format version {} is not supported (expected {FORMAT_VERSION})",
            meta.format_version
        )));
    }

    let config_text = String::from_utf8(read("config.toml")?)
        .map_err(|e| Error::checkpoint(format!("config.toml is not UTF-8: {e}")))?;
    let cfg: TrainConfig = toml::from_str(&config_text)
        .map_err(|e| Error::checkpoint(format!("config.toml: {e}")))?;
    cfg.validate()?;
    if cfg.hash() != meta.config_hash {
        return Err(Error::checkpoint(
            "config.toml does not match the hash recorded in meta.json",
        ));
    }

    let index: Vec<IndexEntry> = serde_json::from_slice(&read("index.json")?)
        .map_err(|e| Error::checkpoint(format!("index.json: {e}")))?;
    let blob = read("params.bin")?;
    if blob.len() % 4 != 0 {
        return Err(Error::checkpoint("params.bin length is not a multiple of 4"));
    }
    let values: Vec<f32> = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();

    let mut running = 0usize;
    for entry in &index {
        let expected: usize = entry.shape.iter().product();
        if entry.len != expected {
            return Err(Error::checkpoint(format!(
                "{}: length {} does not match shape {:?}",
                entry.name, entry.len, entry.shape
            )));
        }
        if entry.offset != running {
            return Err(Error::checkpoint(format!(
                "{}: offset {} is not contiguous (expected {running})",
                entry.name, entry.offset
            )));
        }
        running += entry.len;
    }
    if running != values.len() {
        return Err(Error::checkpoint(format!(
            "params.bin holds {} elements but the index describes {running}",
            values.len()
        )));
    }

    let student = ModelParams::<f32>::zeros(&cfg.backbone, &cfg.head);
    let teacher = ModelParams::<f32>::zeros(&cfg.backbone, &cfg.head);
    let center = Array1::<f32>::zeros(cfg.head.prototypes);
    let mut opt = AdamW::new(
        &student,
        cfg.trainer.adam_beta1,
        cfg.trainer.adam_beta2,
        cfg.trainer.adam_eps,
    );
    opt.t = meta.adam_t;
    let mut state = TrainState { student, teacher, center, opt, step: meta.step };

    // Fill every target array from the blob, strictly in index order.
    {
        let mut targets: Vec<(String, ndarray::ArrayViewMutD<f32>)> = Vec::new();
        for (name, view) in state.student.views_mut() {
            targets.push((format!("student.{name}"), view));
        }
        for (name, view) in state.teacher.views_mut() {
            targets.push((format!("teacher.{name}"), view));
        }
        targets.push(("center".to_string(), state.center.view_mut().into_dyn()));
        let (m, v) = state.opt.moments_mut();
        for (name, view) in m.views_mut() {
            targets.push((format!("adam_m.{name}"), view));
        }
        for (name, view) in v.views_mut() {
            targets.push((format!("adam_v.{name}"), view));
        }

        if targets.len() != index.len() {
            return Err(Error::checkpoint(format!(
                "checkpoint stores {} arrays but this config expects {}",
                index.len(),
                targets.len()
            )));
        }
        for (entry, (name, view)) in index.iter().zip(targets.iter_mut()) {
            if entry.name != *name {
                return Err(Error::checkpoint(format!(
                    "array order mismatch: checkpoint has `{}` where `{name}` was expected",
                    entry.name
                )));
            }
            if entry.shape != view.shape() {
                return Err(Error::checkpoint(format!(
                    "{name}: stored shape {:?} does not match expected {:?}",
                    entry.shape,
                    view.shape()
                )));
            }
            let slice = &values[entry.offset..entry.offset + entry.len];
            for (dst, src) in view.iter_mut().zip(slice) {
                *dst = *src;
            }
        }
    }

    Ok((state, cfg))
}
