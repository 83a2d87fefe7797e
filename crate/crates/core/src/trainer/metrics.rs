//! Training metrics as newline-delimited JSON, one row per logged step.
//! Field order is fixed by the struct, so the file is stable for diffing
//! and friendly to streaming readers.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MetricsRow {
    pub step: u64,
    pub lr: f64,
    pub wd: f64,
    pub ema_m: f64,
    pub tpt_t: f64,
    pub l_cls: f64,
    pub l_mse: f64,
    pub teacher_entropy: f64,
    pub teacher_std: f64,
}

pub struct MetricsWriter {
    out: BufWriter<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(Self { out: BufWriter::new(File::create(path)?) })
    }

    /// Reopens an existing log to continue after the last row; used on resume.
    pub fn append(path: &Path) -> Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { out: BufWriter::new(file) })
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<()> {
        let line = serde_json::to_string(row)
            .map_err(|e| Error::contract(format!("metrics row failed to serialize: {e}")))?;
        self.out.write_all(line.as_bytes())?;
        self.out.write_all(b"\n")?;
        // One row per training step: flushing keeps the file tailable.
        self.out.flush()?;
        Ok(())
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: MetricsRow = serde_json::from_str(&line).map_err(|e| {
            Error::contract(format!("metrics line {} is not a valid row: {e}", i + 1))
        })?;
        rows.push(row);
    }
    Ok(rows)
}
