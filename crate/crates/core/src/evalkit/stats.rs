//! Feature statistics: fixed-bin histograms of (a) per-image differences
//! between the two networks' cls features and (b) pooled feature values.
//! Fixed bin edges make histograms comparable across runs and checkpoints.

use crate::error::{Error, Result};
use crate::evalkit::features::FeatureMatrix;

/// Equal-width histogram over a fixed range. Values outside the range land
/// in the nearest edge bin, so totals always equal the number of samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Self {
        assert!(bins > 0 && hi > lo, "histogram needs a positive range and bin count");
        Histogram { lo, hi, counts: vec![0; bins], total: 0 }
    }

    pub fn add(&mut self, v: f64) {
        let bins = self.counts.len();
        let pos = (v - self.lo) / (self.hi - self.lo) * bins as f64;
        let idx = (pos.floor() as i64).clamp(0, bins as i64 - 1) as usize;
        self.counts[idx] += 1;
        self.total += 1;
    }

    pub fn bin_edges(&self, i: usize) -> (f64, f64) {
        let w = (self.hi - self.lo) / self.counts.len() as f64;
        (self.lo + i as f64 * w, self.lo + (i + 1) as f64 * w)
    }

    /// Fraction of all samples in the fullest bin; a peakedness measure.
    pub fn max_bin_fraction(&self) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        *self.counts.iter().max().expect("bins is positive") as f64 / self.total as f64
    }

    /// Comma-separated table with a one-line header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,count,fraction\n");
        for (i, &c) in self.counts.iter().enumerate() {
            let (lo, hi) = self.bin_edges(i);
            let frac = if self.total == 0 { 0.0 } else { c as f64 / self.total as f64 };
            out.push_str(&format!("{lo},{hi},{c},{frac}\n"));
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct FeatureStats {
    /// Per-image mean absolute difference between the two networks' cls
    /// features, over [0, 2) in 64 bins.
    pub diff_hist: Histogram,
    /// Pooled feature values of the slow network, over [-4, 4) in 128 bins.
    pub value_hist: Histogram,
    pub mean_abs_diff: f64,
    pub value_std: f64,
    pub value_max_bin_fraction: f64,
}

/// Compares the fast and slow networks' features image by image and pools
/// the slow network's values. The slow network is the one evaluated as the
/// backbone, so its values feed the peakedness statistic.
pub fn feature_stats(fast: &FeatureMatrix, slow: &FeatureMatrix) -> Result<FeatureStats> {
    if fast.rows.dim() != slow.rows.dim() {
        return Err(Error::contract(format!(
            "feature matrices differ in shape: {:?} vs {:?}",
            fast.rows.dim(),
            slow.rows.dim()
        )));
    }
    if fast.rows.nrows() == 0 {
        return Err(Error::contract("feature statistics need at least one row"));
    }

    let mut diff_hist = Histogram::new(0.0, 2.0, 64);
    let mut value_hist = Histogram::new(-4.0, 4.0, 128);
    let dim = fast.rows.ncols();

    let mut diff_sum = 0.0;
    for (f_row, s_row) in fast.rows.rows().into_iter().zip(slow.rows.rows()) {
        let mean_abs = f_row
            .iter()
            .zip(s_row.iter())
            .map(|(a, b)| (a - b).abs() as f64)
            .sum::<f64>()
            / dim as f64;
        diff_hist.add(mean_abs);
        diff_sum += mean_abs;
    }
    let mean_abs_diff = diff_sum / fast.rows.nrows() as f64;

    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for &v in slow.rows.iter() {
        let v = v as f64;
        value_hist.add(v);
        sum += v;
        sum_sq += v * v;
    }
    let count = slow.rows.len() as f64;
    let mean = sum / count;
    let value_std = (sum_sq / count - mean * mean).max(0.0).sqrt();

    Ok(FeatureStats {
        value_max_bin_fraction: value_hist.max_bin_fraction(),
        diff_hist,
        value_hist,
        mean_abs_diff,
        value_std,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn matrix(rows: Array2<f32>) -> FeatureMatrix {
        FeatureMatrix { rows, labels: None, num_classes: 0, source: "test".into() }
    }

    #[test]
    fn identical_networks_spike_at_zero() {
        let rows = Array2::from_shape_fn((5, 4), |(i, j)| (i * 4 + j) as f32 * 0.1);
        let stats = feature_stats(&matrix(rows.clone()), &matrix(rows)).unwrap();
        assert_eq!(stats.mean_abs_diff, 0.0);
        assert_eq!(stats.diff_hist.counts[0], 5);
        assert_eq!(stats.diff_hist.total, 5);
    }

    #[test]
    fn histogram_edges_are_fixed_and_outliers_clamp() {
        let mut h = Histogram::new(0.0, 1.0, 4);
        h.add(-10.0);
        h.add(0.1);
        h.add(0.6);
        h.add(99.0);
        assert_eq!(h.counts, vec![2, 0, 1, 1]);
        assert_eq!(h.total, 4);
        assert_eq!(h.bin_edges(0), (0.0, 0.25));
        assert_eq!(h.max_bin_fraction(), 0.5);
    }

    #[test]
    fn csv_has_header_and_one_row_per_bin() {
        let mut h = Histogram::new(0.0, 1.0, 2);
        h.add(0.2);
        let csv = h.to_csv();
        let lines: Vec<&str> = csv.trim_end().lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "bin_lo,bin_hi,count,fraction");
        assert_eq!(lines[1], "0,0.5,1,1");
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a = matrix(Array2::zeros((3, 4)));
        let b = matrix(Array2::zeros((3, 5)));
        let err = feature_stats(&a, &b).unwrap_err();
        assert!(err.to_string().contains("shape"), "{err}");
    }

    #[test]
    fn value_std_matches_a_direct_computation() {
        let rows = Array2::from_shape_vec((1, 4), vec![1.0f32, -1.0, 1.0, -1.0]).unwrap();
        let stats = feature_stats(&matrix(rows.clone()), &matrix(rows)).unwrap();
        assert!((stats.value_std - 1.0).abs() < 1e-12);
        // Values ±1 land in two distinct bins of width 1/16.
        assert_eq!(stats.value_max_bin_fraction, 0.5);
    }
}
