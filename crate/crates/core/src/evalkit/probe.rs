//! Linear probing: a single softmax classifier fit on frozen features,
//! scored by overall accuracy on the held-out split.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::evalkit::features::FeatureMatrix;
use crate::rng::{purpose, stream};

const EPOCHS: usize = 100;
const BASE_LR: f64 = 0.05;
const WEIGHT_DECAY: f64 = 1e-4;
const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug)]
pub struct ProbeOutcome {
    /// Overall accuracy on the held-out split, in [0, 1].
    pub accuracy: f64,
    pub train_size: usize,
    pub test_size: usize,
}

/// Splits the rows into train/test by a seeded shuffle, standardizes with
/// train-split statistics, fits one linear layer for a fixed 100 epochs of
/// full-batch AdamW under a cosine learning-rate decay, and reports test
/// overall accuracy. Deterministic given (features, train_ratio, seed).
pub fn linear_probe(features: &FeatureMatrix, train_ratio: f64, seed: u64) -> Result<ProbeOutcome> {
    let labels = features
        .labels
        .as_ref()
        .ok_or_else(|| Error::contract("linear probe needs labelled features"))?;
    let n = features.rows.nrows();
    if labels.len() != n {
        return Err(Error::contract("label count does not match feature rows"));
    }
    if !(0.0..1.0).contains(&train_ratio) || train_ratio == 0.0 {
        return Err(Error::config(format!("train_ratio {train_ratio} must lie in (0, 1)")));
    }
    let classes = features.num_classes;
    {
        let mut seen = vec![false; classes];
        for &y in labels {
            if y >= classes {
                return Err(Error::contract(format!("label {y} exceeds class count {classes}")));
            }
            seen[y] = true;
        }
        if seen.iter().filter(|&&s| s).count() < 2 {
            return Err(Error::contract("linear probe needs at least two classes present"));
        }
    }
    if n < 2 {
        return Err(Error::contract("linear probe needs at least two rows"));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, purpose::PROBE, 0, 0));
    let train_size = ((train_ratio * n as f64).round() as usize).clamp(1, n - 1);
    let (train_idx, test_idx) = order.split_at(train_size);

    let dim = features.rows.ncols();
    let gather = |idx: &[usize]| -> (Array2<f64>, Vec<usize>) {
        let mut x = Array2::<f64>::zeros((idx.len(), dim));
        let mut y = Vec::with_capacity(idx.len());
        for (row, &i) in idx.iter().enumerate() {
            for j in 0..dim {
                x[[row, j]] = features.rows[[i, j]] as f64;
            }
            y.push(labels[i]);
        }
        (x, y)
    };
    let (mut x_train, y_train) = gather(train_idx);
    let (mut x_test, y_test) = gather(test_idx);

    // Standardize by train-split statistics.
    let mean = x_train.sum_axis(Axis(0)) / train_size as f64;
    let mut std = Array1::<f64>::zeros(dim);
    for j in 0..dim {
        let var = x_train
            .column(j)
            .iter()
            .map(|v| (v - mean[j]).powi(2))
            .sum::<f64>()
            / train_size as f64;
        std[j] = var.sqrt() + 1e-8;
    }
    for mut row in x_train.rows_mut() {
        for j in 0..dim {
            row[j] = (row[j] - mean[j]) / std[j];
        }
    }
    for mut row in x_test.rows_mut() {
        for j in 0..dim {
            row[j] = (row[j] - mean[j]) / std[j];
        }
    }

    // Full-batch AdamW on a zero-initialized linear layer (convex problem).
    let mut w = Array2::<f64>::zeros((dim, classes));
    let mut b = Array1::<f64>::zeros(classes);
    let mut mw = Array2::<f64>::zeros((dim, classes));
    let mut vw = Array2::<f64>::zeros((dim, classes));
    let mut mb = Array1::<f64>::zeros(classes);
    let mut vb = Array1::<f64>::zeros(classes);

    for epoch in 0..EPOCHS {
        let lr = 0.5 * BASE_LR * (1.0 + (std::f64::consts::PI * epoch as f64 / EPOCHS as f64).cos());
        let probs = softmax_rows(&(x_train.dot(&w) + &b));
        let mut g_logits = probs;
        for (row, &y) in y_train.iter().enumerate() {
            g_logits[[row, y]] -= 1.0;
        }
        g_logits /= train_size as f64;
        let gw = x_train.t().dot(&g_logits);
        let gb = g_logits.sum_axis(Axis(0));

        let t = (epoch + 1) as i32;
        let c1 = 1.0 - BETA1.powi(t);
        let c2 = 1.0 - BETA2.powi(t);
        ndarray::Zip::from(&mut w)
            .and(&mut mw)
            .and(&mut vw)
            .and(&gw)
            .for_each(|w, m, v, &g| {
                *m = BETA1 * *m + (1.0 - BETA1) * g;
                *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                *w -= lr * ((*m / c1) / ((*v / c2).sqrt() + EPS) + WEIGHT_DECAY * *w);
            });
        ndarray::Zip::from(&mut b)
            .and(&mut mb)
            .and(&mut vb)
            .and(&gb)
            .for_each(|b, m, v, &g| {
                *m = BETA1 * *m + (1.0 - BETA1) * g;
                *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                *b -= lr * ((*m / c1) / ((*v / c2).sqrt() + EPS));
            });
    }

    let logits = x_test.dot(&w) + &b;
    let correct = logits
        .rows()
        .into_iter()
        .zip(&y_test)
        .filter(|(row, y)| argmax(row) == **y)
        .count();
    Ok(ProbeOutcome {
        accuracy: correct as f64 / y_test.len() as f64,
        train_size,
        test_size: y_test.len(),
    })
}

fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

fn argmax(row: &ndarray::ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Convenience wrapper: median accuracy over several probe seeds, the
/// protocol used when a single split would be too noisy to threshold.
pub fn median_probe_accuracy(
    features: &FeatureMatrix,
    train_ratio: f64,
    seeds: &[u64],
) -> Result<f64> {
    let mut accs = Vec::with_capacity(seeds.len());
    for &s in seeds {
        accs.push(linear_probe(features, train_ratio, s)?.accuracy);
    }
    accs.sort_by(|a, b| a.partial_cmp(b).expect("accuracies are finite"));
    Ok(accs[accs.len() / 2])
}
