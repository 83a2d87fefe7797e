//! 2-D feature embedding via principal components, plus a silhouette score
//! to quantify how compact the class clusters are.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::evalkit::features::FeatureMatrix;

#[derive(Clone, Debug)]
pub struct Embedding2D {
    /// One (x, y) row per input row.
    pub coords: Array2<f32>,
    /// Fraction of total variance captured by each of the two axes.
    pub explained: [f64; 2],
    /// True when the features had (numerically) no variance to project.
    pub degenerate: bool,
}

/// Projects the rows onto their top two principal axes. Axis signs are
/// normalized (largest-magnitude loading positive) so output is stable.
/// Constant features yield all-zero coordinates and the degenerate flag.
pub fn embed_2d(features: &FeatureMatrix) -> Result<Embedding2D> {
    let n = features.rows.nrows();
    let d = features.rows.ncols();
    if n < 2 {
        return Err(Error::contract("2-D embedding needs at least two rows"));
    }

    // Center in f64.
    let mut x = Array2::<f64>::zeros((n, d));
    for i in 0..n {
        for j in 0..d {
            x[[i, j]] = features.rows[[i, j]] as f64;
        }
    }
    let mean = x.sum_axis(ndarray::Axis(0)) / n as f64;
    for mut row in x.rows_mut() {
        for j in 0..d {
            row[j] -= mean[j];
        }
    }

    let mut cov = nalgebra::DMatrix::<f64>::zeros(d, d);
    for a in 0..d {
        for b in a..d {
            let mut s = 0.0;
            for i in 0..n {
                s += x[[i, a]] * x[[i, b]];
            }
            s /= (n - 1) as f64;
            cov[(a, b)] = s;
            cov[(b, a)] = s;
        }
    }
    let total_var = cov.trace();

    let eig = nalgebra::SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("eigenvalues are finite")
    });

    let mut coords = Array2::<f32>::zeros((n, 2));
    let mut explained = [0.0f64; 2];
    let mut degenerate = true;
    for axis in 0..2 {
        let col = order[axis.min(d - 1)];
        let value = eig.eigenvalues[col].max(0.0);
        if d <= axis || value <= 1e-12 {
            continue;
        }
        degenerate = false;
        explained[axis] = if total_var > 0.0 { value / total_var } else { 0.0 };
        let mut v = Array1::<f64>::zeros(d);
        for j in 0..d {
            v[j] = eig.eigenvectors[(j, col)];
        }
        // Sign convention: the largest-magnitude loading points positive.
        let mut lead = 0;
        for j in 0..d {
            if v[j].abs() > v[lead].abs() {
                lead = j;
            }
        }
        if v[lead] < 0.0 {
            v.mapv_inplace(|u| -u);
        }
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..d {
                s += x[[i, j]] * v[j];
            }
            coords[[i, axis]] = s as f32;
        }
    }

    Ok(Embedding2D { coords, explained, degenerate })
}

/// Mean silhouette over all points: (b - a) / max(a, b) with a the mean
/// intra-class distance and b the smallest mean distance to another class.
/// Points alone in their class score zero. Needs at least two classes.
pub fn silhouette(coords: &Array2<f32>, labels: &[usize]) -> Result<f64> {
    let n = coords.nrows();
    if n != labels.len() {
        return Err(Error::contract("label count does not match coordinate rows"));
    }
    if n < 3 {
        return Err(Error::contract("silhouette needs at least three points"));
    }
    let classes: std::collections::BTreeSet<usize> = labels.iter().copied().collect();
    if classes.len() < 2 {
        return Err(Error::contract("silhouette needs at least two classes"));
    }

    let dist = |i: usize, j: usize| -> f64 {
        let dx = (coords[[i, 0]] - coords[[j, 0]]) as f64;
        let dy = (coords[[i, 1]] - coords[[j, 1]]) as f64;
        (dx * dx + dy * dy).sqrt()
    };

    let mut total = 0.0;
    for i in 0..n {
        let own = labels[i];
        let mut sums: std::collections::BTreeMap<usize, (f64, usize)> = Default::default();
        for j in 0..n {
            if i == j {
                continue;
            }
            let e = sums.entry(labels[j]).or_insert((0.0, 0));
            e.0 += dist(i, j);
            e.1 += 1;
        }
        let a = match sums.get(&own) {
            Some(&(s, c)) if c > 0 => s / c as f64,
            _ => {
                // Sole member of its class.
                continue;
            }
        };
        let b = sums
            .iter()
            .filter(|(k, _)| **k != own)
            .map(|(_, &(s, c))| s / c as f64)
            .fold(f64::INFINITY, f64::min);
        if a.max(b) > 0.0 {
            total += (b - a) / a.max(b);
        }
    }
    Ok(total / n as f64)
}
