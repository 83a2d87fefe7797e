//! Patch flattening. Images are [H, W, 3] arrays; patches are rows of a
//! [N, 3*P*P] matrix in row-major grid order (left to right, top to bottom),
//! each row laid out channel-major: [c][py][px].

use ndarray::{Array2, Array3, ArrayView2, ArrayView3};

use crate::scalar::Scalar;

pub fn patchify<F: Scalar>(image: &ArrayView3<F>, patch_size: usize) -> Array2<F> {
    let (h, w, channels) = image.dim();
    assert!(h % patch_size == 0 && w % patch_size == 0, "image divisible by patch size");
    let grid_h = h / patch_size;
    let grid_w = w / patch_size;
    let dim = channels * patch_size * patch_size;
    let mut patches = Array2::<F>::zeros((grid_h * grid_w, dim));
    for gy in 0..grid_h {
        for gx in 0..grid_w {
            let row = gy * grid_w + gx;
            for c in 0..channels {
                for py in 0..patch_size {
                    for px in 0..patch_size {
                        let col = c * patch_size * patch_size + py * patch_size + px;
                        patches[[row, col]] = image[[gy * patch_size + py, gx * patch_size + px, c]];
                    }
                }
            }
        }
    }
    patches
}

/// Inverse of `patchify` for a square grid.
pub fn unpatchify<F: Scalar>(patches: &ArrayView2<F>, patch_size: usize, grid: usize) -> Array3<F> {
    let (n, dim) = patches.dim();
    assert_eq!(n, grid * grid, "patch count matches grid");
    let channels = dim / (patch_size * patch_size);
    assert_eq!(channels * patch_size * patch_size, dim, "patch row dimension");
    let side = grid * patch_size;
    let mut image = Array3::<F>::zeros((side, side, channels));
    for gy in 0..grid {
        for gx in 0..grid {
            let row = gy * grid + gx;
            for c in 0..channels {
                for py in 0..patch_size {
                    for px in 0..patch_size {
                        let col = c * patch_size * patch_size + py * patch_size + px;
                        image[[gy * patch_size + py, gx * patch_size + px, c]] = patches[[row, col]];
                    }
                }
            }
        }
    }
    image
}
