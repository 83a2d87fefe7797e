//! Rendering helpers: save [H, W, 3] arrays in [0, 1] as PNG files and turn
//! attention heat maps into viewable images.

use std::path::Path;

use ndarray::{Array3, ArrayView2, ArrayView3};

use crate::error::{Error, Result};

/// Writes an [H, W, 3] array to a PNG, clamping values into [0, 1].
pub fn save_png(image: &ArrayView3<f32>, path: &Path) -> Result<()> {
    let (h, w, c) = image.dim();
    if c != 3 {
        return Err(Error::contract(format!("PNG export expects 3 channels, got {c}")));
    }
    let mut buf = image::RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let px = |ch: usize| (image[[y, x, ch]].clamp(0.0, 1.0) * 255.0).round() as u8;
            buf.put_pixel(x as u32, y as u32, image::Rgb([px(0), px(1), px(2)]));
        }
    }
    buf.save(path)
        .map_err(|e| Error::ingest(path, format!("cannot write PNG: {e}")))
}

/// Turns one attention map into a grayscale RGB image, normalized so the
/// strongest patch is white, with each cell enlarged `upscale` times.
pub fn attention_to_image(map: &ArrayView2<f32>, upscale: usize) -> Array3<f32> {
    let (gh, gw) = map.dim();
    let peak = map.iter().cloned().fold(0.0f32, f32::max).max(1e-12);
    let mut out = Array3::<f32>::zeros((gh * upscale, gw * upscale, 3));
    for y in 0..gh * upscale {
        for x in 0..gw * upscale {
            let v = map[[y / upscale, x / upscale]] / peak;
            for ch in 0..3 {
                out[[y, x, ch]] = v;
            }
        }
    }
    out
}

/// Stacks images of equal height side by side with a one-pixel white gap.
pub fn hstack(images: &[ArrayView3<f32>]) -> Result<Array3<f32>> {
    if images.is_empty() {
        return Err(Error::contract("nothing to stack"));
    }
    let (h, _, c) = images[0].dim();
    if images.iter().any(|img| img.dim().0 != h || img.dim().2 != c) {
        return Err(Error::contract("stacked images must share height and channel count"));
    }
    let total_w: usize = images.iter().map(|i| i.dim().1).sum::<usize>() + images.len() - 1;
    let mut out = Array3::<f32>::from_elem((h, total_w, c), 1.0);
    let mut x0 = 0;
    for img in images {
        let w = img.dim().1;
        out.slice_mut(ndarray::s![.., x0..x0 + w, ..]).assign(img);
        x0 += w + 1;
    }
    Ok(out)
}
