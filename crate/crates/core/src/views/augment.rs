//! View-pair construction. Both views of an image come from one spatially
//! identical transform (crop, resize, flips) when alignment is on, so patch i
//! of the student view and patch i of the teacher view show the same ground
//! region. Color distortion is sampled independently per view.

use ndarray::{Array3, ArrayView3};
use rand::Rng;

use crate::config::AugmentConfig;

/// Integer crop box in source pixels plus flips, applied as
/// crop -> bilinear resize to out_size -> horizontal/vertical flip.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpatialParams {
    pub crop_x: usize,
    pub crop_y: usize,
    pub crop_w: usize,
    pub crop_h: usize,
    pub hflip: bool,
    pub vflip: bool,
    pub out_size: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColorOp {
    Brightness,
    Contrast,
    Saturation,
    Hue,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ColorParams {
    /// Application order of the four jitter operations.
    pub order: [ColorOp; 4],
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    /// Additive hue rotation as a fraction of the hue circle.
    pub hue: f64,
    pub grayscale: bool,
}

impl ColorParams {
    /// Parameters that leave an image unchanged.
    pub fn identity() -> Self {
        ColorParams {
            order: [ColorOp::Brightness, ColorOp::Contrast, ColorOp::Saturation, ColorOp::Hue],
            brightness: 1.0,
            contrast: 1.0,
            saturation: 1.0,
            hue: 0.0,
            grayscale: false,
        }
    }
}

/// The spatial record is literally shared when alignment is on; with
/// alignment off each view carries its own sample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SpatialPair {
    Shared(SpatialParams),
    Independent { student: SpatialParams, teacher: SpatialParams },
}

impl SpatialPair {
    pub fn student(&self) -> &SpatialParams {
        match self {
            SpatialPair::Shared(p) => p,
            SpatialPair::Independent { student, .. } => student,
        }
    }

    pub fn teacher(&self) -> &SpatialParams {
        match self {
            SpatialPair::Shared(p) => p,
            SpatialPair::Independent { teacher, .. } => teacher,
        }
    }

    pub fn is_shared(&self) -> bool {
        matches!(self, SpatialPair::Shared(_))
    }
}

#[derive(Clone, Debug)]
pub struct ViewPair {
    pub student_view: Array3<f32>,
    pub teacher_view: Array3<f32>,
    pub spatial: SpatialPair,
    pub student_color: ColorParams,
    pub teacher_color: ColorParams,
}

fn u01(rng: &mut impl Rng) -> f64 {
    rng.random::<f64>()
}

/// Random resized crop over an H x W source: sample an area fraction and
/// aspect ratio, retry while the box does not fit, fall back to the largest
/// centered box after ten attempts.
pub fn sample_spatial(
    src_h: usize,
    src_w: usize,
    out_size: usize,
    cfg: &AugmentConfig,
    rng: &mut impl Rng,
) -> SpatialParams {
    let area = (src_h * src_w) as f64;
    let log_min = cfg.aspect_min.ln();
    let log_max = cfg.aspect_max.ln();
    let mut box_wh = None;
    for _ in 0..10 {
        let target = area * (cfg.crop_scale_min + u01(rng) * (cfg.crop_scale_max - cfg.crop_scale_min));
        let aspect = (log_min + u01(rng) * (log_max - log_min)).exp();
        let w = (target * aspect).sqrt().round() as usize;
        let h = (target / aspect).sqrt().round() as usize;
        if w >= 1 && h >= 1 && w <= src_w && h <= src_h {
            box_wh = Some((w, h));
            break;
        }
    }
    let (crop_w, crop_h) = box_wh.unwrap_or_else(|| {
        // Largest centered box with aspect clamped to the configured range.
        let in_ratio = src_w as f64 / src_h as f64;
        if in_ratio < cfg.aspect_min {
            (src_w, ((src_w as f64 / cfg.aspect_min).round() as usize).clamp(1, src_h))
        } else if in_ratio > cfg.aspect_max {
            (((src_h as f64 * cfg.aspect_max).round() as usize).clamp(1, src_w), src_h)
        } else {
            (src_w, src_h)
        }
    });
    let crop_x = (u01(rng) * (src_w - crop_w + 1) as f64).floor() as usize;
    let crop_y = (u01(rng) * (src_h - crop_h + 1) as f64).floor() as usize;
    let crop_x = crop_x.min(src_w - crop_w);
    let crop_y = crop_y.min(src_h - crop_h);
    SpatialParams {
        crop_x,
        crop_y,
        crop_w,
        crop_h,
        hflip: u01(rng) < cfg.hflip_prob,
        vflip: u01(rng) < cfg.vflip_prob,
        out_size,
    }
}

pub fn sample_color(cfg: &AugmentConfig, rng: &mut impl Rng) -> ColorParams {
    let mut order = [ColorOp::Brightness, ColorOp::Contrast, ColorOp::Saturation, ColorOp::Hue];
    // Fisher-Yates over the four ops.
    for i in (1..4).rev() {
        let j = (u01(rng) * (i + 1) as f64).floor() as usize;
        order.swap(i, j.min(i));
    }
    ColorParams {
        order,
        brightness: 1.0 - cfg.brightness + u01(rng) * 2.0 * cfg.brightness,
        contrast: 1.0 - cfg.contrast + u01(rng) * 2.0 * cfg.contrast,
        saturation: 1.0 - cfg.saturation + u01(rng) * 2.0 * cfg.saturation,
        hue: -cfg.hue + u01(rng) * 2.0 * cfg.hue,
        grayscale: u01(rng) < cfg.grayscale_prob,
    }
}

/// Crop, bilinear-resize, and flip. Sample centers follow
/// src = origin + (dst + 0.5) * crop/out - 0.5, clamped to the crop box.
pub fn apply_spatial(image: &ArrayView3<f32>, p: &SpatialParams) -> Array3<f32> {
    let (src_h, src_w, channels) = image.dim();
    assert!(p.crop_x + p.crop_w <= src_w && p.crop_y + p.crop_h <= src_h, "crop box in bounds");
    let out = p.out_size;
    let scale_x = p.crop_w as f64 / out as f64;
    let scale_y = p.crop_h as f64 / out as f64;
    let mut result = Array3::<f32>::zeros((out, out, channels));
    for i in 0..out {
        let src_i = i as f64 * scale_y + 0.5 * scale_y - 0.5;
        let sy = src_i.clamp(0.0, (p.crop_h - 1) as f64) + p.crop_y as f64;
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(p.crop_y + p.crop_h - 1);
        let fy = (sy - y0 as f64) as f32;
        for j in 0..out {
            let src_j = j as f64 * scale_x + 0.5 * scale_x - 0.5;
            let sx = src_j.clamp(0.0, (p.crop_w - 1) as f64) + p.crop_x as f64;
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(p.crop_x + p.crop_w - 1);
            let fx = (sx - x0 as f64) as f32;
            for c in 0..channels {
                let top = image[[y0, x0, c]] * (1.0 - fx) + image[[y0, x1, c]] * fx;
                let bottom = image[[y1, x0, c]] * (1.0 - fx) + image[[y1, x1, c]] * fx;
                result[[i, j, c]] = top * (1.0 - fy) + bottom * fy;
            }
        }
    }
    if p.hflip {
        result = flip_axis(&result, 1);
    }
    if p.vflip {
        result = flip_axis(&result, 0);
    }
    result
}

fn flip_axis(image: &Array3<f32>, axis: usize) -> Array3<f32> {
    let mut flipped = image.clone();
    flipped.invert_axis(ndarray::Axis(axis));
    flipped
}

fn luma(r: f32, g: f32, b: f32) -> f32 {
    0.299 * r + 0.587 * g + 0.114 * b
}

/// Jitter operations in the sampled order, clamping to [0, 1] after each,
/// then optional grayscale conversion.
pub fn apply_color(image: &ArrayView3<f32>, p: &ColorParams) -> Array3<f32> {
    let mut img = image.to_owned();
    for op in p.order {
        match op {
            ColorOp::Brightness => {
                if p.brightness == 1.0 {
                    continue;
                }
                img.mapv_inplace(|v| (v * p.brightness as f32).clamp(0.0, 1.0));
            }
            ColorOp::Contrast => {
                if p.contrast == 1.0 {
                    continue;
                }
                let mut mean = 0.0f32;
                let (h, w, _) = img.dim();
                for y in 0..h {
                    for x in 0..w {
                        mean += luma(img[[y, x, 0]], img[[y, x, 1]], img[[y, x, 2]]);
                    }
                }
                mean /= (h * w) as f32;
                let f = p.contrast as f32;
                img.mapv_inplace(|v| ((v - mean) * f + mean).clamp(0.0, 1.0));
            }
            ColorOp::Saturation => {
                if p.saturation == 1.0 {
                    continue;
                }
                let f = p.saturation as f32;
                for mut pixel in img.rows_mut() {
                    let gray = luma(pixel[0], pixel[1], pixel[2]);
                    for c in 0..3 {
                        pixel[c] = (gray + (pixel[c] - gray) * f).clamp(0.0, 1.0);
                    }
                }
            }
            ColorOp::Hue => {
                if p.hue != 0.0 {
                    for mut pixel in img.rows_mut() {
                        let (h, s, v) = rgb_to_hsv(pixel[0], pixel[1], pixel[2]);
                        let h = (h + p.hue as f32).rem_euclid(1.0);
                        let (r, g, b) = hsv_to_rgb(h, s, v);
                        pixel[0] = r.clamp(0.0, 1.0);
                        pixel[1] = g.clamp(0.0, 1.0);
                        pixel[2] = b.clamp(0.0, 1.0);
                    }
                }
            }
        }
    }
    if p.grayscale {
        for mut pixel in img.rows_mut() {
            let gray = luma(pixel[0], pixel[1], pixel[2]);
            pixel.fill(gray);
        }
    }
    img
}

/// Hue in [0, 1), saturation and value in [0, 1].
fn rgb_to_hsv(r: f32, g: f32, b: f32) -> (f32, f32, f32) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        (((g - b) / delta).rem_euclid(6.0)) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    (h, s, max)
}

fn hsv_to_rgb(h: f32, s: f32, v: f32) -> (f32, f32, f32) {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let c = v * s;
    let x = c * (1.0 - (h6.rem_euclid(2.0) - 1.0).abs());
    let m = v - c;
    let (r, g, b) = match h6 as usize {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    (r + m, g + m, b + m)
}

/// Builds the two views of one image. Draw order is fixed: student spatial,
/// teacher spatial (only when alignment is off), student color, teacher
/// color. One rng therefore yields one reproducible pair.
pub fn make_view_pair(
    image: &ArrayView3<f32>,
    out_size: usize,
    cfg: &AugmentConfig,
    aligned: bool,
    rng: &mut impl Rng,
) -> ViewPair {
    let (h, w, _) = image.dim();
    let spatial = if aligned {
        SpatialPair::Shared(sample_spatial(h, w, out_size, cfg, rng))
    } else {
        SpatialPair::Independent {
            student: sample_spatial(h, w, out_size, cfg, rng),
            teacher: sample_spatial(h, w, out_size, cfg, rng),
        }
    };
    let student_color = sample_color(cfg, rng);
    let teacher_color = sample_color(cfg, rng);
    let student_base = apply_spatial(image, spatial.student());
    let teacher_base = if spatial.is_shared() {
        student_base.clone()
    } else {
        apply_spatial(image, spatial.teacher())
    };
    ViewPair {
        student_view: apply_color(&student_base.view(), &student_color),
        teacher_view: apply_color(&teacher_base.view(), &teacher_color),
        spatial,
        student_color,
        teacher_color,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{purpose, stream};
    use ndarray::Array3;

    fn jitterless() -> AugmentConfig {
        AugmentConfig {
            brightness: 0.0,
            contrast: 0.0,
            saturation: 0.0,
            hue: 0.0,
            grayscale_prob: 0.0,
            ..AugmentConfig::default()
        }
    }

    /// R encodes the source x index, G the source y index, scaled to [0, 1].
    fn coordinate_image(h: usize, w: usize) -> Array3<f32> {
        Array3::from_shape_fn((h, w, 3), |(y, x, c)| match c {
            0 => x as f32 / (w - 1) as f32,
            1 => y as f32 / (h - 1) as f32,
            _ => 0.5,
        })
    }

    #[test]
    fn aligned_views_without_jitter_are_identical() {
        let image = coordinate_image(48, 48);
        let mut rng = stream(0, purpose::AUGMENT, 0, 0);
        let pair = make_view_pair(&image.view(), 32, &jitterless(), true, &mut rng);
        assert!(pair.spatial.is_shared());
        assert_eq!(pair.student_view, pair.teacher_view);
    }

    #[test]
    fn aligned_views_sample_the_same_source_region() {
        // A linear coordinate ramp survives bilinear sampling exactly, so
        // every output pixel can be checked against the crop-box mapping in
        // closed form.
        let (h, w, out) = (48, 48, 32);
        let image = coordinate_image(h, w);
        for draw in 0..20 {
            let mut rng = stream(5, purpose::AUGMENT, draw, 0);
            let pair = make_view_pair(&image.view(), out, &jitterless(), true, &mut rng);
            let p = *pair.spatial.student();
            for i in 0..out {
                for j in 0..out {
                    let jj = if p.hflip { out - 1 - j } else { j };
                    let ii = if p.vflip { out - 1 - i } else { i };
                    let sx = ((jj as f64 + 0.5) * p.crop_w as f64 / out as f64 - 0.5)
                        .clamp(0.0, (p.crop_w - 1) as f64)
                        + p.crop_x as f64;
                    let sy = ((ii as f64 + 0.5) * p.crop_h as f64 / out as f64 - 0.5)
                        .clamp(0.0, (p.crop_h - 1) as f64)
                        + p.crop_y as f64;
                    let expect_r = sx as f32 / (w - 1) as f32;
                    let expect_g = sy as f32 / (h - 1) as f32;
                    for (view, name) in
                        [(&pair.student_view, "student"), (&pair.teacher_view, "teacher")]
                    {
                        assert!(
                            (view[[i, j, 0]] - expect_r).abs() < 1e-4,
                            "{name} draw {draw} pixel ({i},{j}): R {} vs {}",
                            view[[i, j, 0]],
                            expect_r
                        );
                        assert!(
                            (view[[i, j, 1]] - expect_g).abs() < 1e-4,
                            "{name} draw {draw} pixel ({i},{j}): G {} vs {}",
                            view[[i, j, 1]],
                            expect_g
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn unaligned_views_draw_independent_boxes() {
        let image = coordinate_image(48, 48);
        let mut independent = 0;
        for draw in 0..16 {
            let mut rng = stream(6, purpose::AUGMENT, draw, 0);
            let pair = make_view_pair(&image.view(), 32, &jitterless(), false, &mut rng);
            assert!(!pair.spatial.is_shared());
            if pair.spatial.student() != pair.spatial.teacher() {
                independent += 1;
            }
        }
        assert!(independent >= 14, "only {independent}/16 draws differed");
    }

    #[test]
    fn view_pair_is_deterministic() {
        let image = coordinate_image(40, 40);
        let cfg = AugmentConfig::default();
        let mut a = stream(9, purpose::AUGMENT, 1, 2);
        let mut b = stream(9, purpose::AUGMENT, 1, 2);
        let pa = make_view_pair(&image.view(), 32, &cfg, true, &mut a);
        let pb = make_view_pair(&image.view(), 32, &cfg, true, &mut b);
        assert_eq!(pa.student_view, pb.student_view);
        assert_eq!(pa.teacher_view, pb.teacher_view);
        assert_eq!(pa.student_color, pb.student_color);
    }

    #[test]
    fn grayscale_equalizes_channels() {
        let image = coordinate_image(16, 16);
        let params = ColorParams { grayscale: true, ..ColorParams::identity() };
        let gray = apply_color(&image.view(), &params);
        for pixel in gray.rows() {
            assert_eq!(pixel[0], pixel[1]);
            assert_eq!(pixel[1], pixel[2]);
        }
    }

    #[test]
    fn identity_color_is_identity() {
        let image = coordinate_image(16, 16);
        let out = apply_color(&image.view(), &ColorParams::identity());
        assert_eq!(out, image);
    }

    #[test]
    fn hue_rotation_round_trips() {
        for (r, g, b) in [(0.8, 0.2, 0.1), (0.0, 0.0, 0.0), (0.3, 0.9, 0.4), (1.0, 1.0, 1.0)] {
            let (h, s, v) = rgb_to_hsv(r, g, b);
            let (r2, g2, b2) = hsv_to_rgb(h, s, v);
            assert!((r - r2).abs() < 1e-5 && (g - g2).abs() < 1e-5 && (b - b2).abs() < 1e-5);
        }
    }
}
