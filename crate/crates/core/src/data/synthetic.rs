//! Procedural class-labelled images whose class identity is purely
//! structural: each class has its own shape family, stripe orientation, and
//! stripe frequency. Color is a per-image nuisance — every image draws its
//! own hue — so average color carries no class information and a probe must
//! read structure, not palette. Backgrounds are multi-octave value noise
//! shared across classes. Image i is a pure function of (seed, i), so
//! datasets are reproducible element by element and held-out sets are just
//! different seeds.

use ndarray::Array3;
use rand::Rng;

use crate::data::Dataset;
use crate::rng::{purpose, stream};

const TAU: f64 = std::f64::consts::TAU;

pub fn generate_synthetic(
    num_images: usize,
    image_size: usize,
    num_classes: usize,
    seed: u64,
) -> Dataset {
    let mut images = Vec::with_capacity(num_images);
    let mut labels = Vec::with_capacity(num_images);
    for index in 0..num_images {
        let label = index % num_classes;
        images.push(render_image(seed, index as u64, label, image_size));
        labels.push(label);
    }
    Dataset { images, labels, num_classes, image_size }
}

struct ClassStyle {
    family: usize,
    angle: f64,
    frequency: f64,
}

fn class_style(label: usize) -> ClassStyle {
    ClassStyle {
        family: label % 4,
        // Golden-angle spacing keeps orientations distinct for any class count.
        angle: TAU * (label as f64 * 0.381_966).fract() * 0.5,
        frequency: 3.0 + 2.0 * (label % 6) as f64,
    }
}

fn render_image(seed: u64, index: u64, label: usize, size: usize) -> Array3<f32> {
    let mut rng = stream(seed, purpose::SYNTH_IMAGE, index, 0);
    let style = class_style(label);

    // Background: gray base plus three octaves of bilinear value noise.
    let base = 0.5 + (rng.random::<f64>() - 0.5) * 0.01;
    let octaves = [
        (4usize, 0.10f64),
        (8, 0.05),
        (16, 0.03),
    ];
    let noise: Vec<NoiseGrid> =
        octaves.iter().map(|&(g, a)| NoiseGrid::sample(g, a, &mut rng)).collect();
    let mut image = Array3::<f32>::zeros((size, size, 3));
    for y in 0..size {
        for x in 0..size {
            let mut v = base;
            for grid in &noise {
                v += grid.at(x as f64 / size as f64, y as f64 / size as f64);
            }
            let v = v.clamp(0.0, 1.0) as f32;
            for c in 0..3 {
                image[[y, x, c]] = v;
            }
        }
    }

    // Per-image palette: the hue is drawn fresh for every image regardless
    // of class, so color identifies the image, never the label.
    let hue = rng.random::<f64>() as f32;
    let stripe_bright = hsv(hue, 0.55, 0.82);
    let stripe_dark = hsv(hue, 0.35, 0.38);

    // Foreground: three striped shapes of the class family, kept fully
    // inside the frame so per-image coverage stays stable within a class.
    let angle = style.angle + (rng.random::<f64>() - 0.5) * 0.16;
    let phase = rng.random::<f64>() * TAU;
    let brightness = 0.985 + rng.random::<f64>() * 0.03;
    let (dir_x, dir_y) = (angle.cos(), angle.sin());
    // Radius scale per family so every family covers about the same area.
    let area_scale = match style.family {
        0 => 1.0,
        1 => 1.08,
        2 => 1.55,
        _ => 1.20,
    };
    for _ in 0..3 {
        let radius = (0.14 + rng.random::<f64>() * 0.025) * area_scale * size as f64;
        let margin = radius.min(size as f64 * 0.45);
        let cx = margin + rng.random::<f64>() * (size as f64 - 2.0 * margin);
        let cy = margin + rng.random::<f64>() * (size as f64 - 2.0 * margin);
        let y_lo = (cy - radius).floor().max(0.0) as usize;
        let y_hi = ((cy + radius).ceil() as usize).min(size);
        let x_lo = (cx - radius).floor().max(0.0) as usize;
        let x_hi = ((cx + radius).ceil() as usize).min(size);
        for y in y_lo..y_hi {
            for x in x_lo..x_hi {
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                if !inside_shape(style.family, dx, dy, radius) {
                    continue;
                }
                let ridge = (dx * dir_x + dy * dir_y) * style.frequency * TAU / size as f64;
                let stripe = (ridge + phase).sin() > 0.0;
                let color = if stripe { stripe_bright } else { stripe_dark };
                for c in 0..3 {
                    image[[y, x, c]] = (color[c] as f64 * brightness).clamp(0.0, 1.0) as f32;
                }
            }
        }
    }
    image
}

fn inside_shape(family: usize, dx: f64, dy: f64, r: f64) -> bool {
    match family {
        // Disk.
        0 => dx * dx + dy * dy < r * r,
        // Axis-aligned square.
        1 => dx.abs() < r * 0.82 && dy.abs() < r * 0.82,
        // Upward triangle.
        2 => dy <= r * 0.5 && dy >= 3f64.sqrt() * dx.abs() - r,
        // Ring.
        _ => {
            let d2 = dx * dx + dy * dy;
            d2 < r * r && d2 > (0.55 * r) * (0.55 * r)
        }
    }
}

struct NoiseGrid {
    cells: usize,
    amplitude: f64,
    values: Vec<f64>,
}

impl NoiseGrid {
    fn sample(cells: usize, amplitude: f64, rng: &mut impl Rng) -> NoiseGrid {
        let mut values: Vec<f64> =
            (0..(cells + 1) * (cells + 1)).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        // Center the grid so the noise contributes texture, not a per-image
        // brightness offset.
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        for v in &mut values {
            *v -= mean;
        }
        NoiseGrid { cells, amplitude, values }
    }

    /// Bilinear interpolation at normalized coordinates in [0, 1).
    fn at(&self, u: f64, v: f64) -> f64 {
        let gu = u * self.cells as f64;
        let gv = v * self.cells as f64;
        let x0 = (gu.floor() as usize).min(self.cells - 1);
        let y0 = (gv.floor() as usize).min(self.cells - 1);
        let fu = gu - x0 as f64;
        let fv = gv - y0 as f64;
        let stride = self.cells + 1;
        let at = |x: usize, y: usize| self.values[y * stride + x];
        let top = at(x0, y0) * (1.0 - fu) + at(x0 + 1, y0) * fu;
        let bottom = at(x0, y0 + 1) * (1.0 - fu) + at(x0 + 1, y0 + 1) * fu;
        self.amplitude * (top * (1.0 - fv) + bottom * fv)
    }
}

fn hsv(h: f32, s: f32, v: f32) -> [f32; 3] {
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
    [r + m, g + m, b + m]
}
