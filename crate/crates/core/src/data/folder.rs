//! Disk-backed datasets: a root directory plus a tab-separated manifest of
//! `path<TAB>label<TAB>WxH` lines. Loading order is manifest order. Images
//! decode as 8-bit RGB and are bilinearly resized to the requested square
//! size.

use std::path::{Path, PathBuf};

use ndarray::Array3;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::views::{apply_spatial, SpatialParams};

pub const DEFAULT_MANIFEST: &str = "manifest.tsv";

/// One manifest line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: usize,
    pub width: usize,
    pub height: usize,
}

pub fn parse_manifest(manifest_path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(manifest_path)
        .map_err(|e| Error::ingest(manifest_path, format!("cannot read manifest: {e}")))?;
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::ingest(
                manifest_path,
                format!("line {}: expected 3 tab-separated fields, got {}", lineno + 1, fields.len()),
            ));
        }
        let label: usize = fields[1].trim().parse().map_err(|_| {
            Error::ingest(manifest_path, format!("line {}: label `{}` is not an integer", lineno + 1, fields[1]))
        })?;
        let (w, h) = fields[2]
            .trim()
            .split_once('x')
            .and_then(|(w, h)| Some((w.parse().ok()?, h.parse().ok()?)))
            .ok_or_else(|| {
                Error::ingest(
                    manifest_path,
                    format!("line {}: resolution `{}` is not WxH", lineno + 1, fields[2]),
                )
            })?;
        entries.push(ManifestEntry { path: PathBuf::from(fields[0]), label, width: w, height: h });
    }
    if entries.is_empty() {
        return Err(Error::ingest(manifest_path, "manifest lists no images"));
    }
    Ok(entries)
}

/// Loads every manifest entry, resized to image_size x image_size.
pub fn load_image_folder(
    root: &Path,
    manifest: Option<&Path>,
    image_size: usize,
) -> Result<Dataset> {
    let manifest_path = match manifest {
        Some(p) if p.is_absolute() => p.to_path_buf(),
        Some(p) => root.join(p),
        None => root.join(DEFAULT_MANIFEST),
    };
    let entries = parse_manifest(&manifest_path)?;
    let mut images = Vec::with_capacity(entries.len());
    let mut labels = Vec::with_capacity(entries.len());
    let mut max_label = 0;
    for entry in &entries {
        let path = if entry.path.is_absolute() { entry.path.clone() } else { root.join(&entry.path) };
        let decoded = image::open(&path)
            .map_err(|e| Error::ingest(&path, format!("cannot decode image: {e}")))?
            .to_rgb8();
        let (w, h) = (decoded.width() as usize, decoded.height() as usize);
        if w != entry.width || h != entry.height {
            return Err(Error::ingest(
                &path,
                format!("manifest says {}x{}, file is {w}x{h}", entry.width, entry.height),
            ));
        }
        let mut array = Array3::<f32>::zeros((h, w, 3));
        for (x, y, pixel) in decoded.enumerate_pixels() {
            for c in 0..3 {
                array[[y as usize, x as usize, c]] = pixel.0[c] as f32 / 255.0;
            }
        }
        let resized = if (h, w) == (image_size, image_size) {
            array
        } else {
            apply_spatial(
                &array.view(),
                &SpatialParams {
                    crop_x: 0,
                    crop_y: 0,
                    crop_w: w,
                    crop_h: h,
                    hflip: false,
                    vflip: false,
                    out_size: image_size,
                },
            )
        };
        images.push(resized);
        labels.push(entry.label);
        max_label = max_label.max(entry.label);
    }
    Ok(Dataset { images, labels, num_classes: max_label + 1, image_size })
}

/// Writes a dataset as 8-bit PNGs plus a manifest, producing a folder that
/// `load_image_folder` accepts.
pub fn write_image_folder(dataset: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = String::from("# path\tlabel\tresolution\n");
    for (i, (array, &label)) in dataset.images.iter().zip(&dataset.labels).enumerate() {
        let (h, w, _) = array.dim();
        let mut img = image::RgbImage::new(w as u32, h as u32);
        for (x, y, pixel) in img.enumerate_pixels_mut() {
            for c in 0..3 {
                let v = array[[y as usize, x as usize, c]];
                pixel.0[c] = (v * 255.0).round().clamp(0.0, 255.0) as u8;
            }
        }
        let name = format!("img_{i:05}_c{label}.png");
        let path = dir.join(&name);
        img.save(&path).map_err(|e| Error::ingest(&path, format!("cannot write png: {e}")))?;
        manifest.push_str(&format!("{name}\t{label}\t{w}x{h}\n"));
    }
    std::fs::write(dir.join(DEFAULT_MANIFEST), manifest)?;
    Ok(())
}
