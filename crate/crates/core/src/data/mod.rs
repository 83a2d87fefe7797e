//! Datasets: in-memory labelled images from either the procedural generator
//! or a manifest-listed image folder, plus the deterministic batch schedule.

pub mod batches;
pub mod folder;
pub mod synthetic;

use ndarray::Array3;

use crate::config::{DataConfig, DataSource};
use crate::error::{Error, Result};

pub use batches::{batches, epoch_permutation};
pub use folder::{load_image_folder, parse_manifest, write_image_folder, ManifestEntry};
pub use synthetic::generate_synthetic;

/// Labelled RGB images, all square with the same side, values in [0, 1].
#[derive(Clone, Debug)]
pub struct Dataset {
    pub images: Vec<Array3<f32>>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub image_size: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// Materializes the dataset a config describes, resized to the backbone's
/// input side.
pub fn load_dataset(data: &DataConfig, image_size: usize) -> Result<Dataset> {
    match data.source {
        DataSource::Synthetic => {
            Ok(generate_synthetic(data.num_images, image_size, data.num_classes, data.seed))
        }
        DataSource::Folder => {
            let root = data
                .root
                .as_deref()
                .ok_or_else(|| Error::config("folder source requires data.root"))?;
            load_image_folder(root, data.manifest.as_deref(), image_size)
        }
    }
}
