use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use super::preprocess::{check_resolution, preprocess, RawImage};
use crate::error::{Error, Result};
use crate::ImageTensor;

/// Supplies preprocessed images by id. Implementations must be safe to call
/// from several threads.
pub trait ImageSource: Sync {
    fn resolution(&self) -> usize;

    fn load(&self, image_id: &str) -> Result<ImageTensor>;

    fn load_many(&self, ids: &[String]) -> Result<Vec<ImageTensor>> {
        ids.iter().map(|id| self.load(id)).collect()
    }
}

/// Reads raster files named by image id from a directory and preprocesses
/// them on first access. Decoded images are cached in memory when
/// `with_cache` is set.
pub struct DirectorySource {
    dir: PathBuf,
    resolution: usize,
    cache: Option<RwLock<HashMap<String, ImageTensor>>>,
}

impl DirectorySource {
    pub fn new(dir: impl Into<PathBuf>, resolution: usize) -> Result<Self> {
        check_resolution(resolution)?;
        let dir = dir.into();
        if !dir.is_dir() {
            return Err(Error::Config(format!(
                "image directory {} does not exist",
                dir.display()
            )));
        }
        Ok(Self {
            dir,
            resolution,
            cache: None,
        })
    }

    pub fn with_cache(mut self) -> Self {
        self.cache = Some(RwLock::new(HashMap::new()));
        self
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

/// Decodes and preprocesses a single raster file.
pub fn load_image_file(path: &Path, resolution: usize) -> Result<ImageTensor> {
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    preprocess(&RawImage::from(&img), resolution)
}

impl ImageSource for DirectorySource {
    fn resolution(&self) -> usize {
        self.resolution
    }

    fn load(&self, image_id: &str) -> Result<ImageTensor> {
        if let Some(cache) = &self.cache {
            if let Some(img) = cache.read().unwrap().get(image_id) {
                return Ok(img.clone());
            }
        }
        let img = load_image_file(&self.dir.join(image_id), self.resolution)?;
        if let Some(cache) = &self.cache {
            cache.write().unwrap().insert(image_id.to_string(), img.clone());
        }
        Ok(img)
    }
}

/// Preprocessed images held in memory.
#[derive(Debug, Clone, Default)]
pub struct MemorySource {
    resolution: usize,
    images: HashMap<String, ImageTensor>,
}

impl MemorySource {
    pub fn new(resolution: usize) -> Self {
        Self {
            resolution,
            images: HashMap::new(),
        }
    }

    pub fn insert(&mut self, image_id: impl Into<String>, image: ImageTensor) -> Result<()> {
        if image.height() != self.resolution || image.width() != self.resolution {
            return Err(Error::Shape(format!(
                "image is {}x{}, source resolution is {}",
                image.height(),
                image.width(),
                self.resolution
            )));
        }
        self.images.insert(image_id.into(), image);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

impl ImageSource for MemorySource {
    fn resolution(&self) -> usize {
        self.resolution
    }

    fn load(&self, image_id: &str) -> Result<ImageTensor> {
        self.images
            .get(image_id)
            .cloned()
            .ok_or_else(|| Error::Config(format!("no image with id {image_id}")))
    }
}
