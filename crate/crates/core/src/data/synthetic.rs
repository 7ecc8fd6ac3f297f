//! Toy dataset for desk-scale experiments: smooth two-colour gradient
//! backgrounds, with the attribute being a white square in the top-left
//! corner.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{preprocess, AttributeRow, AttributeTable, MemorySource, RawImage};
use crate::error::{Error, Result};
use candle_core::{DType, Tensor};

pub const SQUARE_ATTRIBUTE: &str = "Square_Top_Left";

/// File name of the attribute list written next to the images.
pub const ATTRIBUTE_FILE: &str = "list_attr.txt";

/// Side of the attribute square: a quarter of the image side.
pub fn square_side(resolution: usize) -> usize {
    resolution / 4
}

pub fn in_square(resolution: usize, y: usize, x: usize) -> bool {
    let s = square_side(resolution);
    y < s && x < s
}

pub struct SquareDataset {
    pub resolution: usize,
    pub table: AttributeTable,
    /// Images aligned with `table.rows()`.
    pub images: Vec<RawImage>,
}

/// Generates `per_class` images with the square and `per_class` without,
/// in a seeded random order.
pub fn square_dataset(per_class: usize, resolution: usize, seed: u64) -> SquareDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<u8> = (0..2 * per_class).map(|i| u8::from(i < per_class)).collect();
    labels.shuffle(&mut rng);
    let mut rows = Vec::with_capacity(labels.len());
    let mut images = Vec::with_capacity(labels.len());
    for (i, &label) in labels.iter().enumerate() {
        images.push(render(resolution, label == 1, &mut rng));
        rows.push(AttributeRow {
            image_id: format!("{i:06}.png"),
            labels: vec![label],
        });
    }
    let table = AttributeTable::new(vec![SQUARE_ATTRIBUTE.to_string()], rows)
        .expect("generated table is well formed");
    SquareDataset {
        resolution,
        table,
        images,
    }
}

fn render(resolution: usize, with_square: bool, rng: &mut ChaCha8Rng) -> RawImage {
    let a: [f32; 3] = std::array::from_fn(|_| rng.random_range(40.0..200.0));
    let b: [f32; 3] = std::array::from_fn(|_| rng.random_range(40.0..200.0));
    let angle: f32 = rng.random_range(0.0..std::f32::consts::TAU);
    let (dy, dx) = angle.sin_cos();
    let half = (resolution as f32 - 1.0) / 2.0;
    let reach = half * (dx.abs() + dy.abs()).max(1e-3);
    let mut data = Vec::with_capacity(resolution * resolution * 3);
    for y in 0..resolution {
        for x in 0..resolution {
            let t = (((x as f32 - half) * dx + (y as f32 - half) * dy) / reach + 1.0) / 2.0;
            for c in 0..3 {
                let v = if with_square && in_square(resolution, y, x) {
                    255.0
                } else {
                    a[c] + t * (b[c] - a[c])
                };
                data.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    RawImage {
        height: resolution,
        width: resolution,
        channels: 3,
        data,
    }
}

impl SquareDataset {
    pub fn to_memory_source(&self) -> Result<MemorySource> {
        let mut source = MemorySource::new(self.resolution);
        for (row, raw) in self.table.rows().iter().zip(&self.images) {
            source.insert(row.image_id.clone(), preprocess(raw, self.resolution)?)?;
        }
        Ok(source)
    }

    /// Writes every image as PNG plus a CelebA-layout attribute list into
    /// `dir`; returns the attribute file path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (row, raw) in self.table.rows().iter().zip(&self.images) {
            let path = dir.join(&row.image_id);
            image::RgbImage::from_raw(raw.width as u32, raw.height as u32, raw.data.clone())
                .expect("buffer matches dimensions")
                .save(&path)
                .map_err(|e| Error::Image {
                    path: path.clone(),
                    message: e.to_string(),
                })?;
        }
        let attr = dir.join(ATTRIBUTE_FILE);
        self.table.save(&attr)?;
        Ok(attr)
    }
}

/// Mean absolute pixel change per region between `x` and its translation:
/// `(inside, outside)` of the top-left attribute square.
pub fn square_locality(x: &Tensor, translated: &Tensor) -> Result<(f64, f64)> {
    let r = x.dim(3)?;
    let s = square_side(r);
    let diff = (translated - x)?.abs()?.to_dtype(DType::F64)?;
    let total = diff.sum_all()?.to_scalar::<f64>()?;
    let inside = diff.narrow(2, 0, s)?.narrow(3, 0, s)?.sum_all()?.to_scalar::<f64>()?;
    let n = x.dim(0)? * x.dim(1)?;
    let inside_count = (n * s * s) as f64;
    let outside_count = (n * (r * r - s * s)) as f64;
    Ok((inside / inside_count, (total - inside) / outside_count))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ImageSource;

    #[test]
    fn classes_are_balanced_and_square_is_white() {
        let ds = square_dataset(6, 32, 1);
        let labels = ds.table.labels(&SQUARE_ATTRIBUTE.into()).unwrap();
        assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 6);
        let source = ds.to_memory_source().unwrap();
        for (row, &l) in ds.table.rows().iter().zip(&labels) {
            let img = source.load(&row.image_id).unwrap();
            let corner = img.get(3, 3, 0);
            if l == 1 {
                assert_eq!(corner, 1.0);
            } else {
                assert!(corner < 0.6);
            }
        }
    }

    #[test]
    fn same_seed_same_pixels() {
        let a = square_dataset(3, 16, 42);
        let b = square_dataset(3, 16, 42);
        assert_eq!(a.images, b.images);
        assert_eq!(a.table, b.table);
    }

    #[test]
    fn locality_splits_regions() {
        let x = Tensor::zeros((1, 3, 8, 8), DType::F32, &candle_core::Device::Cpu).unwrap();
        let mut v = vec![0f32; 3 * 64];
        for c in 0..3 {
            for y in 0..2 {
                for xx in 0..2 {
                    v[c * 64 + y * 8 + xx] = 1.0;
                }
            }
        }
        let t = Tensor::from_vec(v, (1, 3, 8, 8), &candle_core::Device::Cpu).unwrap();
        let (inside, outside) = square_locality(&x, &t).unwrap();
        assert_eq!(inside, 1.0);
        assert_eq!(outside, 0.0);
    }
}
