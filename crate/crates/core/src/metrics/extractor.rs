use candle_core::{DType, Device};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Matrix;
use crate::discriminator::Discriminator;
use crate::error::{Error, Result};
use crate::image_tensor::stack_images;
use crate::ImageTensor;

/// Maps images to fixed-width feature rows. Implementations must be
/// deterministic.
///
/// The face-recognition embedding used for DFN and the Inception pool
/// features used for FID plug in here; the built-in extractors need no
/// pretrained weights.
pub trait FeatureExtractor {
    fn name(&self) -> &str;

    fn output_dim(&self) -> usize;

    fn extract(&self, images: &[ImageTensor]) -> Result<Matrix>;
}

fn check_sizes(images: &[ImageTensor], resolution: usize) -> Result<()> {
    match images.iter().find(|i| i.height() != resolution || i.width() != resolution) {
        Some(img) => Err(Error::Shape(format!(
            "extractor expects {resolution}x{resolution} images, got {}x{}",
            img.height(),
            img.width()
        ))),
        None => Ok(()),
    }
}

/// Raw pixels as features.
pub struct FlattenExtractor {
    resolution: usize,
}

impl FlattenExtractor {
    pub fn new(resolution: usize) -> Self {
        Self { resolution }
    }
}

impl FeatureExtractor for FlattenExtractor {
    fn name(&self) -> &str {
        "flatten"
    }

    fn output_dim(&self) -> usize {
        self.resolution * self.resolution * 3
    }

    fn extract(&self, images: &[ImageTensor]) -> Result<Matrix> {
        check_sizes(images, self.resolution)?;
        Ok(Matrix::from_fn(images.len(), self.output_dim(), |r, c| {
            f64::from(images[r].data()[c])
        }))
    }
}

/// Shifted pixels (`[-1, 1] -> [0, 2]`, so that no image has zero norm)
/// under a fixed Gaussian random projection.
pub struct RandomProjectionExtractor {
    resolution: usize,
    projection: Matrix,
}

impl RandomProjectionExtractor {
    pub fn new(resolution: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = resolution * resolution * 3;
        let scale = 1.0 / (input as f64).sqrt();
        let projection = Matrix::from_fn(input, dim, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * scale
        });
        Self {
            resolution,
            projection,
        }
    }
}

impl FeatureExtractor for RandomProjectionExtractor {
    fn name(&self) -> &str {
        "projection"
    }

    fn output_dim(&self) -> usize {
        self.projection.ncols()
    }

    fn extract(&self, images: &[ImageTensor]) -> Result<Matrix> {
        check_sizes(images, self.resolution)?;
        let pixels = Matrix::from_fn(images.len(), self.projection.nrows(), |r, c| {
            f64::from(images[r].data()[c]) + 1.0
        });
        Ok(pixels * &self.projection)
    }
}

/// Pooled last-layer trunk activations of a trained discriminator.
pub struct DiscriminatorEmbedder<'a> {
    discriminator: &'a Discriminator,
    batch_size: usize,
}

impl<'a> DiscriminatorEmbedder<'a> {
    pub fn new(discriminator: &'a Discriminator) -> Self {
        Self {
            discriminator,
            batch_size: 64,
        }
    }
}

impl FeatureExtractor for DiscriminatorEmbedder<'_> {
    fn name(&self) -> &str {
        "discriminator"
    }

    fn output_dim(&self) -> usize {
        let cfg = self.discriminator.config();
        cfg.channels(cfg.depth - 1)
    }

    fn extract(&self, images: &[ImageTensor]) -> Result<Matrix> {
        let dim = self.output_dim();
        let mut out = Matrix::zeros(images.len(), dim);
        let mut row = 0;
        for chunk in images.chunks(self.batch_size) {
            let batch = stack_images(chunk, &Device::Cpu, self.discriminator.params().dtype())?;
            let emb = self
                .discriminator
                .embed(&batch)?
                .to_dtype(DType::F64)?
                .to_vec2::<f64>()?;
            for values in emb {
                for (c, v) in values.into_iter().enumerate() {
                    out[(row, c)] = v;
                }
                row += 1;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_matches_pixels() {
        let img = ImageTensor::new(2, 2, (0..12).map(|i| i as f32 / 12.0).collect()).unwrap();
        let f = FlattenExtractor::new(2).extract(std::slice::from_ref(&img)).unwrap();
        assert_eq!(f.shape(), (1, 12));
        assert_eq!(f[(0, 5)], f64::from(img.data()[5]));
    }

    #[test]
    fn projection_is_deterministic() {
        let img = ImageTensor::filled(4, 4, 0.25);
        let a = RandomProjectionExtractor::new(4, 8, 7).extract(std::slice::from_ref(&img)).unwrap();
        let b = RandomProjectionExtractor::new(4, 8, 7).extract(&[img]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.ncols(), 8);
    }

    #[test]
    fn wrong_size_rejected() {
        let img = ImageTensor::filled(4, 4, 0.0);
        assert!(FlattenExtractor::new(8).extract(&[img]).is_err());
    }
}
