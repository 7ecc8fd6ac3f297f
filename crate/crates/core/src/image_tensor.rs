use candle_core::{DType, Device, Tensor};

use crate::error::{Error, Result};

/// An RGB image with channel-interleaved (height × width × 3) values in
/// `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl ImageTensor {
    pub const CHANNELS: usize = 3;

    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * Self::CHANNELS {
            return Err(Error::Shape(format!(
                "image buffer holds {} values, expected {height}x{width}x3",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!("pixel value {v} outside [-1, 1]")));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width * Self::CHANNELS],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * Self::CHANNELS + c]
    }

    /// Converts to 8-bit RGB by inverting the `[0, 255] -> [-1, 1]` map.
    pub fn to_rgb8(&self) -> image::RgbImage {
        let bytes = self
            .data
            .iter()
            .map(|v| ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8)
            .collect();
        image::RgbImage::from_raw(self.width as u32, self.height as u32, bytes)
            .expect("buffer length matches dimensions")
    }

    /// Channel-first `(3, H, W)` tensor.
    pub fn to_tensor(&self, device: &Device, dtype: DType) -> Result<Tensor> {
        let t = Tensor::from_slice(&self.data, (self.height, self.width, 3), device)?
            .permute((2, 0, 1))?
            .to_dtype(dtype)?
            .contiguous()?;
        Ok(t)
    }

    /// Inverse of [`ImageTensor::to_tensor`]; values are clamped into `[-1, 1]`.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let (c, h, w) = t.dims3()?;
        if c != Self::CHANNELS {
            return Err(Error::Shape(format!("expected 3 channels, got {c}")));
        }
        let data = t
            .to_dtype(DType::F32)?
            .permute((1, 2, 0))?
            .flatten_all()?
            .to_vec1::<f32>()?
            .into_iter()
            .map(|v| v.clamp(-1.0, 1.0))
            .collect();
        Ok(Self {
            height: h,
            width: w,
            data,
        })
    }
}

/// Stacks equally sized images into an `(N, 3, H, W)` batch.
pub fn stack_images(images: &[ImageTensor], device: &Device, dtype: DType) -> Result<Tensor> {
    let first = images
        .first()
        .ok_or_else(|| Error::Shape("cannot stack an empty image list".into()))?;
    let mut parts = Vec::with_capacity(images.len());
    for img in images {
        if img.height != first.height || img.width != first.width {
            return Err(Error::Shape(format!(
                "mixed image sizes {}x{} and {}x{}",
                first.height, first.width, img.height, img.width
            )));
        }
        parts.push(img.to_tensor(device, dtype)?);
    }
    Ok(Tensor::stack(&parts, 0)?)
}

/// Splits an `(N, 3, H, W)` batch back into images.
pub fn unstack_images(batch: &Tensor) -> Result<Vec<ImageTensor>> {
    let n = batch.dim(0)?;
    (0..n)
        .map(|i| ImageTensor::from_tensor(&batch.get(i)?))
        .collect()
}
