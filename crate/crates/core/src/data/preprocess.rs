use crate::error::{Error, Result};
use crate::ImageTensor;

/// An 8-bit image as decoded from disk, channel-interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImage {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl RawImage {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "raw buffer holds {} bytes, expected {height}x{width}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: u8) -> Self {
        Self {
            height,
            width,
            channels: 3,
            data: vec![value; height * width * 3],
        }
    }

    fn at(&self, y: usize, x: usize, c: usize) -> f32 {
        f32::from(self.data[(y * self.width + x) * self.channels + c])
    }
}

impl From<&image::DynamicImage> for RawImage {
    fn from(img: &image::DynamicImage) -> Self {
        use image::DynamicImage as D;
        let (w, h) = (img.width() as usize, img.height() as usize);
        let (channels, data) = match img {
            D::ImageLuma8(i) => (1, i.as_raw().clone()),
            D::ImageLumaA8(i) => (2, i.as_raw().clone()),
            D::ImageRgba8(i) => (4, i.as_raw().clone()),
            other => (3, other.to_rgb8().into_raw()),
        };
        Self {
            height: h,
            width: w,
            channels,
            data,
        }
    }
}

impl From<&image::RgbImage> for RawImage {
    fn from(img: &image::RgbImage) -> Self {
        Self {
            height: img.height() as usize,
            width: img.width() as usize,
            channels: 3,
            data: img.as_raw().clone(),
        }
    }
}

pub(crate) fn check_resolution(resolution: usize) -> Result<()> {
    if resolution < 8 || !resolution.is_power_of_two() {
        return Err(Error::Config(format!(
            "resolution {resolution} must be a power of two >= 8"
        )));
    }
    Ok(())
}

/// Center-crops the largest square, resamples it bilinearly to
/// `resolution × resolution` and maps `[0, 255]` affinely onto `[-1, 1]`.
pub fn preprocess(raw: &RawImage, resolution: usize) -> Result<ImageTensor> {
    check_resolution(resolution)?;
    if raw.channels != 3 {
        return Err(Error::Shape(format!(
            "expected a 3-channel image, got {} channels",
            raw.channels
        )));
    }
    if raw.height == 0 || raw.width == 0 {
        return Err(Error::Shape("image has zero extent".into()));
    }
    let side = raw.height.min(raw.width);
    let y0 = (raw.height - side) / 2;
    let x0 = (raw.width - side) / 2;
    let scale = side as f32 / resolution as f32;

    // Half-pixel-centred source coordinate and interpolation weight.
    let taps: Vec<(usize, usize, f32)> = (0..resolution)
        .map(|i| {
            let s = ((i as f32 + 0.5) * scale - 0.5).clamp(0.0, (side - 1) as f32);
            let lo = s.floor() as usize;
            let hi = (lo + 1).min(side - 1);
            (lo, hi, s - lo as f32)
        })
        .collect();

    let mut out = Vec::with_capacity(resolution * resolution * 3);
    for &(ya, yb, wy) in &taps {
        for &(xa, xb, wx) in &taps {
            for c in 0..3 {
                let p00 = raw.at(y0 + ya, x0 + xa, c);
                let p01 = raw.at(y0 + ya, x0 + xb, c);
                let p10 = raw.at(y0 + yb, x0 + xa, c);
                let p11 = raw.at(y0 + yb, x0 + xb, c);
                let top = p00 + wx * (p01 - p00);
                let bottom = p10 + wx * (p11 - p10);
                let v = top + wy * (bottom - top);
                out.push((v / 127.5 - 1.0).clamp(-1.0, 1.0));
            }
        }
    }
    ImageTensor::new(resolution, resolution, out)
}
