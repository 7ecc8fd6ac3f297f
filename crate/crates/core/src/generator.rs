//! The single attribute-inverting generator: a U-net whose skip connections
//! pass through 1×1 convolutions that shrink the shared channels, a quarter of
//! the encoder width on shallow levels and half on deep ones.

use candle_core::{DType, Device, Tensor, TensorId};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{instance_norm, leaky_relu, Conv2d, ConvTranspose2d, Init, ParamStore};

const KERNEL: usize = 4;
const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub resolution: usize,
    /// Number of stride-2 down (and up) sampling levels.
    pub depth: usize,
    pub base_channels: usize,
    pub max_channels: usize,
    pub high_level_ratio: f64,
    pub low_level_ratio: f64,
    /// Skip levels at or above this index count as high-level.
    pub level_boundary: usize,
}

impl GeneratorConfig {
    /// Default boundary between low- and high-level skips for a given depth.
    pub fn default_boundary(depth: usize) -> usize {
        depth / 2
    }

    pub fn desk() -> Self {
        Self::with_shape(32, 5, 16)
    }

    /// 128×128 inputs reduced to a 1×1 bottleneck.
    pub fn full_scale() -> Self {
        Self::with_shape(128, 7, 64)
    }

    pub fn with_shape(resolution: usize, depth: usize, base_channels: usize) -> Self {
        Self {
            resolution,
            depth,
            base_channels,
            max_channels: 512,
            high_level_ratio: 0.5,
            low_level_ratio: 0.25,
            level_boundary: Self::default_boundary(depth),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(format!("generator: {m}")));
        if self.resolution < 2 || !self.resolution.is_power_of_two() {
            return fail(format!("resolution {} is not a power of two", self.resolution));
        }
        if self.depth == 0 || self.depth >= usize::BITS as usize || (1usize << self.depth) > self.resolution
        {
            return fail(format!(
                "depth {} needs 2^depth <= resolution {}",
                self.depth, self.resolution
            ));
        }
        if self.base_channels == 0 || self.max_channels < self.base_channels {
            return fail(format!(
                "channels base {} / max {} are invalid",
                self.base_channels, self.max_channels
            ));
        }
        for (name, r) in [("high_level_ratio", self.high_level_ratio), ("low_level_ratio", self.low_level_ratio)] {
            if !(r > 0.0 && r <= 1.0) {
                return fail(format!("{name} {r} outside (0, 1]"));
            }
        }
        if self.level_boundary > self.depth {
            return fail(format!(
                "level_boundary {} exceeds depth {}",
                self.level_boundary, self.depth
            ));
        }
        Ok(())
    }

    /// Output channels of encoder level `level`.
    pub fn channels(&self, level: usize) -> usize {
        let scaled = self.base_channels.saturating_mul(1usize.checked_shl(level as u32).unwrap_or(usize::MAX));
        scaled.min(self.max_channels)
    }
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self::desk()
    }
}

/// Width of the 1×1 projection on the skip connection at `level`.
pub fn skip_bottleneck_channels(in_channels: usize, level: usize, config: &GeneratorConfig) -> usize {
    let ratio = if level >= config.level_boundary {
        config.high_level_ratio
    } else {
        config.low_level_ratio
    };
    ((in_channels as f64 * ratio).floor() as usize).max(1)
}

struct EncoderBlock {
    conv: Conv2d,
    normalize: bool,
}

/// Structural description of one skip connection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SkipInfo {
    pub level: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
}

pub struct Generator {
    config: GeneratorConfig,
    store: ParamStore,
    encoder: Vec<EncoderBlock>,
    /// `skips[l]` gates encoder level `l`; the deepest level has no skip.
    skips: Vec<Conv2d>,
    /// `decoder[l]` upsamples into the spatial size of encoder level `l - 1`
    /// (the input size for `l = 0`).
    decoder: Vec<ConvTranspose2d>,
}

pub fn build_generator(config: &GeneratorConfig, device: &Device, dtype: DType, seed: u64) -> Result<Generator> {
    Generator::new(config, device, dtype, seed)
}

impl Generator {
    pub fn new(config: &GeneratorConfig, device: &Device, dtype: DType, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new(device.clone(), dtype);
        let mut init = Init::new(seed);
        let depth = config.depth;

        let mut encoder = Vec::with_capacity(depth);
        let mut in_ch = 3;
        for level in 0..depth {
            let out_ch = config.channels(level);
            let conv = Conv2d::new(&mut store, &mut init, &format!("enc{level}"), in_ch, out_ch, KERNEL, 2, 1)?;
            let spatial = config.resolution >> (level + 1);
            // Instance statistics of a single pixel are degenerate.
            encoder.push(EncoderBlock {
                conv,
                normalize: level > 0 && spatial > 1,
            });
            in_ch = out_ch;
        }

        let mut skips = Vec::with_capacity(depth - 1);
        for level in 0..depth - 1 {
            let c = config.channels(level);
            let out = skip_bottleneck_channels(c, level, config);
            skips.push(Conv2d::new(&mut store, &mut init, &format!("skip{level}"), c, out, 1, 1, 0)?);
        }

        let mut decoder: Vec<Option<ConvTranspose2d>> = (0..depth).map(|_| None).collect();
        for level in (0..depth).rev() {
            let input = if level == depth - 1 {
                config.channels(level)
            } else {
                config.channels(level) + skips[level].out_channels()
            };
            let output = if level == 0 { 3 } else { config.channels(level - 1) };
            decoder[level] = Some(ConvTranspose2d::new(
                &mut store,
                &mut init,
                &format!("dec{level}"),
                input,
                output,
                KERNEL,
                2,
                1,
            )?);
        }

        Ok(Self {
            config: config.clone(),
            store,
            encoder,
            skips,
            decoder: decoder.into_iter().map(|d| d.expect("every level built")).collect(),
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    /// Identities of all trainable tensors.
    pub fn param_ids(&self) -> Vec<TensorId> {
        self.store.vars().iter().map(|(_, v)| v.as_tensor().id()).collect()
    }

    pub fn skip_info(&self) -> Vec<SkipInfo> {
        self.skips
            .iter()
            .enumerate()
            .map(|(level, s)| SkipInfo {
                level,
                in_channels: s.in_channels(),
                out_channels: s.out_channels(),
                kernel: s.kernel_size(),
            })
            .collect()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let r = self.config.resolution;
        match x.dims() {
            [_, 3, h, w] if *h == r && *w == r => Ok(()),
            dims => Err(Error::Shape(format!(
                "generator expects (N, 3, {r}, {r}) input, got {dims:?}"
            ))),
        }
    }

    /// Maps an `(N, 3, H, W)` batch in `[-1, 1]` to its attribute-inverted
    /// counterpart of the same shape.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let x = x.to_dtype(self.store.dtype())?;
        let mut features = Vec::with_capacity(self.encoder.len());
        let mut h = x;
        for block in &self.encoder {
            h = block.conv.forward(&h)?;
            if block.normalize {
                h = instance_norm(&h)?;
            }
            h = leaky_relu(&h, LEAKY_SLOPE)?;
            features.push(h.clone());
        }
        let depth = self.config.depth;
        let mut h = features[depth - 1].clone();
        for level in (0..depth).rev() {
            if level < depth - 1 {
                let gated = self.skips[level].forward(&features[level])?;
                h = Tensor::cat(&[&h, &gated], 1)?;
            }
            h = self.decoder[level].forward(&h)?;
            h = if level == 0 {
                h.tanh()?
            } else {
                instance_norm(&h)?.relu()?
            };
        }
        Ok(h)
    }

    /// Translates and translates back with the same parameters:
    /// returns `(G(x), G(G(x)))`.
    pub fn cycle(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        cycle_with(|t| self.forward(t), x)
    }
}

/// Applies one translation twice, returning `(f(x), f(f(x)))`.
pub fn cycle_with(translate: impl Fn(&Tensor) -> Result<Tensor>, x: &Tensor) -> Result<(Tensor, Tensor)> {
    let x1 = translate(x)?;
    let x0_rec = translate(&x1)?;
    Ok((x1, x0_rec))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bottleneck_rule_examples() {
        let cfg = GeneratorConfig::full_scale();
        let high = cfg.level_boundary;
        assert_eq!(skip_bottleneck_channels(512, high, &cfg), 256);
        assert_eq!(skip_bottleneck_channels(64, 0, &cfg), 16);
        assert_eq!(skip_bottleneck_channels(2, 0, &cfg), 1);
    }

    #[test]
    fn high_level_keeps_more_channels() {
        let cfg = GeneratorConfig::desk();
        for c in 1..600 {
            assert!(skip_bottleneck_channels(c, cfg.depth - 1, &cfg) >= skip_bottleneck_channels(c, 0, &cfg));
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = GeneratorConfig::full_scale();
        cfg.depth = 8;
        assert!(matches!(
            Generator::new(&cfg, &Device::Cpu, DType::F32, 0),
            Err(Error::Config(_))
        ));
        let mut cfg = GeneratorConfig::desk();
        cfg.low_level_ratio = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = GeneratorConfig::desk();
        cfg.level_boundary = 6;
        assert!(cfg.validate().is_err());
        let mut cfg = GeneratorConfig::desk();
        cfg.resolution = 48;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn desk_forward_shape_and_range() {
        let g = Generator::new(&GeneratorConfig::desk(), &Device::Cpu, DType::F32, 1).unwrap();
        let x = Tensor::rand(-1f32, 1.0, (4, 3, 32, 32), &Device::Cpu).unwrap();
        let y = g.forward(&x).unwrap();
        assert_eq!(y.dims(), x.dims());
        let max = y.abs().unwrap().max_all().unwrap().to_scalar::<f32>().unwrap();
        assert!(max <= 1.0);
        let again = g.forward(&x).unwrap();
        let diff = (y - again).unwrap().abs().unwrap().max_all().unwrap().to_scalar::<f32>().unwrap();
        assert_eq!(diff, 0.0);
    }

    #[test]
    fn full_scale_reaches_single_pixel() {
        let cfg = GeneratorConfig::full_scale();
        cfg.validate().unwrap();
        assert_eq!(cfg.resolution >> cfg.depth, 1);
    }

    #[test]
    fn wrong_input_shape_is_rejected() {
        let g = Generator::new(&GeneratorConfig::with_shape(16, 2, 4), &Device::Cpu, DType::F32, 1).unwrap();
        let x = Tensor::zeros((1, 3, 32, 32), DType::F32, &Device::Cpu).unwrap();
        assert!(matches!(g.forward(&x), Err(Error::Shape(_))));
        let x = Tensor::zeros((1, 1, 16, 16), DType::F32, &Device::Cpu).unwrap();
        assert!(matches!(g.forward(&x), Err(Error::Shape(_))));
    }

    #[test]
    fn identity_translation_cycles_to_input() {
        let x = Tensor::rand(-1f32, 1.0, (2, 3, 8, 8), &Device::Cpu).unwrap();
        let (x1, x0) = cycle_with(|t| Ok(t.clone()), &x).unwrap();
        assert_eq!(x1.id(), x.id());
        let diff = (x0 - &x).unwrap().abs().unwrap().max_all().unwrap().to_scalar::<f32>().unwrap();
        assert_eq!(diff, 0.0);
    }

    #[test]
    fn cycle_reuses_parameters() {
        let g = Generator::new(&GeneratorConfig::with_shape(16, 3, 4), &Device::Cpu, DType::F32, 1).unwrap();
        let before = g.param_ids();
        let x = Tensor::rand(-1f32, 1.0, (2, 3, 16, 16), &Device::Cpu).unwrap();
        let (x1, x0) = g.cycle(&x).unwrap();
        assert_eq!(x0.dims(), x.dims());
        assert_eq!(g.param_ids(), before);
        // reconstruction equals a second application of the same network
        let direct = g.forward(&x1).unwrap();
        let diff = (direct - x0).unwrap().abs().unwrap().max_all().unwrap().to_scalar::<f32>().unwrap();
        assert_eq!(diff, 0.0);
        // and its gradient reaches every parameter
        let grads = g.forward(&g.forward(&x).unwrap()).unwrap().mean_all().unwrap().backward().unwrap();
        for (name, var) in g.params().vars() {
            assert!(grads.get(var.as_tensor()).is_some(), "{name} has no gradient");
        }
    }
}
