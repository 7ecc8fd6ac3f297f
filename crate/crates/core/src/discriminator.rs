//! Two-headed discriminator: a shared strided convolutional trunk followed by
//! a real/fake head and an attribute head. The trunk activations double as
//! the feature maps matched by the feature-matching loss.

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{instance_norm, leaky_relu, Conv2d, Init, Linear, ParamStore};

const KERNEL: usize = 4;
const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    pub resolution: usize,
    pub depth: usize,
    pub base_channels: usize,
    pub max_channels: usize,
}

impl DiscriminatorConfig {
    /// Deliberately narrow: wider trunks win the toy game outright and the
    /// generator stops learning reconstruction.
    pub fn desk() -> Self {
        Self {
            resolution: 32,
            depth: 4,
            base_channels: 4,
            max_channels: 512,
        }
    }

    pub fn full_scale() -> Self {
        Self {
            resolution: 128,
            depth: 6,
            base_channels: 64,
            max_channels: 512,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution < 2 || !self.resolution.is_power_of_two() {
            return Err(Error::Config(format!(
                "discriminator: resolution {} is not a power of two",
                self.resolution
            )));
        }
        if self.depth == 0 || self.depth >= usize::BITS as usize || (1usize << self.depth) > self.resolution {
            return Err(Error::Config(format!(
                "discriminator: depth {} needs 2^depth <= resolution {}",
                self.depth, self.resolution
            )));
        }
        if self.base_channels == 0 || self.max_channels < self.base_channels {
            return Err(Error::Config("discriminator: invalid channel widths".into()));
        }
        Ok(())
    }

    pub fn channels(&self, level: usize) -> usize {
        let scaled = self.base_channels.saturating_mul(1usize.checked_shl(level as u32).unwrap_or(usize::MAX));
        scaled.min(self.max_channels)
    }
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self::desk()
    }
}

/// Per-image outputs of one discriminator pass.
pub struct DiscriminatorOutput {
    /// Probability that each image is real, shape `(N,)`.
    pub d_s: Tensor,
    /// Probability that each image has the attribute, shape `(N,)`.
    pub d_cls: Tensor,
    /// Trunk activations in forward order, one per block.
    pub features: Vec<Tensor>,
}

struct TrunkBlock {
    conv: Conv2d,
    normalize: bool,
}

pub struct Discriminator {
    config: DiscriminatorConfig,
    store: ParamStore,
    trunk: Vec<TrunkBlock>,
    source_head: Linear,
    class_head: Linear,
}

pub fn build_discriminator(
    config: &DiscriminatorConfig,
    device: &Device,
    dtype: DType,
    seed: u64,
) -> Result<Discriminator> {
    Discriminator::new(config, device, dtype, seed)
}

fn sigmoid(x: &Tensor) -> Result<Tensor> {
    Ok((x.neg()?.exp()? + 1.0)?.recip()?)
}

impl Discriminator {
    pub fn new(config: &DiscriminatorConfig, device: &Device, dtype: DType, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new(device.clone(), dtype);
        let mut init = Init::new(seed);
        let mut trunk = Vec::with_capacity(config.depth);
        let mut in_ch = 3;
        for level in 0..config.depth {
            let out_ch = config.channels(level);
            let conv = Conv2d::new(&mut store, &mut init, &format!("trunk{level}"), in_ch, out_ch, KERNEL, 2, 1)?;
            trunk.push(TrunkBlock {
                conv,
                // The heads average the last map spatially; normalizing it
                // first would leave each channel's mean at zero.
                normalize: level > 0 && level + 1 < config.depth,
            });
            in_ch = out_ch;
        }
        let source_head = Linear::new(&mut store, &mut init, "source_head", in_ch, 1)?;
        let class_head = Linear::new(&mut store, &mut init, "class_head", in_ch, 1)?;
        Ok(Self {
            config: config.clone(),
            store,
            trunk,
            source_head,
            class_head,
        })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    /// Parameter names belonging to the shared trunk.
    pub fn trunk_param_names(&self) -> Vec<String> {
        self.store
            .vars()
            .iter()
            .map(|(n, _)| n.clone())
            .filter(|n| n.starts_with("trunk"))
            .collect()
    }

    pub fn discriminate(&self, x: &Tensor) -> Result<DiscriminatorOutput> {
        let r = self.config.resolution;
        match x.dims() {
            [_, 3, h, w] if *h == r && *w == r => {}
            dims => {
                return Err(Error::Shape(format!(
                    "discriminator expects (N, 3, {r}, {r}) input, got {dims:?}"
                )))
            }
        }
        let mut h = x.to_dtype(self.store.dtype())?;
        let mut features = Vec::with_capacity(self.trunk.len());
        for block in &self.trunk {
            h = block.conv.forward(&h)?;
            if block.normalize {
                h = instance_norm(&h)?;
            }
            h = leaky_relu(&h, LEAKY_SLOPE)?;
            features.push(h.clone());
        }
        let pooled = h.mean((2, 3))?;
        let d_s = sigmoid(&self.source_head.forward(&pooled)?)?.squeeze(1)?;
        let d_cls = sigmoid(&self.class_head.forward(&pooled)?)?.squeeze(1)?;
        Ok(DiscriminatorOutput { d_s, d_cls, features })
    }

    /// Global-average-pooled last trunk activation, one row per image. Used
    /// as a learned embedding by the evaluation tools.
    pub fn embed(&self, x: &Tensor) -> Result<Tensor> {
        let out = self.discriminate(x)?;
        Ok(out.features.last().expect("depth >= 1").mean((2, 3))?)
    }
}
