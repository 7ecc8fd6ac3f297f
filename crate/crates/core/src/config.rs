//! Flat key-value run configuration. The same keys are accepted in a TOML
//! file and as command-line flags; flags win.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::discriminator::DiscriminatorConfig;
use crate::error::{Error, Result};
use crate::generator::GeneratorConfig;
use crate::losses::LossWeights;
use crate::metrics::DEFAULT_REDUCED_DIM;
use crate::trainer::TrainConfig;

/// Every configurable key. Unset keys fall back to the desk defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Directory holding the image files.
    #[arg(long)]
    pub dataset_dir: Option<PathBuf>,
    /// Attribute list in the CelebA text layout.
    #[arg(long)]
    pub attribute_file: Option<PathBuf>,
    /// Directory for every file a command writes.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Manifest CSV written by prepare-data.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Attribute to invert, by name.
    #[arg(long)]
    pub attribute: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Square working resolution (power of two).
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Held-out images per class.
    #[arg(long)]
    pub test_per_class: Option<usize>,

    #[arg(long)]
    pub g_depth: Option<usize>,
    #[arg(long)]
    pub g_base_channels: Option<usize>,
    #[arg(long)]
    pub g_max_channels: Option<usize>,
    /// Skip bottleneck ratio at and above the level boundary.
    #[arg(long)]
    pub g_high_ratio: Option<f64>,
    /// Skip bottleneck ratio below the level boundary.
    #[arg(long)]
    pub g_low_ratio: Option<f64>,
    #[arg(long)]
    pub g_level_boundary: Option<usize>,

    #[arg(long)]
    pub d_depth: Option<usize>,
    #[arg(long)]
    pub d_base_channels: Option<usize>,
    #[arg(long)]
    pub d_max_channels: Option<usize>,

    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    #[arg(long)]
    pub log_every: Option<usize>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long)]
    pub lambda3: Option<f64>,
    #[arg(long)]
    pub lambda4: Option<f64>,

    /// Feature extractor preset: stub (raw pixels), projection or discriminator.
    #[arg(long)]
    pub extractor: Option<String>,
    /// PCA target dimension before the Fréchet distance.
    #[arg(long)]
    pub pca_dim: Option<usize>,
    #[arg(long)]
    pub fid_epsilon: Option<f64>,
}

pub const DEFAULT_TEST_PER_CLASS: usize = 1000;
pub const EXTRACTOR_PRESETS: [&str; 3] = ["stub", "projection", "discriminator"];

macro_rules! overlay {
    ($base:ident, $top:ident, $($field:ident),* $(,)?) => {
        RunConfig { $($field: $top.$field.or($base.$field)),* }
    };
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: e
                .span()
                .map(|s| text[..s.start].matches('\n').count() + 1)
                .unwrap_or(0),
            message: e.message().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    /// Keys set in `top` replace those in `self`.
    pub fn overlay(self, top: RunConfig) -> RunConfig {
        let base = self;
        overlay!(
            base, top, dataset_dir, attribute_file, output_dir, manifest, attribute, seed, resolution,
            test_per_class, g_depth, g_base_channels, g_max_channels, g_high_ratio, g_low_ratio,
            g_level_boundary, d_depth, d_base_channels, d_max_channels, batch_size, steps, learning_rate,
            beta1, beta2, checkpoint_every, log_every, lambda1, lambda2, lambda3, lambda4, extractor,
            pca_dim, fid_epsilon,
        )
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn resolution(&self) -> usize {
        self.resolution.unwrap_or(GeneratorConfig::desk().resolution)
    }

    pub fn test_per_class(&self) -> usize {
        self.test_per_class.unwrap_or(DEFAULT_TEST_PER_CLASS)
    }

    pub fn pca_dim(&self) -> usize {
        self.pca_dim.unwrap_or(DEFAULT_REDUCED_DIM)
    }

    pub fn fid_epsilon(&self) -> f64 {
        self.fid_epsilon.unwrap_or(crate::metrics::DEFAULT_EPSILON)
    }

    pub fn extractor(&self) -> Result<&str> {
        let name = self.extractor.as_deref().unwrap_or("projection");
        if EXTRACTOR_PRESETS.contains(&name) {
            Ok(name)
        } else {
            Err(Error::Config(format!(
                "unknown extractor {name:?}; expected one of {}",
                EXTRACTOR_PRESETS.join(", ")
            )))
        }
    }

    pub fn require_path<'a>(&self, value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
        value
            .as_deref()
            .ok_or_else(|| Error::Config(format!("missing required key {key} (flag --{})", key.replace('_', "-"))))
    }

    pub fn require_attribute(&self) -> Result<&str> {
        self.attribute
            .as_deref()
            .ok_or_else(|| Error::Config("missing required key attribute (flag --attribute)".into()))
    }

    /// Unset depths follow the resolution: the generator reduces to a 1×1
    /// bottleneck and the discriminator stops one level earlier.
    pub fn generator_config(&self) -> GeneratorConfig {
        let mut g = GeneratorConfig::desk();
        g.resolution = self.resolution();
        g.depth = self.g_depth.unwrap_or(g.resolution.trailing_zeros() as usize);
        g.level_boundary = GeneratorConfig::default_boundary(g.depth);
        g.base_channels = self.g_base_channels.unwrap_or(g.base_channels);
        g.max_channels = self.g_max_channels.unwrap_or(g.max_channels);
        g.high_level_ratio = self.g_high_ratio.unwrap_or(g.high_level_ratio);
        g.low_level_ratio = self.g_low_ratio.unwrap_or(g.low_level_ratio);
        g.level_boundary = self.g_level_boundary.unwrap_or(g.level_boundary);
        g
    }

    pub fn discriminator_config(&self) -> DiscriminatorConfig {
        let mut d = DiscriminatorConfig::desk();
        d.resolution = self.resolution();
        d.depth = self
            .d_depth
            .unwrap_or((d.resolution.trailing_zeros() as usize).saturating_sub(1).max(1));
        d.base_channels = self.d_base_channels.unwrap_or(d.base_channels);
        d.max_channels = self.d_max_channels.unwrap_or(d.max_channels);
        d
    }

    /// Trainer configuration with every module invariant checked.
    pub fn train_config(&self) -> Result<TrainConfig> {
        let defaults = TrainConfig::default();
        let w = LossWeights::default();
        let config = TrainConfig {
            attribute: self.require_attribute()?.to_string(),
            batch_size: self.batch_size.unwrap_or(defaults.batch_size),
            steps: self.steps.unwrap_or(defaults.steps),
            learning_rate: self.learning_rate.unwrap_or(defaults.learning_rate),
            beta1: self.beta1.unwrap_or(defaults.beta1),
            beta2: self.beta2.unwrap_or(defaults.beta2),
            seed: self.seed(),
            checkpoint_every: self.checkpoint_every.unwrap_or(defaults.checkpoint_every),
            log_every: self.log_every.unwrap_or(defaults.log_every),
            weights: LossWeights {
                lambda1: self.lambda1.unwrap_or(w.lambda1),
                lambda2: self.lambda2.unwrap_or(w.lambda2),
                lambda3: self.lambda3.unwrap_or(w.lambda3),
                lambda4: self.lambda4.unwrap_or(w.lambda4),
            },
            generator: self.generator_config(),
            discriminator: self.discriminator_config(),
        };
        config.validate()?;
        Ok(config)
    }

    /// Checks every key that is set, whichever command will use it.
    pub fn validate(&self) -> Result<()> {
        crate::data::check_resolution(self.resolution())?;
        self.extractor()?;
        if self.test_per_class == Some(0) {
            return Err(Error::Config("test_per_class must be at least 1".into()));
        }
        if self.pca_dim == Some(0) {
            return Err(Error::Config("pca_dim must be at least 1".into()));
        }
        if let Some(eps) = self.fid_epsilon {
            if !(eps.is_finite() && eps >= 0.0) {
                return Err(Error::Config(format!("fid_epsilon {eps} must be finite and non-negative")));
            }
        }
        let mut probe = self.clone();
        probe.attribute.get_or_insert_with(|| "unset".into());
        probe.train_config().map(|_| ())
    }
}
