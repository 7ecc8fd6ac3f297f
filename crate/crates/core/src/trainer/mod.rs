//! Alternating adversarial optimization: one discriminator update followed by
//! one generator update per batch, with checkpointing and a CSV loss log.

mod checkpoint;

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Tensor, TensorId};
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, load_checkpoint_expecting, save_checkpoint, CHECKPOINT_VERSION};

use crate::data::{Attribute, AttributeTable, BalancedStream, ImageSource};
use crate::discriminator::{Discriminator, DiscriminatorConfig};
use crate::error::{Error, Result};
use crate::generator::{Generator, GeneratorConfig};
use crate::image_tensor::stack_images;
use crate::losses::{
    adversarial_loss, cls_fake_loss, cls_real_loss, discriminator_objective_tensor, feature_matching_loss,
    generator_adversarial_loss, generator_objective_tensor, reconstruction_loss, GeneratorTerms, LossBreakdown,
    LossWeights,
};
use crate::nn::Adam;

/// Columns of the metrics log, in order.
pub const LOG_COLUMNS: [&str; 8] = ["step", "adv", "cls_real", "cls_fake", "rec", "fm", "total_g", "total_d"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub attribute: String,
    pub batch_size: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    pub checkpoint_every: usize,
    pub log_every: usize,
    pub weights: LossWeights,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            attribute: "Eyeglasses".into(),
            batch_size: 16,
            steps: 3000,
            learning_rate: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            seed: 0,
            checkpoint_every: 1000,
            log_every: 10,
            weights: LossWeights::default(),
            generator: GeneratorConfig::desk(),
            discriminator: DiscriminatorConfig::desk(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.steps == 0 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate {} must be positive", self.learning_rate)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} {b} outside [0, 1)")));
            }
        }
        if self.checkpoint_every == 0 || self.log_every == 0 {
            return Err(Error::Config("checkpoint_every and log_every must be at least 1".into()));
        }
        self.weights.validate()?;
        self.generator.validate()?;
        self.discriminator.validate()?;
        if self.generator.resolution != self.discriminator.resolution {
            return Err(Error::Config(format!(
                "generator resolution {} differs from discriminator resolution {}",
                self.generator.resolution, self.discriminator.resolution
            )));
        }
        Ok(())
    }
}

/// A batch of images `(N, 3, H, W)` with their labels `(N,)` as 0/1 floats.
pub struct Batch {
    pub images: Tensor,
    pub labels: Tensor,
}

impl Batch {
    pub fn new(images: Tensor, labels: &[u8]) -> Result<Self> {
        if images.dim(0)? != labels.len() {
            return Err(Error::Shape(format!(
                "{} images but {} labels",
                images.dim(0)?,
                labels.len()
            )));
        }
        let labels: Vec<f32> = labels.iter().map(|&l| f32::from(l)).collect();
        let labels = Tensor::new(labels, images.device())?.to_dtype(images.dtype())?;
        Ok(Self { images, labels })
    }
}

/// Everything that evolves during training.
pub struct TrainState {
    config: TrainConfig,
    generator: Generator,
    discriminator: Discriminator,
    opt_g: Adam,
    opt_d: Adam,
    step: usize,
    generator_ids: Vec<TensorId>,
}

fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

impl TrainState {
    pub fn new(config: &TrainConfig, device: &Device) -> Result<Self> {
        Self::with_dtype(config, device, DType::F32)
    }

    pub fn with_dtype(config: &TrainConfig, device: &Device, dtype: DType) -> Result<Self> {
        config.validate()?;
        let generator = Generator::new(&config.generator, device, dtype, config.seed)?;
        let discriminator =
            Discriminator::new(&config.discriminator, device, dtype, config.seed.wrapping_add(1))?;
        let opt_g = Adam::new(generator.params(), config.learning_rate, config.beta1, config.beta2)?;
        let opt_d = Adam::new(discriminator.params(), config.learning_rate, config.beta1, config.beta2)?;
        Ok(Self {
            generator_ids: generator.param_ids(),
            config: config.clone(),
            generator,
            discriminator,
            opt_g,
            opt_d,
            step: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn discriminator(&self) -> &Discriminator {
        &self.discriminator
    }

    pub fn into_generator(self) -> Generator {
        self.generator
    }

    /// Number of completed training steps.
    pub fn step(&self) -> usize {
        self.step
    }

    /// Changes the step count [`train`] runs up to.
    pub fn set_step_budget(&mut self, steps: usize) {
        self.config.steps = steps;
    }

    /// One discriminator update then one generator update on `batch`.
    pub fn train_step(&mut self, batch: &Batch) -> Result<LossBreakdown> {
        let step = self.step;
        let tag = |e: Error| match e {
            Error::NonFinite { term, .. } => Error::NonFinite {
                term,
                step: Some(step),
            },
            other => other,
        };
        if self.generator.param_ids() != self.generator_ids {
            return Err(Error::Config("generator parameter set was replaced during training".into()));
        }
        let w = self.config.weights;
        let x = &batch.images;
        let c = &batch.labels;

        let n = x.dim(0)?;
        // G is unchanged by the discriminator update, so one translation
        // serves both halves of the step.
        let x1 = self.generator.forward(x)?;

        // Discriminator: translated images are constants here. Real and
        // translated images share one pass; every layer is per-sample.
        let out = self.discriminator.discriminate(&Tensor::cat(&[x, &x1.detach()], 0)?)?;
        let adv = adversarial_loss(&out.d_s.narrow(0, 0, n)?, &out.d_s.narrow(0, n, n)?)?;
        let cls_real = cls_real_loss(&out.d_cls.narrow(0, 0, n)?, c)?;
        let total_d = discriminator_objective_tensor(&adv, &cls_real, &w).map_err(tag)?;
        let grads = total_d.backward()?;
        self.opt_d.step(&grads)?;

        // Generator: the same network translates and reconstructs.
        let x0_rec = self.generator.forward(&x1)?;
        let out = self.discriminator.discriminate(&Tensor::cat(&[&x1, &x0_rec], 0)?)?;
        let adv_g = generator_adversarial_loss(&out.d_s.narrow(0, 0, n)?)?;
        let cls_fake = cls_fake_loss(&out.d_cls.narrow(0, 0, n)?, c)?;
        let rec = reconstruction_loss(x, &x0_rec)?;
        let real_features: Vec<Tensor> = self
            .discriminator
            .discriminate(x)?
            .features
            .into_iter()
            .map(|f| f.detach())
            .collect();
        let rec_features = out
            .features
            .iter()
            .map(|f| f.narrow(0, n, n))
            .collect::<candle_core::Result<Vec<_>>>()?;
        let fm = feature_matching_loss(&real_features, &rec_features)?;
        let terms = GeneratorTerms {
            adv: adv_g,
            cls_fake,
            rec,
            fm,
        };
        let total_g = generator_objective_tensor(&terms, &w).map_err(tag)?;
        let grads = total_g.backward()?;
        self.opt_g.step(&grads)?;

        let breakdown = LossBreakdown {
            adv: scalar(&adv)?,
            adv_g: scalar(&terms.adv)?,
            cls_real: scalar(&cls_real)?,
            cls_fake: scalar(&terms.cls_fake)?,
            rec: scalar(&terms.rec)?,
            fm: scalar(&terms.fm)?,
            total_g: scalar(&total_g)?,
            total_d: scalar(&total_d)?,
        };
        if let Some(term) = breakdown.first_non_finite() {
            return Err(Error::NonFinite {
                term: term.to_string(),
                step: Some(step),
            });
        }
        self.step += 1;
        Ok(breakdown)
    }

    /// Translates a batch with the current generator.
    pub fn invert(&self, x: &Tensor) -> Result<Tensor> {
        self.generator.forward(x)
    }
}

/// Training rows and where to read their images from.
pub struct TrainData<'a> {
    pub table: &'a AttributeTable,
    pub source: &'a dyn ImageSource,
}

impl TrainData<'_> {
    /// Assembles the batch the stream schedules for `step`.
    fn batch(&self, stream: &mut BalancedStream, column: usize, step: usize, state: &TrainState) -> Result<Batch> {
        let rows = stream.batch(step, state.config.batch_size);
        let ids: Vec<String> = rows.iter().map(|&r| self.table.rows()[r].image_id.clone()).collect();
        let labels: Vec<u8> = rows.iter().map(|&r| self.table.rows()[r].labels[column]).collect();
        let images = self.source.load_many(&ids)?;
        let params = state.generator.params();
        Batch::new(stack_images(&images, params.device(), params.dtype())?, &labels)
    }
}

/// Where [`train`] writes its artifacts; with no directory nothing is written.
#[derive(Debug, Clone, Default)]
pub struct TrainOutput {
    pub dir: Option<PathBuf>,
}

impl TrainOutput {
    pub fn log_path(&self) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join("metrics.csv"))
    }

    pub fn checkpoint_path(&self, step: usize) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("step_{step:06}.ckpt")))
    }

    pub fn final_checkpoint_path(&self) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join("final.ckpt"))
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainSummary {
    /// Breakdown of every step run by this call, keyed by the completed step count.
    pub trace: Vec<(usize, LossBreakdown)>,
    pub checkpoints: Vec<PathBuf>,
}

pub fn log_line(step: usize, b: &LossBreakdown) -> String {
    format!(
        "{step},{},{},{},{},{},{},{}",
        b.adv, b.cls_real, b.cls_fake, b.rec, b.fm, b.total_g, b.total_d
    )
}

fn append_log(path: &Path, step: usize, b: &LossBreakdown) -> Result<()> {
    let fresh = !path.exists();
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    if fresh {
        writeln!(f, "{}", LOG_COLUMNS.join(",")).map_err(|e| Error::io(path, e))?;
    }
    writeln!(f, "{}", log_line(step, b)).map_err(|e| Error::io(path, e))
}

/// Runs training from the state's current step up to `config.steps`.
/// `on_log` is called every `log_every` steps.
pub fn train(
    state: &mut TrainState,
    data: &TrainData<'_>,
    output: &TrainOutput,
    mut on_log: impl FnMut(usize, &LossBreakdown),
) -> Result<TrainSummary> {
    let attribute = Attribute::from(state.config.attribute.as_str());
    let column = data.table.resolve(&attribute)?;
    let mut stream = BalancedStream::new(data.table, &attribute, state.config.seed)?;
    if let Some(dir) = &output.dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut summary = TrainSummary::default();
    while state.step < state.config.steps {
        let batch = data.batch(&mut stream, column, state.step, state)?;
        let breakdown = state.train_step(&batch)?;
        let done = state.step;
        summary.trace.push((done, breakdown));
        if done.is_multiple_of(state.config.log_every) {
            if let Some(path) = output.log_path() {
                append_log(&path, done, &breakdown)?;
            }
            on_log(done, &breakdown);
        }
        if done.is_multiple_of(state.config.checkpoint_every) {
            if let Some(path) = output.checkpoint_path(done) {
                save_checkpoint(state, &path)?;
                summary.checkpoints.push(path);
            }
        }
    }
    if let Some(path) = output.final_checkpoint_path() {
        save_checkpoint(state, &path)?;
        summary.checkpoints.push(path);
    }
    Ok(summary)
}

/// Fraction of images whose translation the attribute head classifies as the
/// inverse of the source label.
pub fn inverse_label_accuracy(state: &TrainState, images: &Tensor, labels: &[u8]) -> Result<f64> {
    let translated = state.generator.forward(images)?;
    let p = state
        .discriminator
        .discriminate(&translated)?
        .d_cls
        .to_dtype(DType::F64)?
        .to_vec1::<f64>()?;
    let hits = p
        .iter()
        .zip(labels)
        .filter(|(p, &c)| u8::from(**p > 0.5) == 1 - c)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::{square_dataset, SQUARE_ATTRIBUTE};

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            attribute: SQUARE_ATTRIBUTE.into(),
            batch_size: 4,
            steps: 3,
            seed: 5,
            checkpoint_every: 2,
            log_every: 1,
            generator: GeneratorConfig::with_shape(16, 3, 4),
            discriminator: DiscriminatorConfig {
                resolution: 16,
                depth: 3,
                base_channels: 4,
                max_channels: 64,
            },
            ..Default::default()
        }
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut c = tiny_config();
        c.batch_size = 0;
        assert!(c.validate().is_err());
        let mut c = tiny_config();
        c.learning_rate = 0.0;
        assert!(c.validate().is_err());
        let mut c = tiny_config();
        c.discriminator.resolution = 32;
        assert!(c.validate().is_err());
    }

    #[test]
    fn steps_partition_parameters() {
        let cfg = tiny_config();
        let ds = square_dataset(4, 16, 1);
        let source = ds.to_memory_source().unwrap();
        let mut state = TrainState::new(&cfg, &Device::Cpu).unwrap();
        let data = TrainData {
            table: &ds.table,
            source: &source,
        };
        let mut stream = BalancedStream::new(&ds.table, &SQUARE_ATTRIBUTE.into(), cfg.seed).unwrap();
        let batch = data.batch(&mut stream, 0, 0, &state).unwrap();

        let g_before = state.generator.params().snapshot();
        let d_before = state.discriminator.params().snapshot();
        // Reproduce only the discriminator half and check G is untouched.
        let fake = state.generator.forward(&batch.images).unwrap().detach();
        let r = state.discriminator.discriminate(&batch.images).unwrap();
        let f = state.discriminator.discriminate(&fake).unwrap();
        let adv = adversarial_loss(&r.d_s, &f.d_s).unwrap();
        let cls = cls_real_loss(&r.d_cls, &batch.labels).unwrap();
        let loss = discriminator_objective_tensor(&adv, &cls, &cfg.weights).unwrap();
        state.opt_d.step(&loss.backward().unwrap()).unwrap();
        let same = |a: &[(String, Tensor)], b: &[(String, Tensor)]| {
            a.iter().zip(b).all(|((_, x), (_, y))| {
                (x - y).unwrap().abs().unwrap().max_all().unwrap().to_scalar::<f32>().unwrap() == 0.0
            })
        };
        assert!(same(&g_before, &state.generator.params().snapshot()));
        assert!(!same(&d_before, &state.discriminator.params().snapshot()));

        // A full step moves G; the G half must leave D as the D half left it.
        let b = state.train_step(&batch).unwrap();
        assert!(b.first_non_finite().is_none());
        assert!(!same(&g_before, &state.generator.params().snapshot()));
    }

    #[test]
    fn checkpoints_follow_schedule() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config();
        cfg.steps = 10;
        cfg.checkpoint_every = 5;
        cfg.batch_size = 2;
        let ds = square_dataset(3, 16, 2);
        let source = ds.to_memory_source().unwrap();
        let mut state = TrainState::new(&cfg, &Device::Cpu).unwrap();
        let out = TrainOutput {
            dir: Some(dir.path().to_path_buf()),
        };
        let data = TrainData {
            table: &ds.table,
            source: &source,
        };
        let mut logged = 0;
        let summary = train(&mut state, &data, &out, |_, _| logged += 1).unwrap();
        assert_eq!(summary.trace.len(), 10);
        assert_eq!(logged, 10);
        let names: Vec<String> = summary
            .checkpoints
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names, vec!["step_000005.ckpt", "step_000010.ckpt", "final.ckpt"]);
        let log = std::fs::read_to_string(out.log_path().unwrap()).unwrap();
        assert_eq!(log.lines().next().unwrap(), LOG_COLUMNS.join(","));
        assert_eq!(log.lines().count(), 11);
    }
}
