//! Command-line front end. Each subcommand resolves its configuration (file
//! then flags), validates it completely and only then touches the disk.

use std::io::Write;
use std::path::{Path, PathBuf};

use candle_core::Device;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::data::synthetic::square_dataset;
use crate::data::{
    load_image_file, split_test, Attribute, AttributeRow, AttributeTable, DirectorySource, ImageSource,
    MemorySource,
};
use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::image_tensor::{stack_images, unstack_images};
use crate::metrics::{
    evaluate_pair, write_boxplot_data, DiscriminatorEmbedder, FeatureExtractor, FlattenExtractor,
    RandomProjectionExtractor, SummaryRecord,
};
use crate::trainer::{load_checkpoint, load_checkpoint_expecting, train, TrainData, TrainOutput, TrainState};
use crate::ImageTensor;

/// Images pushed through a network at once during inference.
const INFERENCE_BATCH: usize = 32;
/// Width of the random projection extractor preset.
const PROJECTION_DIM: usize = 256;
/// Images per class in the synthetic set used by `eval --self-test` when no
/// manifest is given.
const SELF_TEST_PER_CLASS: usize = 16;

#[derive(Debug, Parser)]
#[command(name = "attrinv", version, about = "Single-generator face attribute inversion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the synthetic white-square dataset to --output-dir.
    MakeToy {
        #[command(flatten)]
        common: Common,
        /// Images per class.
        #[arg(long, default_value_t = 512)]
        per_class: usize,
    },
    /// Build the manifest: image ids, labels for one attribute and the test split.
    PrepareData(Common),
    /// Train a generator and discriminator on the manifest's training rows.
    Train {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to continue from.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Translate image files with a trained generator.
    Invert {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Also write the re-inverted image G(G(x)).
        #[arg(long)]
        cycle: bool,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Score translations of the test split with DFN and FID.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Score the test images against themselves; needs no checkpoint.
        #[arg(long)]
        self_test: bool,
    },
    /// Export a two-row grid: originals above their translations.
    Grid {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output raster path.
        #[arg(long)]
        output: PathBuf,
        /// Image ids, one column each.
        ids: Vec<String>,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// TOML file with run configuration keys; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunConfig,
}

impl Common {
    /// File keys overlaid with flags, fully validated.
    pub fn resolve(&self) -> Result<RunConfig> {
        let base = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let merged = base.overlay(self.run.clone());
        merged.validate()?;
        Ok(merged)
    }
}

/// Runs one parsed invocation, writing progress lines to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::MakeToy { common, per_class } => {
            let attr = cmd_make_toy(&common.resolve()?, per_class)?;
            say(out, &format!("wrote {}", attr.display()))
        }
        Command::PrepareData(common) => {
            let manifest = cmd_prepare_data(&common.resolve()?)?;
            say(out, &format!("wrote {}", manifest.display()))
        }
        Command::Train { common, resume } => {
            cmd_train(&common.resolve()?, resume.as_deref(), out)?;
            Ok(())
        }
        Command::Invert {
            common,
            checkpoint,
            cycle,
            inputs,
        } => {
            let report = cmd_invert(&common.resolve()?, &checkpoint, &inputs, cycle)?;
            for path in &report.written {
                say(out, &format!("wrote {}", path.display()))?;
            }
            for (path, err) in &report.failures {
                eprintln!("error: {}: {}: {err}", err.kind(), path.display());
            }
            if report.failures.is_empty() {
                Ok(())
            } else {
                Err(Error::Image {
                    path: report.failures[0].0.clone(),
                    message: format!("{} of {} inputs failed", report.failures.len(), inputs.len()),
                })
            }
        }
        Command::Eval {
            common,
            checkpoint,
            self_test,
        } => {
            let record = cmd_eval(&common.resolve()?, checkpoint.as_deref(), self_test)?;
            say(out, &serde_json::to_string(&record).expect("record serializes"))
        }
        Command::Grid {
            common,
            checkpoint,
            output,
            ids,
        } => {
            cmd_grid(&common.resolve()?, &checkpoint, &ids, &output)?;
            say(out, &format!("wrote {}", output.display()))
        }
    }
}

fn say(out: &mut dyn Write, line: &str) -> Result<()> {
    writeln!(out, "{line}").map_err(|e| Error::io("<stdout>", e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn cmd_make_toy(cfg: &RunConfig, per_class: usize) -> Result<PathBuf> {
    let dir = cfg.require_path(&cfg.output_dir, "output_dir")?;
    if per_class == 0 {
        return Err(Error::Config("per_class must be at least 1".into()));
    }
    square_dataset(per_class, cfg.resolution(), cfg.seed()).write(dir)
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub image_id: String,
    pub attribute: String,
    pub label: u8,
    pub split: Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

pub fn write_manifest(rows: &[ManifestRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    for row in rows {
        w.serialize(row).map_err(|e| Error::io(path, e.into()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    if !path.is_file() {
        return Err(Error::Config(format!(
            "manifest {} not found; run prepare-data first",
            path.display()
        )));
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let mut rows = Vec::new();
    for (i, rec) in r.deserialize().enumerate() {
        rows.push(rec.map_err(|e: csv::Error| Error::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            message: e.to_string(),
        })?);
    }
    Ok(rows)
}

fn manifest_path(cfg: &RunConfig) -> Result<PathBuf> {
    match (&cfg.manifest, &cfg.output_dir) {
        (Some(m), _) => Ok(m.clone()),
        (None, Some(dir)) => Ok(dir.join("manifest.csv")),
        (None, None) => Err(Error::Config(
            "missing required key manifest (flag --manifest) or output_dir".into(),
        )),
    }
}

/// Writes the manifest for `cfg.attribute` and returns its path.
pub fn cmd_prepare_data(cfg: &RunConfig) -> Result<PathBuf> {
    let dataset = cfg.require_path(&cfg.dataset_dir, "dataset_dir")?;
    let attr_file = cfg.require_path(&cfg.attribute_file, "attribute_file")?;
    let attribute = cfg.require_attribute()?;
    let out = manifest_path(cfg)?;
    if !dataset.is_dir() {
        return Err(Error::Config(format!("dataset_dir {} does not exist", dataset.display())));
    }
    let table = AttributeTable::load(attr_file)?;
    let attr = Attribute::from(attribute);
    let column = table.resolve(&attr)?;
    let name = table.names()[column].clone();
    let split = split_test(&table, &attr, cfg.test_per_class(), cfg.seed())?;
    let test: std::collections::HashSet<&str> = split.test.iter().map(String::as_str).collect();
    let rows: Vec<ManifestRow> = table
        .rows()
        .iter()
        .map(|r| ManifestRow {
            image_id: r.image_id.clone(),
            attribute: name.clone(),
            label: r.labels[column],
            split: if test.contains(r.image_id.as_str()) {
                Split::Test
            } else {
                Split::Train
            },
        })
        .collect();
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_manifest(&rows, &out)?;
    Ok(out)
}

/// Rows of one split as a single-column attribute table.
fn split_table(rows: &[ManifestRow], split: Split, attribute: &str) -> Result<AttributeTable> {
    if let Some(r) = rows.iter().find(|r| r.attribute != attribute) {
        return Err(Error::Config(format!(
            "manifest is for attribute {}, configuration asks for {attribute}",
            r.attribute
        )));
    }
    let selected = rows
        .iter()
        .filter(|r| r.split == split)
        .map(|r| AttributeRow {
            image_id: r.image_id.clone(),
            labels: vec![r.label],
        })
        .collect();
    AttributeTable::new(vec![attribute.to_string()], selected)
}

/// Trains per the configuration; resumes from `resume` when given.
pub fn cmd_train(cfg: &RunConfig, resume: Option<&Path>, out: &mut dyn Write) -> Result<TrainState> {
    let train_cfg = cfg.train_config()?;
    let out_dir = cfg.require_path(&cfg.output_dir, "output_dir")?;
    let dataset = cfg.require_path(&cfg.dataset_dir, "dataset_dir")?;
    let manifest = cfg.require_path(&cfg.manifest, "manifest")?;
    let rows = read_manifest(manifest)?;
    let table = split_table(&rows, Split::Train, &train_cfg.attribute)?;
    if table.is_empty() {
        return Err(Error::Config(format!("manifest {} has no training rows", manifest.display())));
    }
    let source = DirectorySource::new(dataset, train_cfg.generator.resolution)?.with_cache();
    let mut state = match resume {
        Some(ckpt) => load_checkpoint_expecting(ckpt, &Device::Cpu, &train_cfg)?,
        None => TrainState::new(&train_cfg, &Device::Cpu)?,
    };
    let output = TrainOutput {
        dir: Some(out_dir.to_path_buf()),
    };
    if resume.is_none() {
        if let Some(log) = output.log_path().filter(|p| p.exists()) {
            std::fs::remove_file(&log).map_err(|e| Error::io(&log, e))?;
        }
    }
    let data = TrainData {
        table: &table,
        source: &source,
    };
    let mut write_error = None;
    train(&mut state, &data, &output, |step, b| {
        let line = format!(
            "step {step} adv {:.6} cls_real {:.6} cls_fake {:.6} rec {:.6} fm {:.6} total_g {:.6} total_d {:.6}",
            b.adv, b.cls_real, b.cls_fake, b.rec, b.fm, b.total_g, b.total_d
        );
        if let Err(e) = say(out, &line) {
            write_error.get_or_insert(e);
        }
    })?;
    match write_error {
        Some(e) => Err(e),
        None => Ok(state),
    }
}

/// Loads a generator from a checkpoint, checking any resolution the
/// configuration pins.
fn load_generator(cfg: &RunConfig, checkpoint: &Path) -> Result<TrainState> {
    let state = load_checkpoint(checkpoint, &Device::Cpu)?;
    let trained = state.generator().config().resolution;
    if let Some(r) = cfg.resolution.filter(|&r| r != trained) {
        return Err(Error::Checkpoint(format!(
            "checkpoint {} works at resolution {trained}, configuration asks for {r}",
            checkpoint.display()
        )));
    }
    Ok(state)
}

/// Translates `images` in fixed-size batches.
pub fn translate_images(generator: &Generator, images: &[ImageTensor]) -> Result<Vec<ImageTensor>> {
    let dtype = generator.params().dtype();
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(INFERENCE_BATCH) {
        let x = stack_images(chunk, &Device::Cpu, dtype)?;
        out.extend(unstack_images(&generator.forward(&x)?)?);
    }
    Ok(out)
}

#[derive(Debug, Default)]
pub struct InvertReport {
    pub written: Vec<PathBuf>,
    pub failures: Vec<(PathBuf, Error)>,
}

fn save_png(img: &ImageTensor, path: &Path) -> Result<()> {
    img.to_rgb8().save(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Writes `<stem>_inv.png` (and `<stem>_cycle.png` with `cycle`) for every
/// input into the output directory. A bad input is recorded and skipped.
pub fn cmd_invert(cfg: &RunConfig, checkpoint: &Path, inputs: &[PathBuf], cycle: bool) -> Result<InvertReport> {
    let out_dir = cfg.require_path(&cfg.output_dir, "output_dir")?;
    if inputs.is_empty() {
        return Err(Error::Config("no input images given".into()));
    }
    let state = load_generator(cfg, checkpoint)?;
    let generator = state.generator();
    let resolution = generator.config().resolution;
    create_dir(out_dir)?;
    let mut report = InvertReport::default();
    for input in inputs {
        let result = (|| -> Result<Vec<PathBuf>> {
            let x = load_image_file(input, resolution)?;
            let t = x.to_tensor(&Device::Cpu, generator.params().dtype())?.unsqueeze(0)?;
            let stem = input
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "image".into());
            let mut written = Vec::new();
            let (x1, x0) = generator.cycle(&t)?;
            let path = out_dir.join(format!("{stem}_inv.png"));
            save_png(&ImageTensor::from_tensor(&x1.squeeze(0)?)?, &path)?;
            written.push(path);
            if cycle {
                let path = out_dir.join(format!("{stem}_cycle.png"));
                save_png(&ImageTensor::from_tensor(&x0.squeeze(0)?)?, &path)?;
                written.push(path);
            }
            Ok(written)
        })();
        match result {
            Ok(paths) => report.written.extend(paths),
            Err(e) => report.failures.push((input.clone(), e)),
        }
    }
    Ok(report)
}

fn build_extractor<'a>(
    name: &str,
    resolution: usize,
    seed: u64,
    state: Option<&'a TrainState>,
) -> Result<Box<dyn FeatureExtractor + 'a>> {
    Ok(match name {
        "stub" => Box::new(FlattenExtractor::new(resolution)),
        "projection" => Box::new(RandomProjectionExtractor::new(resolution, PROJECTION_DIM, seed)),
        "discriminator" => {
            let state = state.ok_or_else(|| {
                Error::Config("extractor discriminator needs --checkpoint".into())
            })?;
            Box::new(DiscriminatorEmbedder::new(state.discriminator()))
        }
        other => return Err(Error::Config(format!("unknown extractor {other:?}"))),
    })
}

/// Scores the test split. Appends a record to `report.jsonl` and writes the
/// per-image DFN ratios to `dfn_<attribute>.csv` in the output directory.
pub fn cmd_eval(cfg: &RunConfig, checkpoint: Option<&Path>, self_test: bool) -> Result<SummaryRecord> {
    let out_dir = cfg.require_path(&cfg.output_dir, "output_dir")?;
    let extractor_name = cfg.extractor()?;
    if !self_test && checkpoint.is_none() {
        return Err(Error::Config("eval needs --checkpoint unless --self-test is set".into()));
    }
    let state = checkpoint.map(|c| load_generator(cfg, c)).transpose()?;
    let resolution = state
        .as_ref()
        .map(|s| s.generator().config().resolution)
        .unwrap_or(cfg.resolution());

    let (attribute, ids, real) = if self_test && cfg.manifest.is_none() {
        let ds = square_dataset(SELF_TEST_PER_CLASS, resolution, cfg.seed());
        let source: MemorySource = ds.to_memory_source()?;
        let ids: Vec<String> = ds.table.rows().iter().map(|r| r.image_id.clone()).collect();
        let real = source.load_many(&ids)?;
        (ds.table.names()[0].clone(), ids, real)
    } else {
        let manifest = cfg.require_path(&cfg.manifest, "manifest")?;
        let dataset = cfg.require_path(&cfg.dataset_dir, "dataset_dir")?;
        let rows = read_manifest(manifest)?;
        let attribute = match (&cfg.attribute, rows.first()) {
            (Some(a), _) => a.clone(),
            (None, Some(r)) => r.attribute.clone(),
            (None, None) => return Err(Error::Config(format!("manifest {} is empty", manifest.display()))),
        };
        let table = split_table(&rows, Split::Test, &attribute)?;
        if table.is_empty() {
            return Err(Error::Config(format!(
                "manifest {} has no test split; run prepare-data first",
                manifest.display()
            )));
        }
        let ids: Vec<String> = table.rows().iter().map(|r| r.image_id.clone()).collect();
        let real = DirectorySource::new(dataset, resolution)?.load_many(&ids)?;
        (attribute, ids, real)
    };

    let generated = match (&state, self_test) {
        (_, true) => real.clone(),
        (Some(s), false) => translate_images(s.generator(), &real)?,
        (None, false) => unreachable!("checked above"),
    };
    let extractor = build_extractor(extractor_name, resolution, cfg.seed(), state.as_ref())?;
    let evaluation = evaluate_pair(
        &real,
        &generated,
        &ids,
        extractor.as_ref(),
        Some(cfg.pca_dim()),
        cfg.fid_epsilon(),
    )?;
    create_dir(out_dir)?;
    let record = evaluation.summary(&attribute);
    record.append_to(&out_dir.join("report.jsonl"))?;
    write_boxplot_data(&evaluation.dfn, &out_dir.join(format!("dfn_{attribute}.csv")))?;
    Ok(record)
}

/// Lays out `top` above `bottom`, one column per pair. Every tile must be
/// square and the same size.
pub fn assemble_grid(top: &[ImageTensor], bottom: &[ImageTensor]) -> Result<image::RgbImage> {
    if top.is_empty() {
        return Err(Error::Config("grid needs at least one image".into()));
    }
    if top.len() != bottom.len() {
        return Err(Error::Shape(format!("{} originals but {} translations", top.len(), bottom.len())));
    }
    let side = top[0].height();
    for tile in top.iter().chain(bottom) {
        if tile.height() != tile.width() || tile.height() != side {
            return Err(Error::Shape(format!(
                "grid tiles must be {side}x{side}, got {}x{}",
                tile.height(),
                tile.width()
            )));
        }
    }
    let mut grid = image::RgbImage::new((side * top.len()) as u32, (2 * side) as u32);
    for (col, (a, b)) in top.iter().zip(bottom).enumerate() {
        for (row, tile) in [a, b].into_iter().enumerate() {
            let rgb = tile.to_rgb8();
            image::imageops::replace(&mut grid, &rgb, (col * side) as i64, (row * side) as i64);
        }
    }
    Ok(grid)
}

pub fn cmd_grid(cfg: &RunConfig, checkpoint: &Path, ids: &[String], output: &Path) -> Result<()> {
    if ids.is_empty() {
        return Err(Error::Config("grid needs at least one image id".into()));
    }
    let dataset = cfg.require_path(&cfg.dataset_dir, "dataset_dir")?;
    let state = load_generator(cfg, checkpoint)?;
    let generator = state.generator();
    let source = DirectorySource::new(dataset, generator.config().resolution)?;
    let originals = source.load_many(ids)?;
    let translated = translate_images(generator, &originals)?;
    let grid = assemble_grid(&originals, &translated)?;
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    grid.save(output).map_err(|e| Error::Image {
        path: output.to_path_buf(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_layout_and_rejections() {
        let tiles: Vec<ImageTensor> = (0..5).map(|i| ImageTensor::filled(8, 8, i as f32 / 5.0)).collect();
        let grid = assemble_grid(&tiles, &tiles).unwrap();
        assert_eq!(grid.dimensions(), (40, 16));
        assert!(assemble_grid(&[], &[]).is_err());
        let wide = ImageTensor::filled(8, 6, 0.0);
        assert!(matches!(
            assemble_grid(std::slice::from_ref(&wide), std::slice::from_ref(&wide)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let rows = vec![
            ManifestRow {
                image_id: "a.png".into(),
                attribute: "Eyeglasses".into(),
                label: 1,
                split: Split::Test,
            },
            ManifestRow {
                image_id: "b.png".into(),
                attribute: "Eyeglasses".into(),
                label: 0,
                split: Split::Train,
            },
        ];
        write_manifest(&rows, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), "image_id,attribute,label,split");
        assert_eq!(read_manifest(&path).unwrap(), rows);
    }
}
