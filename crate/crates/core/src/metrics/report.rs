use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{compute_dfn, compute_fid, pca_reduce, DfnReport, FeatureExtractor, FidReport, Matrix};
use crate::error::{Error, Result};
use crate::ImageTensor;

/// PCA target width for FID features.
pub const DEFAULT_REDUCED_DIM: usize = 1024;

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub dfn: DfnReport,
    pub fid: FidReport,
    pub extractor: String,
}

/// One evaluation as a flat record, ready for assembling a comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub attribute: String,
    pub extractor: String,
    pub n: usize,
    pub fid: f64,
    pub fid_dim: usize,
    pub dfn_mean: f64,
    pub dfn_median: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub iqr: f64,
}

impl Evaluation {
    pub fn summary(&self, attribute: &str) -> SummaryRecord {
        SummaryRecord {
            attribute: attribute.to_string(),
            extractor: self.extractor.clone(),
            n: self.dfn.ratios.len(),
            fid: self.fid.value,
            fid_dim: self.fid.feature_dim_reduced,
            dfn_mean: self.dfn.mean,
            dfn_median: self.dfn.q50,
            q25: self.dfn.q25,
            q50: self.dfn.q50,
            q75: self.dfn.q75,
            iqr: self.dfn.iqr,
        }
    }
}

/// Scores translated images against their sources. With `reduce_to`, a PCA
/// basis is fitted on the union of both feature sets and applied to each
/// before the Fréchet distance is taken.
pub fn evaluate_pair(
    real_images: &[ImageTensor],
    gen_images: &[ImageTensor],
    ids: &[String],
    extractor: &dyn FeatureExtractor,
    reduce_to: Option<usize>,
    epsilon: f64,
) -> Result<Evaluation> {
    if real_images.len() != gen_images.len() {
        return Err(Error::Shape(format!(
            "{} real and {} generated images",
            real_images.len(),
            gen_images.len()
        )));
    }
    let real = extractor.extract(real_images)?;
    let generated = extractor.extract(gen_images)?;
    let dfn = compute_dfn(&real, &generated, ids)?;

    let fid = match reduce_to {
        None => compute_fid(&real, &generated, epsilon)?,
        Some(k) => {
            let n = real.nrows();
            let mut union = Matrix::zeros(n + generated.nrows(), real.ncols());
            union.rows_mut(0, n).copy_from(&real);
            union.rows_mut(n, generated.nrows()).copy_from(&generated);
            let (_, basis) = pca_reduce(&union, k)?;
            let mut report = compute_fid(&basis.transform(&real)?, &basis.transform(&generated)?, epsilon)?;
            report.feature_dim_raw = real.ncols();
            report
        }
    };
    Ok(Evaluation {
        dfn,
        fid,
        extractor: extractor.name().to_string(),
    })
}

/// Writes `image_id,gamma` rows for external box plotting.
pub fn write_boxplot_data(report: &DfnReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    w.write_record(["image_id", "gamma"]).map_err(|e| Error::io(path, e.into()))?;
    for (id, g) in &report.ratios {
        w.write_record([id.as_str(), &g.to_string()])
            .map_err(|e| Error::io(path, e.into()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

impl SummaryRecord {
    /// Appends this record as one JSON line.
    pub fn append_to(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let line = serde_json::to_string(self).expect("record serializes");
        writeln!(f, "{line}").map_err(|e| Error::io(path, e))
    }
}
